//! Capital and life-cycle economics, and the sweep over `(C_ch, E_max)`.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dqn::{self, TrainConfig};
use crate::env::run_episode;
use crate::par::{self, Execution};
use crate::plant::PlantSpec;
use crate::policies::{Policy, PolicyKind};
use crate::trace::Trace;

#[derive(Debug, Error)]
pub enum SizingError {
    #[error("invalid sizing input: {0}")]
    Parameter(String),
    #[error("no candidate achieved zero loss-of-load: {0}")]
    Infeasible(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Where the discount factor of year `i` starts counting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discounting {
    /// Year `i` cash flow divided by `(1 + r)^i`.
    #[default]
    EndOfYear,
    /// Year `i` cash flow divided by `(1 + r)^(i - 1)`.
    StartOfYear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EconomicParams {
    /// Currency per kWh_th of chiller capacity.
    pub chiller_capex_rate: f64,
    /// Currency per kWh_th of storage capacity.
    pub tes_capex_rate: f64,
    /// Annual maintenance as a fraction of CAPEX in year one.
    pub maintenance_fraction: f64,
    pub maintenance_inflation: f64,
    pub discount_rate: f64,
    pub horizon_years: u32,
    pub discounting: Discounting,
}

impl Default for EconomicParams {
    fn default() -> Self {
        Self {
            chiller_capex_rate: 6410.0,
            tes_capex_rate: 1500.0,
            maintenance_fraction: 0.02,
            maintenance_inflation: 0.05,
            discount_rate: 0.06,
            horizon_years: 30,
            discounting: Discounting::EndOfYear,
        }
    }
}

impl EconomicParams {
    pub fn validate(&self) -> Result<(), SizingError> {
        let rates = [
            self.chiller_capex_rate,
            self.tes_capex_rate,
            self.maintenance_fraction,
            self.maintenance_inflation,
        ];
        if rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(SizingError::Parameter(
                "economic rates must be nonnegative".into(),
            ));
        }
        if !(self.discount_rate > 0.0 && self.discount_rate < 1.0) {
            return Err(SizingError::Parameter(
                "discount rate must lie in (0, 1)".into(),
            ));
        }
        if self.horizon_years == 0 {
            return Err(SizingError::Parameter(
                "horizon must be at least one year".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Capex {
    pub chiller: f64,
    pub tes: f64,
    pub total: f64,
}

pub fn capex(c_ch: f64, e_max: f64, econ: &EconomicParams) -> Capex {
    let chiller = econ.chiller_capex_rate * c_ch;
    let tes = econ.tes_capex_rate * e_max;
    Capex {
        chiller,
        tes,
        total: chiller + tes,
    }
}

/// Present value of `horizon` years of electricity plus inflating maintenance.
pub fn opex(f_elec: f64, capex_total: f64, econ: &EconomicParams) -> f64 {
    let shift = match econ.discounting {
        Discounting::EndOfYear => 0,
        Discounting::StartOfYear => 1,
    };
    (1..=econ.horizon_years as i32)
        .map(|i| {
            let maintenance = econ.maintenance_fraction
                * capex_total
                * (1.0 + econ.maintenance_inflation).powi(i - 1);
            (f_elec + maintenance) / (1.0 + econ.discount_rate).powi(i - shift)
        })
        .sum()
}

/// A candidate sizing `(C_ch, E_max)` in kWh_th.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub c_ch: f64,
    pub e_max: f64,
}

/// Economics and operating metrics of one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizingResult {
    pub c_ch: f64,
    pub e_max: f64,
    pub capex_ch: f64,
    pub capex_tes: f64,
    pub f_elec: f64,
    pub total_lol: f64,
    pub lol_incidents: usize,
    pub tes_throughput: f64,
    pub opex: f64,
    pub lcc: f64,
    pub feasible: bool,
    /// Set when the candidate could not be evaluated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SizingResult {
    /// Builds the economics for a candidate whose operation has been evaluated.
    pub fn from_operation(
        candidate: Candidate,
        f_elec: f64,
        total_lol: f64,
        lol_incidents: usize,
        tes_throughput: f64,
        econ: &EconomicParams,
    ) -> Self {
        let cx = capex(candidate.c_ch, candidate.e_max, econ);
        let opex = opex(f_elec, cx.total, econ);
        Self {
            c_ch: candidate.c_ch,
            e_max: candidate.e_max,
            capex_ch: cx.chiller,
            capex_tes: cx.tes,
            f_elec,
            total_lol,
            lol_incidents,
            tes_throughput,
            opex,
            lcc: cx.total + opex,
            feasible: total_lol == 0.0,
            error: None,
        }
    }

    fn failed(candidate: Candidate, econ: &EconomicParams, message: String) -> Self {
        let cx = capex(candidate.c_ch, candidate.e_max, econ);
        Self {
            c_ch: candidate.c_ch,
            e_max: candidate.e_max,
            capex_ch: cx.chiller,
            capex_tes: cx.tes,
            f_elec: f64::NAN,
            total_lol: f64::NAN,
            lol_incidents: 0,
            tes_throughput: f64::NAN,
            opex: f64::NAN,
            lcc: f64::NAN,
            feasible: false,
            error: Some(message),
        }
    }

    pub fn capex_total(&self) -> f64 {
        self.capex_ch + self.capex_tes
    }
}

/// Economics from a known annual electricity cost, without simulation.
pub fn lcc(
    candidate: Candidate,
    f_elec: f64,
    total_lol: f64,
    econ: &EconomicParams,
) -> SizingResult {
    SizingResult::from_operation(candidate, f_elec, total_lol, 0, 0.0, econ)
}

/// How each candidate is operated during the sweep.
#[derive(Debug, Clone, PartialEq)]
pub enum SweepPolicy {
    /// Train a DQN per candidate, then evaluate its greedy policy.
    Trained(TrainConfig),
    /// Evaluate a rule-based policy.
    Baseline(PolicyKind),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub policy: SweepPolicy,
    pub seed: u64,
    /// Storage level at the start of evaluation.
    pub e_init: f64,
    pub execution: Execution,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            policy: SweepPolicy::Baseline(PolicyKind::Greedy),
            seed: 0,
            e_init: 0.0,
            execution: Execution::default(),
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed for one candidate, a function of the master seed and the sizing only.
pub fn candidate_seed(master: u64, candidate: Candidate) -> u64 {
    splitmix64(splitmix64(master ^ candidate.c_ch.to_bits()) ^ candidate.e_max.to_bits())
}

/// Operates every candidate over the full trace and prices it.
pub fn sweep(
    candidates: &[Candidate],
    trace: &Trace,
    template: &PlantSpec,
    econ: &EconomicParams,
    options: &SweepOptions,
) -> Result<Vec<SizingResult>, SizingError> {
    if candidates.is_empty() {
        return Err(SizingError::Parameter("empty candidate list".into()));
    }
    econ.validate()?;
    if let SweepPolicy::Baseline(kind) = options.policy {
        if kind.baseline().is_none() {
            return Err(SizingError::Parameter(format!(
                "`{}` is not a rule-based policy",
                kind.as_str()
            )));
        }
    }
    Ok(par::map(options.execution, candidates, |&cand| {
        evaluate_candidate(cand, trace, template, econ, options).unwrap_or_else(|msg| {
            log::warn!("candidate ({}, {}) failed: {msg}", cand.c_ch, cand.e_max);
            SizingResult::failed(cand, econ, msg)
        })
    }))
}

fn evaluate_candidate(
    cand: Candidate,
    trace: &Trace,
    template: &PlantSpec,
    econ: &EconomicParams,
    options: &SweepOptions,
) -> Result<SizingResult, String> {
    let plant = template
        .resized(cand.c_ch, cand.e_max)
        .map_err(|e| e.to_string())?;
    let trained;
    let policy: Box<dyn Policy> = match &options.policy {
        SweepPolicy::Baseline(kind) => kind.baseline().expect("checked above"),
        SweepPolicy::Trained(config) => {
            let config = TrainConfig {
                seed: candidate_seed(options.seed, cand),
                ..config.clone()
            };
            trained = dqn::train(trace, &plant, &config).map_err(|e| e.to_string())?;
            Box::new(trained.policy)
        }
    };
    let e_init = options.e_init.min(plant.tes.capacity);
    let report =
        run_episode(policy.as_ref(), trace, &plant, e_init, false).map_err(|e| e.to_string())?;
    Ok(SizingResult::from_operation(
        cand,
        report.f_elec,
        report.total_lol,
        report.lol_incidents,
        report.tes_throughput,
        econ,
    ))
}

/// Least-LCC feasible result; ties go to lower CAPEX, then smaller chiller,
/// then smaller storage.
pub fn select_optimal(results: &[SizingResult]) -> Result<SizingResult, SizingError> {
    results
        .iter()
        .filter(|r| r.feasible && r.lcc.is_finite())
        .min_by(|a, b| {
            a.lcc
                .total_cmp(&b.lcc)
                .then(a.capex_total().total_cmp(&b.capex_total()))
                .then(a.c_ch.total_cmp(&b.c_ch))
                .then(a.e_max.total_cmp(&b.e_max))
        })
        .cloned()
        .ok_or_else(|| {
            let detail: Vec<String> = results
                .iter()
                .map(|r| match &r.error {
                    Some(e) => format!("({}, {}): failed ({e})", r.c_ch, r.e_max),
                    None => format!("({}, {}): total_lol {}", r.c_ch, r.e_max, r.total_lol),
                })
                .collect();
            SizingError::Infeasible(if detail.is_empty() {
                "no candidates".into()
            } else {
                detail.join("; ")
            })
        })
}

/// Writes `c_ch,e_max,capex_ch,capex_tes,f_elec,total_lol,lol_incidents,tes_throughput,opex,lcc,feasible`.
pub fn write_sweep_csv<W: Write>(results: &[SizingResult], out: W) -> Result<(), SizingError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "c_ch",
        "e_max",
        "capex_ch",
        "capex_tes",
        "f_elec",
        "total_lol",
        "lol_incidents",
        "tes_throughput",
        "opex",
        "lcc",
        "feasible",
    ])?;
    for r in results {
        w.write_record([
            r.c_ch.to_string(),
            r.e_max.to_string(),
            r.capex_ch.to_string(),
            r.capex_tes.to_string(),
            r.f_elec.to_string(),
            r.total_lol.to_string(),
            r.lol_incidents.to_string(),
            r.tes_throughput.to_string(),
            r.opex.to_string(),
            r.lcc.to_string(),
            r.feasible.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// JSON summary of a sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub optimum: Option<SizingResult>,
    pub feasible: usize,
    pub candidates: usize,
    pub failed: usize,
    pub results: Vec<SizingResult>,
}

impl SweepSummary {
    pub fn new(results: Vec<SizingResult>) -> Self {
        Self {
            optimum: select_optimal(&results).ok(),
            feasible: results.iter().filter(|r| r.feasible).count(),
            candidates: results.len(),
            failed: results.iter().filter(|r| r.error.is_some()).count(),
            results,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn econ() -> EconomicParams {
        EconomicParams::default()
    }

    #[test]
    fn capex_is_proportional() {
        assert_eq!(capex(700.0, 1500.0, &econ()).total, 6_737_000.0);
        assert_eq!(capex(400.0, 4000.0, &econ()).total, 8_564_000.0);
        assert_eq!(capex(0.0, 0.0, &econ()).total, 0.0);
    }

    #[test]
    fn single_year_closed_form() {
        let e = EconomicParams {
            horizon_years: 1,
            ..econ()
        };
        assert!((opex(106.0, 0.0, &e) - 100.0).abs() < 1e-12);
        assert_eq!(opex(0.0, 0.0, &econ()), 0.0);
    }

    #[test]
    fn start_of_year_discounting_is_larger() {
        let late = opex(1.0e6, 5.0e6, &econ());
        let early = opex(
            1.0e6,
            5.0e6,
            &EconomicParams {
                discounting: Discounting::StartOfYear,
                ..econ()
            },
        );
        assert!((early / late - 1.06).abs() < 1e-12);
    }

    #[test]
    fn opex_is_increasing() {
        let e = econ();
        assert!(opex(2.0, 1.0, &e) > opex(1.0, 1.0, &e));
        assert!(opex(1.0, 2.0, &e) > opex(1.0, 1.0, &e));
    }

    #[test]
    fn lcc_is_sum_of_parts() {
        let r = lcc(
            Candidate {
                c_ch: 500.0,
                e_max: 2500.0,
            },
            1_681_436.0,
            0.0,
            &econ(),
        );
        assert_eq!(r.lcc, r.capex_ch + r.capex_tes + r.opex);
        assert!(r.feasible);
    }

    #[test]
    fn selection_rules() {
        let e = econ();
        let a = lcc(
            Candidate {
                c_ch: 1.0,
                e_max: 0.0,
            },
            10.0,
            0.0,
            &e,
        );
        assert_eq!(select_optimal(std::slice::from_ref(&a)).unwrap(), a);
        let bad = lcc(
            Candidate {
                c_ch: 2.0,
                e_max: 0.0,
            },
            10.0,
            3.0,
            &e,
        );
        assert!(matches!(
            select_optimal(std::slice::from_ref(&bad)),
            Err(SizingError::Infeasible(_))
        ));
        assert!(select_optimal(&[]).is_err());
    }

    #[test]
    fn seeds_depend_on_the_candidate_only() {
        let a = Candidate {
            c_ch: 700.0,
            e_max: 1500.0,
        };
        let b = Candidate {
            c_ch: 1500.0,
            e_max: 700.0,
        };
        assert_eq!(candidate_seed(3, a), candidate_seed(3, a));
        assert_ne!(candidate_seed(3, a), candidate_seed(3, b));
        assert_ne!(candidate_seed(3, a), candidate_seed(4, a));
    }

    #[test]
    fn empty_sweep_is_rejected() {
        let t = crate::trace::generate_synthetic_trace(
            &crate::trace::SyntheticParams {
                hours: 24,
                ..Default::default()
            },
            1,
        )
        .unwrap();
        let plant = PlantSpec::linear(700.0, 1500.0).unwrap();
        assert!(matches!(
            sweep(&[], &t, &plant, &econ(), &SweepOptions::default()),
            Err(SizingError::Parameter(_))
        ));
    }
}
