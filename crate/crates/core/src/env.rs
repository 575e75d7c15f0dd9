//! Hour-by-hour simulator of the chiller and storage plant under a policy.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plant::{step_tes, FeasibleBounds, PlantError, PlantSpec, CLAMP_TOLERANCE};
use crate::policies::{Policy, PolicyError};
use crate::trace::{min_available_price, Trace, TraceError};

/// Snap tolerance when checking a commanded PLR against the mask.
pub const MASK_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("masking violation at step {k}: PLR {plr} outside [{lower}, {upper}] (infeasible: {infeasible})")]
    Masking {
        k: usize,
        plr: f64,
        lower: f64,
        upper: f64,
        infeasible: bool,
    },
    #[error("internal consistency error at step {k}: storage clamp removed {excess} kWh_th")]
    Consistency { k: usize, excess: f64 },
    #[error("step {k} is outside the trace (length {len})")]
    OffTrace { k: usize, len: usize },
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("policy error: {0}")]
    Policy(#[from] PolicyError),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// The MDP state at the start of hour `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    /// 1-based step index.
    pub k: usize,
    pub load: f64,
    pub soc: f64,
    pub price: f64,
    pub hour: u8,
    pub day: u16,
    pub availability: Vec<bool>,
    pub t_chw: Option<f64>,
    pub t_cond: Option<f64>,
}

impl SimState {
    fn at(trace: &Trace, k: usize, soc: f64) -> Result<Self, EnvError> {
        let rec = trace.records().get(k - 1).ok_or(EnvError::OffTrace {
            k,
            len: trace.len(),
        })?;
        Ok(Self {
            k,
            load: rec.load,
            soc,
            price: min_available_price(rec)?,
            hour: rec.hour,
            day: rec.day,
            availability: rec.availability.clone(),
            t_chw: rec.t_chw,
            t_cond: rec.t_cond,
        })
    }

    pub fn bounds(&self, plant: &PlantSpec) -> Result<FeasibleBounds, PlantError> {
        plant.bounds(self.load, self.soc)
    }
}

/// State at `k = 1` with storage at `e_init`.
pub fn reset(trace: &Trace, plant: &PlantSpec, e_init: f64) -> Result<SimState, EnvError> {
    if !(e_init.is_finite() && (0.0..=plant.tes.capacity).contains(&e_init)) {
        return Err(PlantError::SocDomain {
            soc: e_init,
            e_max: plant.tes.capacity,
        }
        .into());
    }
    SimState::at(trace, 1, e_init)
}

/// Everything that happened in one hour.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub bounds: FeasibleBounds,
    /// PLR actually run: the command snapped into the mask, or 1 when infeasible.
    pub plr: f64,
    pub power_kw: f64,
    /// Electricity cost `P * power`; never includes the loss-of-load penalty.
    pub cost: f64,
    pub loss_of_load: f64,
    /// Cooling delivered from storage to the load.
    pub discharged: f64,
    pub soc_next: f64,
    /// `None` after the last hour of the trace.
    pub next: Option<SimState>,
}

/// Executes `plr` in `state`.
pub fn step(
    state: &SimState,
    plr: f64,
    trace: &Trace,
    plant: &PlantSpec,
) -> Result<StepOutcome, EnvError> {
    let bounds = state.bounds(plant)?;
    let violation = || EnvError::Masking {
        k: state.k,
        plr,
        lower: bounds.lower,
        upper: bounds.upper,
        infeasible: bounds.infeasible,
    };
    let executed = if bounds.infeasible {
        if (plr - 1.0).abs() > MASK_TOLERANCE {
            return Err(violation());
        }
        1.0
    } else {
        if !bounds.contains(plr, MASK_TOLERANCE) {
            return Err(violation());
        }
        bounds.clamp(plr)
    };

    let power_kw = plant.elec_power(executed, state.t_chw, state.t_cond)?;
    let output = executed * plant.chiller.capacity;
    let tes = step_tes(&plant.tes, output, state.load, state.soc)?;
    if cfg!(debug_assertions) && tes.clamp_excess() > CLAMP_TOLERANCE {
        return Err(EnvError::Consistency {
            k: state.k,
            excess: tes.clamp_excess(),
        });
    }
    let discharged = (state.load - output - tes.loss_of_load).max(0.0);
    let next = if state.k < trace.len() {
        Some(SimState::at(trace, state.k + 1, tes.soc_next)?)
    } else {
        None
    };
    Ok(StepOutcome {
        bounds,
        plr: executed,
        power_kw,
        cost: state.price * power_kw,
        loss_of_load: tes.loss_of_load,
        discharged,
        soc_next: tes.soc_next,
        next,
    })
}

/// One row of the optional per-step log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLogEntry {
    pub k: usize,
    pub day: u16,
    pub hour: u8,
    pub load: f64,
    pub price: f64,
    pub plr: f64,
    /// State of charge at the start of the hour.
    pub soc: f64,
    pub power_kw: f64,
    pub cost: f64,
    pub lol: f64,
}

/// Per-episode metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub policy: String,
    pub steps: usize,
    pub e_init: f64,
    /// Total electricity cost.
    pub f_elec: f64,
    /// Total unmet cooling, kWh_th.
    pub total_lol: f64,
    pub lol_incidents: usize,
    /// Cooling delivered from storage to the load, kWh_th.
    pub tes_throughput: f64,
    #[serde(skip)]
    pub log: Option<Vec<StepLogEntry>>,
}

/// Rolls `policy` through the whole trace starting from `e_init`.
pub fn run_episode(
    policy: &dyn Policy,
    trace: &Trace,
    plant: &PlantSpec,
    e_init: f64,
    record_log: bool,
) -> Result<EpisodeReport, EnvError> {
    let mut report = EpisodeReport {
        policy: policy.name().to_string(),
        steps: 0,
        e_init,
        f_elec: 0.0,
        total_lol: 0.0,
        lol_incidents: 0,
        tes_throughput: 0.0,
        log: record_log.then(|| Vec::with_capacity(trace.len())),
    };
    let mut state = Some(reset(trace, plant, e_init)?);
    while let Some(s) = state {
        let bounds = s.bounds(plant)?;
        let plr = policy.act(&s, &bounds)?;
        let out = step(&s, plr, trace, plant)?;
        report.steps += 1;
        report.f_elec += out.cost;
        report.total_lol += out.loss_of_load;
        if out.bounds.infeasible || out.loss_of_load > 0.0 {
            report.lol_incidents += 1;
        }
        report.tes_throughput += out.discharged;
        if let Some(log) = report.log.as_mut() {
            log.push(StepLogEntry {
                k: s.k,
                day: s.day,
                hour: s.hour,
                load: s.load,
                price: s.price,
                plr: out.plr,
                soc: s.soc,
                power_kw: out.power_kw,
                cost: out.cost,
                lol: out.loss_of_load,
            });
        }
        state = out.next;
    }
    Ok(report)
}

/// Writes the step log as `k,day,hour,load,price,plr,soc,power_kw,cost,lol`.
pub fn write_step_log<W: Write>(entries: &[StepLogEntry], out: W) -> Result<(), EnvError> {
    let mut writer = csv::Writer::from_writer(out);
    for e in entries {
        writer.serialize(e)?;
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}
