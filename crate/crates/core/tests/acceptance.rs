//! Acceptance checks. Each test prints one `PASS`/`FAIL` line before asserting.
//! Lines go straight to the stdout handle so they show without `--nocapture`.

mod common;

use std::io::Write;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use chiller_tes::dqn::{self, QNetwork, TrainConfig};
use chiller_tes::env::run_episode;
use chiller_tes::oracle::{dp_solve, grid_rollout, OraclePolicy, SocGrid};
use chiller_tes::plant::{
    elec_power, feasible_bounds, step_tes, ChillerSpec, PlantSpec, TesSpec, CLAMP_TOLERANCE,
};
use chiller_tes::policies::{greedy_act, sdpp_act, Greedy, Policy, PolicyKind, Sdpp, Tfp};
use chiller_tes::sizing::{
    self, capex, lcc, opex, Candidate, Discounting, EconomicParams, SweepOptions, SweepPolicy,
};
use chiller_tes::trace::{generate_synthetic_trace, SyntheticParams, Trace};

use common::{hourly_trace, two_band_day, SIZING_TABLE};

fn say(line: &str) {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{line}").unwrap();
    out.flush().unwrap();
}

fn verdict(name: &str, pass: bool, detail: String) {
    say(&format!(
        "ACCEPTANCE {} {name}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    ));
    assert!(pass, "{name}: {detail}");
}

fn first_case<T: std::fmt::Debug>(cases: &[T]) -> String {
    cases
        .first()
        .map(|c| format!(", first {c:?}"))
        .unwrap_or_default()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn capex_reproduces_every_published_row() {
    let start = Instant::now();
    let econ = EconomicParams::default();
    let mismatches: Vec<_> = SIZING_TABLE
        .iter()
        .filter(|(c, e, published, ..)| {
            let total = capex(*c, *e, &econ).total;
            total.fract() != 0.0 || total as i64 != *published as i64
        })
        .collect();
    let elapsed = start.elapsed();
    verdict(
        "capex_golden",
        mismatches.is_empty() && elapsed < Duration::from_secs(1),
        format!("{} of 10 rows mismatched in {elapsed:?}", mismatches.len()),
    );
}

#[test]
fn opex_and_lcc_reproduce_published_rows_and_optimum() {
    let start = Instant::now();
    let econ = EconomicParams::default();
    let mut worst: f64 = 0.0;
    let mut results = Vec::new();
    for (c, e, _, f, published_opex, published_lcc) in SIZING_TABLE {
        let r = lcc(Candidate { c_ch: c, e_max: e }, f, 0.0, &econ);
        worst = worst
            .max(rel(r.opex, published_opex))
            .max(rel(r.lcc, published_lcc));
        results.push(r);
    }
    let best = sizing::select_optimal(&results).unwrap();
    let elapsed = start.elapsed();
    let pass = worst <= 1e-3
        && (best.c_ch, best.e_max) == (700.0, 1500.0)
        && rel(best.lcc, 33_401_922.0) <= 1e-3
        && elapsed < Duration::from_secs(1);
    verdict(
        "opex_lcc_golden",
        pass,
        format!(
            "worst relative error {worst:.2e}, optimum ({}, {}) with LCC {:.0}, {elapsed:?}",
            best.c_ch, best.e_max, best.lcc
        ),
    );
}

#[test]
fn start_of_year_discounting_does_not_match_published_opex() {
    let econ = EconomicParams {
        discounting: Discounting::StartOfYear,
        ..EconomicParams::default()
    };
    let variant = opex(1_694_901.0, 6_737_000.0, &econ);
    let deviation = rel(variant, 26_664_922.0);
    verdict(
        "discounting_variant_rejected",
        deviation > 0.05,
        format!(
            "start-of-year OPEX {variant:.0} deviates {:.2}% from published",
            100.0 * deviation
        ),
    );
}

#[test]
fn soc_stays_in_range_under_masked_random_steps() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst_excursion: f64 = 0.0;
    let mut clamps = 0usize;
    let mut steps = 0usize;
    while steps < 1_000_000 {
        let c_ch = rng.random_range(50.0..2000.0);
        let e_max = rng.random_range(0.0..5000.0);
        let eta = rng.random_range(0.5..=1.0);
        let chiller = ChillerSpec::linear(c_ch, 5.0).unwrap();
        let tes = TesSpec::new(e_max, eta).unwrap();
        let mut soc = rng.random_range(0.0..=e_max);
        for _ in 0..100 {
            let load = rng.random_range(0.0..1.5 * c_ch);
            let b = feasible_bounds(&chiller, &tes, load, soc).unwrap();
            let plr = if b.infeasible {
                1.0
            } else {
                rng.random_range(b.lower..=b.upper)
            };
            let s = step_tes(&tes, plr * c_ch, load, soc).unwrap();
            let out_of_range = (-s.soc_next).max(s.soc_next - e_max).max(0.0);
            worst_excursion = worst_excursion.max(out_of_range);
            if !b.infeasible {
                let raw = (-s.soc_unclamped).max(s.soc_unclamped - e_max);
                if raw > CLAMP_TOLERANCE {
                    clamps += 1;
                }
            }
            soc = s.soc_next;
            steps += 1;
        }
    }
    let elapsed = start.elapsed();
    verdict(
        "soc_safety_fuzz",
        worst_excursion <= 1e-9 && clamps == 0 && elapsed < Duration::from_secs(10),
        format!(
            "{steps} steps, worst excursion {worst_excursion:.1e}, {clamps} clamps, {elapsed:?}"
        ),
    );
}

#[test]
fn baseline_actions_sit_on_the_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut failures = 0;
    let mut infeasible = 0;
    for _ in 0..100_000 {
        let c_ch = rng.random_range(50.0..2000.0);
        let e_max = rng.random_range(0.0..5000.0);
        let eta: f64 = rng.random_range(0.5..=1.0);
        let chiller = ChillerSpec::linear(c_ch, 5.0).unwrap();
        let tes = TesSpec::new(e_max, eta).unwrap();
        let soc = rng.random_range(0.0..=e_max);
        let load = rng.random_range(0.0..2.0 * c_ch + e_max);
        let b = feasible_bounds(&chiller, &tes, load, soc).unwrap();
        let expected_infeasible = load > c_ch + eta * soc;
        infeasible += usize::from(b.infeasible);
        let ok = if b.infeasible {
            greedy_act(&b) == 1.0 && sdpp_act(&b) == 1.0
        } else {
            greedy_act(&b) == b.lower && sdpp_act(&b) == b.upper
        };
        if !ok || b.infeasible != expected_infeasible {
            failures += 1;
        }
    }
    verdict(
        "bound_identities",
        failures == 0,
        format!("{failures} violations over 100000 states ({infeasible} infeasible)"),
    );
}

/// Independent exhaustive search: every decision sequence is enumerated and
/// its stage costs summed from the last hour backwards.
mod brute {
    use super::*;

    pub struct Instance<'a> {
        pub trace: &'a Trace,
        pub plant: &'a PlantSpec,
        pub grid: &'a [f64],
        pub nodes: usize,
        pub penalty: f64,
    }

    fn node(soc: f64, e_max: f64, nodes: usize) -> usize {
        if e_max == 0.0 {
            return 0;
        }
        let d = e_max / (nodes - 1) as f64;
        let x = soc / d;
        let lo = x.floor();
        // Nearest node, exact midpoints to the lower one.
        let j = if x - lo > 0.5 { lo + 1.0 } else { lo };
        j.min((nodes - 1) as f64) as usize
    }

    fn node_soc(j: usize, e_max: f64, nodes: usize) -> f64 {
        if j + 1 == nodes {
            e_max
        } else {
            e_max / (nodes - 1) as f64 * j as f64
        }
    }

    fn decisions(inst: &Instance, load: f64, soc: f64) -> Vec<f64> {
        let c = &inst.plant.chiller;
        let t = &inst.plant.tes;
        let lower = ((load - t.efficiency * soc) / c.capacity).max(0.0);
        let upper = ((load + (t.capacity - soc) / t.efficiency) / c.capacity).min(1.0);
        if lower > upper {
            return vec![1.0];
        }
        let mut out = vec![lower, upper];
        for &g in inst.grid {
            if g >= lower - 1e-9 && g <= upper + 1e-9 {
                out.push(g.clamp(lower, upper));
            }
        }
        out
    }

    fn explore(inst: &Instance, k: usize, j: usize, costs: &mut Vec<f64>, best: &mut f64) {
        if k == inst.trace.len() {
            let total = costs.iter().rev().fold(0.0, |acc, c| c + acc);
            *best = best.min(total);
            return;
        }
        let rec = &inst.trace.records()[k];
        let e_max = inst.plant.tes.capacity;
        let soc = node_soc(j, e_max, inst.nodes);
        for a in decisions(inst, rec.load, soc) {
            let c = &inst.plant.chiller;
            let power = elec_power(c, a, c.ref_t_chw, c.ref_t_cond).unwrap();
            let s = step_tes(&inst.plant.tes, a * c.capacity, rec.load, soc).unwrap();
            costs.push(rec.prices[0] * power + inst.penalty * s.loss_of_load);
            explore(
                inst,
                k + 1,
                node(s.soc_next, e_max, inst.nodes),
                costs,
                best,
            );
            costs.pop();
        }
    }

    pub fn optimum(inst: &Instance, e_init: f64) -> f64 {
        let mut best = f64::INFINITY;
        let j = node(e_init, inst.plant.tes.capacity, inst.nodes);
        explore(inst, 0, j, &mut Vec::new(), &mut best);
        best
    }
}

fn random_instance(rng: &mut ChaCha8Rng, hours: usize) -> (Trace, PlantSpec) {
    let c_ch = rng.random_range(50.0..500.0);
    let e_max = rng.random_range(0.0..4.0 * c_ch);
    let rows: Vec<(f64, f64)> = (0..hours)
        .map(|_| {
            (
                rng.random_range(0.0..1.3 * c_ch),
                rng.random_range(0.0..10.0),
            )
        })
        .collect();
    let plant = PlantSpec::new(
        ChillerSpec::linear(c_ch, rng.random_range(2.0..6.0)).unwrap(),
        TesSpec::new(e_max, rng.random_range(0.7..=1.0)).unwrap(),
    );
    (hourly_trace(&rows), plant)
}

#[test]
fn dp_matches_exhaustive_enumeration() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut mismatches = Vec::new();
    for i in 0..100 {
        let hours = rng.random_range(1..=6);
        let (trace, plant) = random_instance(&mut rng, hours);
        let n_actions = rng.random_range(1..=4);
        let mut grid: Vec<f64> = (0..n_actions)
            .map(|_| rng.random_range(0.0..=1.0))
            .collect();
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        let nodes = rng.random_range(2..=8);
        let penalty = rng.random_range(0.0..100.0);
        let table = dp_solve(&trace, &plant, nodes, &grid, penalty).unwrap();
        let inst = brute::Instance {
            trace: &trace,
            plant: &plant,
            grid: &grid,
            nodes,
            penalty,
        };
        for j in 0..nodes {
            let e = SocGrid::new(nodes, plant.tes.capacity).unwrap().soc(j);
            let want = brute::optimum(&inst, e);
            let got = table.value(1, j);
            if got != want {
                mismatches.push(format!(
                    "instance {i} node {j}: dp {got} vs enumeration {want}"
                ));
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        "dp_bruteforce_equivalence",
        mismatches.is_empty() && elapsed < Duration::from_secs(30),
        format!(
            "{} mismatches over 100 instances in {elapsed:?}{}",
            mismatches.len(),
            first_case(&mismatches)
        ),
    );
}

#[test]
fn oracle_dominates_baselines_on_random_days() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let grid: Vec<f64> = (0..=10).map(|i| f64::from(i) / 10.0).collect();
    let mut violations = Vec::new();
    let mut worst_gap = f64::INFINITY;
    for i in 0..50 {
        let hours = rng.random_range(24..=48);
        let (trace, plant) = random_instance(&mut rng, hours);
        let penalty = 10.0 * trace.max_price() * plant.chiller.capacity;
        let nodes = 41;
        let table = dp_solve(&trace, &plant, nodes, &grid, penalty).unwrap();
        let soc_grid = table.grid;
        let oracle = OraclePolicy::new(table);
        let best = grid_rollout(&oracle, &trace, &plant, &soc_grid, 0.0, penalty)
            .unwrap()
            .cost;
        for base in [&Greedy as &dyn Policy, &Tfp, &Sdpp] {
            let cost = grid_rollout(base, &trace, &plant, &soc_grid, 0.0, penalty)
                .unwrap()
                .cost;
            // Forward and backward summation of the same stage costs may
            // differ in the last bits.
            if best > cost * (1.0 + 1e-12) + 1e-9 {
                violations.push(format!(
                    "instance {i}: oracle {best} > {} {cost}",
                    base.name()
                ));
            }
            worst_gap = worst_gap.min(cost - best);
        }
    }
    let elapsed = start.elapsed();
    verdict(
        "oracle_dominance",
        violations.is_empty() && elapsed < Duration::from_secs(60),
        format!(
            "{} violations over 50 instances, smallest margin {worst_gap:.3e}, {elapsed:?}{}",
            violations.len(),
            first_case(&violations)
        ),
    );
}

#[test]
fn network_gradient_matches_finite_differences() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let mut net = QNetwork::new(8, &[32, 32], &mut rng);
        for p in net.params_mut() {
            *p *= rng.random_range(0.5..2.0);
        }
        let x: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let analytic = net.param_gradient(&x).unwrap();
        let h = 1e-6;
        let mut num = 0.0;
        let mut den_fd = 0.0;
        let mut den_an = 0.0;
        for (i, &g) in analytic.iter().enumerate() {
            let orig = net.params()[i];
            net.params_mut()[i] = orig + h;
            let up = net.forward(&x).unwrap();
            net.params_mut()[i] = orig - h;
            let down = net.forward(&x).unwrap();
            net.params_mut()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            num += (fd - g) * (fd - g);
            den_fd += fd * fd;
            den_an += g * g;
        }
        worst = worst.max(num.sqrt() / den_fd.sqrt().max(den_an.sqrt()));
    }
    let elapsed = start.elapsed();
    verdict(
        "gradient_check",
        worst < 1e-4 && elapsed < Duration::from_secs(10),
        format!("worst relative error {worst:.2e} over 100 draws in {elapsed:?}"),
    );
}

#[test]
fn dqn_is_near_optimal_on_a_two_price_day() {
    let start = Instant::now();
    let trace = two_band_day();
    let plant = PlantSpec::linear(600.0, 1500.0).unwrap();
    let grid: Vec<f64> = (0..=10).map(|i| f64::from(i) / 10.0).collect();
    let dp_penalty = 10.0 * trace.max_price() * plant.chiller.capacity;
    let table = dp_solve(&trace, &plant, 301, &grid, dp_penalty).unwrap();
    let optimum = table.optimal_cost(0.0);

    // Ten times the dearest marginal cost of cooling: any feasible plan still
    // beats unmet load, while keeping targets on the scale of the energy cost.
    let penalty = 10.0 * trace.max_price() / plant.chiller.cop_ref;
    let config = TrainConfig {
        episodes: 1000,
        penalty: Some(penalty),
        seed: 0,
        ..TrainConfig::default()
    };
    let outcome = dqn::train(&trace, &plant, &config).unwrap();
    let report = run_episode(&outcome.policy, &trace, &plant, 0.0, false).unwrap();
    let greedy = run_episode(&Greedy, &trace, &plant, 0.0, false).unwrap();
    let gap = report.f_elec / optimum - 1.0;
    let elapsed = start.elapsed();
    verdict(
        "dqn_toy_near_optimal",
        gap <= 0.05 && report.total_lol == 0.0 && elapsed < Duration::from_secs(300),
        format!(
            "DQN {:.1} vs optimum {optimum:.1} ({:+.2}%), lol {:.1} (greedy lol {:.1}), {elapsed:?}",
            report.f_elec,
            100.0 * gap,
            report.total_lol,
            greedy.total_lol
        ),
    );
}

#[test]
fn dqn_enlarges_the_zero_loss_set_on_a_synthetic_year() {
    let start = Instant::now();
    let trace = generate_synthetic_trace(&SyntheticParams::default(), 42).unwrap();
    let template = PlantSpec::linear(700.0, 1500.0).unwrap();
    let econ = EconomicParams::default();
    let candidates: Vec<Candidate> = [800.0, 900.0, 1000.0]
        .iter()
        .flat_map(|&c_ch| [1000.0, 2000.0, 3000.0].map(|e_max| Candidate { c_ch, e_max }))
        .collect();
    let base = SweepOptions {
        policy: SweepPolicy::Baseline(PolicyKind::Greedy),
        seed: 1,
        ..SweepOptions::default()
    };
    let greedy = sizing::sweep(&candidates, &trace, &template, &econ, &base).unwrap();
    let learned = SweepOptions {
        policy: SweepPolicy::Trained(TrainConfig {
            episodes: 15,
            ..TrainConfig::default()
        }),
        ..base
    };
    let dqn = sizing::sweep(&candidates, &trace, &template, &econ, &learned).unwrap();

    let mut enlarged = 0;
    let mut cheaper = 0;
    let mut both = 0;
    for (g, d) in greedy.iter().zip(&dqn) {
        say(&format!(
            "  ({:>4}, {:>4}) greedy f_elec {:>10.0} lol {:>9.1} | dqn f_elec {:>10.0} lol {:>6.1}",
            g.c_ch, g.e_max, g.f_elec, g.total_lol, d.f_elec, d.total_lol
        ));
        if d.feasible && !g.feasible {
            enlarged += 1;
        }
        if d.feasible && g.feasible {
            both += 1;
            if d.f_elec < g.f_elec {
                cheaper += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        "synthetic_year_qualitative",
        enlarged > 0 && both > 0 && cheaper == both && elapsed < Duration::from_secs(1800),
        format!(
            "{enlarged} sizings feasible only under DQN; DQN cheaper on {cheaper} of {both} jointly feasible; {elapsed:?}"
        ),
    );
}

#[test]
fn sweep_reports_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_chiller-tes");
    let run = |name: &str, jobs: &str| {
        let out = dir.path().join(name);
        let status = Command::new(bin)
            .args([
                "sweep",
                "--policy",
                "dqn",
                "--episodes",
                "2",
                "--hours",
                "168",
                "--seed",
                "5",
            ])
            .args([
                "--candidates",
                "900x1000,1000x2000,800x3000",
                "--jobs",
                jobs,
            ])
            .arg("--out-dir")
            .arg(&out)
            .output()
            .unwrap();
        assert!(
            matches!(status.status.code(), Some(0) | Some(6)),
            "{}",
            String::from_utf8_lossy(&status.stderr)
        );
        std::fs::read(out.join("sweep.csv")).unwrap()
    };
    let first = run("a", "1");
    let second = run("b", "2");
    verdict(
        "sweep_determinism",
        first == second && !first.is_empty(),
        format!(
            "{} and {} bytes, identical: {}",
            first.len(),
            second.len(),
            first == second
        ),
    );
}
