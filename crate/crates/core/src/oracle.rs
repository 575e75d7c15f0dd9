//! Exact backward induction on a discretised state-of-charge grid.
//!
//! The trace is known in advance, so the optimum is a deterministic
//! shortest path over `(hour, SoC node)`. Next-hour storage is rounded to the
//! nearest node (ties go to the lower node) and cost is undiscounted.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::env::{SimState, MASK_TOLERANCE};
use crate::par::{self, Execution};
use crate::plant::{step_tes, FeasibleBounds, PlantError, PlantSpec};
use crate::policies::{Policy, PolicyError};
use crate::trace::{min_available_price, Trace, TraceError};

/// Longest horizon accepted by [`dp_solve`] unless overridden.
pub const DEFAULT_HORIZON_CAP: usize = 168;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("horizon of {t} hours exceeds the cap of {cap}")]
    Size { t: usize, cap: usize },
    #[error("{0}")]
    Domain(String),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Evenly spaced storage levels `0, d, 2d, ..., E_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SocGrid {
    pub nodes: usize,
    pub e_max: f64,
}

impl SocGrid {
    pub fn new(nodes: usize, e_max: f64) -> Result<Self, OracleError> {
        if nodes < 2 && e_max > 0.0 {
            return Err(OracleError::Domain(
                "a SoC grid needs at least two nodes".into(),
            ));
        }
        if nodes == 0 || !(e_max.is_finite() && e_max >= 0.0) {
            return Err(OracleError::Domain(format!(
                "invalid SoC grid ({nodes} nodes, E_max {e_max})"
            )));
        }
        Ok(Self { nodes, e_max })
    }

    pub fn spacing(&self) -> f64 {
        if self.nodes > 1 {
            self.e_max / (self.nodes - 1) as f64
        } else {
            0.0
        }
    }

    pub fn soc(&self, j: usize) -> f64 {
        if j + 1 == self.nodes {
            self.e_max
        } else {
            self.spacing() * j as f64
        }
    }

    /// Nearest node; exact midpoints round down.
    pub fn node_of(&self, soc: f64) -> usize {
        let d = self.spacing();
        if d == 0.0 {
            return 0;
        }
        let j = (soc / d - 0.5).ceil();
        j.clamp(0.0, (self.nodes - 1) as f64) as usize
    }
}

/// Optimal cost-to-go and decisions for every `(k, node)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub grid: SocGrid,
    pub horizon: usize,
    pub penalty: f64,
    /// `(T + 1) x nodes`, row `k - 1` holds `V_k`.
    values: Vec<f64>,
    /// `T x nodes` minimising PLR.
    argmin: Vec<f64>,
}

impl ValueTable {
    /// `V_k(node j)` for `k` in `1..=T+1`.
    pub fn value(&self, k: usize, j: usize) -> f64 {
        self.values[(k - 1) * self.grid.nodes + j]
    }

    /// Minimising PLR at hour `k` in `1..=T`.
    pub fn argmin(&self, k: usize, j: usize) -> f64 {
        self.argmin[(k - 1) * self.grid.nodes + j]
    }

    /// `V_1` at the node nearest `e_init`.
    pub fn optimal_cost(&self, e_init: f64) -> f64 {
        self.value(1, self.grid.node_of(e_init))
    }

    pub fn values_at(&self, k: usize) -> &[f64] {
        let n = self.grid.nodes;
        &self.values[(k - 1) * n..k * n]
    }
}

/// Decision candidates in one state: admissible grid points plus both bounds,
/// ascending and deduplicated. Infeasible states only allow full load.
pub fn candidate_actions(bounds: &FeasibleBounds, grid: &[f64]) -> Vec<f64> {
    if bounds.infeasible {
        return vec![1.0];
    }
    let mut out: Vec<f64> = grid
        .iter()
        .filter(|&&g| bounds.contains(g, MASK_TOLERANCE))
        .map(|&g| bounds.clamp(g))
        .chain([bounds.lower, bounds.upper])
        .collect();
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

/// Stage cost and next storage level for one decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub cost: f64,
    pub soc_next: f64,
    pub loss_of_load: f64,
}

/// Executes `plr` from `soc` at hour `k` (1-based); the cost includes the penalty.
pub fn transition(
    trace: &Trace,
    plant: &PlantSpec,
    k: usize,
    soc: f64,
    plr: f64,
    penalty: f64,
) -> Result<Transition, OracleError> {
    let rec = &trace.records()[k - 1];
    let price = min_available_price(rec)?;
    let power = plant.elec_power(plr, rec.t_chw, rec.t_cond)?;
    let tes = step_tes(&plant.tes, plr * plant.chiller.capacity, rec.load, soc)?;
    Ok(Transition {
        cost: price * power + penalty * tes.loss_of_load,
        soc_next: tes.soc_next,
        loss_of_load: tes.loss_of_load,
    })
}

/// Backward induction with the default horizon cap and execution mode.
pub fn dp_solve(
    trace: &Trace,
    plant: &PlantSpec,
    soc_nodes: usize,
    action_grid: &[f64],
    penalty: f64,
) -> Result<ValueTable, OracleError> {
    dp_solve_with(
        trace,
        plant,
        soc_nodes,
        action_grid,
        penalty,
        DEFAULT_HORIZON_CAP,
        Execution::default(),
    )
}

/// Backward induction; nodes within an hour are evaluated through `exec`.
pub fn dp_solve_with(
    trace: &Trace,
    plant: &PlantSpec,
    soc_nodes: usize,
    action_grid: &[f64],
    penalty: f64,
    horizon_cap: usize,
    exec: Execution,
) -> Result<ValueTable, OracleError> {
    let t = trace.len();
    if t > horizon_cap {
        return Err(OracleError::Size {
            t,
            cap: horizon_cap,
        });
    }
    if action_grid.is_empty() {
        return Err(OracleError::Domain("empty action grid".into()));
    }
    let grid = SocGrid::new(soc_nodes, plant.tes.capacity)?;
    let n = grid.nodes;
    let mut values = vec![0.0; (t + 1) * n];
    let mut argmin = vec![0.0; t * n];

    for k in (1..=t).rev() {
        let load = trace.records()[k - 1].load;
        let next = &values[k * n..(k + 1) * n];
        let row = par::map_range(exec, n, |j| -> Result<(f64, f64), OracleError> {
            let soc = grid.soc(j);
            let bounds = plant.bounds(load, soc)?;
            let mut best = (f64::INFINITY, f64::NAN);
            for a in candidate_actions(&bounds, action_grid) {
                let tr = transition(trace, plant, k, soc, a, penalty)?;
                let v = tr.cost + next[grid.node_of(tr.soc_next)];
                if v < best.0 {
                    best = (v, a);
                }
            }
            Ok(best)
        });
        for (j, cell) in row.into_iter().enumerate() {
            let (v, a) = cell?;
            values[(k - 1) * n + j] = v;
            argmin[(k - 1) * n + j] = a;
        }
    }

    Ok(ValueTable {
        grid,
        horizon: t,
        penalty,
        values,
        argmin,
    })
}

/// `V_k(node j-1) - V_k(node j)`: cost avoided by one more grid step of storage.
pub fn marginal_value(table: &ValueTable, k: usize, j: usize) -> Result<f64, OracleError> {
    if j == 0 || j >= table.grid.nodes {
        return Err(OracleError::Domain(format!(
            "marginal value needs 1 <= j < {}, got {j}",
            table.grid.nodes
        )));
    }
    if k == 0 || k > table.horizon + 1 {
        return Err(OracleError::Domain(format!(
            "hour {k} outside 1..={}",
            table.horizon + 1
        )));
    }
    Ok(table.value(k, j - 1) - table.value(k, j))
}

/// Plays the argmin table at the node nearest the current storage level.
#[derive(Debug, Clone)]
pub struct OraclePolicy {
    table: ValueTable,
}

impl OraclePolicy {
    pub fn new(table: ValueTable) -> Self {
        Self { table }
    }

    pub fn table(&self) -> &ValueTable {
        &self.table
    }
}

impl Policy for OraclePolicy {
    fn name(&self) -> &str {
        "oracle"
    }

    fn act(&self, state: &SimState, bounds: &FeasibleBounds) -> Result<f64, PolicyError> {
        if state.k == 0 || state.k > self.table.horizon {
            return Err(PolicyError(format!(
                "step {} is outside the solved horizon of {} hours",
                state.k, self.table.horizon
            )));
        }
        let j = self.table.grid.node_of(state.soc);
        Ok(bounds.clamp(self.table.argmin(state.k, j)))
    }
}

/// Result of a rollout on the discretised dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridRollout {
    /// Electricity cost plus penalty.
    pub cost: f64,
    pub f_elec: f64,
    pub total_lol: f64,
}

/// Rolls `policy` forward with storage snapped to the grid after every hour,
/// i.e. on exactly the dynamics the table was solved for.
pub fn grid_rollout(
    policy: &dyn Policy,
    trace: &Trace,
    plant: &PlantSpec,
    grid: &SocGrid,
    e_init: f64,
    penalty: f64,
) -> Result<GridRollout, OracleError> {
    let mut j = grid.node_of(e_init);
    let mut out = GridRollout {
        cost: 0.0,
        f_elec: 0.0,
        total_lol: 0.0,
    };
    for (i, rec) in trace.records().iter().enumerate() {
        let soc = grid.soc(j);
        let state = SimState {
            k: i + 1,
            load: rec.load,
            soc,
            price: min_available_price(rec)?,
            hour: rec.hour,
            day: rec.day,
            availability: rec.availability.clone(),
            t_chw: rec.t_chw,
            t_cond: rec.t_cond,
        };
        let bounds = plant.bounds(rec.load, soc)?;
        let plr = bounds.clamp(
            policy
                .act(&state, &bounds)
                .map_err(|e| OracleError::Domain(e.0))?,
        );
        let tr = transition(trace, plant, i + 1, soc, plr, penalty)?;
        out.cost += tr.cost;
        out.f_elec += tr.cost - penalty * tr.loss_of_load;
        out.total_lol += tr.loss_of_load;
        j = grid.node_of(tr.soc_next);
    }
    Ok(out)
}

#[derive(Serialize)]
struct TableRow {
    k: usize,
    node: usize,
    soc: f64,
    value: f64,
    argmin_plr: Option<f64>,
}

/// Writes `k,node,soc,value,argmin_plr`; the terminal row has no action.
pub fn write_value_table<W: Write>(table: &ValueTable, out: W) -> Result<(), OracleError> {
    let mut w = csv::Writer::from_writer(out);
    for k in 1..=table.horizon + 1 {
        for j in 0..table.grid.nodes {
            w.serialize(TableRow {
                k,
                node: j,
                soc: table.grid.soc(j),
                value: table.value(k, j),
                argmin_plr: (k <= table.horizon).then(|| table.argmin(k, j)),
            })?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policies::{Greedy, Sdpp};
    use crate::trace::HourlyRecord;

    fn trace(rows: &[(f64, f64)]) -> Trace {
        let records = rows
            .iter()
            .enumerate()
            .map(|(i, &(load, price))| HourlyRecord {
                day: 1,
                hour: i as u8,
                load,
                prices: vec![price],
                availability: vec![true],
                t_chw: None,
                t_cond: None,
            })
            .collect();
        Trace::new(records, "test").unwrap()
    }

    fn grid11() -> Vec<f64> {
        (0..=10).map(|i| f64::from(i) / 10.0).collect()
    }

    #[test]
    fn node_rounding_ties_down() {
        let g = SocGrid::new(5, 100.0).unwrap();
        assert_eq!(g.node_of(12.5), 0);
        assert_eq!(g.node_of(12.6), 1);
        assert_eq!(g.node_of(37.5), 1);
        assert_eq!(g.node_of(100.0), 4);
        assert_eq!(g.node_of(0.0), 0);
        assert_eq!(g.soc(4), 100.0);
    }

    #[test]
    fn zero_trace_has_zero_value() {
        let t = trace(&[(0.0, 0.0); 5]);
        let plant = PlantSpec::linear(100.0, 200.0).unwrap();
        let table = dp_solve(&t, &plant, 11, &grid11(), 1e4).unwrap();
        assert!(table.values.iter().all(|&v| v == 0.0));
        for j in 1..11 {
            assert_eq!(marginal_value(&table, 3, j).unwrap(), 0.0);
        }
    }

    #[test]
    fn single_step_closed_form() {
        let t = trace(&[(100.0, 7.0)]);
        let plant = PlantSpec::linear(100.0, 0.0).unwrap();
        let table = dp_solve(&t, &plant, 1, &grid11(), 1e4).unwrap();
        let q_ref = plant.chiller.q_ref();
        assert!((table.value(1, 0) - 7.0 * q_ref * 1.0).abs() < 1e-9);
        assert_eq!(table.argmin(1, 0), 1.0);
    }

    #[test]
    fn horizon_cap_is_enforced() {
        let t = trace(&[(1.0, 1.0); 10]);
        let plant = PlantSpec::linear(10.0, 10.0).unwrap();
        let err =
            dp_solve_with(&t, &plant, 3, &grid11(), 0.0, 5, Execution::Sequential).unwrap_err();
        assert!(matches!(err, OracleError::Size { t: 10, cap: 5 }));
    }

    #[test]
    fn marginal_value_domain() {
        let t = trace(&[(10.0, 1.0)]);
        let plant = PlantSpec::linear(10.0, 10.0).unwrap();
        let table = dp_solve(&t, &plant, 3, &grid11(), 0.0).unwrap();
        assert!(marginal_value(&table, 1, 0).is_err());
        assert_eq!(marginal_value(&table, 2, 1).unwrap(), 0.0);
    }

    #[test]
    fn storage_is_valuable_before_a_price_spike() {
        let mut rows = vec![(50.0, 1.0); 6];
        rows.extend([(50.0, 20.0); 3]);
        let t = trace(&rows);
        let plant = PlantSpec::linear(100.0, 300.0).unwrap();
        let table = dp_solve(&t, &plant, 31, &grid11(), 1e5).unwrap();
        for k in 1..=6 {
            assert!(marginal_value(&table, k, 1).unwrap() > 0.0, "hour {k}");
        }
        for k in 1..=t.len() + 1 {
            for j in 1..31 {
                assert!(marginal_value(&table, k, j).unwrap() >= -1e-9);
            }
        }
    }

    #[test]
    fn oracle_rollout_matches_value_and_dominates() {
        let rows: Vec<_> = (0..24)
            .map(|h| {
                let price = if (8..20).contains(&h) { 9.0 } else { 3.0 };
                let load = if (10..18).contains(&h) { 140.0 } else { 40.0 };
                (load, price)
            })
            .collect();
        let t = trace(&rows);
        let plant = PlantSpec::linear(100.0, 400.0).unwrap();
        let penalty = 1e4;
        let table = dp_solve(&t, &plant, 41, &grid11(), penalty).unwrap();
        let grid = table.grid;
        let oracle = OraclePolicy::new(table.clone());
        let r = grid_rollout(&oracle, &t, &plant, &grid, 0.0, penalty).unwrap();
        let v = table.optimal_cost(0.0);
        assert!((r.cost - v).abs() <= 1e-6 * v.abs());
        for base in [&Greedy as &dyn Policy, &Sdpp] {
            let b = grid_rollout(base, &t, &plant, &grid, 0.0, penalty).unwrap();
            assert!(
                r.cost <= b.cost * (1.0 + 1e-12),
                "{} beat the oracle",
                base.name()
            );
        }
    }

    #[test]
    fn csv_export_has_all_rows() {
        let t = trace(&[(10.0, 1.0), (10.0, 2.0)]);
        let plant = PlantSpec::linear(10.0, 10.0).unwrap();
        let table = dp_solve(&t, &plant, 3, &grid11(), 0.0).unwrap();
        let mut buf = Vec::new();
        write_value_table(&table, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("k,node,soc,value,argmin_plr\n"));
        assert_eq!(text.lines().count(), 1 + 3 * 3);
    }
}
