//! Chiller and storage physics: electric power, the admissible PLR interval,
//! the storage transition and the per-hour reward.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Residue absorbed by the `[0, E_max]` clamps without being treated as a bug.
pub const CLAMP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum PlantError {
    #[error("part-load ratio {0} outside [0, 1]")]
    PlrDomain(f64),
    #[error("state of charge {soc} outside [0, {e_max}]")]
    SocDomain { soc: f64, e_max: f64 },
    #[error("{name} must be finite and nonnegative, got {value}")]
    NegativeInput { name: &'static str, value: f64 },
    #[error("invalid plant specification: {0}")]
    Spec(String),
}

/// EnergyPlus-style biquadratic `c0 + c1 x + c2 x^2 + c3 y + c4 y^2 + c5 x y`,
/// with `x` the chilled-water supply and `y` the condenser entering temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquadratic(pub [f64; 6]);

impl Biquadratic {
    pub const UNIT: Self = Self([1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);

    /// Curve value clamped at zero.
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let c = &self.0;
        (c[0] + c[1] * x + c[2] * x * x + c[3] * y + c[4] * y * y + c[5] * x * y).max(0.0)
    }
}

/// Quadratic `c0 + c1 a + c2 a^2` in the part-load ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadratic(pub [f64; 3]);

impl Quadratic {
    pub const IDENTITY: Self = Self([0.0, 1.0, 0.0]);

    pub fn eval(&self, a: f64) -> f64 {
        let c = &self.0;
        (c[0] + c[1] * a + c[2] * a * a).max(0.0)
    }

    /// Slope is `c1 + 2 c2 a`, linear in `a`, so checking both ends suffices.
    pub fn is_nondecreasing_on_unit_interval(&self) -> bool {
        let c = &self.0;
        c[1] >= 0.0 && c[1] + 2.0 * c[2] >= 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChillerSpec {
    /// Rated thermal output per hour, kWh_th.
    pub capacity: f64,
    pub cop_ref: f64,
    pub capft: Biquadratic,
    pub eirft: Biquadratic,
    pub eirplr: Quadratic,
    pub ref_t_chw: f64,
    pub ref_t_cond: f64,
}

impl ChillerSpec {
    /// Unit temperature curves and the identity part-load curve.
    pub fn linear(capacity: f64, cop_ref: f64) -> Result<Self, PlantError> {
        Self {
            capacity,
            cop_ref,
            capft: Biquadratic::UNIT,
            eirft: Biquadratic::UNIT,
            eirplr: Quadratic::IDENTITY,
            ref_t_chw: 4.0,
            ref_t_cond: 29.4,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self, PlantError> {
        if !(self.capacity.is_finite() && self.capacity > 0.0) {
            return Err(PlantError::Spec(format!(
                "chiller capacity must be positive, got {}",
                self.capacity
            )));
        }
        if !(self.cop_ref.is_finite() && self.cop_ref > 0.0) {
            return Err(PlantError::Spec(format!(
                "reference COP must be positive, got {}",
                self.cop_ref
            )));
        }
        if !self.eirplr.is_nondecreasing_on_unit_interval() {
            return Err(PlantError::Spec(
                "EIRPLR curve must be nondecreasing on [0, 1]".into(),
            ));
        }
        let coeffs = self
            .capft
            .0
            .iter()
            .chain(&self.eirft.0)
            .chain(&self.eirplr.0);
        if coeffs.into_iter().any(|c| !c.is_finite()) {
            return Err(PlantError::Spec("curve coefficients must be finite".into()));
        }
        Ok(self)
    }

    /// Electric power at full load under reference conditions, kW_e.
    pub fn q_ref(&self) -> f64 {
        self.capacity / self.cop_ref
    }

    pub fn with_capacity(&self, capacity: f64) -> Result<Self, PlantError> {
        Self {
            capacity,
            ..self.clone()
        }
        .validated()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TesSpec {
    /// Storage capacity E_max, kWh_th.
    pub capacity: f64,
    /// Efficiency applied once on charge and once on discharge.
    pub efficiency: f64,
}

impl TesSpec {
    pub const DEFAULT_ROUND_TRIP: f64 = 0.9;

    pub fn new(capacity: f64, efficiency: f64) -> Result<Self, PlantError> {
        if !(capacity.is_finite() && capacity >= 0.0) {
            return Err(PlantError::Spec(format!(
                "TES capacity must be nonnegative, got {capacity}"
            )));
        }
        if !(efficiency > 0.0 && efficiency <= 1.0) {
            return Err(PlantError::Spec(format!(
                "TES efficiency must lie in (0, 1], got {efficiency}"
            )));
        }
        Ok(Self {
            capacity,
            efficiency,
        })
    }

    /// Splits a round-trip efficiency symmetrically into charge and discharge legs.
    pub fn from_round_trip(capacity: f64, round_trip: f64) -> Result<Self, PlantError> {
        Self::new(capacity, round_trip.sqrt())
    }
}

/// Chiller plus storage: the sizing variable together with its performance data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantSpec {
    pub chiller: ChillerSpec,
    pub tes: TesSpec,
}

impl PlantSpec {
    pub fn new(chiller: ChillerSpec, tes: TesSpec) -> Self {
        Self { chiller, tes }
    }

    /// Unit curves, COP 5 and round-trip efficiency 0.9.
    pub fn linear(c_ch: f64, e_max: f64) -> Result<Self, PlantError> {
        Ok(Self {
            chiller: ChillerSpec::linear(c_ch, 5.0)?,
            tes: TesSpec::from_round_trip(e_max, TesSpec::DEFAULT_ROUND_TRIP)?,
        })
    }

    /// Same performance data resized to `(c_ch, e_max)`.
    pub fn resized(&self, c_ch: f64, e_max: f64) -> Result<Self, PlantError> {
        Ok(Self {
            chiller: self.chiller.with_capacity(c_ch)?,
            tes: TesSpec::new(e_max, self.tes.efficiency)?,
        })
    }

    pub fn elec_power(
        &self,
        plr: f64,
        t_chw: Option<f64>,
        t_cond: Option<f64>,
    ) -> Result<f64, PlantError> {
        elec_power(
            &self.chiller,
            plr,
            t_chw.unwrap_or(self.chiller.ref_t_chw),
            t_cond.unwrap_or(self.chiller.ref_t_cond),
        )
    }

    pub fn bounds(&self, load: f64, soc: f64) -> Result<FeasibleBounds, PlantError> {
        feasible_bounds(&self.chiller, &self.tes, load, soc)
    }
}

/// Electric input `Q_ref * EIRPLR(plr) * CAPFT(t) * EIRFT(t)` in kW_e.
pub fn elec_power(
    spec: &ChillerSpec,
    plr: f64,
    t_chw: f64,
    t_cond: f64,
) -> Result<f64, PlantError> {
    if !(0.0..=1.0).contains(&plr) {
        return Err(PlantError::PlrDomain(plr));
    }
    Ok(spec.q_ref()
        * spec.eirplr.eval(plr)
        * spec.capft.eval(t_chw, t_cond)
        * spec.eirft.eval(t_chw, t_cond))
}

/// Admissible part-load interval for one hour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeasibleBounds {
    pub lower: f64,
    pub upper: f64,
    /// Set when even full chiller output plus a full discharge cannot meet the load.
    pub infeasible: bool,
}

impl FeasibleBounds {
    pub fn contains(&self, plr: f64, tol: f64) -> bool {
        !self.infeasible && plr >= self.lower - tol && plr <= self.upper + tol
    }

    pub fn clamp(&self, plr: f64) -> f64 {
        if self.infeasible {
            1.0
        } else {
            plr.clamp(self.lower, self.upper)
        }
    }
}

fn check_nonneg(name: &'static str, value: f64) -> Result<(), PlantError> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(PlantError::NegativeInput { name, value })
    }
}

fn check_soc(tes: &TesSpec, soc: f64) -> Result<(), PlantError> {
    if soc.is_finite() && (0.0..=tes.capacity).contains(&soc) {
        Ok(())
    } else {
        Err(PlantError::SocDomain {
            soc,
            e_max: tes.capacity,
        })
    }
}

/// Lowest PLR that still meets `load` after fully discharging storage, and the
/// highest whose surplus still fits into the remaining headroom.
pub fn feasible_bounds(
    chiller: &ChillerSpec,
    tes: &TesSpec,
    load: f64,
    soc: f64,
) -> Result<FeasibleBounds, PlantError> {
    check_nonneg("cooling load", load)?;
    check_soc(tes, soc)?;
    let eta = tes.efficiency;
    let lower = ((load - eta * soc) / chiller.capacity).max(0.0);
    let upper = ((load + (tes.capacity - soc) / eta) / chiller.capacity).min(1.0);
    Ok(FeasibleBounds {
        lower,
        upper,
        infeasible: lower > upper,
    })
}

/// Result of one storage transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TesStep {
    /// Next state of charge, inside `[0, E_max]`.
    pub soc_next: f64,
    /// Unmet cooling demand, kWh_th.
    pub loss_of_load: f64,
    /// State of charge before clamping; differs from `soc_next` only when a clamp fired.
    pub soc_unclamped: f64,
}

impl TesStep {
    /// Amount removed by the clamp beyond what unmet load explains.
    pub fn clamp_excess(&self) -> f64 {
        if self.loss_of_load > 0.0 {
            0.0
        } else {
            (self.soc_unclamped - self.soc_next).abs()
        }
    }
}

/// Advances storage by one hour given the chiller output `a * C_ch`.
pub fn step_tes(
    tes: &TesSpec,
    chiller_output: f64,
    load: f64,
    soc: f64,
) -> Result<TesStep, PlantError> {
    check_nonneg("chiller output", chiller_output)?;
    check_nonneg("cooling load", load)?;
    check_soc(tes, soc)?;
    let eta = tes.efficiency;
    let surplus = chiller_output - load;
    if surplus >= 0.0 {
        let raw = soc + eta * surplus;
        Ok(TesStep {
            soc_next: raw.min(tes.capacity),
            loss_of_load: 0.0,
            soc_unclamped: raw,
        })
    } else {
        let raw = soc + surplus / eta;
        // A shortfall within round-off of zero is an exact discharge at the
        // lower bound, not unmet load.
        let shortfall = load - chiller_output - eta * soc;
        Ok(TesStep {
            soc_next: raw.max(0.0),
            loss_of_load: if shortfall > CLAMP_TOLERANCE {
                shortfall
            } else {
                0.0
            },
            soc_unclamped: raw,
        })
    }
}

/// Training reward `-P * power - penalty * loss`.
pub fn stage_reward(price: f64, power: f64, loss_of_load: f64, penalty: f64) -> f64 {
    -stage_cost(price, power, loss_of_load, penalty)
}

/// Cost minimised by the learner and the oracle; the negation of [`stage_reward`].
pub fn stage_cost(price: f64, power: f64, loss_of_load: f64, penalty: f64) -> f64 {
    price * power + penalty * loss_of_load
}

/// Loss-of-load penalty used when none is configured: ten times the dearest
/// price times the chiller capacity, per kWh_th of unmet load.
pub fn default_penalty(max_price: f64, c_ch: f64) -> f64 {
    10.0 * max_price * c_ch
}
