use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::env::SimState;
use crate::plant::PlantSpec;
use crate::trace::{Trace, DAYS_PER_YEAR};

/// Position of the action in the network input.
pub const ACTION_SLOT: usize = 7;

/// Min/max scaling constants taken from the training trace and plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub load_min: f64,
    pub load_max: f64,
    pub price_min: f64,
    pub price_max: f64,
    pub soc_max: f64,
    pub num_sources: usize,
}

impl Normalization {
    pub fn from_trace(trace: &Trace, plant: &PlantSpec) -> Self {
        let prices = trace.effective_prices();
        let loads = trace.records().iter().map(|r| r.load);
        Self {
            load_min: loads.clone().fold(f64::INFINITY, f64::min),
            load_max: loads.fold(f64::NEG_INFINITY, f64::max),
            price_min: prices.iter().copied().fold(f64::INFINITY, f64::min),
            price_max: prices.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            soc_max: plant.tes.capacity,
            num_sources: trace.num_sources(),
        }
    }

    /// Length of the full network input.
    pub fn input_len(&self) -> usize {
        ACTION_SLOT
            + 1
            + if self.num_sources > 1 {
                self.num_sources
            } else {
                0
            }
    }
}

fn scale(v: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        (v - lo) / (hi - lo)
    } else {
        0.0
    }
}

/// Action-free features: scaled load, storage and price, then the
/// hour-of-day and day-of-year phases, then availability flags when there is
/// more than one source.
pub fn state_features(state: &SimState, norms: &Normalization) -> Vec<f64> {
    let mut f = Vec::with_capacity(norms.input_len() - 1);
    let hour = 2.0 * PI * f64::from(state.hour) / 24.0;
    let day = 2.0 * PI * f64::from(state.day) / f64::from(DAYS_PER_YEAR);
    f.extend([
        scale(state.load, norms.load_min, norms.load_max),
        scale(state.soc, 0.0, norms.soc_max),
        scale(state.price, norms.price_min, norms.price_max),
        hour.sin(),
        hour.cos(),
        day.sin(),
        day.cos(),
    ]);
    if norms.num_sources > 1 {
        f.extend(
            state
                .availability
                .iter()
                .map(|&a| if a { 1.0 } else { 0.0 }),
        );
    }
    f
}

/// Writes the network input for `(state features, action)` into `out`.
pub fn with_action(state_features: &[f64], plr: f64, out: &mut Vec<f64>) {
    out.clear();
    out.extend_from_slice(&state_features[..ACTION_SLOT]);
    out.push(plr);
    out.extend_from_slice(&state_features[ACTION_SLOT..]);
}

/// `[load, soc, price, sin h, cos h, sin d, cos d, plr, availability...]`.
pub fn featurize(state: &SimState, plr: f64, norms: &Normalization) -> Vec<f64> {
    let mut out = Vec::with_capacity(norms.input_len());
    with_action(&state_features(state, norms), plr, &mut out);
    out
}
