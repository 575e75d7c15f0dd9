//! Operating policies. The three rule-based baselines act on the continuous
//! feasible interval; the learned and oracle policies implement the same trait.

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::SimState;
use crate::plant::FeasibleBounds;

#[derive(Debug, Error)]
#[error("{0}")]
pub struct PolicyError(pub String);

pub trait Policy: Send + Sync {
    fn name(&self) -> &str;

    /// Commanded PLR. Must lie in `[lower, upper]` when the state is feasible
    /// and be exactly 1 when it is not.
    fn act(&self, state: &SimState, bounds: &FeasibleBounds) -> Result<f64, PolicyError>;
}

/// Myopic: cheapest admissible action, i.e. the lower bound.
#[derive(Debug, Clone, Copy, Default)]
pub struct Greedy;

/// Storage-first: serve from storage when it holds at least the demand,
/// otherwise run as hard as the headroom allows.
#[derive(Debug, Clone, Copy, Default)]
pub struct Tfp;

/// Pessimistic extreme: always the upper bound, maximising next-hour storage.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sdpp;

pub fn greedy_act(bounds: &FeasibleBounds) -> f64 {
    if bounds.infeasible {
        1.0
    } else {
        bounds.lower
    }
}

/// When `soc >= load` the storage-first rule wants the chiller off; after
/// discharge losses that is only admissible if the lower bound is zero, so the
/// rule degrades to the lower bound otherwise.
pub fn tfp_act(state: &SimState, bounds: &FeasibleBounds) -> f64 {
    if bounds.infeasible {
        1.0
    } else if state.soc >= state.load {
        bounds.lower
    } else {
        bounds.upper
    }
}

pub fn sdpp_act(bounds: &FeasibleBounds) -> f64 {
    if bounds.infeasible {
        1.0
    } else {
        bounds.upper
    }
}

impl Policy for Greedy {
    fn name(&self) -> &str {
        "greedy"
    }

    fn act(&self, _state: &SimState, bounds: &FeasibleBounds) -> Result<f64, PolicyError> {
        Ok(greedy_act(bounds))
    }
}

impl Policy for Tfp {
    fn name(&self) -> &str {
        "tfp"
    }

    fn act(&self, state: &SimState, bounds: &FeasibleBounds) -> Result<f64, PolicyError> {
        Ok(tfp_act(state, bounds))
    }
}

impl Policy for Sdpp {
    fn name(&self) -> &str {
        "sdpp"
    }

    fn act(&self, _state: &SimState, bounds: &FeasibleBounds) -> Result<f64, PolicyError> {
        Ok(sdpp_act(bounds))
    }
}

/// Every policy selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Greedy,
    Tfp,
    Sdpp,
    Dqn,
    Oracle,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Greedy => "greedy",
            Self::Tfp => "tfp",
            Self::Sdpp => "sdpp",
            Self::Dqn => "dqn",
            Self::Oracle => "oracle",
        }
    }

    /// The stateless rule-based policies.
    pub fn baseline(self) -> Option<Box<dyn Policy>> {
        match self {
            Self::Greedy => Some(Box::new(Greedy)),
            Self::Tfp => Some(Box::new(Tfp)),
            Self::Sdpp => Some(Box::new(Sdpp)),
            Self::Dqn | Self::Oracle => None,
        }
    }
}

impl FromStr for PolicyKind {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "greedy" => Ok(Self::Greedy),
            "tfp" => Ok(Self::Tfp),
            "sdpp" => Ok(Self::Sdpp),
            "dqn" => Ok(Self::Dqn),
            "oracle" => Ok(Self::Oracle),
            other => Err(PolicyError(format!("unknown policy `{other}`"))),
        }
    }
}
