//! Chiller and thermal-storage dispatch: hourly simulation, rule-based and
//! learned operating policies, an exact DP oracle, and life-cycle-cost sizing.

pub mod cli;
pub mod config;
pub mod dqn;
pub mod env;
pub mod oracle;
pub mod par;
pub mod plant;
pub mod policies;
pub mod sizing;
pub mod trace;
