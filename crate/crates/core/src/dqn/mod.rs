//! Vanilla DQN over a discrete PLR grid with feasibility masking.
//!
//! The network maps `(state features, PLR)` to a scalar cost-to-go, so it is
//! evaluated once per admissible action. Costs are minimised throughout:
//! stage cost is electricity plus the loss-of-load penalty, scaled by
//! `cost_scale` before it reaches the network.

mod adam;
mod features;
mod network;
mod replay;

pub use adam::Adam;
pub use features::{featurize, state_features, with_action, Normalization, ACTION_SLOT};
pub use network::{ForwardCache, LayerParams, QNetwork};
pub use replay::{ReplayBuffer, Transition};

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{self, EnvError, SimState, MASK_TOLERANCE};
use crate::plant::{default_penalty, FeasibleBounds, PlantError, PlantSpec};
use crate::policies::{Policy, PolicyError};
use crate::trace::Trace;

pub const ARTIFACT_FORMAT: &str = "chiller-tes-qnet/1";

#[derive(Debug, Error)]
pub enum DqnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("training diverged at episode {episode}, step {step}: loss = {loss}")]
    Divergence {
        episode: usize,
        step: u64,
        loss: f64,
    },
    #[error("non-finite feature at step {k}: {features:?}")]
    Data { k: usize, features: Vec<f64> },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error("artifact error: {0}")]
    Artifact(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

fn default_grid() -> Vec<f64> {
    (0..=10).map(|i| f64::from(i) / 10.0).collect()
}

/// Learner hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub episodes: usize,
    pub gamma: f64,
    /// Admissible PLR values, ascending in `[0, 1]`.
    pub grid: Vec<f64>,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of all training steps over which epsilon decays linearly.
    pub epsilon_decay_fraction: f64,
    /// Constant exploration rate; overrides the schedule when set.
    pub epsilon_fixed: Option<f64>,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub update_period: usize,
    pub target_sync: usize,
    pub learning_rate: f64,
    pub hidden: Vec<usize>,
    /// Loss-of-load penalty per kWh_th; defaults to `10 * max price * C_ch`.
    pub penalty: Option<f64>,
    /// Divisor applied to stage costs; defaults to `max price * Q_ref`.
    pub cost_scale: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 50,
            gamma: 0.99,
            grid: default_grid(),
            epsilon_start: 1.0,
            epsilon_end: 0.1,
            epsilon_decay_fraction: 0.5,
            epsilon_fixed: None,
            replay_capacity: 20_000,
            batch_size: 128,
            update_period: 8,
            target_sync: 1000,
            learning_rate: 0.01,
            hidden: vec![32, 32],
            penalty: None,
            cost_scale: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), DqnError> {
        let err = |m: &str| Err(DqnError::Config(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return err("gamma must lie in (0, 1)");
        }
        if self.grid.is_empty() || self.grid.len() > 64 {
            return err("action grid must have between 1 and 64 points");
        }
        if self.grid.iter().any(|g| !(0.0..=1.0).contains(g))
            || self.grid.windows(2).any(|w| w[0] >= w[1])
        {
            return err("action grid must be strictly ascending within [0, 1]");
        }
        if self.batch_size == 0 || self.batch_size > self.replay_capacity {
            return err("batch size must be positive and at most the replay capacity");
        }
        if self.update_period == 0 || self.target_sync == 0 {
            return err("update and target-sync periods must be positive");
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return err("learning rate must be positive");
        }
        let eps = [self.epsilon_start, self.epsilon_end]
            .into_iter()
            .chain(self.epsilon_fixed);
        if eps.into_iter().any(|e| !(0.0..=1.0).contains(&e)) {
            return err("exploration rates must lie in [0, 1]");
        }
        if self.epsilon_decay_fraction.is_nan() || self.epsilon_decay_fraction <= 0.0 {
            return err("epsilon decay fraction must be positive");
        }
        if self.penalty.is_some_and(|p| p < 0.0) || self.cost_scale.is_some_and(|s| s <= 0.0) {
            return err("penalty must be nonnegative and cost scale positive");
        }
        Ok(())
    }

    /// Exploration rate after `step` of `total` training steps.
    pub fn epsilon_at(&self, step: u64, total: u64) -> f64 {
        if let Some(e) = self.epsilon_fixed {
            return e;
        }
        let horizon = (self.epsilon_decay_fraction * total as f64).max(1.0);
        let frac = (step as f64 / horizon).min(1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }

    pub fn resolved_penalty(&self, trace: &Trace, plant: &PlantSpec) -> f64 {
        self.penalty
            .unwrap_or_else(|| default_penalty(trace.max_price(), plant.chiller.capacity))
    }

    pub fn resolved_cost_scale(&self, trace: &Trace, plant: &PlantSpec) -> f64 {
        self.cost_scale.unwrap_or_else(|| {
            let s = trace.max_price() * plant.chiller.q_ref();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
    }
}

/// Grid indices admissible under `bounds`, as a bit set.
///
/// Points within [`MASK_TOLERANCE`] of the interval count as inside. When no
/// point qualifies, the one nearest the interval is used (its executed PLR is
/// clamped). Infeasible states allow only the largest grid value.
pub fn feasible_mask(bounds: &FeasibleBounds, grid: &[f64]) -> u64 {
    let last = grid.len() - 1;
    if bounds.infeasible {
        return 1 << last;
    }
    let mut mask = 0u64;
    for (i, &g) in grid.iter().enumerate() {
        if g >= bounds.lower - MASK_TOLERANCE && g <= bounds.upper + MASK_TOLERANCE {
            mask |= 1 << i;
        }
    }
    if mask == 0 {
        let dist = |g: f64| (bounds.lower - g).max(g - bounds.upper).max(0.0);
        let nearest = (0..grid.len())
            .min_by(|&a, &b| dist(grid[a]).total_cmp(&dist(grid[b])))
            .unwrap_or(0);
        mask = 1 << nearest;
    }
    mask
}

fn mask_indices(mask: u64) -> impl Iterator<Item = usize> {
    (0..64).filter(move |i| mask & (1 << i) != 0)
}

/// Lowest Q over the masked actions, and its index (first on ties).
fn masked_min(
    net: &QNetwork,
    features: &[f64],
    mask: u64,
    grid: &[f64],
    input: &mut Vec<f64>,
) -> Result<(usize, f64), DqnError> {
    let mut best = (usize::MAX, f64::INFINITY);
    for i in mask_indices(mask) {
        with_action(features, grid[i], input);
        let q = net.forward(input)?;
        if q < best.1 || best.0 == usize::MAX {
            best = (i, q);
        }
    }
    Ok(best)
}

/// Epsilon-greedy choice over the admissible grid points.
pub fn select_action<R: Rng + ?Sized>(
    net: &QNetwork,
    features: &[f64],
    bounds: &FeasibleBounds,
    grid: &[f64],
    epsilon: f64,
    rng: &mut R,
) -> Result<usize, DqnError> {
    let mask = feasible_mask(bounds, grid);
    if bounds.infeasible {
        return Ok(grid.len() - 1);
    }
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        let choices: Vec<usize> = mask_indices(mask).collect();
        return Ok(choices[rng.random_range(0..choices.len())]);
    }
    let mut input = Vec::with_capacity(net.input_len());
    Ok(masked_min(net, features, mask, grid, &mut input)?.0)
}

/// Bellman target `cost + gamma * min_a' Q_target(s', a')`, or just the cost
/// for terminal transitions.
pub fn td_target(
    target: &QNetwork,
    t: &Transition,
    grid: &[f64],
    gamma: f64,
    input: &mut Vec<f64>,
) -> Result<f64, DqnError> {
    if t.terminal {
        return Ok(t.cost);
    }
    let (_, q_next) = masked_min(target, &t.next_state, t.next_mask, grid, input)?;
    Ok(t.cost + gamma * q_next)
}

/// Mean squared TD error of `batch` and its gradient with respect to the
/// policy network's parameters (written into `grad`).
pub fn td_loss_and_grad(
    policy: &QNetwork,
    target: &QNetwork,
    batch: &[&Transition],
    grid: &[f64],
    gamma: f64,
    grad: &mut [f64],
) -> Result<f64, DqnError> {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let n = batch.len() as f64;
    let mut input = Vec::with_capacity(policy.input_len());
    let mut cache = ForwardCache::default();
    let mut loss = 0.0;
    for t in batch {
        let y = td_target(target, t, grid, gamma, &mut input)?;
        with_action(&t.state, t.action, &mut input);
        let q = policy.forward_cached(&input, &mut cache)?;
        let err = q - y;
        loss += err * err / n;
        policy.backward(&cache, 2.0 * err / n, grad);
    }
    Ok(loss)
}

/// One optimiser step on the TD loss; returns the loss before the step.
pub fn td_update(
    policy: &mut QNetwork,
    target: &QNetwork,
    batch: &[&Transition],
    grid: &[f64],
    gamma: f64,
    optimizer: &mut Adam,
) -> Result<f64, DqnError> {
    let mut grad = vec![0.0; policy.num_params()];
    let loss = td_loss_and_grad(policy, target, batch, grid, gamma, &mut grad)?;
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(DqnError::Divergence {
            episode: 0,
            step: optimizer.steps_taken(),
            loss,
        });
    }
    optimizer.step(policy.params_mut(), &grad);
    Ok(loss)
}

/// Frozen greedy policy produced by training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedPolicy {
    pub net: QNetwork,
    pub norms: Normalization,
    pub grid: Vec<f64>,
}

impl TrainedPolicy {
    /// Masked argmin grid index for `state`.
    pub fn action_index(
        &self,
        state: &SimState,
        bounds: &FeasibleBounds,
    ) -> Result<usize, DqnError> {
        if bounds.infeasible {
            return Ok(self.grid.len() - 1);
        }
        let features = state_features(state, &self.norms);
        let mask = feasible_mask(bounds, &self.grid);
        let mut input = Vec::with_capacity(self.net.input_len());
        Ok(masked_min(&self.net, &features, mask, &self.grid, &mut input)?.0)
    }

    pub fn to_artifact(&self) -> QNetArtifact {
        QNetArtifact {
            format: ARTIFACT_FORMAT.to_string(),
            activation: "silu".to_string(),
            layers: self.net.layers(),
            norms: self.norms.clone(),
            grid: self.grid.clone(),
        }
    }

    pub fn from_artifact(a: QNetArtifact) -> Result<Self, DqnError> {
        if a.format != ARTIFACT_FORMAT || a.activation != "silu" {
            return Err(DqnError::Shape(format!(
                "unsupported artifact `{}` with activation `{}`",
                a.format, a.activation
            )));
        }
        let net = QNetwork::from_layers(&a.layers)?;
        if net.input_len() != a.norms.input_len() {
            return Err(DqnError::Shape(
                "network input does not match normalization".into(),
            ));
        }
        Ok(Self {
            net,
            norms: a.norms,
            grid: a.grid,
        })
    }

    pub fn to_json(&self) -> Result<String, DqnError> {
        Ok(serde_json::to_string_pretty(&self.to_artifact())?)
    }

    pub fn from_json(text: &str) -> Result<Self, DqnError> {
        Self::from_artifact(serde_json::from_str(text)?)
    }
}

impl Policy for TrainedPolicy {
    fn name(&self) -> &str {
        "dqn"
    }

    fn act(&self, state: &SimState, bounds: &FeasibleBounds) -> Result<f64, PolicyError> {
        if bounds.infeasible {
            return Ok(1.0);
        }
        let i = self
            .action_index(state, bounds)
            .map_err(|e| PolicyError(e.to_string()))?;
        Ok(bounds.clamp(self.grid[i]))
    }
}

/// Serialized weights: layer shapes, row-major weights, normalization and grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNetArtifact {
    pub format: String,
    pub activation: String,
    pub layers: Vec<LayerParams>,
    pub norms: Normalization,
    pub grid: Vec<f64>,
}

/// One row of the training curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub episode: usize,
    /// Electricity cost of the training episode (no penalty).
    pub total_cost: f64,
    pub total_lol: f64,
    pub mean_loss: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: TrainedPolicy,
    pub curve: Vec<EpisodeStats>,
    pub penalty: f64,
    pub cost_scale: f64,
}

/// Runs DQN training on one trace and plant.
pub fn train(
    trace: &Trace,
    plant: &PlantSpec,
    config: &TrainConfig,
) -> Result<TrainOutcome, DqnError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let norms = Normalization::from_trace(trace, plant);
    let grid = config.grid.clone();
    let mut policy = QNetwork::new(norms.input_len(), &config.hidden, &mut rng);
    let mut target = policy.clone();
    let mut optimizer = Adam::new(policy.num_params(), config.learning_rate);
    let mut replay = ReplayBuffer::new(config.replay_capacity);
    let penalty = config.resolved_penalty(trace, plant);
    let cost_scale = config.resolved_cost_scale(trace, plant);

    if config.episodes == 0 {
        log::warn!("training with zero episodes: returning the randomly initialised network");
    }

    let total_steps = (config.episodes * trace.len()) as u64;
    let mut step: u64 = 0;
    let mut curve = Vec::with_capacity(config.episodes);
    let mut grad = vec![0.0; policy.num_params()];

    for episode in 0..config.episodes {
        let e_init = if plant.tes.capacity > 0.0 {
            rng.random_range(0.0..=plant.tes.capacity)
        } else {
            0.0
        };
        let mut state = env::reset(trace, plant, e_init)?;
        let mut stats = EpisodeStats {
            episode: episode + 1,
            total_cost: 0.0,
            total_lol: 0.0,
            mean_loss: 0.0,
            epsilon: 0.0,
        };
        let mut losses = 0usize;
        let mut features = checked_features(&state, &norms)?;
        loop {
            let epsilon = config.epsilon_at(step, total_steps);
            let bounds = state.bounds(plant)?;
            let idx = select_action(&policy, &features, &bounds, &grid, epsilon, &mut rng)?;
            let out = env::step(&state, bounds.clamp(grid[idx]), trace, plant)?;
            stats.total_cost += out.cost;
            stats.total_lol += out.loss_of_load;
            stats.epsilon = epsilon;

            let cost = (out.cost + penalty * out.loss_of_load) / cost_scale;
            let (next_features, next_mask) = match &out.next {
                Some(next) => {
                    let f = checked_features(next, &norms)?;
                    let m = feasible_mask(&next.bounds(plant)?, &grid);
                    (f, m)
                }
                None => (features.clone(), 0),
            };
            replay.push(Transition {
                state: std::mem::replace(&mut features, next_features.clone()),
                action: grid[idx],
                cost,
                next_state: next_features,
                next_mask,
                terminal: out.next.is_none(),
            });
            step += 1;

            if step.is_multiple_of(config.update_period as u64) && replay.len() >= config.batch_size
            {
                let batch = replay.sample(config.batch_size, &mut rng);
                let loss =
                    td_loss_and_grad(&policy, &target, &batch, &grid, config.gamma, &mut grad)?;
                if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    return Err(DqnError::Divergence {
                        episode: episode + 1,
                        step,
                        loss,
                    });
                }
                optimizer.step(policy.params_mut(), &grad);
                stats.mean_loss += loss;
                losses += 1;
            }
            if step.is_multiple_of(config.target_sync as u64) {
                target = policy.clone();
            }

            match out.next {
                Some(next) => state = next,
                None => break,
            }
        }
        if losses > 0 {
            stats.mean_loss /= losses as f64;
        }
        log::debug!(
            "episode {}: cost {:.1}, lol {:.1}, loss {:.4}, eps {:.3}",
            stats.episode,
            stats.total_cost,
            stats.total_lol,
            stats.mean_loss,
            stats.epsilon
        );
        curve.push(stats);
    }

    Ok(TrainOutcome {
        policy: TrainedPolicy {
            net: policy,
            norms,
            grid,
        },
        curve,
        penalty,
        cost_scale,
    })
}

fn checked_features(state: &SimState, norms: &Normalization) -> Result<Vec<f64>, DqnError> {
    let f = state_features(state, norms);
    if f.iter().all(|v| v.is_finite()) {
        Ok(f)
    } else {
        Err(DqnError::Data {
            k: state.k,
            features: f,
        })
    }
}

/// Writes `episode,total_cost,total_lol,mean_loss,epsilon`.
pub fn write_training_curve<W: Write>(curve: &[EpisodeStats], out: W) -> Result<(), DqnError> {
    let mut writer = csv::Writer::from_writer(out);
    for row in curve {
        writer.serialize(row)?;
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}
