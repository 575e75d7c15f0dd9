//! Run configuration file and the provenance record written next to outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dqn::TrainConfig;
use crate::oracle::DEFAULT_HORIZON_CAP;
use crate::plant::{Biquadratic, ChillerSpec, PlantError, PlantSpec, Quadratic, TesSpec};
use crate::policies::PolicyKind;
use crate::sizing::{Candidate, EconomicParams};
use crate::trace::SyntheticParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChillerConfig {
    pub capacity_kwh_th: f64,
    pub cop_ref: f64,
    pub capft: [f64; 6],
    pub eirft: [f64; 6],
    pub eirplr: [f64; 3],
    pub ref_t_chw: f64,
    pub ref_t_cond: f64,
}

impl Default for ChillerConfig {
    fn default() -> Self {
        Self {
            capacity_kwh_th: 700.0,
            cop_ref: 5.0,
            capft: Biquadratic::UNIT.0,
            eirft: Biquadratic::UNIT.0,
            eirplr: Quadratic::IDENTITY.0,
            ref_t_chw: 4.0,
            ref_t_cond: 29.4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TesConfig {
    pub capacity_kwh_th: f64,
    pub round_trip_efficiency: f64,
}

impl Default for TesConfig {
    fn default() -> Self {
        Self {
            capacity_kwh_th: 1500.0,
            round_trip_efficiency: TesSpec::DEFAULT_ROUND_TRIP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub soc_nodes: usize,
    pub horizon_cap: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            soc_nodes: 151,
            horizon_cap: DEFAULT_HORIZON_CAP,
        }
    }
}

/// Everything a command needs, after defaults, file and flags are merged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Trace CSV; a synthetic trace is generated when absent.
    pub trace: Option<PathBuf>,
    pub synthetic: SyntheticParams,
    pub chiller: ChillerConfig,
    pub tes: TesConfig,
    pub economics: EconomicParams,
    pub train: TrainConfig,
    pub oracle: OracleConfig,
    /// Loss-of-load penalty per kWh_th for training and the oracle.
    pub penalty: Option<f64>,
    pub policy: PolicyKind,
    pub seed: u64,
    /// Storage level at the start of every evaluation episode.
    pub e_init: f64,
    pub candidates: Vec<Candidate>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            trace: None,
            synthetic: SyntheticParams::default(),
            chiller: ChillerConfig::default(),
            tes: TesConfig::default(),
            economics: EconomicParams::default(),
            train: TrainConfig::default(),
            oracle: OracleConfig::default(),
            penalty: None,
            policy: PolicyKind::Greedy,
            seed: 0,
            e_init: 0.0,
            candidates: Vec::new(),
        }
    }
}

impl RunConfig {
    /// Reads a JSON config; missing keys keep their defaults.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn plant(&self) -> Result<PlantSpec, PlantError> {
        let c = &self.chiller;
        let chiller = ChillerSpec {
            capacity: c.capacity_kwh_th,
            cop_ref: c.cop_ref,
            capft: Biquadratic(c.capft),
            eirft: Biquadratic(c.eirft),
            eirplr: Quadratic(c.eirplr),
            ref_t_chw: c.ref_t_chw,
            ref_t_cond: c.ref_t_cond,
        }
        .validated()?;
        let tes =
            TesSpec::from_round_trip(self.tes.capacity_kwh_th, self.tes.round_trip_efficiency)?;
        Ok(PlantSpec::new(chiller, tes))
    }

    /// Training settings with the run-level seed and penalty applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            penalty: self.penalty.or(self.train.penalty),
            ..self.train.clone()
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        hex::encode(Sha256::digest(&json))
    }
}

/// Written as `provenance.json` in every output directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub args: Vec<String>,
    pub seed: u64,
    pub config_sha256: String,
    pub config: RunConfig,
}

impl Provenance {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            args: std::env::args().skip(1).collect(),
            seed: config.seed,
            config_sha256: config.digest(),
            config: config.clone(),
        }
    }
}
