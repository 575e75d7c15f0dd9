//! Exogenous hourly inputs: cooling load, electricity prices per source,
//! source availability and plant temperatures.

mod csv_io;
mod synthetic;

pub use csv_io::{load_trace, write_trace, ColumnMap};
pub use synthetic::{generate_synthetic_trace, SyntheticParams, TariffBand, TariffSchedule};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Hours in the default evaluation year.
pub const HOURS_PER_YEAR: usize = 8760;
/// Last valid day index; leap days are not modelled.
pub const DAYS_PER_YEAR: u16 = 365;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("schema error at row {row}, column `{column}`: {message}")]
    Schema {
        row: usize,
        column: String,
        message: String,
    },
    #[error("continuity error at row {row}: expected (day {expected_day}, hour {expected_hour}), found (day {day}, hour {hour})")]
    Continuity {
        row: usize,
        expected_day: u16,
        expected_hour: u8,
        day: u16,
        hour: u8,
    },
    #[error("availability error at row {row}: no electricity source available")]
    Availability { row: usize },
    #[error("invalid record at row {row}: {message}")]
    InvalidRecord { row: usize, message: String },
    #[error("invalid synthetic parameters: {0}")]
    Parameter(String),
    #[error("trace is empty")]
    Empty,
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// One hour of exogenous inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyRecord {
    /// Day of year, 1..=365.
    pub day: u16,
    /// Hour of day, 0..=23.
    pub hour: u8,
    /// Cooling demand in kWh_th.
    pub load: f64,
    /// Price per kWh_e for each electricity source.
    pub prices: Vec<f64>,
    /// Whether each source can be drawn from this hour.
    pub availability: Vec<bool>,
    /// Chilled-water supply temperature (°C); `None` means the chiller reference.
    pub t_chw: Option<f64>,
    /// Condenser entering temperature (°C); `None` means the chiller reference.
    pub t_cond: Option<f64>,
}

impl HourlyRecord {
    pub fn num_sources(&self) -> usize {
        self.prices.len()
    }

    /// Checks the per-record invariants. `row` is used only for error reporting.
    pub fn validate(&self, row: usize) -> Result<(), TraceError> {
        if !(1..=DAYS_PER_YEAR).contains(&self.day) {
            return Err(TraceError::InvalidRecord {
                row,
                message: format!("day {} outside 1..=365", self.day),
            });
        }
        if self.hour > 23 {
            return Err(TraceError::InvalidRecord {
                row,
                message: format!("hour {} outside 0..=23", self.hour),
            });
        }
        if !self.load.is_finite() || self.load < 0.0 {
            return Err(TraceError::InvalidRecord {
                row,
                message: format!("cooling load {} must be finite and nonnegative", self.load),
            });
        }
        if self.prices.is_empty() || self.prices.len() != self.availability.len() {
            return Err(TraceError::InvalidRecord {
                row,
                message: format!(
                    "{} prices but {} availability flags",
                    self.prices.len(),
                    self.availability.len()
                ),
            });
        }
        if let Some(p) = self.prices.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(TraceError::InvalidRecord {
                row,
                message: format!("price {p} must be finite and nonnegative"),
            });
        }
        for t in [self.t_chw, self.t_cond].into_iter().flatten() {
            if !t.is_finite() {
                return Err(TraceError::InvalidRecord {
                    row,
                    message: "temperature is not finite".into(),
                });
            }
        }
        if !self.availability.iter().any(|&a| a) {
            return Err(TraceError::Availability { row });
        }
        Ok(())
    }
}

/// Least price among the sources available in this hour.
pub fn min_available_price(rec: &HourlyRecord) -> Result<f64, TraceError> {
    rec.prices
        .iter()
        .zip(&rec.availability)
        .filter(|(_, &avail)| avail)
        .map(|(&p, _)| p)
        .reduce(f64::min)
        .ok_or(TraceError::Availability { row: 0 })
}

/// The (day, hour) that follows `(day, hour)`; day 365 wraps to day 1.
pub fn next_hour(day: u16, hour: u8) -> (u16, u8) {
    if hour < 23 {
        (day, hour + 1)
    } else if day < DAYS_PER_YEAR {
        (day + 1, 0)
    } else {
        (1, 0)
    }
}

/// Immutable, validated sequence of consecutive hourly records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    records: Vec<HourlyRecord>,
    pub source: String,
    pub seed: Option<u64>,
}

impl Trace {
    /// Validates every record and the hour-to-hour continuity.
    pub fn new(records: Vec<HourlyRecord>, source: impl Into<String>) -> Result<Self, TraceError> {
        let trace = Self {
            records,
            source: source.into(),
            seed: None,
        };
        trace.validate()?;
        Ok(trace)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        let first = self.records.first().ok_or(TraceError::Empty)?;
        let m = first.num_sources();
        let has_temps = first.t_chw.is_some();
        for (i, rec) in self.records.iter().enumerate() {
            let row = i + 1;
            rec.validate(row)?;
            if rec.num_sources() != m {
                return Err(TraceError::InvalidRecord {
                    row,
                    message: format!("{} sources, expected {m}", rec.num_sources()),
                });
            }
            if rec.t_chw.is_some() != has_temps || rec.t_cond.is_some() != has_temps {
                return Err(TraceError::InvalidRecord {
                    row,
                    message: "temperatures must be present in every record or in none".into(),
                });
            }
            if i > 0 {
                let prev = &self.records[i - 1];
                let (d, h) = next_hour(prev.day, prev.hour);
                if (rec.day, rec.hour) != (d, h) {
                    return Err(TraceError::Continuity {
                        row,
                        expected_day: d,
                        expected_hour: h,
                        day: rec.day,
                        hour: rec.hour,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn records(&self) -> &[HourlyRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn num_sources(&self) -> usize {
        self.records[0].num_sources()
    }

    pub fn has_temperatures(&self) -> bool {
        self.records[0].t_chw.is_some()
    }

    /// Effective (least available) price of every hour.
    pub fn effective_prices(&self) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| min_available_price(r).expect("validated trace"))
            .collect()
    }

    pub fn max_price(&self) -> f64 {
        self.effective_prices().into_iter().fold(0.0, f64::max)
    }

    pub fn max_load(&self) -> f64 {
        self.records.iter().map(|r| r.load).fold(0.0, f64::max)
    }

    /// First `hours` records as a new trace.
    pub fn truncated(&self, hours: usize) -> Trace {
        Trace {
            records: self.records[..hours.min(self.len())].to_vec(),
            source: format!("{} (first {hours} h)", self.source),
            seed: self.seed,
        }
    }
}
