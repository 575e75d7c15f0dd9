use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{next_hour, HourlyRecord, Trace, TraceError, DAYS_PER_YEAR, HOURS_PER_YEAR};

/// A price that applies on `[start_hour, end_hour)`; wraps past midnight when
/// `start_hour > end_hour`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TariffBand {
    pub start_hour: u8,
    pub end_hour: u8,
    pub price: f64,
}

impl TariffBand {
    fn covers(&self, hour: u8) -> bool {
        if self.start_hour <= self.end_hour {
            (self.start_hour..self.end_hour).contains(&hour)
        } else {
            hour >= self.start_hour || hour < self.end_hour
        }
    }
}

/// Time-of-use schedule of one electricity source. Later bands win on overlap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TariffSchedule {
    pub base_price: f64,
    #[serde(default)]
    pub bands: Vec<TariffBand>,
}

impl TariffSchedule {
    pub fn flat(price: f64) -> Self {
        Self {
            base_price: price,
            bands: Vec::new(),
        }
    }

    pub fn price_at(&self, hour: u8) -> f64 {
        self.bands
            .iter()
            .rev()
            .find(|b| b.covers(hour))
            .map_or(self.base_price, |b| b.price)
    }
}

impl Default for TariffSchedule {
    fn default() -> Self {
        Self {
            base_price: 4.0,
            bands: vec![TariffBand {
                start_hour: 8,
                end_hour: 22,
                price: 8.0,
            }],
        }
    }
}

/// Knobs of the synthetic trace generator.
///
/// Amplitudes are relative: the load is
/// `base_load * (1 + seasonal_amp * cos(season)) * (1 + diurnal_amp * cos(day phase))`
/// plus Gaussian noise truncated at three standard deviations, clipped at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticParams {
    pub base_load: f64,
    pub diurnal_amp: f64,
    pub seasonal_amp: f64,
    pub noise_std: f64,
    pub num_sources: usize,
    /// One schedule per source; empty means the default two-band schedule for every source.
    pub tou_bands: Vec<TariffSchedule>,
    pub outage_prob: f64,
    pub t_chw: Option<f64>,
    pub t_cond: Option<f64>,
    pub hours: usize,
    pub start_day: u16,
    pub peak_hour: f64,
    pub peak_day: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            base_load: 500.0,
            diurnal_amp: 0.4,
            seasonal_amp: 0.25,
            noise_std: 25.0,
            num_sources: 1,
            tou_bands: Vec::new(),
            outage_prob: 0.0,
            t_chw: None,
            t_cond: None,
            hours: HOURS_PER_YEAR,
            start_day: 1,
            peak_hour: 15.0,
            peak_day: 135.0,
        }
    }
}

impl SyntheticParams {
    pub fn validate(&self) -> Result<(), TraceError> {
        let err = |m: String| Err(TraceError::Parameter(m));
        for (name, v) in [
            ("base_load", self.base_load),
            ("diurnal_amp", self.diurnal_amp),
            ("seasonal_amp", self.seasonal_amp),
            ("noise_std", self.noise_std),
        ] {
            if !v.is_finite() || v < 0.0 {
                return err(format!("{name} must be finite and nonnegative, got {v}"));
            }
        }
        if self.num_sources == 0 {
            return err("num_sources must be at least 1".into());
        }
        if !self.tou_bands.is_empty() && self.tou_bands.len() != self.num_sources {
            return err(format!(
                "tou_bands has {} schedules for {} sources",
                self.tou_bands.len(),
                self.num_sources
            ));
        }
        for s in &self.tou_bands {
            let prices = std::iter::once(s.base_price).chain(s.bands.iter().map(|b| b.price));
            if prices.into_iter().any(|p| !p.is_finite() || p < 0.0) {
                return err("tariff prices must be finite and nonnegative".into());
            }
            if s.bands.iter().any(|b| b.start_hour > 23 || b.end_hour > 24) {
                return err("tariff band hours must lie in 0..=24".into());
            }
        }
        if !(0.0..1.0).contains(&self.outage_prob) {
            return err(format!(
                "outage_prob must lie in [0, 1), got {}",
                self.outage_prob
            ));
        }
        if self.hours == 0 {
            return err("hours must be positive".into());
        }
        if !(1..=DAYS_PER_YEAR).contains(&self.start_day) {
            return err(format!("start_day {} outside 1..=365", self.start_day));
        }
        Ok(())
    }

    fn schedule(&self, source: usize) -> TariffSchedule {
        match self.tou_bands.get(source) {
            Some(s) => s.clone(),
            None => {
                // Additional default sources are progressively dearer copies.
                let scale = 1.0 + 0.15 * source as f64;
                let mut s = TariffSchedule::default();
                s.base_price *= scale;
                for b in &mut s.bands {
                    b.price *= scale;
                }
                s
            }
        }
    }
}

/// Deterministic synthetic trace for a given `(params, seed)`.
pub fn generate_synthetic_trace(params: &SyntheticParams, seed: u64) -> Result<Trace, TraceError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise =
        Normal::new(0.0, params.noise_std).map_err(|e| TraceError::Parameter(e.to_string()))?;
    let schedules: Vec<_> = (0..params.num_sources)
        .map(|i| params.schedule(i))
        .collect();

    let (mut day, mut hour) = (params.start_day, 0u8);
    let mut records = Vec::with_capacity(params.hours);
    for _ in 0..params.hours {
        let season =
            (2.0 * PI * (f64::from(day) - params.peak_day) / f64::from(DAYS_PER_YEAR)).cos();
        let diurnal = (2.0 * PI * (f64::from(hour) - params.peak_hour) / 24.0).cos();
        let shape = params.base_load
            * (1.0 + params.seasonal_amp * season)
            * (1.0 + params.diurnal_amp * diurnal);
        let eps = if params.noise_std > 0.0 {
            let bound = 3.0 * params.noise_std;
            noise.sample(&mut rng).clamp(-bound, bound)
        } else {
            0.0
        };
        let load = (shape + eps).max(0.0);

        let availability = loop {
            let flags: Vec<bool> = (0..params.num_sources)
                .map(|_| params.outage_prob == 0.0 || rng.random::<f64>() >= params.outage_prob)
                .collect();
            if flags.iter().any(|&f| f) {
                break flags;
            }
        };

        records.push(HourlyRecord {
            day,
            hour,
            load,
            prices: schedules.iter().map(|s| s.price_at(hour)).collect(),
            availability,
            t_chw: params.t_chw,
            t_cond: params.t_cond,
        });
        (day, hour) = next_hour(day, hour);
    }

    Ok(Trace::new(records, "synthetic")?.with_seed(seed))
}
