//! Deterministic synthetic hourly loads and weather for fixtures and demos.
//!
//! Every series is a seasonal cosine times a daily cosine plus Gaussian
//! noise, drawn from a ChaCha stream keyed by the seed and the series.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::profile::{ProfileError, ProfilePair};
use crate::{LoadProfile, Mode, HOURS_PER_YEAR};

const TAU: f64 = std::f64::consts::TAU;

/// Shape of one synthetic load series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeriesShape {
    /// kW.
    pub mean: f64,
    /// Fraction of the mean.
    pub seasonal_amplitude: f64,
    /// Day of year of the seasonal maximum.
    pub peak_day: f64,
    /// Fraction of the mean.
    pub daily_amplitude: f64,
    /// Hour of day of the daily maximum.
    pub peak_hour: f64,
    /// Standard deviation, fraction of the mean.
    pub noise: f64,
}

impl Default for SeriesShape {
    fn default() -> Self {
        Self {
            mean: 100.0,
            seasonal_amplitude: 0.6,
            peak_day: 200.0,
            daily_amplitude: 0.3,
            peak_hour: 15.0,
            noise: 0.05,
        }
    }
}

impl SeriesShape {
    fn value(&self, hour: usize) -> f64 {
        let day = hour as f64 / 24.0;
        let hod = (hour % 24) as f64;
        let seasonal = 1.0 + self.seasonal_amplitude * (TAU * (day - self.peak_day) / 365.0).cos();
        let daily = 1.0 + self.daily_amplitude * (TAU * (hod - self.peak_hour) / 24.0).cos();
        self.mean * seasonal * daily
    }
}

/// Heating and cooling shapes of a synthetic campus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthProfileSpec {
    pub heating: SeriesShape,
    pub cooling: SeriesShape,
}

impl Default for SynthProfileSpec {
    /// Cooling-dominated: summer-peaking cooling about three times the
    /// winter-peaking heating.
    fn default() -> Self {
        Self {
            heating: SeriesShape {
                mean: 300.0,
                seasonal_amplitude: 0.9,
                peak_day: 15.0,
                daily_amplitude: 0.3,
                peak_hour: 6.0,
                noise: 0.05,
            },
            cooling: SeriesShape {
                mean: 900.0,
                seasonal_amplitude: 0.7,
                peak_day: 200.0,
                daily_amplitude: 0.35,
                peak_hour: 15.0,
                noise: 0.05,
            },
        }
    }
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn series(shape: &SeriesShape, seed: u64, stream: u64) -> Vec<f64> {
    let mut r = rng(seed, stream);
    let sd = (shape.noise * shape.mean).abs();
    let normal = Normal::new(0.0, sd).expect("finite standard deviation");
    (0..HOURS_PER_YEAR)
        .map(|h| (shape.value(h) + normal.sample(&mut r)).max(0.0))
        .collect()
}

/// One unscaled series for `mode`.
pub fn synth_profile(shape: &SeriesShape, mode: Mode, seed: u64) -> Result<LoadProfile, ProfileError> {
    let stream = match mode {
        Mode::Heating => 1,
        Mode::Cooling => 2,
    };
    LoadProfile::unscaled(series(shape, seed, stream), mode)
}

/// Unscaled heating and cooling series from one seed.
pub fn synth_pair(spec: &SynthProfileSpec, seed: u64) -> Result<ProfilePair, ProfileError> {
    Ok(ProfilePair {
        heating: synth_profile(&spec.heating, Mode::Heating, seed)?,
        cooling: synth_profile(&spec.cooling, Mode::Cooling, seed)?,
    })
}

/// Outdoor dry-bulb shape, °C.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeatherSpec {
    pub annual_mean: f64,
    pub seasonal_amplitude: f64,
    pub warmest_day: f64,
    pub daily_amplitude: f64,
    pub warmest_hour: f64,
    pub noise: f64,
}

impl Default for WeatherSpec {
    fn default() -> Self {
        Self {
            annual_mean: 14.0,
            seasonal_amplitude: 8.0,
            warmest_day: 200.0,
            daily_amplitude: 5.0,
            warmest_hour: 15.0,
            noise: 1.5,
        }
    }
}

/// Hourly outdoor temperature, °C.
pub fn synth_weather(spec: &WeatherSpec, seed: u64) -> Vec<f64> {
    let mut r = rng(seed, 3);
    let normal = Normal::new(0.0, spec.noise.abs()).expect("finite standard deviation");
    (0..HOURS_PER_YEAR)
        .map(|h| {
            let day = h as f64 / 24.0;
            let hod = (h % 24) as f64;
            spec.annual_mean
                + spec.seasonal_amplitude * (TAU * (day - spec.warmest_day) / 365.0).cos()
                + spec.daily_amplitude * (TAU * (hod - spec.warmest_hour) / 24.0).cos()
                + normal.sample(&mut r)
        })
        .collect()
}
