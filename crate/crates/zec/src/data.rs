//! Half-hourly consumption and solar-exposure series: file ingestion with
//! strict validation, seeded synthesis, and the exposure-to-energy
//! conversion.

use crate::domain::{EnergyKWh, Season, SLOTS_PER_DAY, SLOT_HOURS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use thiserror::Error;

/// Header line of a consumption file.
pub const CONSUMPTION_HEADER: &str = "kwh_per_half_hour";
/// Header line of an exposure file.
pub const EXPOSURE_HEADER: &str = "w_per_m2_per_half_hour";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:1: expected header `{expected}`, found `{found}`")]
    BadHeader { path: String, expected: &'static str, found: String },
    #[error("{path}:{line}: cannot parse `{value}` as a decimal")]
    Parse { path: String, line: usize, value: String },
    #[error("{path}:{line}: negative reading {value}")]
    Negative { path: String, line: usize, value: f64 },
    #[error("{path}:{line}: non-finite reading")]
    NonFinite { path: String, line: usize },
    #[error("{rows} readings do not form whole {slots}-slot days")]
    LengthMismatch { rows: usize, slots: usize },
}

/// Per-slot energy consumption in kWh, covering whole days of 48 slots.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsumptionProfile {
    readings: Vec<EnergyKWh>,
    days: u32,
}

impl ConsumptionProfile {
    pub fn new(readings: Vec<EnergyKWh>) -> Result<Self, DataError> {
        let days = whole_days(readings.len())?;
        for (i, value) in readings.iter().enumerate() {
            if !value.is_finite() {
                return Err(DataError::NonFinite { path: "<memory>".into(), line: i + 2 });
            }
            if *value < 0.0 {
                return Err(DataError::Negative { path: "<memory>".into(), line: i + 2, value: *value });
            }
        }
        Ok(ConsumptionProfile { readings, days })
    }

    pub fn readings(&self) -> &[EnergyKWh] {
        &self.readings
    }

    pub fn days(&self) -> u32 {
        self.days
    }

    pub fn len(&self) -> usize {
        self.readings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.readings.is_empty()
    }

    pub fn daily_sum(&self, day: u32) -> EnergyKWh {
        let start = day as usize * SLOTS_PER_DAY;
        self.readings[start..start + SLOTS_PER_DAY].iter().sum()
    }

    pub fn total(&self) -> EnergyKWh {
        self.readings.iter().sum()
    }
}

/// Per-slot irradiance samples in W/m², covering whole days of 48 slots.
#[derive(Debug, Clone, PartialEq)]
pub struct SolarExposureSeries {
    readings: Vec<f64>,
    days: u32,
}

impl SolarExposureSeries {
    pub fn new(readings: Vec<f64>) -> Result<Self, DataError> {
        let days = whole_days(readings.len())?;
        for (i, value) in readings.iter().enumerate() {
            if !value.is_finite() {
                return Err(DataError::NonFinite { path: "<memory>".into(), line: i + 2 });
            }
            if *value < 0.0 {
                return Err(DataError::Negative { path: "<memory>".into(), line: i + 2, value: *value });
            }
        }
        Ok(SolarExposureSeries { readings, days })
    }

    pub fn readings(&self) -> &[f64] {
        &self.readings
    }

    pub fn days(&self) -> u32 {
        self.days
    }

    pub fn daily_sum(&self, day: u32) -> f64 {
        let start = day as usize * SLOTS_PER_DAY;
        self.readings[start..start + SLOTS_PER_DAY].iter().sum()
    }
}

fn whole_days(rows: usize) -> Result<u32, DataError> {
    if rows == 0 || rows % SLOTS_PER_DAY != 0 {
        return Err(DataError::LengthMismatch { rows, slots: SLOTS_PER_DAY });
    }
    Ok((rows / SLOTS_PER_DAY) as u32)
}

fn load_series(path: &Path, expected_header: &'static str) -> Result<Vec<f64>, DataError> {
    let display = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| DataError::Io { path: display.clone(), source })?;
    let mut lines = text.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line.trim(),
        None => "",
    };
    if header != expected_header {
        return Err(DataError::BadHeader { path: display, expected: expected_header, found: header.to_string() });
    }
    let mut readings = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1; // 1-based
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        let value: f64 = trimmed
            .parse()
            .map_err(|_| DataError::Parse { path: display.clone(), line, value: trimmed.to_string() })?;
        if !value.is_finite() {
            return Err(DataError::NonFinite { path: display, line });
        }
        if value < 0.0 {
            return Err(DataError::Negative { path: display, line, value });
        }
        readings.push(value);
    }
    Ok(readings)
}

fn render_series(header: &str, readings: &[f64]) -> String {
    let mut out = String::with_capacity(readings.len() * 8 + header.len() + 1);
    out.push_str(header);
    out.push('\n');
    for value in readings {
        // `{}` prints the shortest digits that parse back to the same f64,
        // so written series reload bit-exactly.
        writeln!(out, "{value}").expect("writing to a String cannot fail");
    }
    out
}

pub fn load_consumption(path: &Path) -> Result<ConsumptionProfile, DataError> {
    let readings = load_series(path, CONSUMPTION_HEADER)?;
    let days = whole_days(readings.len())?;
    Ok(ConsumptionProfile { readings, days })
}

pub fn load_exposure(path: &Path) -> Result<SolarExposureSeries, DataError> {
    let readings = load_series(path, EXPOSURE_HEADER)?;
    let days = whole_days(readings.len())?;
    Ok(SolarExposureSeries { readings, days })
}

pub fn write_consumption(path: &Path, profile: &ConsumptionProfile) -> Result<(), DataError> {
    let text = render_series(CONSUMPTION_HEADER, &profile.readings);
    fs::write(path, text).map_err(|source| DataError::Io { path: path.display().to_string(), source })
}

pub fn write_exposure(path: &Path, series: &SolarExposureSeries) -> Result<(), DataError> {
    let text = render_series(EXPOSURE_HEADER, &series.readings);
    fs::write(path, text).map_err(|source| DataError::Io { path: path.display().to_string(), source })
}

/// Weekday household load shape: overnight base with a morning peak around
/// 07:30 and a larger evening peak around 19:00.
fn weekday_shape(slot: usize) -> f64 {
    let s = slot as f64;
    0.25 + (-(s - 15.0).powi(2) / 8.0).exp() + 1.4 * (-(s - 38.0).powi(2) / 18.0).exp()
}

/// Deterministic synthetic consumption: the weekday shape with per-slot noise,
/// renormalized so each day's sum lands within ±0.8% of `daily_mean_kwh`
/// (inside the 1% contract).
pub fn synthesize_consumption(seed: u64, daily_mean_kwh: f64, days: u32) -> ConsumptionProfile {
    assert!(daily_mean_kwh > 0.0, "daily mean must be positive");
    assert!(days >= 1, "need at least one day");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut readings = Vec::with_capacity(days as usize * SLOTS_PER_DAY);
    for _ in 0..days {
        let mut weights = [0.0f64; SLOTS_PER_DAY];
        for (slot, w) in weights.iter_mut().enumerate() {
            *w = weekday_shape(slot) * (1.0 + rng.gen_range(-0.2..0.2));
        }
        let day_total = daily_mean_kwh * (1.0 + rng.gen_range(-0.008..0.008));
        let sum: f64 = weights.iter().sum();
        readings.extend(weights.iter().map(|w| w * day_total / sum));
    }
    ConsumptionProfile { readings, days }
}

/// Deterministic synthetic exposure: a sin² bell across the season's daylight
/// window with mild per-slot noise, renormalized so every day's sample sum is
/// exactly the season's daily figure.
pub fn synthesize_exposure(seed: u64, season: Season, days: u32) -> SolarExposureSeries {
    assert!(days >= 1, "need at least one day");
    let (start, end) = season.daylight_slots();
    let width = (end - start) as f64;
    let daily = season.daily_exposure_sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut readings = vec![0.0f64; days as usize * SLOTS_PER_DAY];
    for day in 0..days as usize {
        let base = day * SLOTS_PER_DAY;
        let mut sum = 0.0;
        for slot in start..end {
            let phase = std::f64::consts::PI * ((slot - start) as f64 + 0.5) / width;
            let value = phase.sin().powi(2) * (1.0 + rng.gen_range(-0.05..0.05));
            readings[base + slot] = value;
            sum += value;
        }
        for slot in start..end {
            readings[base + slot] *= daily / sum;
        }
    }
    SolarExposureSeries { readings, days }
}

/// One half-hour of PV energy from an irradiance sample. `yield_factor` is
/// the m²-equivalent collecting area per cell; the 1000 converts W to kW.
pub fn generation_for(cells: u32, exposure_w_m2: f64, yield_factor: f64) -> EnergyKWh {
    f64::from(cells) * yield_factor * exposure_w_m2 * SLOT_HOURS / 1000.0
}
