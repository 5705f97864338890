//! Hourly annual load profiles and their CSV representation.

use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const HOURS_PER_YEAR: usize = 8760;

/// Days in each month of a non-leap year.
pub const MONTH_DAYS: [usize; 12] = [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Heating,
    Cooling,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Heating => f.write_str("heating"),
            Mode::Cooling => f.write_str("cooling"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Unscaled,
    Scaled,
}

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("profile must have {HOURS_PER_YEAR} hourly values, got {0}")]
    Length(usize),
    #[error("profile value at hour {hour} is invalid: {value}")]
    InvalidValue { hour: usize, value: f64 },
    #[error("mode mismatch: expected {expected}, got {got}")]
    ModeMismatch { expected: Mode, got: Mode },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed CSV: {0}")]
    Format(String),
}

/// One year of hourly thermal load, kW, for a single mode.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadProfile {
    values: Vec<f64>,
    mode: Mode,
    provenance: Provenance,
}

impl LoadProfile {
    pub fn new(values: Vec<f64>, mode: Mode, provenance: Provenance) -> Result<Self, ProfileError> {
        if values.len() != HOURS_PER_YEAR {
            return Err(ProfileError::Length(values.len()));
        }
        if let Some((hour, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(ProfileError::InvalidValue { hour, value });
        }
        Ok(Self {
            values,
            mode,
            provenance,
        })
    }

    pub fn unscaled(values: Vec<f64>, mode: Mode) -> Result<Self, ProfileError> {
        Self::new(values, mode, Provenance::Unscaled)
    }

    pub fn zeros(mode: Mode) -> Self {
        Self {
            values: vec![0.0; HOURS_PER_YEAR],
            mode,
            provenance: Provenance::Unscaled,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    /// Annual energy, kWh.
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.total() / HOURS_PER_YEAR as f64
    }

    pub fn is_all_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    /// Hourly base load `min(L, cap)`.
    pub fn shaved(&self, cap: f64) -> LoadProfile {
        LoadProfile {
            values: self.values.iter().map(|v| v.min(cap)).collect(),
            mode: self.mode,
            provenance: self.provenance,
        }
    }

    /// Mean load of each calendar month, kW.
    pub fn monthly_means(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        let mut start = 0;
        for (m, days) in MONTH_DAYS.iter().enumerate() {
            let end = start + days * 24;
            out[m] = self.values[start..end].iter().sum::<f64>() / (end - start) as f64;
            start = end;
        }
        out
    }
}

/// Elementwise sum of space-heating and domestic-hot-water profiles.
pub fn combine_heating(space: &LoadProfile, dhw: &LoadProfile) -> Result<LoadProfile, ProfileError> {
    for p in [space, dhw] {
        if p.mode != Mode::Heating {
            return Err(ProfileError::ModeMismatch {
                expected: Mode::Heating,
                got: p.mode,
            });
        }
    }
    // LoadProfile construction already pins the length, but profiles built
    // from raw slices elsewhere are re-checked here.
    if space.values.len() != dhw.values.len() {
        return Err(ProfileError::Length(dhw.values.len()));
    }
    let values = space.values.iter().zip(&dhw.values).map(|(a, b)| a + b).collect();
    LoadProfile::new(values, Mode::Heating, space.provenance)
}

/// Heating and cooling profiles read from one `hour,heating_kw,cooling_kw` file.
#[derive(Debug, Clone)]
pub struct ProfilePair {
    pub heating: LoadProfile,
    pub cooling: LoadProfile,
}

fn io_err(path: &Path, source: std::io::Error) -> ProfileError {
    ProfileError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads named numeric columns keyed by an `hour` column with rows 0..8759.
pub fn read_hourly_columns<R: Read>(reader: R, columns: &[&str]) -> Result<Vec<Vec<f64>>, ProfileError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| ProfileError::Format(format!("missing column `{name}`")))
    };
    let hour_idx = find("hour")?;
    let idx: Vec<usize> = columns.iter().map(|c| find(c)).collect::<Result<_, _>>()?;
    let mut out = vec![Vec::with_capacity(HOURS_PER_YEAR); columns.len()];
    for (row_no, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64, ProfileError> {
            let raw = rec.get(i).unwrap_or("");
            raw.parse::<f64>()
                .map_err(|_| ProfileError::Format(format!("row {}: cannot parse `{raw}`", row_no + 1)))
        };
        let hour = parse(hour_idx)?;
        if hour != row_no as f64 {
            return Err(ProfileError::Format(format!(
                "row {}: expected hour {row_no}, found {hour}",
                row_no + 1
            )));
        }
        for (col, &i) in out.iter_mut().zip(&idx) {
            col.push(parse(i)?);
        }
    }
    if out.first().map_or(0, Vec::len) != HOURS_PER_YEAR {
        return Err(ProfileError::Length(out.first().map_or(0, Vec::len)));
    }
    Ok(out)
}

pub fn read_profile_pair<R: Read>(reader: R, provenance: Provenance) -> Result<ProfilePair, ProfileError> {
    let mut cols = read_hourly_columns(reader, &["heating_kw", "cooling_kw"])?;
    let cooling = cols.pop().unwrap_or_default();
    let heating = cols.pop().unwrap_or_default();
    Ok(ProfilePair {
        heating: LoadProfile::new(heating, Mode::Heating, provenance)?,
        cooling: LoadProfile::new(cooling, Mode::Cooling, provenance)?,
    })
}

pub fn read_profile_pair_file(path: &Path, provenance: Provenance) -> Result<ProfilePair, ProfileError> {
    let f = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    read_profile_pair(f, provenance)
}

pub fn write_profile_pair<W: Write>(
    writer: W,
    heating: &LoadProfile,
    cooling: &LoadProfile,
) -> Result<(), ProfileError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["hour", "heating_kw", "cooling_kw"])?;
    for (h, (a, b)) in heating.values().iter().zip(cooling.values()).enumerate() {
        wtr.write_record([h.to_string(), fmt_num(*a), fmt_num(*b)])?;
    }
    wtr.flush().map_err(|e| ProfileError::Csv(e.into()))?;
    Ok(())
}

/// Shortest round-trip float formatting used by every CSV writer.
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(mode: Mode) -> LoadProfile {
        LoadProfile::unscaled((0..HOURS_PER_YEAR).map(|h| (h % 24) as f64).collect(), mode).unwrap()
    }

    #[test]
    fn rejects_wrong_length_and_negative_values() {
        assert!(matches!(
            LoadProfile::unscaled(vec![1.0; 8759], Mode::Heating),
            Err(ProfileError::Length(8759))
        ));
        let mut v = vec![1.0; HOURS_PER_YEAR];
        v[17] = -0.5;
        assert!(matches!(
            LoadProfile::unscaled(v, Mode::Cooling),
            Err(ProfileError::InvalidValue { hour: 17, .. })
        ));
    }

    #[test]
    fn combine_with_zero_space_heating_is_identity() {
        let dhw = ramp(Mode::Heating);
        let out = combine_heating(&LoadProfile::zeros(Mode::Heating), &dhw).unwrap();
        assert_eq!(out.values(), dhw.values());
    }

    #[test]
    fn combine_sums_hourly() {
        let mut a = vec![0.0; HOURS_PER_YEAR];
        let mut b = vec![0.0; HOURS_PER_YEAR];
        a[100] = 10.0;
        b[100] = 2.0;
        let out = combine_heating(
            &LoadProfile::unscaled(a, Mode::Heating).unwrap(),
            &LoadProfile::unscaled(b, Mode::Heating).unwrap(),
        )
        .unwrap();
        assert_eq!(out.values()[100], 12.0);
    }

    #[test]
    fn combine_rejects_cooling_input() {
        let err = combine_heating(&ramp(Mode::Heating), &ramp(Mode::Cooling)).unwrap_err();
        assert!(matches!(err, ProfileError::ModeMismatch { .. }));
    }

    #[test]
    fn combine_rejects_short_profile() {
        // Bypass the constructor to model a truncated DHW series.
        let short = LoadProfile {
            values: vec![1.0; 8759],
            mode: Mode::Heating,
            provenance: Provenance::Unscaled,
        };
        assert!(matches!(
            combine_heating(&ramp(Mode::Heating), &short),
            Err(ProfileError::Length(8759))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let h = ramp(Mode::Heating);
        let c = LoadProfile::unscaled(vec![0.25; HOURS_PER_YEAR], Mode::Cooling).unwrap();
        let mut buf = Vec::new();
        write_profile_pair(&mut buf, &h, &c).unwrap();
        let pair = read_profile_pair(buf.as_slice(), Provenance::Unscaled).unwrap();
        assert_eq!(pair.heating, h);
        assert_eq!(pair.cooling, c);
    }

    #[test]
    fn csv_rejects_out_of_order_hours() {
        let text = "hour,heating_kw,cooling_kw\n0,1,1\n2,1,1\n";
        assert!(matches!(
            read_profile_pair(text.as_bytes(), Provenance::Unscaled),
            Err(ProfileError::Format(_))
        ));
    }

    #[test]
    fn monthly_means_cover_the_year() {
        let p = LoadProfile::unscaled(vec![3.0; HOURS_PER_YEAR], Mode::Cooling).unwrap();
        assert!(p.monthly_means().iter().all(|m| (*m - 3.0).abs() < 1e-12));
        assert_eq!(MONTH_DAYS.iter().sum::<usize>() * 24, HOURS_PER_YEAR);
    }
}
