//! Benchmark targets from metered building data and gain/offset scaling of
//! unscaled hourly profiles onto them.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::profile::{LoadProfile, ProfileError};
use crate::units::{kbtuh_to_kw, tons_to_kw, KW_PER_KBTUH, KW_PER_TON};
use crate::{Mode, Provenance, HOURS_PER_YEAR};

#[derive(Debug, Error)]
pub enum LoadModelError {
    #[error("insufficient metered data: no record supplies {}", fields.join(", "))]
    InsufficientData { fields: Vec<String> },
    #[error("building `{name}`: {reason}")]
    InvalidRecord { name: String, reason: String },
    #[error("invalid benchmark parameters: {0}")]
    InvalidParams(String),
    #[error("degenerate {mode} target: annual energy {energy} kWh and peak {peak} kW must both be positive")]
    DegenerateTarget { mode: Mode, energy: f64, peak: f64 },
    #[error("{0} profile is all zero and cannot be scaled")]
    Unscalable(Mode),
    #[error("profile is already scaled")]
    AlreadyScaled,
    #[error("scaling did not converge: best k = {k}, b = {b}, residual {residual:e}")]
    NonConvergent { k: f64, b: f64, residual: f64 },
    #[error("building records: {0}")]
    Records(String),
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BuildingType {
    Admin,
    Athletic,
    Datacenter,
    Auditorium,
    Bioscience,
    Chemistry,
    Engineering,
    Classroom,
    Residence,
    #[serde(rename = "Mixed-use")]
    MixedUse,
}

impl BuildingType {
    pub const ALL: [BuildingType; 10] = [
        BuildingType::Admin,
        BuildingType::Athletic,
        BuildingType::Datacenter,
        BuildingType::Auditorium,
        BuildingType::Bioscience,
        BuildingType::Chemistry,
        BuildingType::Engineering,
        BuildingType::Classroom,
        BuildingType::Residence,
        BuildingType::MixedUse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BuildingType::Admin => "Admin",
            BuildingType::Athletic => "Athletic",
            BuildingType::Datacenter => "Datacenter",
            BuildingType::Auditorium => "Auditorium",
            BuildingType::Bioscience => "Bioscience",
            BuildingType::Chemistry => "Chemistry",
            BuildingType::Engineering => "Engineering",
            BuildingType::Classroom => "Classroom",
            BuildingType::Residence => "Residence",
            BuildingType::MixedUse => "Mixed-use",
        }
    }
}

impl fmt::Display for BuildingType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BuildingType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        BuildingType::ALL
            .into_iter()
            .find(|t| {
                t.name()
                    .chars()
                    .filter(|c| c.is_ascii_alphanumeric())
                    .collect::<String>()
                    .to_ascii_lowercase()
                    == key
            })
            .ok_or_else(|| format!("unknown building type `{s}`"))
    }
}

/// One row of metered building data. Missing values are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct BuildingRecord {
    pub name: String,
    pub area_sqft: f64,
    /// kWh/year.
    pub annual_electricity: Option<f64>,
    /// kBtu/year.
    pub annual_steam: Option<f64>,
    /// kBtu/h.
    pub peak_heating: Option<f64>,
    /// Refrigeration tons.
    pub peak_cooling: Option<f64>,
    /// Chiller electricity, kWh/year, when metered separately.
    pub cooling_electricity: Option<f64>,
    pub building_type: BuildingType,
}

impl BuildingRecord {
    pub fn validate(&self) -> Result<(), LoadModelError> {
        let invalid = |reason: String| LoadModelError::InvalidRecord {
            name: self.name.clone(),
            reason,
        };
        if !(self.area_sqft > 0.0) || !self.area_sqft.is_finite() {
            return Err(invalid(format!("area must be positive, got {}", self.area_sqft)));
        }
        let fields = [
            ("annual_electricity", self.annual_electricity),
            ("annual_steam", self.annual_steam),
            ("peak_heating", self.peak_heating),
            ("peak_cooling", self.peak_cooling),
            ("cooling_electricity", self.cooling_electricity),
        ];
        for (field, v) in fields {
            if let Some(v) = v {
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(invalid(format!("{field} must be non-negative, got {v}")));
                }
            }
        }
        Ok(())
    }
}

/// Conversion parameters for turning metered data into node targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkParams {
    pub steam_loss: f64,
    pub gas_efficiency: f64,
    /// Ingested for completeness; not used by the default derivation.
    pub absorption_chiller_efficiency: f64,
    /// kW/ton.
    pub existing_chiller_intensity: f64,
    /// kW/ton.
    pub new_chiller_intensity: f64,
    pub heating_system_efficiency: f64,
    pub diversity_coefficient: f64,
    /// Thermal kWh of cooling per kWh of chiller electricity.
    pub seasonal_chiller_cop: f64,
    /// Fraction of the electricity figure attributed to cooling, per type.
    /// Types not listed use 1.0.
    pub cooling_attribution: BTreeMap<BuildingType, f64>,
}

impl Default for BenchmarkParams {
    fn default() -> Self {
        Self {
            steam_loss: 0.15,
            gas_efficiency: 0.80,
            absorption_chiller_efficiency: 0.4,
            existing_chiller_intensity: 1.25,
            new_chiller_intensity: 0.5,
            heating_system_efficiency: 0.95,
            diversity_coefficient: 1.0,
            seasonal_chiller_cop: KW_PER_TON / 1.25,
            cooling_attribution: BTreeMap::new(),
        }
    }
}

impl BenchmarkParams {
    pub fn validate(&self) -> Result<(), LoadModelError> {
        let fractions = [
            ("steam_loss", self.steam_loss),
            ("gas_efficiency", self.gas_efficiency),
            ("heating_system_efficiency", self.heating_system_efficiency),
            ("diversity_coefficient", self.diversity_coefficient),
        ];
        for (name, v) in fractions {
            // A steam loss of exactly 1 would zero every heating target.
            let ok = if name == "steam_loss" {
                (0.0..1.0).contains(&v)
            } else {
                v > 0.0 && v <= 1.0
            };
            if !ok {
                return Err(LoadModelError::InvalidParams(format!(
                    "{name} = {v} is outside its range"
                )));
            }
        }
        let positive = [
            ("absorption_chiller_efficiency", self.absorption_chiller_efficiency),
            ("existing_chiller_intensity", self.existing_chiller_intensity),
            ("new_chiller_intensity", self.new_chiller_intensity),
            ("seasonal_chiller_cop", self.seasonal_chiller_cop),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(LoadModelError::InvalidParams(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        for (t, f) in &self.cooling_attribution {
            if !(0.0..=1.0).contains(f) {
                return Err(LoadModelError::InvalidParams(format!(
                    "cooling attribution for {t} = {f} is outside [0, 1]"
                )));
            }
        }
        Ok(())
    }

    pub fn attribution(&self, t: BuildingType) -> f64 {
        self.cooling_attribution.get(&t).copied().unwrap_or(1.0)
    }
}

/// Annual energy (kWh thermal) and peak (kW thermal) for one mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTargets {
    pub annual_energy: f64,
    pub peak_load: f64,
    pub mode: Mode,
}

impl BenchmarkTargets {
    /// The mean load cannot exceed the peak.
    pub fn is_feasible(&self) -> bool {
        self.annual_energy >= 0.0
            && self.peak_load >= 0.0
            && self.annual_energy <= HOURS_PER_YEAR as f64 * self.peak_load
    }
}

/// A metered value that was absent and therefore left out of a sum.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkippedField {
    pub building: String,
    pub field: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub heating: BenchmarkTargets,
    pub cooling: BenchmarkTargets,
    pub diversity_coefficient: f64,
    pub skipped: Vec<SkippedField>,
    /// Buildings whose cooling energy came from whole-building electricity.
    pub whole_building_electricity: Vec<String>,
}

/// Node heating and cooling targets from per-building metered data.
///
/// Peaks are summed and multiplied by the diversity coefficient. Heating
/// energy is steam after distribution loss and heating-system efficiency.
/// Cooling energy is chiller electricity times the seasonal chiller COP; the
/// chiller figure is the separate cooling column when present, otherwise the
/// whole-building electricity, both scaled by the type's attribution fraction.
pub fn derive_benchmarks(
    records: &[BuildingRecord],
    params: &BenchmarkParams,
) -> Result<BenchmarkReport, LoadModelError> {
    params.validate()?;
    if records.is_empty() {
        return Err(LoadModelError::InsufficientData {
            fields: vec!["any building record".into()],
        });
    }
    let mut skipped = Vec::new();
    let mut whole_building = Vec::new();
    let mut sum = |value: Option<f64>, building: &str, field: &'static str, seen: &mut bool| -> f64 {
        match value {
            Some(v) => {
                *seen = true;
                v
            }
            None => {
                skipped.push(SkippedField {
                    building: building.to_string(),
                    field,
                });
                0.0
            }
        }
    };
    let (mut peak_h, mut peak_c, mut steam, mut chiller) = (0.0, 0.0, 0.0, 0.0);
    let mut seen = [false; 4];
    for r in records {
        r.validate()?;
        peak_h += sum(r.peak_heating, &r.name, "peak_heating", &mut seen[0]);
        peak_c += sum(r.peak_cooling, &r.name, "peak_cooling", &mut seen[1]);
        steam += sum(r.annual_steam, &r.name, "annual_steam", &mut seen[2]);
        let elec = match (r.cooling_electricity, r.annual_electricity) {
            (Some(c), _) => Some(c),
            (None, Some(e)) => {
                whole_building.push(r.name.clone());
                Some(e)
            }
            (None, None) => None,
        };
        chiller += params.attribution(r.building_type) * sum(elec, &r.name, "annual_electricity", &mut seen[3]);
    }
    let names = ["peak_heating", "peak_cooling", "annual_steam", "annual_electricity"];
    let missing: Vec<String> = names
        .iter()
        .zip(seen)
        .filter(|(_, s)| !s)
        .map(|(n, _)| n.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(LoadModelError::InsufficientData { fields: missing });
    }
    let d = params.diversity_coefficient;
    Ok(BenchmarkReport {
        heating: BenchmarkTargets {
            annual_energy: steam * (1.0 - params.steam_loss) * params.heating_system_efficiency * KW_PER_KBTUH,
            peak_load: kbtuh_to_kw(peak_h) * d,
            mode: Mode::Heating,
        },
        cooling: BenchmarkTargets {
            annual_energy: chiller * params.seasonal_chiller_cop,
            peak_load: tons_to_kw(peak_c) * d,
            mode: Mode::Cooling,
        },
        diversity_coefficient: d,
        skipped,
        whole_building_electricity: whole_building,
    })
}

fn check_targets(targets: &BenchmarkTargets) -> Result<(), LoadModelError> {
    if !(targets.annual_energy > 0.0) || !(targets.peak_load > 0.0) {
        return Err(LoadModelError::DegenerateTarget {
            mode: targets.mode,
            energy: targets.annual_energy,
            peak: targets.peak_load,
        });
    }
    Ok(())
}

fn objective(k: f64, b: f64, sum: f64, max: f64, targets: &BenchmarkTargets) -> f64 {
    let e = (k * sum + HOURS_PER_YEAR as f64 * b - targets.annual_energy) / targets.annual_energy;
    let p = (k * max + b - targets.peak_load) / targets.peak_load;
    e * e + p * p
}

/// Squared relative misfit of `k L + b` in annual energy and peak, before
/// clamping.
pub fn eq1_objective(k: f64, b: f64, profile: &LoadProfile, targets: &BenchmarkTargets) -> Result<f64, LoadModelError> {
    check_targets(targets)?;
    let sum: f64 = profile.values().iter().map(|l| k * l + b).sum();
    let max = profile
        .values()
        .iter()
        .map(|l| k * l + b)
        .fold(f64::NEG_INFINITY, f64::max);
    let e = (sum - targets.annual_energy) / targets.annual_energy;
    let p = (max - targets.peak_load) / targets.peak_load;
    Ok(e * e + p * p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingSolution {
    pub k: f64,
    /// kW.
    pub b: f64,
    /// Objective after clamping.
    pub residual: f64,
    pub clamped_hours: usize,
    /// kWh, after clamping.
    pub achieved_energy: f64,
    /// kW, after clamping.
    pub achieved_peak: f64,
    pub iterations: usize,
}

/// Fits `k > 0` and `b` so the scaled profile hits the targets, then clamps
/// negative hours to zero.
///
/// The simplex works on `(ln k, b / P)` starting from `k = E / sum(L)`,
/// `b = 0`. A constant profile leaves a one-parameter family of exact
/// fits; there `b` is fixed at zero.
pub fn scale_profile(
    profile: &LoadProfile,
    targets: &BenchmarkTargets,
) -> Result<(ScalingSolution, LoadProfile), LoadModelError> {
    check_targets(targets)?;
    if profile.provenance() == Provenance::Scaled {
        return Err(LoadModelError::AlreadyScaled);
    }
    if profile.mode() != targets.mode {
        return Err(ProfileError::ModeMismatch {
            expected: targets.mode,
            got: profile.mode(),
        }
        .into());
    }
    if profile.is_all_zero() {
        return Err(LoadModelError::Unscalable(profile.mode()));
    }
    let values = profile.values();
    let sum = profile.total();
    let max = profile.peak();
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let p = targets.peak_load;
    let k0 = targets.annual_energy / sum;
    let constant = max - min <= 1e-12 * max;

    // Finite box so an infeasible target settles on k -> 0 instead of
    // drifting in ln k forever.
    let ln_k = (k0.ln() - 30.0, k0.ln() + 30.0);
    let opts = |dims: usize| NelderMeadOptions {
        initial_step: vec![0.05; dims],
        xatol: 1e-13,
        fatol: 1e-26,
        max_iter: 20_000,
        bounds: Some([ln_k, (-1e3, 1e3)][..dims].to_vec()),
    };
    let (k, b, iterations, converged) = if constant {
        let m = nelder_mead(|x| objective(x[0].exp(), 0.0, sum, max, targets), &[k0.ln()], &opts(1));
        (m.x[0].exp(), 0.0, m.iterations, m.converged)
    } else {
        let m = nelder_mead(
            |x| objective(x[0].exp(), x[1] * p, sum, max, targets),
            &[k0.ln(), 0.0],
            &opts(2),
        );
        (m.x[0].exp(), m.x[1] * p, m.iterations, m.converged)
    };
    if !converged {
        return Err(LoadModelError::NonConvergent {
            k,
            b,
            residual: objective(k, b, sum, max, targets),
        });
    }
    let mut clamped_hours = 0;
    let scaled: Vec<f64> = values
        .iter()
        .map(|l| {
            let v = k * l + b;
            if v < 0.0 {
                clamped_hours += 1;
                0.0
            } else {
                v
            }
        })
        .collect();
    let out = LoadProfile::new(scaled, profile.mode(), Provenance::Scaled)?;
    let achieved_energy = out.total();
    let achieved_peak = out.peak();
    let e = (achieved_energy - targets.annual_energy) / targets.annual_energy;
    let pk = (achieved_peak - targets.peak_load) / targets.peak_load;
    Ok((
        ScalingSolution {
            k,
            b,
            residual: e * e + pk * pk,
            clamped_hours,
            achieved_energy,
            achieved_peak,
            iterations,
        },
        out,
    ))
}

fn optional(raw: &str, field: &str, row: usize) -> Result<Option<f64>, LoadModelError> {
    let raw = raw.trim();
    if raw.is_empty() || raw == "-" {
        return Ok(None);
    }
    raw.replace(',', "")
        .parse::<f64>()
        .map(Some)
        .map_err(|_| LoadModelError::Records(format!("row {row}: cannot parse {field} `{raw}`")))
}

/// Reads building records. Required columns: `building`, `area_sqft`,
/// `annual_electricity_kwh`, `annual_steam_kbtu`, `peak_heating_kbtuh`,
/// `peak_cooling_tons`, `building_type`; optional `cooling_electricity_kwh`.
/// `-` or an empty cell marks a missing value.
pub fn read_building_records<R: Read>(reader: R) -> Result<Vec<BuildingRecord>, LoadModelError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| LoadModelError::Records(e.to_string()))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let need = |name: &str| col(name).ok_or_else(|| LoadModelError::Records(format!("missing column `{name}`")));
    let name_i = need("building")?;
    let area_i = need("area_sqft")?;
    let elec_i = need("annual_electricity_kwh")?;
    let steam_i = need("annual_steam_kbtu")?;
    let ph_i = need("peak_heating_kbtuh")?;
    let pc_i = need("peak_cooling_tons")?;
    let type_i = need("building_type")?;
    let cool_i = col("cooling_electricity_kwh");
    let mut out = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let row = n + 1;
        let rec = rec.map_err(|e| LoadModelError::Records(e.to_string()))?;
        let get = |i: usize| rec.get(i).unwrap_or("");
        let area = optional(get(area_i), "area_sqft", row)?
            .ok_or_else(|| LoadModelError::Records(format!("row {row}: area_sqft is required")))?;
        let record = BuildingRecord {
            name: get(name_i).to_string(),
            area_sqft: area,
            annual_electricity: optional(get(elec_i), "annual_electricity_kwh", row)?,
            annual_steam: optional(get(steam_i), "annual_steam_kbtu", row)?,
            peak_heating: optional(get(ph_i), "peak_heating_kbtuh", row)?,
            peak_cooling: optional(get(pc_i), "peak_cooling_tons", row)?,
            cooling_electricity: match cool_i {
                Some(i) => optional(get(i), "cooling_electricity_kwh", row)?,
                None => None,
            },
            building_type: get(type_i)
                .parse()
                .map_err(|e| LoadModelError::Records(format!("row {row}: {e}")))?,
        };
        record.validate()?;
        out.push(record);
    }
    Ok(out)
}

pub fn read_building_records_file(path: &Path) -> Result<Vec<BuildingRecord>, LoadModelError> {
    let f = std::fs::File::open(path).map_err(|e| {
        LoadModelError::Profile(ProfileError::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })?;
    read_building_records(f)
}
