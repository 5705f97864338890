//! Project configuration: one TOML file drives every stage.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use gshp_core::hybrid::{CopSet, CostParams, HybridParams};
use gshp_core::load_model::BenchmarkParams;
use gshp_core::plant::{PlantConfig, SourceConfig, SourceKind};
use gshp_core::sizing::SizingParams;
use gshp_core::synth::{SynthProfileSpec, WeatherSpec};

use crate::CliError;

fn default_seed() -> u64 {
    42
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Input files, relative to the config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputPaths {
    /// Metered building data. Required unless `[targets]` is given.
    pub buildings: Option<PathBuf>,
    /// Unscaled `hour,heating_kw,cooling_kw`. Synthesised from the seed when absent.
    pub profiles: Option<PathBuf>,
    /// `hour,outdoor_drybulb_c`. Synthesised from the seed when absent.
    pub weather: Option<PathBuf>,
    pub performance_maps: PerformanceMapPaths,
}

/// Measured heat pump data replacing the synthetic maps.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerformanceMapPaths {
    pub gshp_heating: Option<PathBuf>,
    pub gshp_cooling: Option<PathBuf>,
    pub ashp_heating: Option<PathBuf>,
    pub ashp_cooling: Option<PathBuf>,
}

impl PerformanceMapPaths {
    pub fn entries(&self) -> [(&'static str, Option<&PathBuf>); 4] {
        [
            ("gshp_heating", self.gshp_heating.as_ref()),
            ("gshp_cooling", self.gshp_cooling.as_ref()),
            ("ashp_heating", self.ashp_heating.as_ref()),
            ("ashp_cooling", self.ashp_cooling.as_ref()),
        ]
    }
}

/// Node targets given directly instead of derived from building data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetOverrides {
    pub heating_energy_kwh: f64,
    pub heating_peak_kw: f64,
    pub cooling_energy_kwh: f64,
    pub cooling_peak_kw: f64,
}

/// One simulation case. Ground-coupled kinds take either a multiple of the
/// sized borehole count or an explicit count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    pub name: String,
    pub kind: SourceKind,
    #[serde(default)]
    pub force_auxiliary: bool,
    pub field_scale: Option<f64>,
    pub boreholes: Option<usize>,
}

impl CaseConfig {
    pub fn source(&self) -> SourceConfig {
        SourceConfig {
            kind: self.kind,
            force_auxiliary: self.force_auxiliary,
        }
    }

    /// Borehole count for a field sized at `sized` boreholes.
    pub fn borehole_count(&self, sized: usize) -> Option<usize> {
        if !self.kind.uses_ground() {
            return None;
        }
        match (self.boreholes, self.field_scale) {
            (Some(n), _) => Some(n),
            (None, Some(s)) => Some(((sized as f64 * s).round() as usize).max(1)),
            (None, None) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub inputs: InputPaths,
    #[serde(default)]
    pub targets: Option<TargetOverrides>,
    #[serde(default)]
    pub synth: SynthProfileSpec,
    #[serde(default)]
    pub weather_synth: WeatherSpec,
    #[serde(default)]
    pub benchmark: BenchmarkParams,
    /// Ground properties, pulse schedule and design temperatures live here.
    #[serde(default)]
    pub sizing: SizingParams,
    #[serde(default)]
    pub costs: CostParams,
    #[serde(default)]
    pub cops: CopSet,
    #[serde(default)]
    pub plant: PlantConfig,
    #[serde(default)]
    pub cases: Vec<CaseConfig>,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        Self {
            seed: default_seed(),
            output_dir: default_output_dir(),
            inputs: InputPaths::default(),
            targets: None,
            synth: SynthProfileSpec::default(),
            weather_synth: WeatherSpec::default(),
            benchmark: BenchmarkParams::default(),
            sizing: SizingParams::default(),
            costs: CostParams::default(),
            cops: CopSet::default(),
            plant: PlantConfig::default(),
            cases: Vec::new(),
        }
    }
}

impl ProjectConfig {
    pub fn hybrid_params(&self) -> HybridParams {
        HybridParams {
            sizing: self.sizing.clone(),
            costs: self.costs,
            cops: self.cops,
        }
    }

    /// Sizing parameters for a full ground-source field.
    pub fn full_sizing_params(&self) -> SizingParams {
        SizingParams {
            cop_cooling: self.cops.gshp_cooling,
            cop_heating: self.cops.gshp_heating,
            ..self.sizing.clone()
        }
    }

    pub fn case(&self, name: &str) -> Option<&CaseConfig> {
        self.cases.iter().find(|c| c.name == name)
    }

    fn validate(&self) -> Result<(), CliError> {
        let config_err = |e: String| CliError::config(e);
        self.benchmark.validate().map_err(|e| config_err(e.to_string()))?;
        self.sizing.ground.validate().map_err(|e| config_err(e.to_string()))?;
        self.costs.validate().map_err(|e| config_err(e.to_string()))?;
        self.cops.validate().map_err(|e| config_err(e.to_string()))?;
        self.plant.validate().map_err(|e| config_err(e.to_string()))?;
        if self.inputs.buildings.is_none() && self.targets.is_none() {
            return Err(config_err("either inputs.buildings or [targets] is required".into()));
        }
        if let Some(t) = &self.targets {
            for (name, v) in [
                ("heating_energy_kwh", t.heating_energy_kwh),
                ("heating_peak_kw", t.heating_peak_kw),
                ("cooling_energy_kwh", t.cooling_energy_kwh),
                ("cooling_peak_kw", t.cooling_peak_kw),
            ] {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(config_err(format!("targets.{name} must be positive, got {v}")));
                }
            }
        }
        let mut names = BTreeSet::new();
        for case in &self.cases {
            let valid_name = !case.name.is_empty()
                && case
                    .name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
            if !valid_name {
                return Err(config_err(format!(
                    "case name `{}` must be non-empty ASCII letters, digits, `_` or `-`",
                    case.name
                )));
            }
            if case.name == "all" || case.name == "summary" {
                return Err(config_err(format!("case name `{}` is reserved", case.name)));
            }
            if !names.insert(case.name.as_str()) {
                return Err(config_err(format!("case `{}` is defined twice", case.name)));
            }
            let sized = case.field_scale.is_some() || case.boreholes.is_some();
            if case.kind.uses_ground() {
                if case.field_scale.is_some() == case.boreholes.is_some() {
                    return Err(config_err(format!(
                        "case `{}` needs exactly one of field_scale and boreholes",
                        case.name
                    )));
                }
                if let Some(s) = case.field_scale {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(config_err(format!(
                            "case `{}`: field_scale must be positive",
                            case.name
                        )));
                    }
                }
                if case.boreholes == Some(0) {
                    return Err(config_err(format!("case `{}`: boreholes must be positive", case.name)));
                }
            } else if sized {
                return Err(config_err(format!("case `{}` has no ground loop to size", case.name)));
            }
        }
        Ok(())
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let i = &mut self.inputs;
        for p in [
            &mut i.buildings,
            &mut i.profiles,
            &mut i.weather,
            &mut i.performance_maps.gshp_heating,
            &mut i.performance_maps.gshp_cooling,
            &mut i.performance_maps.ashp_heating,
            &mut i.performance_maps.ashp_cooling,
        ]
        .into_iter()
        .flatten()
        {
            join(p);
        }
        join(&mut self.output_dir);
    }

    /// Input files in a fixed order, labelled by their config key.
    pub fn input_files(&self) -> Vec<(&'static str, &Path)> {
        let i = &self.inputs;
        let mut out = Vec::new();
        for (key, p) in [
            ("buildings", &i.buildings),
            ("profiles", &i.profiles),
            ("weather", &i.weather),
        ] {
            if let Some(p) = p {
                out.push((key, p.as_path()));
            }
        }
        for (key, p) in i.performance_maps.entries() {
            if let Some(p) = p {
                out.push((key, p.as_path()));
            }
        }
        out
    }
}

/// A config as written, the overrides applied to it and the resolved form.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    /// Config with overrides applied and paths as written, used for the digest.
    pub canonical: ProjectConfig,
    /// Same config with paths joined onto the config directory.
    pub resolved: ProjectConfig,
    pub overrides: Vec<String>,
}

fn parse_override(raw: &str) -> Result<(Vec<String>, toml::Value), CliError> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| CliError::config(format!("override `{raw}` must look like key=value")))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(CliError::config(format!("override `{raw}` has an empty key segment")));
    }
    let value = value.trim();
    // Anything that is not a TOML literal is taken as a bare string.
    let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    Ok((path, parsed))
}

fn apply_override(root: &mut toml::Table, path: &[String], value: toml::Value) -> Result<(), CliError> {
    let (last, parents) = path.split_last().expect("non-empty override path");
    let mut table = root;
    for key in parents {
        let entry = table
            .entry(key.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::config(format!("override path `{}`: `{key}` is not a table", path.join("."))))?;
    }
    table.insert(last.clone(), value);
    Ok(())
}

/// Parses the config and applies overrides without checking it.
pub fn read_config(path: &Path, overrides: &[String]) -> Result<ProjectConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
    let table: toml::Table =
        toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {}", path.display(), e.message())))?;
    with_overrides(table, overrides, path)
}

/// Library defaults with overrides applied.
pub fn default_config(overrides: &[String]) -> Result<ProjectConfig, CliError> {
    with_overrides(toml::Table::new(), overrides, Path::new("defaults"))
}

/// Deep merge of `over` onto `base`. A table sharing no key with its
/// default is a different enum variant and replaces it; arrays replace.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) if o.keys().any(|k| b.contains_key(k)) => merge(b, o),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}

fn with_overrides(user: toml::Table, overrides: &[String], origin: &Path) -> Result<ProjectConfig, CliError> {
    // Partial nested tables inherit the project defaults rather than the
    // defaults of their own type.
    let mut table = toml::Table::try_from(ProjectConfig::default()).map_err(|e| CliError::internal(e.to_string()))?;
    merge(&mut table, user);
    for raw in overrides {
        let (key, value) = parse_override(raw)?;
        apply_override(&mut table, &key, value)?;
    }
    toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::config(format!("{}: {}", origin.display(), e.message())))
}

/// Reads the config, applies `key=value` overrides and checks every
/// referenced input exists.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<LoadedConfig, CliError> {
    let canonical = read_config(path, overrides)?;
    canonical.validate()?;
    let base = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut resolved = canonical.clone();
    resolved.resolve_paths(base);
    for (key, p) in resolved.input_files() {
        if !p.is_file() {
            return Err(CliError::input(format!(
                "inputs.{key}: file {} does not exist",
                p.display()
            )));
        }
    }
    Ok(LoadedConfig {
        canonical,
        resolved,
        overrides: overrides.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn override_values_parse_as_toml_or_string() {
        let (k, v) = parse_override("costs.electricity_price = 0.1").unwrap();
        assert_eq!(k, vec!["costs", "electricity_price"]);
        assert_eq!(v, toml::Value::Float(0.1));
        let (_, v) = parse_override("output_dir=runs/a").unwrap();
        assert_eq!(v, toml::Value::String("runs/a".into()));
        assert!(parse_override("seed").is_err());
        assert!(parse_override("a..b=1").is_err());
    }

    #[test]
    fn partial_tables_keep_project_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.toml");
        std::fs::write(
            &path,
            "[synth.heating]\nmean = 30.0\n[sizing.borehole_resistance]\nfixed = 0.2\n",
        )
        .unwrap();
        let cfg = read_config(&path, &["synth.cooling.noise=0.0".into()]).unwrap();
        let defaults = SynthProfileSpec::default();
        assert_eq!(cfg.synth.heating.mean, 30.0);
        assert_eq!(cfg.synth.heating.peak_day, defaults.heating.peak_day);
        assert_eq!(cfg.synth.cooling.mean, defaults.cooling.mean);
        assert_eq!(cfg.synth.cooling.noise, 0.0);
        assert_eq!(
            cfg.sizing.borehole_resistance,
            gshp_core::ground::BoreholeResistance::Fixed(0.2)
        );
    }

    #[test]
    fn override_cannot_descend_into_a_scalar() {
        let mut t: toml::Table = toml::from_str("seed = 1").unwrap();
        let (k, v) = parse_override("seed.x=2").unwrap();
        assert!(apply_override(&mut t, &k, v).is_err());
    }

    #[test]
    fn ground_cases_need_one_size() {
        let case = |field_scale, boreholes| CaseConfig {
            name: "a".into(),
            kind: SourceKind::GshpOnly,
            force_auxiliary: false,
            field_scale,
            boreholes,
        };
        let mut cfg: ProjectConfig = toml::from_str(
            "[targets]\nheating_energy_kwh = 1\nheating_peak_kw = 1\ncooling_energy_kwh = 1\ncooling_peak_kw = 1",
        )
        .unwrap();
        cfg.cases = vec![case(Some(1.0), None)];
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.cases[0].borehole_count(61), Some(61));
        cfg.cases = vec![case(None, None)];
        assert!(cfg.validate().is_err());
        cfg.cases = vec![case(Some(1.0), Some(3))];
        assert!(cfg.validate().is_err());
        cfg.cases = vec![CaseConfig {
            kind: SourceKind::AshpOnly,
            ..case(Some(1.0), None)
        }];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn duplicate_and_reserved_names_are_rejected() {
        let mut cfg: ProjectConfig = toml::from_str(
            "[targets]\nheating_energy_kwh = 1\nheating_peak_kw = 1\ncooling_energy_kwh = 1\ncooling_peak_kw = 1",
        )
        .unwrap();
        let a = CaseConfig {
            name: "a".into(),
            kind: SourceKind::AshpOnly,
            force_auxiliary: false,
            field_scale: None,
            boreholes: None,
        };
        cfg.cases = vec![a.clone(), a.clone()];
        assert!(cfg.validate().is_err());
        cfg.cases = vec![CaseConfig {
            name: "all".into(),
            ..a
        }];
        assert!(cfg.validate().is_err());
    }
}
