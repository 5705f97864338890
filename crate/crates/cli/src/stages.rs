//! Subcommand implementations. Each stage reads the config, checks the
//! stages it depends on against the manifest, writes its outputs and then
//! records itself.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use gshp_core::ground::{borefield_gfunction, log_times, BorefieldLayout, GFunctionTable};
use gshp_core::hybrid::{optimize, HybridError, SweepRow};
use gshp_core::load_model::{
    derive_benchmarks, read_building_records_file, scale_profile, BenchmarkReport, BenchmarkTargets,
};
use gshp_core::plant::{
    fit_performance_map, read_performance_csv, read_weather_csv, simulate, write_weather_csv, PlantEquipment,
    SimulationResult, SimulationStatus,
};
use gshp_core::profile::{fmt_num, read_hourly_columns, read_profile_pair_file, write_profile_pair, ProfilePair};
use gshp_core::sizing::{size_borefield, BlockLoad, SizingResult};
use gshp_core::synth::{synth_pair, synth_weather};
use gshp_core::{LoadProfile, Mode, Provenance, HOURS_PER_YEAR};

use crate::config::{load_config, read_config, CaseConfig, ProjectConfig};
use crate::manifest::{config_digest, timestamp, RunManifest, StageRecord, StageStatus, STAGES};
use crate::{write_file, Cli, CliError, Command, CommonArgs};

pub const SCALED_HEATING: &str = "scaled_heating.csv";
pub const SCALED_COOLING: &str = "scaled_cooling.csv";
pub const SCALE_REPORT: &str = "scale_report.json";
pub const SIZING: &str = "sizing.json";
pub const SWEEP: &str = "sweep.csv";
pub const OPTIMUM: &str = "optimum.json";
pub const SIMULATION_DIR: &str = "simulation";
pub const REPORT_DIR: &str = "report";

/// Relative tolerance for the scaling validation block.
const SCALE_TOLERANCE: f64 = 0.01;

/// Time grid of the borefield response, s.
fn gfunction_times() -> Vec<f64> {
    log_times(60.0, 4e7, 8)
}

pub struct Context {
    pub config: ProjectConfig,
    pub overrides: Vec<String>,
    pub digest: String,
    pub out: PathBuf,
}

impl Context {
    pub fn open(common: &CommonArgs) -> Result<Self, CliError> {
        let path = common
            .config
            .as_ref()
            .ok_or_else(|| CliError::config("--config is required"))?;
        let loaded = load_config(path, &common.overrides)?;
        let digest = config_digest(&loaded)?;
        let out = common.out.clone().unwrap_or_else(|| loaded.resolved.output_dir.clone());
        Ok(Self {
            config: loaded.resolved,
            overrides: loaded.overrides,
            digest,
            out,
        })
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    fn manifest(&self) -> Result<Option<RunManifest>, CliError> {
        RunManifest::load(&self.out)
    }

    /// Fails unless `stage` completed under the current digest.
    fn require(&self, stage: &str) -> Result<(), CliError> {
        let record = self.manifest()?.and_then(|m| m.stages.get(stage).cloned());
        match record {
            None => Err(CliError::input(format!(
                "stage `{stage}` has no outputs in {}; run `gshp {stage}` first",
                self.out.display()
            ))),
            Some(r) if r.status != StageStatus::Ok => Err(CliError::input(format!(
                "stage `{stage}` failed in its last run; re-run `gshp {stage}`"
            ))),
            Some(r) if r.config_digest != self.digest => Err(CliError::stale(format!(
                "stage `{stage}` ran under config {} but the current config is {}; re-run `gshp {stage}`",
                short(&r.config_digest),
                short(&self.digest)
            ))),
            Some(_) => Ok(()),
        }
    }

    fn record(
        &self,
        stage: &str,
        status: StageStatus,
        started: u64,
        outputs: Vec<String>,
        message: Option<String>,
    ) -> Result<(), CliError> {
        let mut m = self
            .manifest()?
            .unwrap_or_else(|| RunManifest::new(&self.digest, &self.overrides));
        m.artifact_version = env!("CARGO_PKG_VERSION").to_string();
        m.config_digest = self.digest.clone();
        m.overrides = self.overrides.clone();
        m.stages.insert(
            stage.to_string(),
            StageRecord {
                status,
                config_digest: self.digest.clone(),
                started_unix: started,
                finished_unix: timestamp(),
                outputs,
                message,
            },
        );
        m.save(&self.out)
    }

    fn write(&self, rel: &str, bytes: &[u8]) -> Result<String, CliError> {
        write_file(&self.path(rel), bytes)?;
        Ok(rel.to_string())
    }

    fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<String, CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::internal(e.to_string()))?;
        text.push('\n');
        self.write(rel, text.as_bytes())
    }
}

fn short(digest: &str) -> &str {
    &digest[..digest.len().min(12)]
}

/// What a stage wrote and what it prints.
struct StageOutput {
    outputs: Vec<String>,
    summary: Value,
}

fn run_stage(
    ctx: &Context,
    stage: &str,
    f: impl FnOnce(&Context) -> Result<StageOutput, CliError>,
) -> Result<Value, CliError> {
    let started = timestamp();
    match f(ctx) {
        Ok(out) => {
            ctx.record(stage, StageStatus::Ok, started, out.outputs, None)?;
            Ok(json!({ "stage": stage, "status": "ok", "summary": out.summary }))
        }
        Err(e) => {
            // An infeasible sweep is a result worth recording; input errors are not.
            if e.code == crate::EXIT_INFEASIBLE {
                ctx.record(stage, StageStatus::Failed, started, vec![], Some(e.message.clone()))?;
            }
            Err(e)
        }
    }
}

pub fn execute(cli: &Cli) -> Result<String, CliError> {
    if let Command::SynthProfile { output, weather, seed } = &cli.command {
        return synth_profile(&cli.common, output, weather.as_deref(), *seed);
    }
    let ctx = Context::open(&cli.common)?;
    if cli.common.dry_run {
        return Ok(json!({
            "dry_run": true,
            "config_digest": ctx.digest,
            "output_dir": ctx.out,
            "cases": ctx.config.cases.iter().map(|c| c.name.as_str()).collect::<Vec<_>>(),
        })
        .to_string());
    }
    let value = match &cli.command {
        Command::Scale => run_stage(&ctx, "scale", stage_scale)?,
        Command::Size => run_stage(&ctx, "size", stage_size)?,
        Command::Optimize => run_stage(&ctx, "optimize", stage_optimize)?,
        Command::Simulate { cases, jobs } => run_stage(&ctx, "simulate", |c| stage_simulate(c, cases, *jobs))?,
        Command::Report => stage_report(&ctx)?,
        Command::Run { jobs } => Value::Array(vec![
            run_stage(&ctx, "scale", stage_scale)?,
            run_stage(&ctx, "size", stage_size)?,
            run_stage(&ctx, "optimize", stage_optimize)?,
            run_stage(&ctx, "simulate", |c| stage_simulate(c, "all", *jobs))?,
            stage_report(&ctx)?,
        ]),
        Command::SynthProfile { .. } => unreachable!("handled above"),
    };
    Ok(value.to_string())
}

fn synth_profile(
    common: &CommonArgs,
    output: &Path,
    weather: Option<&Path>,
    seed: Option<u64>,
) -> Result<String, CliError> {
    let config = match &common.config {
        Some(p) => read_config(p, &common.overrides)?,
        None => crate::config::default_config(&common.overrides)?,
    };
    let seed = seed.unwrap_or(config.seed);
    let pair = synth_pair(&config.synth, seed).map_err(|e| CliError::config(e.to_string()))?;
    let w = synth_weather(&config.weather_synth, seed);
    if common.dry_run {
        return Ok(json!({ "dry_run": true, "seed": seed }).to_string());
    }
    let mut buf = Vec::new();
    write_profile_pair(&mut buf, &pair.heating, &pair.cooling).map_err(|e| CliError::internal(e.to_string()))?;
    write_file(output, &buf)?;
    if let Some(path) = weather {
        let mut buf = Vec::new();
        write_weather_csv(&mut buf, &w).map_err(|e| CliError::internal(e.to_string()))?;
        write_file(path, &buf)?;
    }
    Ok(json!({
        "seed": seed,
        "profiles": output,
        "weather": weather,
        "heating_total_kwh": pair.heating.total(),
        "heating_peak_kw": pair.heating.peak(),
        "cooling_total_kwh": pair.cooling.total(),
        "cooling_peak_kw": pair.cooling.peak(),
    })
    .to_string())
}

// ---------------------------------------------------------------- inputs

fn unscaled_profiles(config: &ProjectConfig) -> Result<(ProfilePair, &'static str), CliError> {
    match &config.inputs.profiles {
        Some(path) => read_profile_pair_file(path, Provenance::Unscaled)
            .map(|p| (p, "file"))
            .map_err(|e| CliError::input(format!("{}: {e}", path.display()))),
        None => synth_pair(&config.synth, config.seed)
            .map(|p| (p, "synthetic"))
            .map_err(|e| CliError::config(e.to_string())),
    }
}

fn weather(config: &ProjectConfig) -> Result<Vec<f64>, CliError> {
    match &config.inputs.weather {
        Some(path) => {
            let f = std::fs::File::open(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
            read_weather_csv(f).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
        }
        None => Ok(synth_weather(&config.weather_synth, config.seed)),
    }
}

fn targets(config: &ProjectConfig) -> Result<(BenchmarkTargets, BenchmarkTargets, Option<BenchmarkReport>), CliError> {
    if let Some(t) = &config.targets {
        let h = BenchmarkTargets {
            annual_energy: t.heating_energy_kwh,
            peak_load: t.heating_peak_kw,
            mode: Mode::Heating,
        };
        let c = BenchmarkTargets {
            annual_energy: t.cooling_energy_kwh,
            peak_load: t.cooling_peak_kw,
            mode: Mode::Cooling,
        };
        return Ok((h, c, None));
    }
    let path = config
        .inputs
        .buildings
        .as_ref()
        .ok_or_else(|| CliError::config("either inputs.buildings or [targets] is required"))?;
    let records = read_building_records_file(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let report = derive_benchmarks(&records, &config.benchmark)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    Ok((report.heating, report.cooling, Some(report)))
}

fn write_profile_column(profile: &LoadProfile, column: &str) -> Vec<u8> {
    let mut s = String::with_capacity(HOURS_PER_YEAR * 16);
    let _ = writeln!(s, "hour,{column}");
    for (h, v) in profile.values().iter().enumerate() {
        let _ = writeln!(s, "{h},{}", fmt_num(*v));
    }
    s.into_bytes()
}

fn read_profile_column(path: &Path, column: &str, mode: Mode) -> Result<LoadProfile, CliError> {
    let f = std::fs::File::open(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let mut cols =
        read_hourly_columns(f, &[column]).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    LoadProfile::new(cols.pop().unwrap_or_default(), mode, Provenance::Scaled)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

/// Scaled profiles written by the scale stage.
fn scaled_profiles(ctx: &Context) -> Result<ProfilePair, CliError> {
    ctx.require("scale")?;
    Ok(ProfilePair {
        heating: read_profile_column(&ctx.path(SCALED_HEATING), "heating_kw", Mode::Heating)?,
        cooling: read_profile_column(&ctx.path(SCALED_COOLING), "cooling_kw", Mode::Cooling)?,
    })
}

fn full_field(config: &ProjectConfig, loads: &ProfilePair) -> Result<SizingResult, CliError> {
    size_borefield(
        &BlockLoad::from_profile(&loads.cooling),
        &BlockLoad::from_profile(&loads.heating),
        &config.full_sizing_params(),
    )
    .map_err(|e| CliError::input(format!("sizing: {e}")))
}

// ---------------------------------------------------------------- scale

#[derive(Serialize)]
struct Validation {
    energy_target_kwh: f64,
    energy_achieved_kwh: f64,
    energy_delta: f64,
    peak_target_kw: f64,
    peak_achieved_kw: f64,
    peak_delta: f64,
    tolerance: f64,
    within_tolerance: bool,
}

impl Validation {
    fn new(t: &BenchmarkTargets, scaled: &LoadProfile) -> Self {
        let (e, p) = (scaled.total(), scaled.peak());
        let energy_delta = (e - t.annual_energy) / t.annual_energy;
        let peak_delta = (p - t.peak_load) / t.peak_load;
        Self {
            energy_target_kwh: t.annual_energy,
            energy_achieved_kwh: e,
            energy_delta,
            peak_target_kw: t.peak_load,
            peak_achieved_kw: p,
            peak_delta,
            tolerance: SCALE_TOLERANCE,
            within_tolerance: energy_delta.abs() < SCALE_TOLERANCE && peak_delta.abs() < SCALE_TOLERANCE,
        }
    }
}

fn stage_scale(ctx: &Context) -> Result<StageOutput, CliError> {
    let cfg = &ctx.config;
    let (t_h, t_c, benchmark) = targets(cfg)?;
    let (unscaled, source) = unscaled_profiles(cfg)?;
    let mut modes = BTreeMap::new();
    let mut outputs = Vec::new();
    let mut all_within = true;
    for (name, profile, t, file, column) in [
        ("heating", &unscaled.heating, &t_h, SCALED_HEATING, "heating_kw"),
        ("cooling", &unscaled.cooling, &t_c, SCALED_COOLING, "cooling_kw"),
    ] {
        let (solution, scaled) =
            scale_profile(profile, t).map_err(|e| CliError::input(format!("scaling {name}: {e}")))?;
        let validation = Validation::new(t, &scaled);
        all_within &= validation.within_tolerance;
        outputs.push(ctx.write(file, &write_profile_column(&scaled, column))?);
        modes.insert(
            name,
            json!({
                "targets": t,
                "unscaled_energy_kwh": profile.total(),
                "unscaled_peak_kw": profile.peak(),
                "solution": solution,
                "validation": validation,
            }),
        );
    }
    let report = json!({
        "config_digest": ctx.digest,
        "profile_source": source,
        "benchmark": benchmark,
        "heating": modes["heating"],
        "cooling": modes["cooling"],
    });
    outputs.push(ctx.write_json(SCALE_REPORT, &report)?);
    Ok(StageOutput {
        outputs,
        summary: json!({
            "within_tolerance": all_within,
            "heating": modes["heating"]["validation"],
            "cooling": modes["cooling"]["validation"],
        }),
    })
}

// ---------------------------------------------------------------- size

fn stage_size(ctx: &Context) -> Result<StageOutput, CliError> {
    let loads = scaled_profiles(ctx)?;
    let sizing = full_field(&ctx.config, &loads)?;
    let layout = ctx
        .config
        .full_sizing_params()
        .layout(sizing.borehole_count.max(1))
        .map_err(|e| CliError::input(e.to_string()))?;
    let body = json!({
        "config_digest": ctx.digest,
        "borehole_count": sizing.borehole_count,
        "borehole_depth_m": sizing.borehole_depth,
        "installed_length_m": sizing.installed_length(),
        "governing_mode": if sizing.length_cooling >= sizing.length_heating { "cooling" } else { "heating" },
        "layout_positions": layout.positions(),
        "sizing": sizing,
    });
    let outputs = vec![ctx.write_json(SIZING, &body)?];
    Ok(StageOutput {
        outputs,
        summary: json!({
            "borehole_count": sizing.borehole_count,
            "installed_length_m": sizing.installed_length(),
        }),
    })
}

// ---------------------------------------------------------------- optimize

fn sweep_csv(sweep: &[SweepRow], optimum: usize) -> Vec<u8> {
    let num = |v: f64| if v.is_finite() { fmt_num(v) } else { String::new() };
    let mut s = String::from("alpha,beta,threshold_kw,boreholes,capital_usd,opex_year1_usd,npv_usd,feasible,optimum\n");
    for (i, r) in sweep.iter().enumerate() {
        let _ = writeln!(
            s,
            "{:.2},{},{},{},{},{},{},{},{}",
            r.alpha,
            num(r.beta),
            num(r.threshold),
            r.boreholes,
            num(r.capital),
            num(r.opex_year1),
            num(r.npv),
            r.feasible,
            i == optimum
        );
    }
    s.into_bytes()
}

fn stage_optimize(ctx: &Context) -> Result<StageOutput, CliError> {
    let loads = scaled_profiles(ctx)?;
    let params = ctx.config.hybrid_params();
    let opt = optimize(&loads.heating, &loads.cooling, &params).map_err(|e| match e {
        HybridError::AllInfeasible { .. } => CliError::infeasible(e.to_string()),
        other => CliError::input(other.to_string()),
    })?;
    let d = &opt.design;
    let interior = opt.index > 0 && opt.index + 1 < opt.sweep.len();
    let body = json!({
        "config_digest": ctx.digest,
        "alpha": d.shave.alpha,
        "beta": d.shave.beta,
        "threshold_kw": d.shave.threshold,
        "boreholes": d.sizing.borehole_count,
        "installed_length_m": d.sizing.installed_length(),
        "gshp_capacity_kw": d.gshp_capacity,
        "ashp_capacity_kw": d.ashp_capacity,
        "capital_usd": d.capital_cost,
        "opex_year1_usd": d.annual_operating_cost_year1,
        "npv_usd": d.npv_total,
        "interior": interior,
        "feasible_rows": opt.sweep.iter().filter(|r| r.feasible).count(),
        "warnings": params.cops.warnings(),
        "design": d,
    });
    let outputs = vec![
        ctx.write(SWEEP, &sweep_csv(&opt.sweep, opt.index))?,
        ctx.write_json(OPTIMUM, &body)?,
    ];
    Ok(StageOutput {
        outputs,
        summary: json!({
            "alpha": d.shave.alpha,
            "threshold_kw": d.shave.threshold,
            "npv_usd": d.npv_total,
            "interior": interior,
        }),
    })
}

// ---------------------------------------------------------------- simulate

/// One line of the case table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSummary {
    pub case: String,
    pub option: String,
    pub force_auxiliary: bool,
    pub boreholes: Option<usize>,
    pub electricity_kwh: f64,
    pub gshp_kwh: f64,
    pub ashp_kwh: f64,
    pub heater_kwh: f64,
    pub pump_kwh: f64,
    /// Relative to the first air-source-only case of the run.
    pub change_vs_ashp: Option<f64>,
    pub status: String,
    pub failure_hour: Option<f64>,
    pub failure_reason: Option<String>,
    pub comfort_fraction: f64,
    pub loop_dt_k: Option<f64>,
    pub loop_min_c: Option<f64>,
    pub loop_max_c: Option<f64>,
    pub hourly_csv: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub config_digest: String,
    pub sized_boreholes: usize,
    pub comfort_band_c: [f64; 2],
    pub performance_maps: Vec<MapFit>,
    pub equipment: PlantEquipment,
    pub cases: Vec<CaseSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapFit {
    pub map: String,
    pub rows: usize,
    pub max_relative_residual_capacity: f64,
    pub max_relative_residual_power: f64,
}

fn select_cases<'a>(config: &'a ProjectConfig, selector: &str) -> Result<Vec<&'a CaseConfig>, CliError> {
    if config.cases.is_empty() {
        return Err(CliError::config("the config defines no [[cases]]"));
    }
    if selector.trim() == "all" {
        return Ok(config.cases.iter().collect());
    }
    let mut out: Vec<&CaseConfig> = Vec::new();
    for name in selector.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let case = config.case(name).ok_or_else(|| {
            let known: Vec<&str> = config.cases.iter().map(|c| c.name.as_str()).collect();
            CliError::input(format!("unknown case `{name}`; known cases: {}", known.join(", ")))
        })?;
        if !out.iter().any(|c| c.name == case.name) {
            out.push(case);
        }
    }
    if out.is_empty() {
        return Err(CliError::input("no cases selected"));
    }
    // Config order keeps the summary independent of the selector order.
    out.sort_by_key(|c| config.cases.iter().position(|x| x.name == c.name));
    Ok(out)
}

fn apply_performance_maps(config: &ProjectConfig, equipment: &mut PlantEquipment) -> Result<Vec<MapFit>, CliError> {
    let mut fits = Vec::new();
    for (key, path) in config.inputs.performance_maps.entries() {
        let Some(path) = path else { continue };
        let f = std::fs::File::open(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        let rows = read_performance_csv(f).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        let target = match key {
            "gshp_heating" => &mut equipment.ground_source.heating,
            "gshp_cooling" => &mut equipment.ground_source.cooling,
            "ashp_heating" => &mut equipment.air_source.heating,
            _ => &mut equipment.air_source.cooling,
        };
        let fitted = fit_performance_map(&rows, target.references)
            .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        *target = fitted.map;
        fits.push(MapFit {
            map: key.to_string(),
            rows: rows.len(),
            max_relative_residual_capacity: fitted.max_relative_residual_capacity,
            max_relative_residual_power: fitted.max_relative_residual_power,
        });
    }
    Ok(fits)
}

fn finite_range(values: &[f64]) -> Option<(f64, f64)> {
    let mut it = values.iter().copied().filter(|v| v.is_finite());
    let first = it.next()?;
    Some(it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v))))
}

fn case_summary(case: &CaseConfig, result: &SimulationResult, comfort: (f64, f64), csv: String) -> CaseSummary {
    let b = result.breakdown;
    let (status, failure_hour, failure_reason) = match &result.status {
        SimulationStatus::Completed => ("completed".to_string(), None, None),
        SimulationStatus::Failed { reason, hour } => ("failed".to_string(), Some(*hour), Some(reason.clone())),
    };
    let supply: Vec<f64> = result.hourly.iter().map(|h| h.loop_supply).collect();
    let range = if case.kind.uses_ground() {
        finite_range(&supply)
    } else {
        None
    };
    CaseSummary {
        case: case.name.clone(),
        option: case.kind.label().to_string(),
        force_auxiliary: case.force_auxiliary,
        boreholes: result.borehole_count,
        electricity_kwh: result.total_electricity,
        gshp_kwh: b.gshp,
        ashp_kwh: b.ashp,
        heater_kwh: b.heater,
        pump_kwh: b.pumps,
        change_vs_ashp: None,
        status,
        failure_hour,
        failure_reason,
        comfort_fraction: result.comfort_fraction(comfort.0, comfort.1),
        loop_dt_k: result.active_loop_dt(),
        loop_min_c: range.map(|r| r.0),
        loop_max_c: range.map(|r| r.1),
        hourly_csv: csv,
    }
}

fn summary_csv(rows: &[CaseSummary]) -> Vec<u8> {
    let opt = |v: Option<f64>| v.map(fmt_num).unwrap_or_default();
    let mut s = String::from(
        "case,option,force_auxiliary,boreholes,electricity_kwh,gshp_kwh,ashp_kwh,heater_kwh,pump_kwh,change_vs_ashp,status,failure_hour,comfort_fraction,loop_dt_k\n",
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.case,
            r.option,
            r.force_auxiliary,
            r.boreholes.map(|n| n.to_string()).unwrap_or_default(),
            fmt_num(r.electricity_kwh),
            fmt_num(r.gshp_kwh),
            fmt_num(r.ashp_kwh),
            fmt_num(r.heater_kwh),
            fmt_num(r.pump_kwh),
            opt(r.change_vs_ashp),
            r.status,
            opt(r.failure_hour),
            fmt_num(r.comfort_fraction),
            opt(r.loop_dt_k)
        );
    }
    s.into_bytes()
}

fn stage_simulate(ctx: &Context, selector: &str, jobs: usize) -> Result<StageOutput, CliError> {
    if jobs == 0 {
        return Err(CliError::config("--jobs must be at least 1"));
    }
    let cfg = &ctx.config;
    let cases = select_cases(cfg, selector)?;
    let loads = scaled_profiles(ctx)?;
    let weather = weather(cfg)?;
    let sized = full_field(cfg, &loads)?.borehole_count.max(1);
    let mut equipment = PlantEquipment::design(&loads.heating, &loads.cooling, Some(&weather), &cfg.plant)
        .map_err(|e| CliError::config(e.to_string()))?;
    let fits = apply_performance_maps(cfg, &mut equipment)?;
    let sizing_params = cfg.full_sizing_params();

    let mut counts: Vec<usize> = cases.iter().filter_map(|c| c.borehole_count(sized)).collect();
    counts.sort_unstable();
    counts.dedup();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::internal(e.to_string()))?;
    let times = gfunction_times();
    let fields: BTreeMap<usize, (BorefieldLayout, GFunctionTable)> = pool.install(|| {
        counts
            .par_iter()
            .map(|&n| -> Result<(usize, (BorefieldLayout, GFunctionTable)), CliError> {
                let layout = sizing_params.layout(n).map_err(|e| CliError::input(e.to_string()))?;
                let g = borefield_gfunction(&layout, &times, &sizing_params.ground)
                    .map_err(|e| CliError::input(e.to_string()))?;
                Ok((n, (layout, g)))
            })
            .collect::<Result<_, _>>()
    })?;

    // Comfort is counted against the thermostat's outer triggers.
    let comfort = (cfg.plant.controls.heat_on, cfg.plant.controls.cool_on);
    let results: Vec<Result<SimulationResult, CliError>> = pool.install(|| {
        cases
            .par_iter()
            .map(|case| {
                let ground = case.borehole_count(sized).map(|n| {
                    let (layout, g) = &fields[&n];
                    gshp_core::plant::GroundLoop {
                        layout,
                        gfunction: g,
                        ground: &sizing_params.ground,
                    }
                });
                simulate(
                    &loads.heating,
                    &loads.cooling,
                    Some(&weather),
                    case.source(),
                    ground,
                    &equipment,
                    &cfg.plant,
                )
                .map_err(|e| CliError::input(format!("case `{}`: {e}", case.name)))
            })
            .collect()
    });

    let mut outputs = Vec::new();
    let mut rows = Vec::new();
    for (case, result) in cases.iter().zip(results) {
        let result = result?;
        let rel = format!("{SIMULATION_DIR}/{}.csv", case.name);
        let mut buf = Vec::new();
        result
            .write_hourly_csv(&mut buf)
            .map_err(|e| CliError::internal(e.to_string()))?;
        outputs.push(ctx.write(&rel, &buf)?);
        rows.push(case_summary(case, &result, comfort, rel));
    }
    // A failed run stops early, so its partial-year total is not compared.
    let ashp = gshp_core::plant::SourceKind::AshpOnly.label();
    if let Some(base) = rows
        .iter()
        .find(|r| r.option == ashp && r.status == "completed")
        .map(|r| r.electricity_kwh)
    {
        for r in rows.iter_mut().filter(|r| r.status == "completed") {
            r.change_vs_ashp = Some((r.electricity_kwh - base) / base);
        }
    }
    let summary = SimulationSummary {
        config_digest: ctx.digest.clone(),
        sized_boreholes: sized,
        comfort_band_c: [comfort.0, comfort.1],
        performance_maps: fits,
        equipment,
        cases: rows,
    };
    outputs.push(ctx.write(&format!("{SIMULATION_DIR}/summary.csv"), &summary_csv(&summary.cases))?);
    outputs.push(ctx.write_json(&format!("{SIMULATION_DIR}/summary.json"), &summary)?);
    Ok(StageOutput {
        outputs,
        summary: json!({
            "sized_boreholes": sized,
            "cases": summary.cases.iter().map(|c| json!({
                "case": c.case,
                "boreholes": c.boreholes,
                "electricity_kwh": c.electricity_kwh,
                "status": c.status,
            })).collect::<Vec<_>>(),
        }),
    })
}

// ---------------------------------------------------------------- report

/// Report sections and the stage each one needs.
const SECTIONS: [(&str, &str); 4] = [
    ("load_profiles", "scale"),
    ("sizing", "size"),
    ("cost_curve", "optimize"),
    ("simulation", "simulate"),
];

fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

/// Picks named columns out of a CSV as raw strings.
fn csv_columns(text: &str, names: &[&str]) -> Result<Vec<Vec<String>>, String> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or("empty file")?.split(',').collect();
    let idx: Vec<usize> = names
        .iter()
        .map(|n| {
            header
                .iter()
                .position(|h| h == n)
                .ok_or(format!("missing column `{n}`"))
        })
        .collect::<Result<_, _>>()?;
    let mut out = vec![Vec::new(); names.len()];
    for line in lines.filter(|l| !l.is_empty()) {
        let cells: Vec<&str> = line.split(',').collect();
        for (col, &i) in out.iter_mut().zip(&idx) {
            col.push(cells.get(i).copied().unwrap_or("").to_string());
        }
    }
    Ok(out)
}

fn load_profiles_csv(ctx: &Context) -> Result<Vec<u8>, CliError> {
    let h = read_text(&ctx.path(SCALED_HEATING))?;
    let c = read_text(&ctx.path(SCALED_COOLING))?;
    let h = csv_columns(&h, &["hour", "heating_kw"]).map_err(CliError::input)?;
    let c = csv_columns(&c, &["cooling_kw"]).map_err(CliError::input)?;
    let mut s = String::from("hour,heating_kw,cooling_kw\n");
    for (i, (hour, heating)) in h[0].iter().zip(&h[1]).enumerate() {
        let _ = writeln!(s, "{hour},{heating},{}", c[0].get(i).map(String::as_str).unwrap_or(""));
    }
    Ok(s.into_bytes())
}

fn cost_curve_csv(ctx: &Context) -> Result<Vec<u8>, CliError> {
    let text = read_text(&ctx.path(SWEEP))?;
    let cols = csv_columns(
        &text,
        &[
            "alpha",
            "capital_usd",
            "opex_year1_usd",
            "npv_usd",
            "feasible",
            "optimum",
        ],
    )
    .map_err(CliError::input)?;
    let mut s = String::from("alpha,capital_usd,operating_npv_usd,total_npv_usd,opex_year1_usd,feasible,optimum\n");
    #[allow(clippy::needless_range_loop)]
    for i in 0..cols[0].len() {
        let operating = match (cols[1][i].parse::<f64>(), cols[3][i].parse::<f64>()) {
            (Ok(cap), Ok(total)) => fmt_num(total - cap),
            _ => String::new(),
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            cols[0][i], cols[1][i], operating, cols[3][i], cols[2][i], cols[4][i], cols[5][i]
        );
    }
    Ok(s.into_bytes())
}

fn temperatures_csv(ctx: &Context, summary: &SimulationSummary) -> Result<Vec<u8>, CliError> {
    const COLUMNS: [&str; 3] = ["indoor_c", "loop_supply_c", "loop_return_c"];
    let mut header = String::from("hour");
    let mut columns = Vec::new();
    for case in &summary.cases {
        let text = read_text(&ctx.path(&case.hourly_csv))?;
        let cols = csv_columns(&text, &COLUMNS).map_err(|e| CliError::input(format!("{}: {e}", case.hourly_csv)))?;
        for (name, col) in COLUMNS.iter().zip(cols) {
            let _ = write!(header, ",{}_{name}", case.case);
            columns.push(col);
        }
    }
    let mut s = header;
    s.push('\n');
    for h in 0..HOURS_PER_YEAR {
        s.push_str(&h.to_string());
        for col in &columns {
            s.push(',');
            s.push_str(col.get(h).map(String::as_str).unwrap_or(""));
        }
        s.push('\n');
    }
    Ok(s.into_bytes())
}

fn stage_report(ctx: &Context) -> Result<Value, CliError> {
    let started = timestamp();
    let manifest = ctx.manifest()?;
    let stage_ok = |stage: &str| -> bool {
        manifest
            .as_ref()
            .and_then(|m| m.stages.get(stage))
            .is_some_and(|r| r.status == StageStatus::Ok && r.outputs.iter().all(|o| ctx.path(o).is_file()))
    };
    let absent: Vec<&str> = SECTIONS.iter().map(|(_, s)| *s).filter(|s| !stage_ok(s)).collect();
    if absent.len() == SECTIONS.len() {
        return Err(CliError::input(format!(
            "no stage outputs in {}; absent stages: {}",
            ctx.out.display(),
            absent.join(", ")
        )));
    }
    let manifest = manifest.as_ref().expect("a present stage implies a manifest");
    let stale: Vec<String> = manifest
        .stale_stages(&ctx.digest)
        .into_iter()
        .filter(|s| s != "report")
        .collect();
    if !stale.is_empty() {
        return Err(CliError::stale(format!(
            "stages {} ran under a different config than the current one ({}); re-run them",
            stale.join(", "),
            short(&ctx.digest)
        )));
    }

    let mut outputs = Vec::new();
    let mut sections = serde_json::Map::new();
    for (section, stage) in SECTIONS {
        if !stage_ok(stage) {
            let reason = match manifest.stages.get(stage) {
                Some(r) if r.status == StageStatus::Failed => {
                    format!("stage `{stage}` failed: {}", r.message.clone().unwrap_or_default())
                }
                Some(_) => format!("outputs of stage `{stage}` are missing"),
                None => format!("stage `{stage}` has not run"),
            };
            sections.insert(
                section.into(),
                json!({ "status": "missing", "stage": stage, "reason": reason }),
            );
            continue;
        }
        let (data, csv) = match section {
            "load_profiles" => {
                let rel = format!("{REPORT_DIR}/load_profiles.csv");
                outputs.push(ctx.write(&rel, &load_profiles_csv(ctx)?)?);
                (read_json(&ctx.path(SCALE_REPORT))?, Some(rel))
            }
            "sizing" => (read_json(&ctx.path(SIZING))?, None),
            "cost_curve" => {
                let rel = format!("{REPORT_DIR}/cost_curve.csv");
                outputs.push(ctx.write(&rel, &cost_curve_csv(ctx)?)?);
                let mut v = read_json(&ctx.path(OPTIMUM))?;
                if let Some(obj) = v.as_object_mut() {
                    obj.remove("design");
                }
                (v, Some(rel))
            }
            _ => {
                let path = ctx.path(&format!("{SIMULATION_DIR}/summary.json"));
                let summary: SimulationSummary = serde_json::from_value(read_json(&path)?)
                    .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
                let rel = format!("{REPORT_DIR}/temperatures.csv");
                outputs.push(ctx.write(&rel, &temperatures_csv(ctx, &summary)?)?);
                let v = json!({
                    "sized_boreholes": summary.sized_boreholes,
                    "comfort_band_c": summary.comfort_band_c,
                    "cases": summary.cases,
                });
                (v, Some(rel))
            }
        };
        sections.insert(
            section.into(),
            json!({ "status": "present", "stage": stage, "csv": csv, "data": data }),
        );
    }
    let missing: Vec<&str> = SECTIONS
        .iter()
        .filter(|(_, s)| absent.contains(s))
        .map(|(n, _)| *n)
        .collect();
    let report = json!({
        "manifest": crate::manifest::MANIFEST_FILE,
        "config_digest": ctx.digest,
        "artifact_version": manifest.artifact_version,
        "overrides": manifest.overrides,
        "stages": STAGES.iter().filter(|s| **s != "report").map(|s| (s.to_string(), json!(stage_ok(s)))).collect::<serde_json::Map<_, _>>(),
        "missing_sections": missing,
        "sections": sections,
    });
    outputs.push(ctx.write_json(&format!("{REPORT_DIR}/report.json"), &report)?);
    ctx.record("report", StageStatus::Ok, started, outputs, None)?;
    Ok(json!({
        "stage": "report",
        "status": "ok",
        "summary": { "missing_sections": missing, "report": format!("{REPORT_DIR}/report.json") },
    }))
}
