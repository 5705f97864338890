//! Fixed-step simulation of the building, radiator, heat pumps and heat
//! source over one year.

mod control;
mod heat_pump;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use control::{
    building_step, design_ua, hp_enable, nominal_flow, nominal_flow_for_mean, source_dispatch, thermostat_step,
    ActiveSources, BuildingNode, ControlConfig, SourceKind, ThermostatMode,
};
pub use heat_pump::{
    fit_performance_map, read_performance_csv, write_performance_csv, FittedMap, HeatPumpMap, MapReferences,
    PerformanceRow, ReversibleHeatPump, SyntheticMap, MIN_POWER,
};

use crate::ground::{
    delta_network, BorefieldLayout, BoreholeInternalModel, GFunctionTable, GroundError, GroundProperties,
    LoadAggregator, PipeGeometry,
};
use crate::profile::{fmt_num, LoadProfile, Mode, HOURS_PER_YEAR};
use crate::units::{celsius_to_kelvin, CP_WATER, SECONDS_PER_HOUR};

#[derive(Debug, Error)]
pub enum PlantError {
    #[error("invalid plant configuration: {0}")]
    Config(String),
    #[error("performance map fit failed: {0}")]
    Fit(String),
    #[error("bad input: {0}")]
    Input(String),
    #[error(transparent)]
    Ground(#[from] GroundError),
}

/// Numerical and equipment settings shared by every case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantConfig {
    /// m2.
    pub floor_area: f64,
    /// m.
    pub floor_height: f64,
    /// degC.
    pub initial_temperature: f64,
    /// Plant step, s. Must divide an hour.
    pub dt: f64,
    /// Upper bound on the air-node sub-step, s.
    pub air_substep: f64,
    /// kW per kg/s, charged separately on the source and load loops.
    pub pump_power_per_flow: f64,
    /// Fraction of the delivered heat taken by an engaged auxiliary source.
    pub auxiliary_share: f64,
    /// GSHP-only runs fail when the loop leaves this band, degC.
    pub failure_low: f64,
    pub failure_high: f64,
    /// Hours excluded from comfort statistics.
    pub warmup_hours: usize,
    /// Each heat pump carries this multiple of the peak load at its worst
    /// source temperature.
    pub oversize: f64,
    pub min_flow_fraction: f64,
    pub aggregation_cells: usize,
    pub pipe: PipeGeometry,
    /// Overrides the multipole borehole resistance, m K/W.
    pub fixed_borehole_resistance: Option<f64>,
    pub controls: ControlConfig,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            floor_area: 50_000.0,
            floor_height: 3.0,
            initial_temperature: 22.5,
            dt: 300.0,
            air_substep: 5.0,
            pump_power_per_flow: 0.03,
            auxiliary_share: 0.5,
            failure_low: 2.0,
            failure_high: 35.0,
            warmup_hours: 24,
            oversize: 1.25,
            min_flow_fraction: 0.2,
            aggregation_cells: 16,
            pipe: PipeGeometry::default(),
            fixed_borehole_resistance: None,
            controls: ControlConfig::default(),
        }
    }
}

impl PlantConfig {
    pub fn validate(&self) -> Result<(), PlantError> {
        self.controls.validate()?;
        let per_hour = SECONDS_PER_HOUR / self.dt;
        if !(self.dt > 0.0) || (per_hour - per_hour.round()).abs() > 1e-9 {
            return Err(PlantError::Config(format!(
                "time step {} s must divide 3600 s",
                self.dt
            )));
        }
        let positive = [
            ("floor_area", self.floor_area),
            ("floor_height", self.floor_height),
            ("air_substep", self.air_substep),
            ("oversize", self.oversize),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(PlantError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.pump_power_per_flow >= 0.0) {
            return Err(PlantError::Config("pump power must be nonnegative".into()));
        }
        if !(self.auxiliary_share > 0.0 && self.auxiliary_share < 1.0) {
            return Err(PlantError::Config(format!(
                "auxiliary share {} must lie in (0, 1)",
                self.auxiliary_share
            )));
        }
        if !(0.0..=1.0).contains(&self.min_flow_fraction) {
            return Err(PlantError::Config("minimum flow fraction must lie in [0, 1]".into()));
        }
        let c = &self.controls;
        if !(self.failure_low < c.loop_low && c.loop_high < self.failure_high) {
            return Err(PlantError::Config(format!(
                "failure envelope [{}, {}] must contain the dispatch band [{}, {}]",
                self.failure_low, self.failure_high, c.loop_low, c.loop_high
            )));
        }
        if self.aggregation_cells < 2 {
            return Err(PlantError::Config(
                "aggregation needs at least 2 cells per level".into(),
            ));
        }
        Ok(())
    }

    fn steps_per_hour(&self) -> usize {
        (SECONDS_PER_HOUR / self.dt).round() as usize
    }
}

/// Source arrangement of one case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub kind: SourceKind,
    /// Engage the auxiliary source whenever it can serve the active mode,
    /// regardless of the loop temperature.
    #[serde(default)]
    pub force_auxiliary: bool,
}

/// Borefield handed to a simulation. The g-function table must have been
/// computed for this layout and ground.
#[derive(Debug, Clone, Copy)]
pub struct GroundLoop<'a> {
    pub layout: &'a BorefieldLayout,
    pub gfunction: &'a GFunctionTable,
    pub ground: &'a GroundProperties,
}

/// Equipment derived from the loads and the weather.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantEquipment {
    pub ground_source: ReversibleHeatPump,
    pub air_source: ReversibleHeatPump,
    /// W.
    pub heater_capacity: f64,
    /// W/K.
    pub radiator_ua: f64,
    /// kg/s, same on the load and source loops.
    pub nominal_flow: f64,
}

/// Hourly net load, kW, heating positive.
fn net_hourly(heating: &LoadProfile, cooling: &LoadProfile) -> Vec<f64> {
    heating
        .values()
        .iter()
        .zip(cooling.values())
        .map(|(h, c)| h - c)
        .collect()
}

fn scaled_map(shape: SyntheticMap, peak: f64, worst_source_c: f64, load_c: f64, oversize: f64) -> HeatPumpMap {
    let unit = SyntheticMap { q_ref: 1.0, ..shape }.map();
    let r = unit.references;
    let ratio = unit
        .capacity(
            celsius_to_kelvin(load_c),
            celsius_to_kelvin(worst_source_c),
            r.mdot_ref_load,
            r.mdot_ref_source,
        )
        .max(0.05);
    SyntheticMap {
        q_ref: (oversize * peak / ratio).max(1.0),
        ..shape
    }
    .map()
}

impl PlantEquipment {
    /// Radiator and units sized on the profile peaks. The loop flow gives the
    /// nominal temperature difference at the mean ground-side load, taking
    /// the hourly net load through the reference COPs.
    pub fn design(
        heating: &LoadProfile,
        cooling: &LoadProfile,
        weather: Option<&[f64]>,
        config: &PlantConfig,
    ) -> Result<Self, PlantError> {
        config.validate()?;
        check_modes(heating, cooling)?;
        let c = &config.controls;
        let peak_h = heating.peak() * 1e3;
        let peak_c = cooling.peak() * 1e3;
        let cop_h = SyntheticMap::ground_heating(1.0, 1.0, 1.0).cop_ref;
        let cop_c = SyntheticMap::ground_cooling(1.0, 1.0, 1.0).cop_ref;
        // Ground-side heat of each hour at the reference COPs.
        let loop_mean = net_hourly(heating, cooling)
            .iter()
            .map(|&n| {
                if n > 0.0 {
                    n * (1.0 - 1.0 / cop_h)
                } else {
                    -n * (1.0 + 1.0 / cop_c)
                }
            })
            .sum::<f64>()
            / HOURS_PER_YEAR as f64;
        let flow = if loop_mean > 0.0 {
            nominal_flow_for_mean(loop_mean, c)?
        } else {
            1.0
        };
        let ua = design_ua(peak_h, peak_c, c).max(1.0);
        let (t_min, t_max) = match weather {
            Some(w) => (
                w.iter().copied().fold(f64::INFINITY, f64::min),
                w.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ),
            None => (-10.0, 35.0),
        };
        let o = config.oversize;
        let hp = |heating: HeatPumpMap, cooling: HeatPumpMap| ReversibleHeatPump {
            heating,
            cooling,
            min_flow_fraction: config.min_flow_fraction,
        };
        Ok(Self {
            ground_source: hp(
                scaled_map(
                    SyntheticMap::ground_heating(1.0, flow, flow),
                    peak_h,
                    config.failure_low,
                    c.supply_heating,
                    o,
                ),
                scaled_map(
                    SyntheticMap::ground_cooling(1.0, flow, flow),
                    peak_c,
                    config.failure_high,
                    c.supply_cooling,
                    o,
                ),
            ),
            air_source: hp(
                scaled_map(
                    SyntheticMap::air_heating(1.0, flow, flow),
                    peak_h,
                    t_min,
                    c.supply_heating,
                    o,
                ),
                scaled_map(
                    SyntheticMap::air_cooling(1.0, flow, flow),
                    peak_c,
                    t_max,
                    c.supply_cooling,
                    o,
                ),
            ),
            heater_capacity: o * peak_h,
            radiator_ua: ua,
            nominal_flow: flow,
        })
    }
}

fn check_modes(heating: &LoadProfile, cooling: &LoadProfile) -> Result<(), PlantError> {
    if heating.mode() != Mode::Heating || cooling.mode() != Mode::Cooling {
        return Err(PlantError::Config("expected a heating and a cooling profile".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum SimulationStatus {
    Completed,
    Failed { reason: String, hour: f64 },
}

impl SimulationStatus {
    pub fn is_failed(&self) -> bool {
        matches!(self, SimulationStatus::Failed { .. })
    }
}

/// Annual electricity by consumer, kWh.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ElectricityBreakdown {
    pub gshp: f64,
    pub ashp: f64,
    pub heater: f64,
    pub pumps: f64,
}

impl ElectricityBreakdown {
    pub fn total(&self) -> f64 {
        self.gshp + self.ashp + self.heater + self.pumps
    }
}

/// Hourly aggregates. Energies in kWh, temperatures in degC.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct HourRecord {
    pub indoor: f64,
    /// Borefield outlet, NaN without a ground loop or flow.
    pub loop_supply: f64,
    /// Borefield inlet, NaN without a ground loop or flow.
    pub loop_return: f64,
    /// Time-averaged |return - supply|, zero while the pumps rest.
    pub loop_dt: f64,
    pub pump_on_fraction: f64,
    pub heating_delivered: f64,
    pub cooling_delivered: f64,
    pub electricity: ElectricityBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub kind: SourceKind,
    pub borehole_count: Option<usize>,
    pub status: SimulationStatus,
    pub total_electricity: f64,
    pub breakdown: ElectricityBreakdown,
    pub heating_delivered: f64,
    pub cooling_delivered: f64,
    pub dt: f64,
    pub warmup_steps: usize,
    /// Indoor temperature at the end of every step.
    pub indoor: Vec<f64>,
    pub loop_supply: Vec<f64>,
    pub loop_return: Vec<f64>,
    pub hourly: Vec<HourRecord>,
}

impl SimulationResult {
    /// Share of post-warmup steps with the indoor temperature in `[low, high]`.
    pub fn comfort_fraction(&self, low: f64, high: f64) -> f64 {
        let tail = self.indoor.get(self.warmup_steps..).unwrap_or(&[]);
        if tail.is_empty() {
            return f64::NAN;
        }
        tail.iter().filter(|t| (low..=high).contains(*t)).count() as f64 / tail.len() as f64
    }

    /// Mean hourly loop temperature difference over hours with pump
    /// operation, K. `None` without a ground loop.
    pub fn active_loop_dt(&self) -> Option<f64> {
        let active: Vec<f64> = self
            .hourly
            .iter()
            .filter(|h| h.pump_on_fraction > 0.0 && h.loop_dt.is_finite())
            .map(|h| h.loop_dt)
            .collect();
        if active.is_empty() || !self.kind.uses_ground() {
            return None;
        }
        Some(active.iter().sum::<f64>() / active.len() as f64)
    }

    pub fn write_hourly_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "hour,indoor_c,loop_supply_c,loop_return_c,loop_dt_k,pump_on_fraction,heating_kwh,cooling_kwh,gshp_kwh,ashp_kwh,heater_kwh,pump_kwh"
        )?;
        let opt = |v: f64| if v.is_finite() { fmt_num(v) } else { String::new() };
        for (i, h) in self.hourly.iter().enumerate() {
            let e = &h.electricity;
            writeln!(
                w,
                "{i},{},{},{},{},{},{},{},{},{},{},{}",
                opt(h.indoor),
                opt(h.loop_supply),
                opt(h.loop_return),
                opt(h.loop_dt),
                fmt_num(h.pump_on_fraction),
                fmt_num(h.heating_delivered),
                fmt_num(h.cooling_delivered),
                fmt_num(e.gshp),
                fmt_num(e.ashp),
                fmt_num(e.heater),
                fmt_num(e.pumps)
            )?;
        }
        w.flush()
    }
}

/// Reads `hour,outdoor_drybulb_c` with exactly one row per hour of the year.
pub fn read_weather_csv<R: Read>(reader: R) -> Result<Vec<f64>, PlantError> {
    let cols = crate::profile::read_hourly_columns(reader, &["outdoor_drybulb_c"])
        .map_err(|e| PlantError::Input(format!("weather: {e}")))?;
    cols.into_iter()
        .next()
        .ok_or_else(|| PlantError::Input("weather: missing outdoor_drybulb_c".into()))
}

pub fn write_weather_csv<W: Write>(mut w: W, weather: &[f64]) -> std::io::Result<()> {
    writeln!(w, "hour,outdoor_drybulb_c")?;
    for (h, t) in weather.iter().enumerate() {
        writeln!(w, "{h},{}", fmt_num(*t))?;
    }
    w.flush()
}

/// Cyclic linear interpolation between hourly values placed at mid-hour.
fn interpolate(hourly: &[f64], t: f64) -> f64 {
    let n = hourly.len();
    let x = t / SECONDS_PER_HOUR - 0.5;
    let i = x.floor();
    let w = x - i;
    let a = (i as i64).rem_euclid(n as i64) as usize;
    let b = (a + 1) % n;
    hourly[a] * (1.0 - w) + hourly[b] * w
}

struct GroundState<'a> {
    lp: GroundLoop<'a>,
    count: usize,
    borehole: BoreholeInternalModel,
    aggregator: LoadAggregator,
    supply: f64,
}

impl<'a> GroundState<'a> {
    fn new(lp: GroundLoop<'a>, config: &PlantConfig) -> Result<Self, PlantError> {
        let fp = lp.layout.fingerprint(lp.ground);
        if lp.gfunction.fingerprint() != fp {
            return Err(PlantError::Config(format!(
                "g-function table {} was not computed for this borefield ({fp})",
                lp.gfunction.fingerprint()
            )));
        }
        let net = delta_network(lp.ground, &config.pipe, config.fixed_borehole_resistance)?;
        let t0 = lp.ground.undisturbed_temperature;
        Ok(Self {
            count: lp.layout.len(),
            borehole: BoreholeInternalModel::new(1, lp.layout.depth, net, &config.pipe, t0)?,
            aggregator: LoadAggregator::new(config.dt, config.aggregation_cells)?,
            supply: t0,
            lp,
        })
    }

    /// Advances the field with `heat` J rejected into the loop over the step
    /// (negative when extracting) at `flow` kg/s averaged over the step.
    /// Returns the borefield inlet temperature.
    fn advance(&mut self, heat: f64, flow: f64, dt: f64) -> Result<f64, PlantError> {
        let inlet = if flow > 0.0 {
            self.supply + heat / dt / (flow * CP_WATER)
        } else {
            self.supply
        };
        let wall = self.aggregator.wall_temperature(self.lp.gfunction, self.lp.ground);
        let step = self.borehole.step(&[wall], inlet, flow / self.count as f64, dt)?;
        self.aggregator.push(step.flux, dt)?;
        self.supply = step.outlet;
        Ok(inlet)
    }
}

/// Capacity and full-load power of one map at the current conditions, W.
fn rating(map: &HeatPumpMap, load_c: f64, source_c: f64) -> (f64, f64) {
    let r = &map.references;
    let tl = celsius_to_kelvin(load_c);
    let ts = celsius_to_kelvin(source_c);
    (
        map.capacity(tl, ts, r.mdot_ref_load, r.mdot_ref_source),
        map.power(tl, ts, r.mdot_ref_load, r.mdot_ref_source),
    )
}

/// How one mode is served during a step.
#[derive(Debug, Clone, Copy, Default)]
struct ModePlan {
    capacity: f64,
    /// Share of delivery and the electricity per joule delivered, per source.
    gshp: (f64, f64),
    ashp: (f64, f64),
    heater: (f64, f64),
}

impl ModePlan {
    fn new(
        sources: ActiveSources,
        share: f64,
        ground: Option<(f64, f64)>,
        air: (f64, f64),
        heater_capacity: f64,
    ) -> Self {
        let per_joule = |(q, p): (f64, f64)| if q > 0.0 { p / q } else { 0.0 };
        let aux = sources.ashp || sources.heater;
        let main_share = if sources.gshp && aux { 1.0 - share } else { 1.0 };
        let aux_share = if sources.gshp { share } else { 1.0 };
        let mut plan = ModePlan::default();
        let mut caps = Vec::new();
        if sources.gshp {
            let g = ground.unwrap_or((0.0, 0.0));
            plan.gshp = (main_share, per_joule(g));
            caps.push(g.0 / main_share);
        }
        if sources.ashp {
            plan.ashp = (aux_share, per_joule(air));
            caps.push(air.0 / aux_share);
        }
        if sources.heater {
            plan.heater = (aux_share, 1.0);
            caps.push(heater_capacity / aux_share);
        }
        plan.capacity = caps.into_iter().fold(f64::INFINITY, f64::min);
        if !plan.capacity.is_finite() {
            plan.capacity = 0.0;
        }
        plan
    }
}

/// One year of operation. Loads in kW, weather in degC per hour.
pub fn simulate(
    heating: &LoadProfile,
    cooling: &LoadProfile,
    weather: Option<&[f64]>,
    source: SourceConfig,
    ground: Option<GroundLoop<'_>>,
    equipment: &PlantEquipment,
    config: &PlantConfig,
) -> Result<SimulationResult, PlantError> {
    config.validate()?;
    check_modes(heating, cooling)?;
    equipment.ground_source.validate()?;
    equipment.air_source.validate()?;
    let c = &config.controls;
    let kind = source.kind;
    let needs_weather = matches!(kind, SourceKind::AshpOnly | SourceKind::GshpAshp);
    let weather = match weather {
        Some(w) if w.len() == HOURS_PER_YEAR && w.iter().all(|v| v.is_finite()) => Some(w),
        Some(w) => {
            return Err(PlantError::Input(format!(
                "weather needs {HOURS_PER_YEAR} finite hourly values, got {}",
                w.len()
            )))
        }
        None if needs_weather => return Err(PlantError::Config(format!("{} needs a weather series", kind.label()))),
        None => None,
    };
    let mut field = match (kind.uses_ground(), ground) {
        (true, Some(lp)) => Some(GroundState::new(lp, config)?),
        (true, None) => return Err(PlantError::Config(format!("{} needs a borefield", kind.label()))),
        (false, _) => None,
    };

    let mut node = BuildingNode::new(
        config.floor_area,
        config.floor_height,
        equipment.radiator_ua,
        config.initial_temperature,
    )?;
    let dt = config.dt;
    let substeps = (dt / config.air_substep.min(0.5 * node.stable_step())).ceil().max(1.0) as usize;
    let h = dt / substeps as f64;
    let net = net_hourly(heating, cooling);
    let flow = equipment.nominal_flow;
    let per_hour = config.steps_per_hour();
    let steps = HOURS_PER_YEAR * per_hour;
    // J per second of pumping, W.
    let pump_rate = config.pump_power_per_flow * 1e3 * flow * if kind.uses_ground() { 2.0 } else { 1.0 };

    let mut mode = ThermostatMode::Sleep;
    let mut status = SimulationStatus::Completed;
    let mut indoor = Vec::with_capacity(steps);
    let mut loop_supply = Vec::with_capacity(steps);
    let mut loop_return = Vec::with_capacity(steps);
    let mut hourly = Vec::with_capacity(HOURS_PER_YEAR);
    let mut hour = HourRecord::default();
    let mut hour_dt_weight = 0.0;
    let mut total = ElectricityBreakdown::default();
    let (mut heat_total, mut cool_total) = (0.0, 0.0);

    'steps: for k in 0..steps {
        let t0 = k as f64 * dt;
        let hour_index = k / per_hour;
        let load = interpolate(&net, t0 + 0.5 * dt) * 1e3;
        let t_loop = field.as_ref().map(|f| f.supply);
        let outdoor = weather.map(|w| interpolate(w, t0 + 0.5 * dt));

        let dispatch = |m: ThermostatMode| -> Result<ActiveSources, String> {
            let mut s = source_dispatch(kind, t_loop.unwrap_or(c.loop_low), m, c)?;
            if source.force_auxiliary {
                match kind {
                    SourceKind::GshpAshp => s.ashp = true,
                    SourceKind::GshpHeater => s.heater = m == ThermostatMode::Heating,
                    _ => {}
                }
            }
            Ok(s)
        };
        let plan = |m: ThermostatMode, sources: ActiveSources| {
            let (map_g, map_a, supply) = match m {
                ThermostatMode::Cooling => (
                    &equipment.ground_source.cooling,
                    &equipment.air_source.cooling,
                    c.supply_cooling,
                ),
                _ => (
                    &equipment.ground_source.heating,
                    &equipment.air_source.heating,
                    c.supply_heating,
                ),
            };
            let g = t_loop.map(|tl| rating(map_g, supply, tl));
            let a = outdoor.map(|to| rating(map_a, supply, to)).unwrap_or((0.0, 0.0));
            ModePlan::new(sources, config.auxiliary_share, g, a, equipment.heater_capacity)
        };
        let heat_plan = plan(
            ThermostatMode::Heating,
            dispatch(ThermostatMode::Heating).unwrap_or_default(),
        );
        let cool_dispatch = dispatch(ThermostatMode::Cooling);
        let cool_plan = plan(ThermostatMode::Cooling, cool_dispatch.clone().unwrap_or_default());

        let (mut e_heat, mut e_cool, mut t_on) = (0.0, 0.0, 0.0);
        let mut cooled_while_blocked = false;
        for _ in 0..substeps {
            let (next, pumps_on) = thermostat_step(node.temperature, mode, c);
            mode = next;
            let mut q = 0.0;
            if pumps_on {
                t_on += h;
                if hp_enable(mode, flow, &equipment.ground_source) {
                    let cap = if mode == ThermostatMode::Heating {
                        heat_plan.capacity
                    } else {
                        cool_plan.capacity
                    };
                    q = node.radiator_delivery(mode, c, cap);
                }
                if mode == ThermostatMode::Cooling && cool_dispatch.is_err() {
                    cooled_while_blocked = true;
                }
            }
            if q > 0.0 {
                e_heat += q * h;
            } else {
                e_cool -= q * h;
            }
            node.temperature = building_step(&node, load, q, h);
        }

        let mut e = ElectricityBreakdown {
            gshp: e_heat * heat_plan.gshp.0 * heat_plan.gshp.1 + e_cool * cool_plan.gshp.0 * cool_plan.gshp.1,
            ashp: e_heat * heat_plan.ashp.0 * heat_plan.ashp.1 + e_cool * cool_plan.ashp.0 * cool_plan.ashp.1,
            heater: e_heat * heat_plan.heater.0 * heat_plan.heater.1,
            pumps: pump_rate * t_on,
        };
        // Ground-side heat: cooling rejects delivery plus compressor work,
        // heating extracts delivery minus compressor work.
        let ground_heat =
            e_cool * cool_plan.gshp.0 * (1.0 + cool_plan.gshp.1) - e_heat * heat_plan.gshp.0 * (1.0 - heat_plan.gshp.1);

        let (mut supply, mut ret, mut loop_dt) = (f64::NAN, f64::NAN, 0.0);
        if let Some(f) = field.as_mut() {
            let avg_flow = flow * t_on / dt;
            let before = f.supply;
            let inlet = f.advance(ground_heat, avg_flow, dt)?;
            if avg_flow > 0.0 {
                supply = before;
                ret = inlet;
                loop_dt = (inlet - before).abs() * t_on / dt;
            }
        }

        for v in [&mut e.gshp, &mut e.ashp, &mut e.heater, &mut e.pumps] {
            *v /= 3.6e6;
        }
        total.gshp += e.gshp;
        total.ashp += e.ashp;
        total.heater += e.heater;
        total.pumps += e.pumps;
        heat_total += e_heat / 3.6e6;
        cool_total += e_cool / 3.6e6;

        indoor.push(node.temperature);
        loop_supply.push(supply);
        loop_return.push(ret);
        hour.indoor += node.temperature / per_hour as f64;
        if supply.is_finite() {
            let w = t_on / dt;
            hour.loop_supply = if hour_dt_weight > 0.0 { hour.loop_supply } else { 0.0 } + w * supply;
            hour.loop_return = if hour_dt_weight > 0.0 { hour.loop_return } else { 0.0 } + w * ret;
            hour_dt_weight += w;
        }
        hour.loop_dt += loop_dt / per_hour as f64;
        hour.pump_on_fraction += t_on / SECONDS_PER_HOUR;
        hour.heating_delivered += e_heat / 3.6e6;
        hour.cooling_delivered += e_cool / 3.6e6;
        hour.electricity.gshp += e.gshp;
        hour.electricity.ashp += e.ashp;
        hour.electricity.heater += e.heater;
        hour.electricity.pumps += e.pumps;

        let failure = if cooled_while_blocked {
            cool_dispatch.err()
        } else {
            match (kind, field.as_ref()) {
                (SourceKind::GshpOnly, Some(f)) if !(config.failure_low..=config.failure_high).contains(&f.supply) => {
                    Some(format!(
                        "loop temperature {:.2} degC left the operating range [{}, {}] degC",
                        f.supply, config.failure_low, config.failure_high
                    ))
                }
                _ => None,
            }
        };
        let hour_done = (k + 1) % per_hour == 0;
        if hour_done || failure.is_some() {
            if hour_dt_weight > 0.0 {
                hour.loop_supply /= hour_dt_weight;
                hour.loop_return /= hour_dt_weight;
            } else {
                hour.loop_supply = f64::NAN;
                hour.loop_return = f64::NAN;
            }
            if !kind.uses_ground() {
                hour.loop_dt = f64::NAN;
            }
            hourly.push(hour);
            hour = HourRecord::default();
            hour_dt_weight = 0.0;
        }
        if let Some(reason) = failure {
            status = SimulationStatus::Failed {
                reason,
                hour: (t0 + dt) / SECONDS_PER_HOUR,
            };
            break 'steps;
        }
        debug_assert_eq!(hour_index, k / per_hour);
    }

    Ok(SimulationResult {
        kind,
        borehole_count: field.as_ref().map(|f| f.count),
        status,
        total_electricity: total.total(),
        breakdown: total,
        heating_delivered: heat_total,
        cooling_delivered: cool_total,
        dt,
        warmup_steps: config.warmup_hours * per_hour,
        indoor,
        loop_supply,
        loop_return,
        hourly,
    })
}
