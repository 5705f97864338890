//! Thermostat, heat pump enable and source dispatch rules, plus the air node.

use serde::{Deserialize, Serialize};

use super::heat_pump::ReversibleHeatPump;
use super::PlantError;
use crate::profile::LoadProfile;
use crate::units::{CP_AIR, CP_WATER, RHO_AIR};

/// Set points, degC, and the design loop temperature difference, K.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    pub cool_on: f64,
    pub cool_off: f64,
    pub heat_on: f64,
    pub heat_off: f64,
    pub supply_heating: f64,
    pub supply_cooling: f64,
    pub loop_high: f64,
    pub loop_low: f64,
    pub nominal_loop_dt: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            cool_on: 26.0,
            cool_off: 21.0,
            heat_on: 19.0,
            heat_off: 24.0,
            supply_heating: 50.0,
            supply_cooling: 10.0,
            loop_high: 30.0,
            loop_low: 5.0,
            nominal_loop_dt: 5.0,
        }
    }
}

impl ControlConfig {
    pub fn validate(&self) -> Result<(), PlantError> {
        let ordered = self.heat_on < self.cool_off && self.cool_off <= self.heat_off && self.heat_off < self.cool_on;
        if !ordered {
            return Err(PlantError::Config(format!(
                "set points must satisfy heat_on < cool_off <= heat_off < cool_on, got {} / {} / {} / {}",
                self.heat_on, self.cool_off, self.heat_off, self.cool_on
            )));
        }
        if !(self.loop_low < self.loop_high) {
            return Err(PlantError::Config(format!(
                "loop band [{}, {}] is empty",
                self.loop_low, self.loop_high
            )));
        }
        if !(self.supply_heating > self.heat_off) || !(self.supply_cooling < self.cool_off) {
            return Err(PlantError::Config(
                "supply water must be warmer than heat_off in heating and colder than cool_off in cooling".into(),
            ));
        }
        if !(self.nominal_loop_dt > 0.0) {
            return Err(PlantError::Config(format!(
                "nominal loop temperature difference must be positive, got {}",
                self.nominal_loop_dt
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThermostatMode {
    Sleep,
    Heating,
    Cooling,
}

/// Hysteresis thermostat. Returns the next mode and whether the pumps run.
pub fn thermostat_step(t_indoor: f64, mode: ThermostatMode, config: &ControlConfig) -> (ThermostatMode, bool) {
    let next = match mode {
        ThermostatMode::Sleep if t_indoor > config.cool_on => ThermostatMode::Cooling,
        ThermostatMode::Sleep if t_indoor < config.heat_on => ThermostatMode::Heating,
        ThermostatMode::Cooling if t_indoor <= config.cool_off => ThermostatMode::Sleep,
        ThermostatMode::Heating if t_indoor >= config.heat_off => ThermostatMode::Sleep,
        m => m,
    };
    (next, next != ThermostatMode::Sleep)
}

/// The unit runs only in an active mode with enough source flow.
pub fn hp_enable(mode: ThermostatMode, loop_flow: f64, model: &ReversibleHeatPump) -> bool {
    let map = match mode {
        ThermostatMode::Sleep => return false,
        ThermostatMode::Heating => &model.heating,
        ThermostatMode::Cooling => &model.cooling,
    };
    loop_flow > 0.0 && loop_flow >= model.min_flow_fraction * map.references.mdot_ref_source
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    GshpOnly,
    AshpOnly,
    GshpAshp,
    GshpHeater,
}

impl SourceKind {
    pub fn uses_ground(self) -> bool {
        self != SourceKind::AshpOnly
    }

    pub fn label(self) -> &'static str {
        match self {
            SourceKind::GshpOnly => "GSHP-only",
            SourceKind::AshpOnly => "ASHP-only",
            SourceKind::GshpAshp => "GSHP+ASHP",
            SourceKind::GshpHeater => "GSHP+heater",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveSources {
    pub gshp: bool,
    pub ashp: bool,
    pub heater: bool,
}

/// Which sources serve the current step. `Err` carries the reason when the
/// heater is asked to cool.
pub fn source_dispatch(
    kind: SourceKind,
    t_loop: f64,
    mode: ThermostatMode,
    config: &ControlConfig,
) -> Result<ActiveSources, String> {
    let outside = t_loop < config.loop_low || t_loop > config.loop_high;
    let mut s = ActiveSources::default();
    match kind {
        SourceKind::GshpOnly => s.gshp = true,
        SourceKind::AshpOnly => s.ashp = true,
        SourceKind::GshpAshp => {
            s.gshp = true;
            s.ashp = outside;
        }
        SourceKind::GshpHeater => {
            s.gshp = true;
            if outside {
                if mode == ThermostatMode::Cooling {
                    return Err(format!(
                        "loop temperature {t_loop:.2} degC needs auxiliary cooling but the heater can only heat"
                    ));
                }
                s.heater = mode == ThermostatMode::Heating;
            }
        }
    }
    Ok(s)
}

/// Loop flow giving the nominal temperature difference at a mean load, kg/s.
pub fn nominal_flow_for_mean(mean_kw: f64, config: &ControlConfig) -> Result<f64, PlantError> {
    if !(mean_kw > 0.0) || !mean_kw.is_finite() {
        return Err(PlantError::Config(format!(
            "nominal flow needs a positive mean load, got {mean_kw} kW"
        )));
    }
    Ok(mean_kw * 1e3 / (CP_WATER * config.nominal_loop_dt))
}

pub fn nominal_flow(profile: &LoadProfile, config: &ControlConfig) -> Result<f64, PlantError> {
    nominal_flow_for_mean(profile.mean(), config)
}

/// Single well-mixed air volume coupled to a radiator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildingNode {
    /// m2.
    pub floor_area: f64,
    /// m.
    pub floor_height: f64,
    /// Radiator conductance, W/K.
    pub ua: f64,
    /// degC.
    pub temperature: f64,
}

impl BuildingNode {
    pub fn new(floor_area: f64, floor_height: f64, ua: f64, temperature: f64) -> Result<Self, PlantError> {
        let node = Self {
            floor_area,
            floor_height,
            ua,
            temperature,
        };
        if !(node.capacitance() > 0.0) || !(ua > 0.0) || !ua.is_finite() || !temperature.is_finite() {
            return Err(PlantError::Config(format!(
                "building node needs positive area, height and UA (area {floor_area}, height {floor_height}, UA {ua})"
            )));
        }
        Ok(node)
    }

    /// J/K.
    pub fn capacitance(&self) -> f64 {
        RHO_AIR * CP_AIR * self.floor_area * self.floor_height
    }

    /// Radiator output toward the room, W, positive when heating. Zero when
    /// the supply water is on the wrong side of the room temperature.
    pub fn radiator_delivery(&self, mode: ThermostatMode, config: &ControlConfig, capacity: f64) -> f64 {
        match mode {
            ThermostatMode::Sleep => 0.0,
            ThermostatMode::Heating => (self.ua * (config.supply_heating - self.temperature)).clamp(0.0, capacity),
            ThermostatMode::Cooling => -(self.ua * (self.temperature - config.supply_cooling)).clamp(0.0, capacity),
        }
    }

    /// Longest explicit step that keeps the radiator term stable, s.
    pub fn stable_step(&self) -> f64 {
        self.capacitance() / self.ua
    }
}

/// Explicit Euler update of the indoor temperature. `net_load` is the heat
/// the building needs (heating positive), `hvac_delivery` what the radiator
/// supplies, both W.
pub fn building_step(node: &BuildingNode, net_load: f64, hvac_delivery: f64, dt: f64) -> f64 {
    node.temperature + dt * (hvac_delivery - net_load) / node.capacitance()
}

/// Radiator conductance that meets both peaks anywhere in the dead band, W/K.
pub fn design_ua(peak_heating_w: f64, peak_cooling_w: f64, config: &ControlConfig) -> f64 {
    let heat = peak_heating_w / (config.supply_heating - config.heat_off);
    let cool = peak_cooling_w / (config.cool_off - config.supply_cooling);
    heat.max(cool)
}
