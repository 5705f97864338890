//! Transient ground model: line-source kernels, borefield g-functions,
//! temporal superposition with load aggregation, and the borehole's internal
//! resistance-capacitance network.

mod aggregation;
mod borehole;
mod expint;
mod gfunction;
mod line_source;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use aggregation::{direct_wall_temperatures, LoadAggregator};
pub use borehole::{
    borehole_resistance, delta_network, BoreholeInternalModel, BoreholeResistance, DeltaNetwork, InternalStep,
    PipeGeometry,
};
pub use expint::exp_integral_e1;
pub use gfunction::{borefield_gfunction, log_times, BorefieldLayout, GFunctionTable};
pub use line_source::{fls_gfunction, fls_response, ierf, ils_response, BoreholeGeometry};

#[derive(Debug, Error, PartialEq)]
pub enum GroundError {
    #[error("argument outside the function domain: {0}")]
    Domain(String),
    #[error("invalid ground properties: {0}")]
    Properties(String),
    #[error("invalid borefield layout: {0}")]
    Layout(String),
    #[error("borehole geometry is impossible: {0}")]
    Geometry(String),
    #[error("time step {got} s does not match the aggregation step {expected} s")]
    TimeStep { expected: f64, got: f64 },
    #[error("g-function cache: {0}")]
    Cache(String),
}

/// Homogeneous ground and borehole fill properties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroundProperties {
    /// Undisturbed ground temperature, degC.
    pub undisturbed_temperature: f64,
    /// W/(m K).
    pub conductivity: f64,
    /// m2/day.
    pub diffusivity: f64,
    /// W/(m K).
    pub grout_conductivity: f64,
    /// m.
    pub borehole_diameter: f64,
    /// m. Recorded for provenance; the homogeneous model does not use it.
    pub water_table_depth: f64,
}

impl Default for GroundProperties {
    fn default() -> Self {
        Self {
            undisturbed_temperature: 18.0,
            conductivity: 2.42,
            diffusivity: 0.08,
            grout_conductivity: 1.4,
            borehole_diameter: 0.127,
            water_table_depth: 5.0,
        }
    }
}

impl GroundProperties {
    pub fn validate(&self) -> Result<(), GroundError> {
        let checks = [
            (self.conductivity, "conductivity"),
            (self.diffusivity, "diffusivity"),
            (self.grout_conductivity, "grout_conductivity"),
            (self.borehole_diameter, "borehole_diameter"),
        ];
        for (v, name) in checks {
            if !(v > 0.0 && v.is_finite()) {
                return Err(GroundError::Properties(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.undisturbed_temperature.is_finite() || self.water_table_depth < 0.0 {
            return Err(GroundError::Properties(
                "temperature must be finite and water table depth non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Thermal diffusivity in m2/s.
    pub fn diffusivity_si(&self) -> f64 {
        self.diffusivity / crate::units::SECONDS_PER_DAY
    }

    pub fn borehole_radius(&self) -> f64 {
        0.5 * self.borehole_diameter
    }
}
