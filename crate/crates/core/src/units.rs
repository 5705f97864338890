//! Unit conversions and physical constants shared across the crate.

/// kW (thermal) per kBtu/h. Also kWh per kBtu.
pub const KW_PER_KBTUH: f64 = 0.293071;

/// kW (thermal) per refrigeration ton.
pub const KW_PER_TON: f64 = 3.51685;

pub const SECONDS_PER_HOUR: f64 = 3600.0;
pub const SECONDS_PER_DAY: f64 = 86_400.0;

/// Specific heat of water, J/(kg K).
pub const CP_WATER: f64 = 4186.0;
/// Density of water, kg/m3.
pub const RHO_WATER: f64 = 1000.0;
/// Specific heat of air, J/(kg K).
pub const CP_AIR: f64 = 1005.0;
/// Density of air, kg/m3.
pub const RHO_AIR: f64 = 1.2;

pub const SQFT_TO_M2: f64 = 0.092_903_04;

pub const ZERO_CELSIUS: f64 = 273.15;

#[inline]
pub fn celsius_to_kelvin(t: f64) -> f64 {
    t + ZERO_CELSIUS
}

#[inline]
pub fn kbtuh_to_kw(v: f64) -> f64 {
    v * KW_PER_KBTUH
}

#[inline]
pub fn tons_to_kw(v: f64) -> f64 {
    v * KW_PER_TON
}

/// Days to seconds.
#[inline]
pub fn days(v: f64) -> f64 {
    v * SECONDS_PER_DAY
}
