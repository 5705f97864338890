use std::f64::consts::PI;

use super::expint::e1_unchecked;
use super::{GroundError, GroundProperties};
use crate::quadrature;

/// Vertical extent of one borehole.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoreholeGeometry {
    /// Active length H, m.
    pub length: f64,
    /// Distance from the ground surface to the top of the active length, m.
    pub buried_depth: f64,
    /// Borehole radius, m.
    pub radius: f64,
}

/// Infinite line-source temperature rise per unit heat rate, K per (W/m).
///
/// Zero for `t <= 0`.
pub fn ils_response(t: f64, r: f64, ground: &GroundProperties) -> Result<f64, GroundError> {
    if !(r > 0.0) {
        return Err(GroundError::Domain(format!("radius must be positive, got {r}")));
    }
    if t.is_nan() {
        return Err(GroundError::Domain("time is NaN".into()));
    }
    Ok(ils_unchecked(t, r, ground.diffusivity_si(), ground.conductivity))
}

pub(crate) fn ils_unchecked(t: f64, r: f64, alpha: f64, k: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    e1_unchecked(r * r / (4.0 * alpha * t)) / (4.0 * PI * k)
}

/// Integral of the error function, `x erf(x) - (1 - exp(-x^2)) / sqrt(pi)`.
pub fn ierf(x: f64) -> f64 {
    x * libm::erf(x) + libm::expm1(-x * x) / PI.sqrt()
}

/// Finite line-source response factor (2 pi k convention) between two
/// identical boreholes `distance` apart, averaged over the receiving length,
/// with a mirror sink above the ground surface.
///
/// `alpha` in m2/s. Uses the single-integral form
/// `1/(2H) * int_{1/sqrt(4 alpha t)}^inf exp(-d^2 s^2)/s^2 * Y(s) ds`.
pub fn fls_response(t: f64, distance: f64, length: f64, buried_depth: f64, alpha: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let h = length;
    let d = buried_depth;
    let s0 = 1.0 / (4.0 * alpha * t).sqrt();
    let s_max = 7.5 / distance;
    if s0 >= s_max {
        return 0.0;
    }
    let y = |s: f64| 2.0 * ierf(h * s) + 2.0 * ierf((2.0 * d + h) * s) - ierf(2.0 * (d + h) * s) - ierf(2.0 * d * s);
    // s = e^u spreads the length scales 1/H, 1/D and 1/r evenly.
    let integrand = |u: f64| {
        let s = u.exp();
        (-distance * distance * s * s).exp() * y(s) / s
    };
    let lo = s0.ln();
    let hi = s_max.ln();
    // Panel breaks at the characteristic scales keep the adaptive rule honest.
    let mut breaks = vec![lo];
    for scale in [
        1.0 / (2.0 * (d + h)),
        1.0 / h,
        1.0 / (2.0 * d.max(1e-9)),
        1.0 / distance,
    ] {
        let u = scale.ln();
        if u > lo && u < hi {
            breaks.push(u);
        }
    }
    breaks.push(hi);
    breaks.sort_by(f64::total_cmp);
    let total: f64 = breaks
        .windows(2)
        .map(|w| quadrature::integrate(integrand, w[0], w[1], 1e-13, 1e-11))
        .sum();
    total / (2.0 * h)
}

/// Self response factor of one borehole at its own wall radius.
pub fn fls_gfunction(t: f64, borehole: &BoreholeGeometry, ground: &GroundProperties) -> f64 {
    fls_response(
        t,
        borehole.radius,
        borehole.length,
        borehole.buried_depth,
        ground.diffusivity_si(),
    )
}
