//! Borefield length sizing for block heating and cooling loads using the
//! three-pulse effective ground resistances.

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ground::exp_integral_e1;
use crate::ground::{borehole_resistance, BorefieldLayout, BoreholeResistance, GroundError, GroundProperties};
use crate::profile::LoadProfile;
use crate::units::SECONDS_PER_DAY;
use crate::{Mode, HOURS_PER_YEAR};

/// Smallest accepted fluid-to-ground design temperature gap, K.
pub const MIN_TEMPERATURE_GAP: f64 = 0.5;

/// Maximum refinements of the temperature penalty.
pub const MAX_PENALTY_ITERATIONS: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum SizingError {
    #[error("pulse durations must satisfy annual > monthly > daily > 0 (got {annual}, {monthly}, {daily} days)")]
    PulseOrder { annual: f64, monthly: f64, daily: f64 },
    #[error("COP must exceed 1, got {0}")]
    Cop(f64),
    #[error("invalid sizing input: {0}")]
    Input(String),
    #[error("{mode} sizing infeasible: fluid-to-ground temperature gap {gap:.3} K is below {MIN_TEMPERATURE_GAP} K")]
    Infeasible { mode: Mode, gap: f64 },
    #[error("temperature penalty did not settle after {iterations} refinements (last count {count})")]
    NonConvergent { iterations: usize, count: usize },
    #[error("neighbor interference ({0:.1} K m) exceeds the whole length requirement")]
    PenaltyExceedsLoad(f64),
    #[error(transparent)]
    Ground(#[from] GroundError),
}

/// Durations of the annual, monthly and daily heat pulses, days.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseSchedule {
    pub annual: f64,
    pub monthly: f64,
    pub daily: f64,
}

impl Default for PulseSchedule {
    fn default() -> Self {
        Self {
            annual: 7300.0,
            monthly: 30.0,
            daily: 0.25,
        }
    }
}

impl PulseSchedule {
    pub fn validate(&self) -> Result<(), SizingError> {
        if !(self.annual > self.monthly && self.monthly > self.daily && self.daily > 0.0) || !self.annual.is_finite() {
            return Err(SizingError::PulseOrder {
                annual: self.annual,
                monthly: self.monthly,
                daily: self.daily,
            });
        }
        Ok(())
    }
}

/// Effective ground resistances, m K/W.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroundResistances {
    pub annual: f64,
    pub monthly: f64,
    pub daily: f64,
}

/// Heat pump entering/leaving fluid temperatures, degC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignTemperatures {
    pub cooling_inlet: f64,
    pub cooling_outlet: f64,
    pub heating_inlet: f64,
    pub heating_outlet: f64,
}

impl Default for DesignTemperatures {
    fn default() -> Self {
        Self {
            cooling_inlet: 25.0,
            cooling_outlet: 30.0,
            heating_inlet: 8.0,
            heating_outlet: 3.0,
        }
    }
}

impl DesignTemperatures {
    pub fn cooling_mean(&self) -> f64 {
        0.5 * (self.cooling_inlet + self.cooling_outlet)
    }

    pub fn heating_mean(&self) -> f64 {
        0.5 * (self.heating_inlet + self.heating_outlet)
    }
}

/// Every symbol of the length equations. Loads in kW, resistances in m K/W,
/// temperatures in degC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SizingInputs {
    /// Block cooling load (heat rejection magnitude).
    pub q_lc: f64,
    /// Block heating load (heat extraction magnitude).
    pub q_lh: f64,
    pub eflh_c: f64,
    pub eflh_h: f64,
    pub c_fc: f64,
    pub c_fh: f64,
    pub f_sc: f64,
    /// Design-month part-load factor for the cooling length.
    pub plf_c: f64,
    /// Design-month part-load factor for the heating length.
    pub plf_h: f64,
    pub r_b: f64,
    pub r_g: GroundResistances,
    /// Temperature penalty, K, signed like the net annual flux.
    pub t_p: f64,
    pub t_g: f64,
    pub temperatures: DesignTemperatures,
}

impl SizingInputs {
    pub fn validate(&self) -> Result<(), SizingError> {
        let bad = |what: &str| Err(SizingError::Input(what.to_string()));
        let finite = [
            self.q_lc,
            self.q_lh,
            self.eflh_c,
            self.eflh_h,
            self.c_fc,
            self.c_fh,
            self.f_sc,
            self.plf_c,
            self.plf_h,
            self.r_b,
            self.t_p,
            self.t_g,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("all inputs must be finite");
        }
        if self.q_lc < 0.0 || self.q_lh < 0.0 {
            return bad("block loads are magnitudes and must be >= 0");
        }
        let hours = HOURS_PER_YEAR as f64;
        if !(0.0..=hours).contains(&self.eflh_c) || !(0.0..=hours).contains(&self.eflh_h) {
            return bad("equivalent full-load hours must lie in [0, 8760]");
        }
        if !(self.c_fc > 1.0) || !(self.c_fh > 0.0 && self.c_fh < 1.0) {
            return bad("C_fc must exceed 1 and C_fh lie in (0, 1)");
        }
        if !(self.plf_c > 0.0 && self.plf_c <= 1.0) || !(self.plf_h > 0.0 && self.plf_h <= 1.0) {
            return bad("part-load factors must lie in (0, 1]");
        }
        if self.r_b < 0.0 || self.r_g.annual < 0.0 || self.r_g.monthly < 0.0 || self.r_g.daily < 0.0 || self.f_sc < 0.0
        {
            return bad("resistances and the short-circuit factor must be >= 0");
        }
        Ok(())
    }
}

fn step_response(t_days: f64, r: f64, ground: &GroundProperties) -> f64 {
    let alpha = ground.diffusivity_si();
    let x = r * r / (4.0 * alpha * t_days * SECONDS_PER_DAY);
    // x > 0 is guaranteed by validated inputs.
    exp_integral_e1(x).unwrap_or(0.0) / (4.0 * PI * ground.conductivity)
}

/// Annual, monthly and daily resistances as differences of line-source step
/// responses at the borehole radius.
pub fn ground_resistances(ground: &GroundProperties, pulses: &PulseSchedule) -> Result<GroundResistances, SizingError> {
    ground.validate()?;
    pulses.validate()?;
    Ok(pulse_resistances(ground, pulses.annual, pulses.monthly, pulses.daily))
}

fn pulse_resistances(ground: &GroundProperties, t1: f64, t2: f64, t3: f64) -> GroundResistances {
    let r = ground.borehole_radius();
    let g_all = step_response(t1 + t2 + t3, r, ground);
    let g_23 = step_response(t2 + t3, r, ground);
    let g_3 = step_response(t3, r, ground);
    GroundResistances {
        annual: g_all - g_23,
        monthly: g_23 - g_3,
        daily: g_3,
    }
}

/// `(C_fc, C_fh)` from the cooling and heating COPs.
pub fn cop_corrections(cop_c: f64, cop_h: f64) -> Result<(f64, f64), SizingError> {
    for cop in [cop_c, cop_h] {
        if !(cop > 1.0) {
            return Err(SizingError::Cop(cop));
        }
    }
    Ok((1.0 + 1.0 / cop_c, 1.0 - 1.0 / cop_h))
}

/// Net annual mean heat flow into the ground, kW; rejection positive.
pub fn annual_net_flux(inputs: &SizingInputs) -> f64 {
    (inputs.c_fc * inputs.q_lc * inputs.eflh_c - inputs.c_fh * inputs.q_lh * inputs.eflh_h) / HOURS_PER_YEAR as f64
}

/// Numerator (K m) and denominator (K) of one length equation. Both
/// denominators measure the fluid against the penalised ground temperature
/// `t_g + t_p`, so warming the ground lengthens the cooling loop.
fn length_terms(mode: Mode, inputs: &SizingInputs) -> (f64, f64) {
    let q_a = annual_net_flux(inputs) * 1000.0;
    let rg = &inputs.r_g;
    match mode {
        Mode::Cooling => {
            let short = inputs.r_b + inputs.plf_c * rg.monthly + rg.daily * inputs.f_sc;
            let num = q_a * rg.annual + inputs.c_fc * inputs.q_lc * 1000.0 * short;
            let den = inputs.temperatures.cooling_mean() - (inputs.t_g + inputs.t_p);
            (num, den)
        }
        Mode::Heating => {
            let short = inputs.r_b + inputs.plf_h * rg.monthly + rg.daily * inputs.f_sc;
            let num = -q_a * rg.annual + inputs.c_fh * inputs.q_lh * 1000.0 * short;
            let den = (inputs.t_g + inputs.t_p) - inputs.temperatures.heating_mean();
            (num, den)
        }
    }
}

/// Required loop length for one mode, m. Negative results are floored at 0.
pub fn required_length(mode: Mode, inputs: &SizingInputs) -> Result<f64, SizingError> {
    inputs.validate()?;
    let (num, den) = length_terms(mode, inputs);
    if den.abs() <= MIN_TEMPERATURE_GAP {
        return Err(SizingError::Infeasible { mode, gap: den });
    }
    Ok((num / den).max(0.0))
}

/// Summed line-source response to unit flux on every neighbor after
/// `horizon` days at the borehole where that sum is largest, K per (W/m).
pub fn neighbor_response(
    layout: &BorefieldLayout,
    ground: &GroundProperties,
    horizon: f64,
) -> Result<f64, SizingError> {
    ground.validate()?;
    if !(horizon > 0.0) {
        return Err(SizingError::Input(format!("horizon must be positive, got {horizon}")));
    }
    let pos = layout.positions();
    Ok(lattice_response(pos, ground, horizon).unwrap_or_else(|| pairwise_response(pos, ground, horizon)))
}

fn pairwise_response(pos: &[(f64, f64)], ground: &GroundProperties, horizon: f64) -> f64 {
    let mut memo: HashMap<i64, f64> = HashMap::new();
    let mut worst = 0.0f64;
    for (i, p) in pos.iter().enumerate() {
        let mut sum = 0.0;
        for (j, q) in pos.iter().enumerate() {
            if i == j {
                continue;
            }
            let d2 = (p.0 - q.0).powi(2) + (p.1 - q.1).powi(2);
            let key = (d2 * 1e6).round() as i64;
            sum += *memo
                .entry(key)
                .or_insert_with(|| step_response(horizon, d2.sqrt(), ground));
        }
        worst = worst.max(sum);
    }
    worst
}

/// Same sum for layouts on a square lattice, with the kernel tabulated by
/// integer offset. `None` when the positions are not on one.
fn lattice_response(pos: &[(f64, f64)], ground: &GroundProperties, horizon: f64) -> Option<f64> {
    if pos.len() < 2 {
        return Some(0.0);
    }
    let (x0, y0) = pos
        .iter()
        .fold((f64::INFINITY, f64::INFINITY), |a, p| (a.0.min(p.0), a.1.min(p.1)));
    let step = pos
        .iter()
        .flat_map(|p| [p.0 - x0, p.1 - y0])
        .filter(|d| *d > 1e-9)
        .fold(f64::INFINITY, f64::min);
    if !step.is_finite() {
        return None;
    }
    let mut idx = Vec::with_capacity(pos.len());
    for p in pos {
        let (fx, fy) = ((p.0 - x0) / step, (p.1 - y0) / step);
        let (ix, iy) = (fx.round(), fy.round());
        if (fx - ix).abs() > 1e-9 * fx.max(1.0) || (fy - iy).abs() > 1e-9 * fy.max(1.0) || ix > 1e5 || iy > 1e5 {
            return None;
        }
        idx.push((ix as usize, iy as usize));
    }
    let w = idx.iter().map(|p| p.0).max()? + 1;
    let h = idx.iter().map(|p| p.1).max()? + 1;
    if w.checked_mul(h)? > 4_000_000 {
        return None;
    }
    let mut kernel = vec![0.0; w * h];
    for dx in 0..w {
        for dy in 0..h {
            if dx + dy > 0 {
                let r = step * ((dx * dx + dy * dy) as f64).sqrt();
                kernel[dx * h + dy] = step_response(horizon, r, ground);
            }
        }
    }
    let worst = idx
        .iter()
        .map(|&(ax, ay)| {
            idx.iter()
                .map(|&(bx, by)| kernel[ax.abs_diff(bx) * h + ay.abs_diff(by)])
                .sum::<f64>()
        })
        .fold(0.0f64, f64::max);
    Some(worst)
}

/// Long-term temperature change caused by neighbors at the most surrounded
/// borehole, K. `q_a` in kW over total length `length` m.
pub fn temperature_penalty(
    layout: &BorefieldLayout,
    ground: &GroundProperties,
    q_a: f64,
    length: f64,
    horizon: f64,
) -> Result<f64, SizingError> {
    if !(length > 0.0) {
        return Err(SizingError::Input(format!(
            "loop length must be positive, got {length}"
        )));
    }
    Ok(q_a * 1000.0 / length * neighbor_response(layout, ground, horizon)?)
}

/// Design block load and its full-load statistics for one mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockLoad {
    /// kW.
    pub peak: f64,
    /// Annual energy over peak, h.
    pub eflh: f64,
    /// Design-month mean over peak.
    pub plf: f64,
}

impl BlockLoad {
    pub const ZERO: BlockLoad = BlockLoad {
        peak: 0.0,
        eflh: 0.0,
        plf: 1.0,
    };

    /// Statistics of an (already shaved) profile. The design month is the
    /// month with the largest mean load.
    pub fn from_profile(profile: &LoadProfile) -> BlockLoad {
        let peak = profile.peak();
        if peak <= 0.0 {
            return BlockLoad::ZERO;
        }
        let means = profile.monthly_means();
        let design = means.iter().copied().fold(0.0, f64::max);
        BlockLoad {
            peak,
            // A flat-topped profile can round to just above a full year.
            eflh: (profile.total() / peak).min(HOURS_PER_YEAR as f64),
            plf: (design / peak).clamp(f64::MIN_POSITIVE, 1.0),
        }
    }
}

/// Everything but the loads needed to size a field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SizingParams {
    pub ground: GroundProperties,
    pub pulses: PulseSchedule,
    pub temperatures: DesignTemperatures,
    pub borehole_resistance: BoreholeResistance,
    pub short_circuit_factor: f64,
    /// Per-borehole active length, m.
    pub borehole_depth: f64,
    /// Grid spacing, m.
    pub spacing: f64,
    pub cop_cooling: f64,
    pub cop_heating: f64,
}

impl Default for SizingParams {
    fn default() -> Self {
        Self {
            ground: GroundProperties::default(),
            pulses: PulseSchedule::default(),
            temperatures: DesignTemperatures::default(),
            borehole_resistance: BoreholeResistance::default(),
            short_circuit_factor: 1.04,
            borehole_depth: 200.0,
            spacing: 6.0,
            cop_cooling: 5.5,
            cop_heating: 3.5,
        }
    }
}

impl SizingParams {
    /// Rectangular grid of `count` boreholes with these parameters.
    pub fn layout(&self, count: usize) -> Result<BorefieldLayout, SizingError> {
        Ok(BorefieldLayout::rectangular(
            count,
            self.spacing,
            self.borehole_depth,
            self.ground.water_table_depth,
            self.ground.borehole_radius(),
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizingResult {
    /// kW, rejection positive.
    pub q_a: f64,
    pub length_cooling: f64,
    pub length_heating: f64,
    pub length: f64,
    pub borehole_count: usize,
    pub borehole_depth: f64,
    pub inputs: SizingInputs,
    pub penalty_iterations: usize,
}

impl SizingResult {
    /// Installed length, m.
    pub fn installed_length(&self) -> f64 {
        self.borehole_count as f64 * self.borehole_depth
    }
}

/// Boreholes of `depth` needed to cover `length`.
pub fn borehole_count(length: f64, depth: f64) -> usize {
    if length <= 0.0 {
        return 0;
    }
    // Guard against 46150.000000001 / 200 style round-off.
    let n = length / depth;
    let rounded = n.round();
    if (n - rounded).abs() < 1e-9 * n.max(1.0) {
        rounded as usize
    } else {
        n.ceil() as usize
    }
}

/// Sizes the field for the given block loads. The temperature penalty is
/// refined until the borehole count settles: for a fixed count `t_p L` is
/// constant, so each length has a closed form in terms of the zero-penalty
/// denominator.
pub fn size_borefield(
    cooling: &BlockLoad,
    heating: &BlockLoad,
    params: &SizingParams,
) -> Result<SizingResult, SizingError> {
    let r_g = ground_resistances(&params.ground, &params.pulses)?;
    let r_b = borehole_resistance(&params.ground, &params.borehole_resistance)?;
    let (c_fc, c_fh) = cop_corrections(params.cop_cooling, params.cop_heating)?;
    if !(params.borehole_depth > 0.0) || !(params.spacing > 0.0) {
        return Err(SizingError::Input("borehole depth and spacing must be positive".into()));
    }
    let mut inputs = SizingInputs {
        q_lc: cooling.peak,
        q_lh: heating.peak,
        eflh_c: cooling.eflh,
        eflh_h: heating.eflh,
        c_fc,
        c_fh,
        f_sc: params.short_circuit_factor,
        plf_c: cooling.plf,
        plf_h: heating.plf,
        r_b,
        r_g,
        t_p: 0.0,
        t_g: params.ground.undisturbed_temperature,
        temperatures: params.temperatures,
    };
    inputs.validate()?;
    let q_a = annual_net_flux(&inputs);

    let lengths = |inputs: &SizingInputs| -> Result<(f64, f64), SizingError> {
        Ok((
            required_length(Mode::Cooling, inputs)?,
            required_length(Mode::Heating, inputs)?,
        ))
    };
    let (lc, lh) = lengths(&inputs)?;
    let mut count = borehole_count(lc.max(lh), params.borehole_depth);
    for iteration in 1..=MAX_PENALTY_ITERATIONS {
        // t_p * L for this count, K m.
        let tp_len = if count > 1 {
            q_a * 1000.0 * neighbor_response(&params.layout(count)?, &params.ground, params.pulses.annual)?
        } else {
            0.0
        };
        let mut best = 0.0f64;
        for mode in [Mode::Cooling, Mode::Heating] {
            let mut probe = inputs;
            probe.t_p = 0.0;
            let (num, den0) = length_terms(mode, &probe);
            let sign = if mode == Mode::Cooling { -1.0 } else { 1.0 };
            if num > 0.0 {
                best = best.max((num - sign * tp_len) / den0);
            }
        }
        if best <= 0.0 && tp_len != 0.0 {
            return Err(SizingError::PenaltyExceedsLoad(tp_len));
        }
        inputs.t_p = if best > 0.0 { tp_len / best } else { 0.0 };
        let (lc, lh) = lengths(&inputs)?;
        let length = lc.max(lh);
        let next = borehole_count(length, params.borehole_depth);
        if next == count {
            return Ok(SizingResult {
                q_a,
                length_cooling: lc,
                length_heating: lh,
                length,
                borehole_count: count,
                borehole_depth: params.borehole_depth,
                inputs,
                penalty_iterations: iteration,
            });
        }
        count = next;
    }
    Err(SizingError::NonConvergent {
        iterations: MAX_PENALTY_ITERATIONS,
        count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_inputs() -> SizingInputs {
        let r_g = ground_resistances(&GroundProperties::default(), &PulseSchedule::default()).unwrap();
        SizingInputs {
            q_lc: 100.0 / 1.1818,
            q_lh: 0.0,
            eflh_c: 1000.0,
            eflh_h: 0.0,
            c_fc: 1.1818,
            c_fh: 0.7143,
            f_sc: 1.04,
            plf_c: 0.4,
            plf_h: 0.4,
            r_b: 0.13,
            r_g,
            t_p: 0.0,
            t_g: 18.0,
            temperatures: DesignTemperatures::default(),
        }
    }

    #[test]
    fn resistances_positive_and_scale_with_conductivity() {
        let g = GroundProperties::default();
        let p = PulseSchedule::default();
        let r = ground_resistances(&g, &p).unwrap();
        assert!(r.annual > 0.0 && r.monthly > 0.0 && r.daily > 0.0);
        let g2 = GroundProperties {
            conductivity: 2.0 * g.conductivity,
            ..g.clone()
        };
        let r2 = ground_resistances(&g2, &p).unwrap();
        for (a, b) in [(r.annual, r2.annual), (r.monthly, r2.monthly), (r.daily, r2.daily)] {
            assert!((a / b - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn vanishing_annual_pulse() {
        let g = GroundProperties::default();
        assert!(pulse_resistances(&g, 1e-9, 30.0, 0.25).annual < 1e-9);
        let bad = PulseSchedule {
            annual: 10.0,
            monthly: 30.0,
            daily: 0.25,
        };
        assert!(matches!(
            ground_resistances(&g, &bad),
            Err(SizingError::PulseOrder { .. })
        ));
    }

    #[test]
    fn cop_correction_values() {
        let (c_fc, c_fh) = cop_corrections(5.5, 3.5).unwrap();
        assert!((c_fc - 1.1818).abs() < 1e-4);
        assert!((c_fh - 0.7143).abs() < 1e-4);
        let (a, b) = cop_corrections(1e12, 1e12).unwrap();
        assert!((a - 1.0).abs() < 1e-9 && (b - 1.0).abs() < 1e-9);
        assert_eq!(cop_corrections(1.0, 3.0), Err(SizingError::Cop(1.0)));
    }

    #[test]
    fn net_flux_examples() {
        let mut i = base_inputs();
        assert!((annual_net_flux(&i) - 11.416).abs() < 1e-3);
        i.q_lc = 0.0;
        i.q_lh = 50.0 / i.c_fh;
        i.eflh_h = 500.0;
        assert!((annual_net_flux(&i) + 2.854).abs() < 1e-3);
        i.q_lc = i.q_lh * i.c_fh * i.eflh_h / (i.c_fc * 1000.0);
        i.eflh_c = 1000.0;
        assert!(annual_net_flux(&i).abs() < 1e-12);
    }

    #[test]
    fn length_is_homogeneous_in_loads() {
        let i = base_inputs();
        let l1 = required_length(Mode::Cooling, &i).unwrap();
        let mut j = i;
        j.q_lc *= 2.0;
        let l2 = required_length(Mode::Cooling, &j).unwrap();
        assert!((l2 / l1 - 2.0).abs() < 1e-12);
        j.q_lc = 0.0;
        assert_eq!(required_length(Mode::Cooling, &j).unwrap(), 0.0);
    }

    #[test]
    fn penalty_moves_lengths_per_formula() {
        let mut i = base_inputs();
        i.q_lh = 30.0;
        i.eflh_h = 300.0;
        let lc0 = required_length(Mode::Cooling, &i).unwrap();
        let lh0 = required_length(Mode::Heating, &i).unwrap();
        i.t_p = 1.0;
        let (lc1, lh1) = (
            required_length(Mode::Cooling, &i).unwrap(),
            required_length(Mode::Heating, &i).unwrap(),
        );
        assert!(lc1 > lc0 && lh1 < lh0);
        // Denominator margins move by exactly t_p in opposite directions.
        let (num_c, _) = length_terms(Mode::Cooling, &i);
        let (num_h, _) = length_terms(Mode::Heating, &i);
        assert!((num_c / lc0 - num_c / lc1 - 1.0).abs() < 1e-9);
        assert!((num_h / lh1 - num_h / lh0 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn near_singular_gap_is_rejected() {
        let mut i = base_inputs();
        i.t_g = 27.2;
        assert!(matches!(
            required_length(Mode::Cooling, &i),
            Err(SizingError::Infeasible {
                mode: Mode::Cooling,
                ..
            })
        ));
    }

    #[test]
    fn single_borehole_has_no_penalty() {
        let g = GroundProperties::default();
        let l = BorefieldLayout::rectangular(1, 6.0, 200.0, 5.0, 0.0635).unwrap();
        assert_eq!(temperature_penalty(&l, &g, 50.0, 200.0, 7300.0).unwrap(), 0.0);
    }

    #[test]
    fn penalty_nondecreasing_in_count() {
        let g = GroundProperties::default();
        let mut prev = 0.0;
        for n in 1..=120 {
            let l = BorefieldLayout::rectangular(n, 6.0, 200.0, 5.0, 0.0635).unwrap();
            let tp = temperature_penalty(&l, &g, 10.0, 1000.0, 7300.0).unwrap();
            assert!(tp >= prev - 1e-12, "n={n}: {tp} < {prev}");
            prev = tp;
        }
        let l = BorefieldLayout::rectangular(9, 6.0, 200.0, 5.0, 0.0635).unwrap();
        assert!(temperature_penalty(&l, &g, -10.0, 1000.0, 7300.0).unwrap() < 0.0);
    }

    #[test]
    fn lattice_sum_matches_pairwise() {
        let g = GroundProperties::default();
        for n in [2, 7, 30, 61] {
            let l = BorefieldLayout::rectangular(n, 6.0, 200.0, 5.0, 0.0635).unwrap();
            let fast = lattice_response(l.positions(), &g, 7300.0).unwrap();
            let slow = pairwise_response(l.positions(), &g, 7300.0);
            assert!((fast / slow - 1.0).abs() < 1e-12, "n={n}");
        }
        let off = [(0.0, 0.0), (6.0, 0.0), (2.5, 4.1)];
        assert!(lattice_response(&off, &g, 7300.0).is_none());
    }

    #[test]
    fn count_uses_ceiling() {
        assert_eq!(borehole_count(46_150.0, 200.0), 231);
        assert_eq!(borehole_count(46_000.0, 200.0), 230);
        assert_eq!(borehole_count(0.0, 200.0), 0);
        let a = borehole_count(46_150.0, 100.0);
        assert!((a as i64 - 2 * 231).abs() <= 1);
    }

    #[test]
    fn cooling_only_field_is_governed_by_cooling() {
        let params = SizingParams::default();
        let cooling = BlockLoad {
            peak: 500.0,
            eflh: 1500.0,
            plf: 0.5,
        };
        let r = size_borefield(&cooling, &BlockLoad::ZERO, &params).unwrap();
        assert_eq!(r.length, r.length_cooling);
        assert!(r.length_heating <= r.length);
        assert!(r.installed_length() >= r.length);
        assert!(r.borehole_count > 1);
    }
}
