//! Cost-optimal split between ground-source and air-source heat pumps.
//!
//! A single capacity threshold `c` is applied to both hourly profiles: the
//! base load `min(L, c)` goes to the borefield and the rest to air-source
//! units. The threshold is swept through the cooling coverage fraction α.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profile::{fmt_num, ProfileError};
use crate::sizing::{size_borefield, BlockLoad, SizingError, SizingParams, SizingResult};
use crate::{LoadProfile, Mode};

/// Number of sweep intervals; α runs over `i / ALPHA_STEPS`.
pub const ALPHA_STEPS: usize = 100;

#[derive(Debug, Error)]
pub enum HybridError {
    #[error("shave fraction {0} is outside [0, 1]")]
    Fraction(f64),
    #[error("capacity threshold must be non-negative, got {0}")]
    Threshold(f64),
    #[error("cannot cover a fraction of an all-zero {0} profile")]
    Degenerate(Mode),
    #[error("invalid cost parameters: {0}")]
    Cost(String),
    #[error("discount rate {0} must exceed -1")]
    DiscountRate(f64),
    #[error("every sweep candidate failed sizing; first failure at alpha = {alpha:.2}: {reason}")]
    AllInfeasible { alpha: f64, reason: String },
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Sizing(#[from] SizingError),
    #[error("writing sweep table: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostParams {
    /// $/m of borehole, drilling and materials.
    pub ghx_unit_cost: f64,
    /// $/kW of air-source machine capacity.
    pub heat_pump_unit_cost: f64,
    /// $/kW of ground-source machine capacity.
    pub gshp_unit_cost: f64,
    /// $/kWh.
    pub electricity_price: f64,
    pub interest_rate: f64,
    pub inflation_rate: f64,
    /// Years.
    pub horizon: usize,
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            ghx_unit_cost: 65.5,
            heat_pump_unit_cost: 80.0,
            gshp_unit_cost: 80.0,
            electricity_price: 0.08,
            interest_rate: 0.08,
            inflation_rate: 0.04,
            horizon: 20,
        }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<(), HybridError> {
        for (name, v) in [
            ("ghx_unit_cost", self.ghx_unit_cost),
            ("heat_pump_unit_cost", self.heat_pump_unit_cost),
            ("gshp_unit_cost", self.gshp_unit_cost),
            ("electricity_price", self.electricity_price),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(HybridError::Cost(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("interest_rate", self.interest_rate),
            ("inflation_rate", self.inflation_rate),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(HybridError::Cost(format!("{name} = {v} is outside [0, 1)")));
            }
        }
        if self.horizon == 0 {
            return Err(HybridError::Cost("horizon must be at least one year".into()));
        }
        Ok(())
    }

    /// Every monetary rate multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> CostParams {
        CostParams {
            ghx_unit_cost: self.ghx_unit_cost * factor,
            heat_pump_unit_cost: self.heat_pump_unit_cost * factor,
            gshp_unit_cost: self.gshp_unit_cost * factor,
            electricity_price: self.electricity_price * factor,
            ..*self
        }
    }
}

/// Seasonal COPs of the two machine types.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CopSet {
    pub ashp_heating: f64,
    pub ashp_cooling: f64,
    pub gshp_heating: f64,
    pub gshp_cooling: f64,
}

impl Default for CopSet {
    fn default() -> Self {
        Self {
            ashp_heating: 2.5,
            ashp_cooling: 4.5,
            gshp_heating: 3.5,
            gshp_cooling: 5.5,
        }
    }
}

impl CopSet {
    pub fn validate(&self) -> Result<(), HybridError> {
        for v in [
            self.ashp_heating,
            self.ashp_cooling,
            self.gshp_heating,
            self.gshp_cooling,
        ] {
            if !(v > 1.0) || !v.is_finite() {
                return Err(SizingError::Cop(v).into());
            }
        }
        Ok(())
    }

    /// Non-fatal oddities, such as an air-source unit beating the
    /// ground-source one.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.gshp_heating < self.ashp_heating {
            out.push(format!(
                "ground-source heating COP {} is below air-source {}",
                self.gshp_heating, self.ashp_heating
            ));
        }
        if self.gshp_cooling < self.ashp_cooling {
            out.push(format!(
                "ground-source cooling COP {} is below air-source {}",
                self.gshp_cooling, self.ashp_cooling
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShaveFactors {
    pub alpha: f64,
    pub beta: f64,
    /// kW.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HybridDesign {
    pub shave: ShaveFactors,
    pub sizing: SizingResult,
    /// kW, ground-source machine capacity.
    pub gshp_capacity: f64,
    /// kW, air-source machine capacity.
    pub ashp_capacity: f64,
    pub capital_cost: f64,
    pub annual_operating_cost_year1: f64,
    pub npv_total: f64,
    pub cash_flows: Vec<f64>,
}

/// One α candidate of the sweep. Infeasible rows keep the sizing error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub beta: f64,
    pub threshold: f64,
    pub boreholes: usize,
    pub capital: f64,
    pub opex_year1: f64,
    pub npv: f64,
    pub feasible: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Optimum {
    pub design: HybridDesign,
    pub sweep: Vec<SweepRow>,
    /// Index of the optimum in `sweep`.
    pub index: usize,
}

fn covered(values: &[f64], c: f64) -> f64 {
    values.iter().map(|v| v.min(c)).sum()
}

/// Smallest threshold whose base load covers `alpha` of the annual energy,
/// bisected to 1e-6 of the peak.
pub fn threshold_for_alpha(profile: &LoadProfile, alpha: f64) -> Result<f64, HybridError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(HybridError::Fraction(alpha));
    }
    if alpha == 0.0 {
        return Ok(0.0);
    }
    if profile.is_all_zero() {
        return Err(HybridError::Degenerate(profile.mode()));
    }
    let peak = profile.peak();
    if alpha == 1.0 {
        return Ok(peak);
    }
    let target = alpha * profile.total();
    let (mut lo, mut hi) = (0.0, peak);
    while hi - lo > 1e-6 * peak {
        let mid = 0.5 * (lo + hi);
        if covered(profile.values(), mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Fraction of the annual energy of `profile` below the threshold.
pub fn beta_from_alpha(profile: &LoadProfile, c: f64) -> Result<f64, HybridError> {
    if !(c >= 0.0) {
        return Err(HybridError::Threshold(c));
    }
    let total = profile.total();
    if total == 0.0 {
        return Ok(0.0);
    }
    Ok((covered(profile.values(), c) / total).min(1.0))
}

/// Annual electricity (kWh) of the ground-source and air-source machines.
pub fn annual_electricity_split(
    heating: &LoadProfile,
    cooling: &LoadProfile,
    c: f64,
    cops: &CopSet,
) -> Result<(f64, f64), HybridError> {
    if !(c >= 0.0) {
        return Err(HybridError::Threshold(c));
    }
    let split = |p: &LoadProfile| -> (f64, f64) {
        let base = covered(p.values(), c);
        let rest: f64 = p.values().iter().map(|v| (v - c).max(0.0)).sum();
        (base, rest)
    };
    let (hb, hr) = split(heating);
    let (cb, cr) = split(cooling);
    Ok((
        cb / cops.gshp_cooling + hb / cops.gshp_heating,
        cr / cops.ashp_cooling + hr / cops.ashp_heating,
    ))
}

/// Drilling plus machine capital, $.
pub fn capital_cost(sizing: &SizingResult, gshp_capacity: f64, ashp_capacity: f64, costs: &CostParams) -> f64 {
    costs.ghx_unit_cost * sizing.installed_length()
        + costs.gshp_unit_cost * gshp_capacity
        + costs.heat_pump_unit_cost * ashp_capacity
}

/// Present value of `flows[t]` discounted at `rate`.
pub fn npv(flows: &[f64], rate: f64) -> Result<f64, HybridError> {
    if !(rate > -1.0) {
        return Err(HybridError::DiscountRate(rate));
    }
    let mut factor = 1.0;
    let mut total = 0.0;
    for f in flows {
        total += f / factor;
        factor *= 1.0 + rate;
    }
    Ok(total)
}

/// Capital at year 0, then year-1 operating cost inflated once per year.
pub fn build_cash_flows(capital: f64, operating_year1: f64, costs: &CostParams) -> Vec<f64> {
    let mut flows = Vec::with_capacity(costs.horizon + 1);
    flows.push(capital);
    let mut op = operating_year1;
    for _ in 0..costs.horizon {
        flows.push(op);
        op *= 1.0 + costs.inflation_rate;
    }
    flows
}

/// The α grid `0.00, 0.01, ..., 1.00`.
pub fn alpha_grid() -> Vec<f64> {
    (0..=ALPHA_STEPS).map(|i| i as f64 / ALPHA_STEPS as f64).collect()
}

/// Everything the sweep needs besides the profiles.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HybridParams {
    pub sizing: SizingParams,
    pub costs: CostParams,
    pub cops: CopSet,
}

/// Prices one threshold. The borefield is sized with the ground-source
/// COPs, whatever `params.sizing` says.
pub fn evaluate(
    heating: &LoadProfile,
    cooling: &LoadProfile,
    alpha: f64,
    params: &HybridParams,
) -> Result<HybridDesign, HybridError> {
    let c = threshold_for_alpha(cooling, alpha)?;
    let beta = beta_from_alpha(heating, c)?;
    let mut sizing_params = params.sizing.clone();
    sizing_params.cop_cooling = params.cops.gshp_cooling;
    sizing_params.cop_heating = params.cops.gshp_heating;
    let sizing = size_borefield(
        &BlockLoad::from_profile(&cooling.shaved(c)),
        &BlockLoad::from_profile(&heating.shaved(c)),
        &sizing_params,
    )?;
    let gshp_capacity = c.min(cooling.peak().max(heating.peak()));
    let ashp_capacity = (cooling.peak() - c).max(heating.peak() - c).max(0.0);
    let capital = capital_cost(&sizing, gshp_capacity, ashp_capacity, &params.costs);
    let (g, a) = annual_electricity_split(heating, cooling, c, &params.cops)?;
    let opex = params.costs.electricity_price * (g + a);
    let cash_flows = build_cash_flows(capital, opex, &params.costs);
    let npv_total = npv(&cash_flows, params.costs.interest_rate)?;
    Ok(HybridDesign {
        shave: ShaveFactors {
            alpha,
            beta,
            threshold: c,
        },
        sizing,
        gshp_capacity,
        ashp_capacity,
        capital_cost: capital,
        annual_operating_cost_year1: opex,
        npv_total,
        cash_flows,
    })
}

fn check_profiles(heating: &LoadProfile, cooling: &LoadProfile) -> Result<(), HybridError> {
    for (p, mode) in [(heating, Mode::Heating), (cooling, Mode::Cooling)] {
        if p.mode() != mode {
            return Err(ProfileError::ModeMismatch {
                expected: mode,
                got: p.mode(),
            }
            .into());
        }
    }
    Ok(())
}

/// Sweeps α over [`alpha_grid`] in parallel and returns the cheapest
/// feasible design. Ties go to the smaller α.
pub fn optimize(heating: &LoadProfile, cooling: &LoadProfile, params: &HybridParams) -> Result<Optimum, HybridError> {
    check_profiles(heating, cooling)?;
    params.costs.validate()?;
    params.cops.validate()?;
    let grid = alpha_grid();
    let results: Vec<Result<HybridDesign, HybridError>> = grid
        .par_iter()
        .map(|&alpha| evaluate(heating, cooling, alpha, params))
        .collect();

    let mut sweep = Vec::with_capacity(grid.len());
    let mut best: Option<(usize, HybridDesign)> = None;
    let mut first_error = None;
    for (i, (alpha, result)) in grid.iter().zip(results).enumerate() {
        match result {
            Ok(d) => {
                sweep.push(SweepRow {
                    alpha: *alpha,
                    beta: d.shave.beta,
                    threshold: d.shave.threshold,
                    boreholes: d.sizing.borehole_count,
                    capital: d.capital_cost,
                    opex_year1: d.annual_operating_cost_year1,
                    npv: d.npv_total,
                    feasible: true,
                    error: None,
                });
                if best.as_ref().is_none_or(|(_, b)| d.npv_total < b.npv_total) {
                    best = Some((i, d));
                }
            }
            Err(e) => {
                let c = threshold_for_alpha(cooling, *alpha).unwrap_or(f64::NAN);
                let reason = e.to_string();
                first_error.get_or_insert((*alpha, reason.clone()));
                sweep.push(SweepRow {
                    alpha: *alpha,
                    beta: beta_from_alpha(heating, c).unwrap_or(f64::NAN),
                    threshold: c,
                    boreholes: 0,
                    capital: f64::NAN,
                    opex_year1: f64::NAN,
                    npv: f64::NAN,
                    feasible: false,
                    error: Some(reason),
                });
            }
        }
    }
    match best {
        Some((index, design)) => Ok(Optimum { design, sweep, index }),
        None => {
            let (alpha, reason) = first_error.unwrap_or((0.0, "empty sweep".into()));
            Err(HybridError::AllInfeasible { alpha, reason })
        }
    }
}

/// Writes the sweep as
/// `alpha,beta,threshold_kw,boreholes,capital_usd,opex_year1_usd,npv_usd,feasible`.
pub fn write_sweep_csv<W: Write>(mut w: W, sweep: &[SweepRow]) -> Result<(), HybridError> {
    writeln!(
        w,
        "alpha,beta,threshold_kw,boreholes,capital_usd,opex_year1_usd,npv_usd,feasible"
    )?;
    let num = |v: f64| if v.is_finite() { fmt_num(v) } else { String::new() };
    for r in sweep {
        writeln!(
            w,
            "{:.2},{},{},{},{},{},{},{}",
            r.alpha,
            num(r.beta),
            num(r.threshold),
            r.boreholes,
            num(r.capital),
            num(r.opex_year1),
            num(r.npv),
            r.feasible
        )?;
    }
    w.flush()?;
    Ok(())
}
