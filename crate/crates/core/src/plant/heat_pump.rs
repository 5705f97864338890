//! Equation-fit heat pump performance maps.
//!
//! Capacity and power are affine in the four ratios `T_load / T_ref_load`,
//! `T_source / T_ref_source`, `mdot_load / mdot_ref_load` and
//! `mdot_source / mdot_ref_source`, scaled by the reference capacity and
//! power. Temperatures are Kelvin throughout this module.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::PlantError;
use crate::profile::fmt_num;
use crate::units::{celsius_to_kelvin, ZERO_CELSIUS};

/// Guard on the power used for COP, W.
pub const MIN_POWER: f64 = 1.0;

const COLUMN_NAMES: [&str; 5] = ["constant", "t_load", "t_source", "mdot_load", "mdot_source"];

/// Reference point of a map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapReferences {
    /// W.
    pub q_ref: f64,
    /// W.
    pub p_ref: f64,
    /// K.
    pub t_ref_load: f64,
    /// K.
    pub t_ref_source: f64,
    /// kg/s.
    pub mdot_ref_load: f64,
    /// kg/s.
    pub mdot_ref_source: f64,
}

impl MapReferences {
    pub fn validate(&self) -> Result<(), PlantError> {
        let fields = [
            ("q_ref", self.q_ref),
            ("p_ref", self.p_ref),
            ("t_ref_load", self.t_ref_load),
            ("t_ref_source", self.t_ref_source),
            ("mdot_ref_load", self.mdot_ref_load),
            ("mdot_ref_source", self.mdot_ref_source),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(PlantError::Config(format!(
                    "heat pump {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    fn ratios(&self, t_load: f64, t_source: f64, mdot_load: f64, mdot_source: f64) -> [f64; 5] {
        [
            1.0,
            t_load / self.t_ref_load,
            t_source / self.t_ref_source,
            mdot_load / self.mdot_ref_load,
            mdot_source / self.mdot_ref_source,
        ]
    }
}

/// One operating mode of a heat pump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatPumpMap {
    pub capacity: [f64; 5],
    pub power: [f64; 5],
    pub references: MapReferences,
}

fn dot(a: &[f64; 5], b: &[f64; 5]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl HeatPumpMap {
    /// Load-side heat rate at full load, W, floored at zero.
    pub fn capacity(&self, t_load: f64, t_source: f64, mdot_load: f64, mdot_source: f64) -> f64 {
        let r = self.references.ratios(t_load, t_source, mdot_load, mdot_source);
        (dot(&self.capacity, &r) * self.references.q_ref).max(0.0)
    }

    /// Electric power at full load, W, floored at zero.
    pub fn power(&self, t_load: f64, t_source: f64, mdot_load: f64, mdot_source: f64) -> f64 {
        let r = self.references.ratios(t_load, t_source, mdot_load, mdot_source);
        (dot(&self.power, &r) * self.references.p_ref).max(0.0)
    }

    pub fn cop(&self, t_load: f64, t_source: f64, mdot_load: f64, mdot_source: f64) -> f64 {
        self.capacity(t_load, t_source, mdot_load, mdot_source)
            / self.power(t_load, t_source, mdot_load, mdot_source).max(MIN_POWER)
    }
}

/// A heat pump that runs either way.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReversibleHeatPump {
    pub heating: HeatPumpMap,
    pub cooling: HeatPumpMap,
    /// Fraction of the reference source flow below which the unit stops.
    pub min_flow_fraction: f64,
}

impl ReversibleHeatPump {
    pub fn validate(&self) -> Result<(), PlantError> {
        self.heating.references.validate()?;
        self.cooling.references.validate()?;
        if !(0.0..=1.0).contains(&self.min_flow_fraction) {
            return Err(PlantError::Config(format!(
                "minimum flow fraction {} is outside [0, 1]",
                self.min_flow_fraction
            )));
        }
        Ok(())
    }
}

/// One measured operating point. Temperatures in Kelvin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerformanceRow {
    pub t_load: f64,
    pub t_source: f64,
    pub mdot_load: f64,
    pub mdot_source: f64,
    /// W.
    pub capacity: f64,
    /// W.
    pub power: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FittedMap {
    pub map: HeatPumpMap,
    pub max_relative_residual_capacity: f64,
    pub max_relative_residual_power: f64,
}

fn collinear_columns(v_t: &DMatrix<f64>, singular: &DVector<f64>, tol: f64) -> Vec<&'static str> {
    let mut names = Vec::new();
    for (k, s) in singular.iter().enumerate() {
        if *s > tol {
            continue;
        }
        for (j, name) in COLUMN_NAMES.iter().enumerate() {
            if v_t[(k, j)].abs() > 1e-6 && !names.contains(name) {
                names.push(*name);
            }
        }
    }
    names.sort_by_key(|n| COLUMN_NAMES.iter().position(|c| c == n));
    names
}

/// Least-squares coefficients for capacity and power, fitted separately.
pub fn fit_performance_map(rows: &[PerformanceRow], references: MapReferences) -> Result<FittedMap, PlantError> {
    references.validate()?;
    if rows.len() < 5 {
        return Err(PlantError::Fit(format!(
            "need at least 5 performance rows, got {}",
            rows.len()
        )));
    }
    let n = rows.len();
    let mut a = DMatrix::zeros(n, 5);
    let mut q = DVector::zeros(n);
    let mut p = DVector::zeros(n);
    for (i, row) in rows.iter().enumerate() {
        let r = references.ratios(row.t_load, row.t_source, row.mdot_load, row.mdot_source);
        for j in 0..5 {
            a[(i, j)] = r[j];
        }
        q[i] = row.capacity / references.q_ref;
        p[i] = row.power / references.p_ref;
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = 1e-10 * smax.max(f64::MIN_POSITIVE);
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    if svd.singular_values.iter().any(|s| *s <= tol) {
        let names = collinear_columns(v_t, &svd.singular_values, tol);
        return Err(PlantError::Fit(format!(
            "performance data are rank deficient; collinear columns: {}",
            names.join(", ")
        )));
    }
    let solve = |b: &DVector<f64>| -> Result<[f64; 5], PlantError> {
        let x = svd.solve(b, tol).map_err(|e| PlantError::Fit(e.to_string()))?;
        Ok([x[0], x[1], x[2], x[3], x[4]])
    };
    let cap = solve(&q)?;
    let pow = solve(&p)?;
    let residual = |coef: &[f64; 5], b: &DVector<f64>| -> f64 {
        let x = DVector::from_column_slice(coef);
        let fit = &a * x;
        fit.iter()
            .zip(b.iter())
            .map(|(f, y)| (f - y).abs() / y.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    };
    Ok(FittedMap {
        map: HeatPumpMap {
            capacity: cap,
            power: pow,
            references,
        },
        max_relative_residual_capacity: residual(&cap, &q),
        max_relative_residual_power: residual(&pow, &p),
    })
}

/// Reads `t_load_c,t_source_c,mdot_load,mdot_source,capacity_w,power_w`.
pub fn read_performance_csv<R: Read>(reader: R) -> Result<Vec<PerformanceRow>, PlantError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| PlantError::Input(e.to_string()))?.clone();
    let expected = [
        "t_load_c",
        "t_source_c",
        "mdot_load",
        "mdot_source",
        "capacity_w",
        "power_w",
    ];
    let mut idx = [0usize; 6];
    for (k, name) in expected.iter().enumerate() {
        idx[k] = headers
            .iter()
            .position(|h| h == *name)
            .ok_or_else(|| PlantError::Input(format!("performance map is missing column `{name}`")))?;
    }
    let mut rows = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| PlantError::Input(e.to_string()))?;
        let mut v = [0.0; 6];
        for k in 0..6 {
            let raw = rec.get(idx[k]).unwrap_or("");
            v[k] = raw.parse().map_err(|_| {
                PlantError::Input(format!(
                    "performance map row {}: cannot parse {} `{raw}`",
                    n + 1,
                    expected[k]
                ))
            })?;
        }
        rows.push(PerformanceRow {
            t_load: celsius_to_kelvin(v[0]),
            t_source: celsius_to_kelvin(v[1]),
            mdot_load: v[2],
            mdot_source: v[3],
            capacity: v[4],
            power: v[5],
        });
    }
    Ok(rows)
}

pub fn write_performance_csv<W: Write>(mut w: W, rows: &[PerformanceRow]) -> Result<(), PlantError> {
    let io = |e: std::io::Error| PlantError::Input(e.to_string());
    writeln!(w, "t_load_c,t_source_c,mdot_load,mdot_source,capacity_w,power_w").map_err(io)?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            fmt_num(r.t_load - ZERO_CELSIUS),
            fmt_num(r.t_source - ZERO_CELSIUS),
            fmt_num(r.mdot_load),
            fmt_num(r.mdot_source),
            fmt_num(r.capacity),
            fmt_num(r.power)
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

/// A map described by its reference point and fractional sensitivities.
/// Temperature sensitivities are per kelvin, flow sensitivities per unit
/// flow ratio; entries are `[load temp, source temp, load flow, source flow]`.
///
/// The shipped temperature sensitivities follow a fixed fraction of the
/// Carnot COP. Refrigerant runs 5 K beyond the water temperatures and 8 K
/// below outdoor air in heating, 10 K above it in cooling, so the COP moves by
/// `1/lift` per kelvin of source temperature. Capacity rises about 2.5 %/K with
/// the evaporating temperature in heating and falls 0.5 %/K with the
/// condensing temperature in cooling; power takes up the difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticMap {
    /// W.
    pub q_ref: f64,
    pub cop_ref: f64,
    /// degC.
    pub t_ref_load: f64,
    /// degC.
    pub t_ref_source: f64,
    pub mdot_ref_load: f64,
    pub mdot_ref_source: f64,
    pub capacity_sensitivity: [f64; 4],
    pub power_sensitivity: [f64; 4],
}

impl SyntheticMap {
    pub fn references(&self) -> MapReferences {
        MapReferences {
            q_ref: self.q_ref,
            p_ref: self.q_ref / self.cop_ref,
            t_ref_load: celsius_to_kelvin(self.t_ref_load),
            t_ref_source: celsius_to_kelvin(self.t_ref_source),
            mdot_ref_load: self.mdot_ref_load,
            mdot_ref_source: self.mdot_ref_source,
        }
    }

    /// Coefficients that reproduce the sensitivities and hit the reference
    /// point exactly.
    pub fn map(&self) -> HeatPumpMap {
        let r = self.references();
        let coefficients = |s: &[f64; 4]| {
            let tail = [s[0] * r.t_ref_load, s[1] * r.t_ref_source, s[2], s[3]];
            [1.0 - tail.iter().sum::<f64>(), tail[0], tail[1], tail[2], tail[3]]
        };
        HeatPumpMap {
            capacity: coefficients(&self.capacity_sensitivity),
            power: coefficients(&self.power_sensitivity),
            references: r,
        }
    }

    /// Water-to-water unit in heating: 50 degC supply, 10 degC source.
    pub fn ground_heating(q_ref: f64, mdot_load: f64, mdot_source: f64) -> Self {
        Self {
            q_ref,
            cop_ref: 3.5,
            t_ref_load: 50.0,
            t_ref_source: 10.0,
            mdot_ref_load: mdot_load,
            mdot_ref_source: mdot_source,
            capacity_sensitivity: [-0.005, 0.025, 0.04, 0.04],
            power_sensitivity: [0.012, 0.005, 0.01, 0.01],
        }
    }

    /// Water-to-water unit in cooling: 10 degC supply, 30 degC source.
    pub fn ground_cooling(q_ref: f64, mdot_load: f64, mdot_source: f64) -> Self {
        Self {
            q_ref,
            cop_ref: 5.5,
            t_ref_load: 10.0,
            t_ref_source: 30.0,
            mdot_ref_load: mdot_load,
            mdot_ref_source: mdot_source,
            capacity_sensitivity: [0.02, -0.005, 0.04, 0.04],
            power_sensitivity: [-0.012, 0.0236, 0.01, 0.01],
        }
    }

    /// Air-to-water unit in heating: 50 degC supply, 7 degC outdoor air. The
    /// source flow only gates the enable check; capacity ignores it.
    pub fn air_heating(q_ref: f64, mdot_load: f64, mdot_source: f64) -> Self {
        Self {
            q_ref,
            cop_ref: 2.5,
            t_ref_load: 50.0,
            t_ref_source: 7.0,
            mdot_ref_load: mdot_load,
            mdot_ref_source: mdot_source,
            capacity_sensitivity: [-0.005, 0.025, 0.04, 0.0],
            power_sensitivity: [0.010, 0.007, 0.01, 0.0],
        }
    }

    /// Air-to-water unit in cooling: 10 degC supply, 35 degC outdoor air.
    pub fn air_cooling(q_ref: f64, mdot_load: f64, mdot_source: f64) -> Self {
        Self {
            q_ref,
            cop_ref: 4.5,
            t_ref_load: 10.0,
            t_ref_source: 35.0,
            mdot_ref_load: mdot_load,
            mdot_ref_source: mdot_source,
            capacity_sensitivity: [0.02, -0.005, 0.04, 0.0],
            power_sensitivity: [-0.0086, 0.020, 0.01, 0.0],
        }
    }

    /// Performance rows on a grid around the reference point.
    pub fn sample(&self, load_offsets: &[f64], source_offsets: &[f64], flow_ratios: &[f64]) -> Vec<PerformanceRow> {
        let m = self.map();
        let r = m.references;
        let mut rows = Vec::new();
        for dl in load_offsets {
            for ds in source_offsets {
                for fl in flow_ratios {
                    for fs in flow_ratios {
                        let t_load = r.t_ref_load + dl;
                        let t_source = r.t_ref_source + ds;
                        let (ml, ms) = (r.mdot_ref_load * fl, r.mdot_ref_source * fs);
                        rows.push(PerformanceRow {
                            t_load,
                            t_source,
                            mdot_load: ml,
                            mdot_source: ms,
                            capacity: m.capacity(t_load, t_source, ml, ms),
                            power: m.power(t_load, t_source, ml, ms),
                        });
                    }
                }
            }
        }
        rows
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn refs() -> MapReferences {
        MapReferences {
            q_ref: 100e3,
            p_ref: 25e3,
            t_ref_load: 323.15,
            t_ref_source: 283.15,
            mdot_ref_load: 4.0,
            mdot_ref_source: 5.0,
        }
    }

    fn map(cap: [f64; 5], pow: [f64; 5]) -> HeatPumpMap {
        HeatPumpMap {
            capacity: cap,
            power: pow,
            references: refs(),
        }
    }

    fn rows_from(m: &HeatPumpMap, count: usize) -> Vec<PerformanceRow> {
        let r = m.references;
        (0..count)
            .map(|i| {
                let f = i as f64;
                let t_load = r.t_ref_load + 3.0 * (f * 0.7).sin() * 4.0;
                let t_source = r.t_ref_source + 5.0 * (f * 1.3).cos();
                let ml = r.mdot_ref_load * (0.8 + 0.3 * (f * 2.1).sin());
                let ms = r.mdot_ref_source * (0.7 + 0.25 * (f * 0.45 + 1.0).cos());
                PerformanceRow {
                    t_load,
                    t_source,
                    mdot_load: ml,
                    mdot_source: ms,
                    capacity: m.capacity(t_load, t_source, ml, ms),
                    power: m.power(t_load, t_source, ml, ms),
                }
            })
            .collect()
    }

    #[test]
    fn constant_and_reference_identities() {
        let m = map([1.0, 0.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(m.capacity(300.0, 290.0, 1.0, 2.0), 100e3);
        assert_eq!(m.power(250.0, 310.0, 3.0, 0.0), 25e3);
        let m = map([0.3, 0.4, 0.1, 0.1, 0.1], [0.2, 0.3, 0.2, 0.2, 0.1]);
        let r = refs();
        let at_ref = m.capacity(r.t_ref_load, r.t_ref_source, r.mdot_ref_load, r.mdot_ref_source);
        assert!((at_ref - 100e3).abs() < 1e-9);
        // Doubling T_load adds alpha_2 * Q_ref * (T_load / T_ref_load).
        let t = r.t_ref_load;
        let base = m.capacity(t, r.t_ref_source, r.mdot_ref_load, r.mdot_ref_source);
        let doubled = m.capacity(2.0 * t, r.t_ref_source, r.mdot_ref_load, r.mdot_ref_source);
        assert!((doubled - base - 0.4 * 100e3).abs() < 1e-6);
    }

    #[test]
    fn capacity_is_floored_and_cop_guarded() {
        let m = map([-5.0, 0.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(m.capacity(300.0, 290.0, 1.0, 1.0), 0.0);
        let m = map([1.0, 0.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(m.cop(300.0, 290.0, 1.0, 1.0), 100e3 / MIN_POWER);
    }

    #[test]
    fn round_trip_recovers_coefficients() {
        let truth = map([0.3, 0.4, 0.1, 0.1, 0.1], [0.2, 0.5, -0.1, 0.25, 0.15]);
        let fit = fit_performance_map(&rows_from(&truth, 40), refs()).unwrap();
        for k in 0..5 {
            assert!((fit.map.capacity[k] - truth.capacity[k]).abs() < 1e-9);
            assert!((fit.map.power[k] - truth.power[k]).abs() < 1e-9);
        }
        assert!(fit.max_relative_residual_capacity < 1e-10);
    }

    #[test]
    fn five_rows_interpolate() {
        let truth = map([0.3, 0.4, 0.1, 0.1, 0.1], [0.2, 0.3, 0.2, 0.2, 0.1]);
        let rows = rows_from(&truth, 5);
        let fit = fit_performance_map(&rows, refs()).unwrap();
        assert!(fit.max_relative_residual_capacity < 1e-10);
        assert!(fit.max_relative_residual_power < 1e-10);
    }

    #[test]
    fn reference_only_data_is_rank_deficient() {
        let r = refs();
        let row = PerformanceRow {
            t_load: r.t_ref_load,
            t_source: r.t_ref_source,
            mdot_load: r.mdot_ref_load,
            mdot_source: r.mdot_ref_source,
            capacity: 100e3,
            power: 25e3,
        };
        match fit_performance_map(&[row; 8], r) {
            Err(PlantError::Fit(msg)) => {
                for c in COLUMN_NAMES {
                    assert!(msg.contains(c), "{msg}");
                }
            }
            other => panic!("{other:?}"),
        }
        let truth = map([0.3, 0.4, 0.1, 0.1, 0.1], [0.2, 0.3, 0.2, 0.2, 0.1]);
        let mut rows = rows_from(&truth, 12);
        for row in &mut rows {
            row.mdot_source = r.mdot_ref_source * row.mdot_load / r.mdot_ref_load;
        }
        match fit_performance_map(&rows, r) {
            Err(PlantError::Fit(msg)) => {
                assert!(msg.ends_with("collinear columns: mdot_load, mdot_source"), "{msg}")
            }
            other => panic!("{other:?}"),
        }
        assert!(fit_performance_map(&rows[..4], r).is_err());
    }

    #[test]
    fn synthetic_maps_hit_reference_cop_and_csv_round_trips() {
        let s = SyntheticMap::ground_heating(200e3, 5.0, 6.0);
        let m = s.map();
        let r = m.references;
        let cop = m.cop(r.t_ref_load, r.t_ref_source, r.mdot_ref_load, r.mdot_ref_source);
        assert!((cop - 3.5).abs() < 1e-9);
        // Warmer source raises heating COP.
        assert!(m.cop(r.t_ref_load, r.t_ref_source + 5.0, r.mdot_ref_load, r.mdot_ref_source) > cop);
        let rows = s.sample(&[-5.0, 0.0, 5.0], &[-4.0, 0.0, 6.0], &[0.6, 1.0]);
        let mut buf = Vec::new();
        write_performance_csv(&mut buf, &rows).unwrap();
        let back = read_performance_csv(buf.as_slice()).unwrap();
        let fit = fit_performance_map(&back, r).unwrap();
        for k in 0..5 {
            assert!((fit.map.capacity[k] - m.capacity[k]).abs() < 1e-6);
        }
    }
}
