use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rayon::prelude::*;

use super::line_source::fls_response;
use super::{GroundError, GroundProperties};

#[derive(Debug, Clone, PartialEq)]
pub struct BorefieldLayout {
    positions: Vec<(f64, f64)>,
    /// Active borehole length H, m.
    pub depth: f64,
    /// Depth of the top of the active length, m.
    pub buried_depth: f64,
    pub borehole_radius: f64,
}

impl BorefieldLayout {
    pub fn new(
        positions: Vec<(f64, f64)>,
        depth: f64,
        buried_depth: f64,
        borehole_radius: f64,
    ) -> Result<Self, GroundError> {
        if positions.is_empty() {
            return Err(GroundError::Layout("no boreholes".into()));
        }
        if !(depth > 0.0) || !(borehole_radius > 0.0) || buried_depth < 0.0 {
            return Err(GroundError::Layout(format!(
                "depth {depth}, buried depth {buried_depth} and radius {borehole_radius} must be positive"
            )));
        }
        for (i, a) in positions.iter().enumerate() {
            for b in &positions[i + 1..] {
                let d = (a.0 - b.0).hypot(a.1 - b.1);
                if d <= 2.0 * borehole_radius {
                    return Err(GroundError::Layout(format!(
                        "boreholes at {a:?} and {b:?} are {d} m apart, closer than one diameter"
                    )));
                }
            }
        }
        Ok(Self {
            positions,
            depth,
            buried_depth,
            borehole_radius,
        })
    }

    /// `count` boreholes on a near-square grid. The grid grows one shell at a
    /// time (a new column, then a new row), so each layout contains every
    /// smaller one.
    pub fn rectangular(
        count: usize,
        spacing: f64,
        depth: f64,
        buried_depth: f64,
        borehole_radius: f64,
    ) -> Result<Self, GroundError> {
        if count == 0 {
            return Err(GroundError::Layout("no boreholes".into()));
        }
        let positions = (0..count)
            .map(|i| {
                let (col, row) = shell_cell(i);
                (col as f64 * spacing, row as f64 * spacing)
            })
            .collect();
        Self::new(positions, depth, buried_depth, borehole_radius)
    }

    pub fn positions(&self) -> &[(f64, f64)] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Distinct center-to-center distances (i != j, ordered pairs) with
    /// their multiplicities, keyed on micrometre-rounded distance.
    pub fn pair_distances(&self) -> Vec<(f64, usize)> {
        let mut map: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
        for (i, a) in self.positions.iter().enumerate() {
            for b in &self.positions[i + 1..] {
                let d = (a.0 - b.0).hypot(a.1 - b.1);
                let e = map.entry((d * 1e6).round() as i64).or_insert((d, 0));
                e.1 += 2;
            }
        }
        map.into_values().collect()
    }

    /// Stable 64-bit FNV-1a hash over the geometry and ground properties.
    pub fn fingerprint(&self, ground: &GroundProperties) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |v: f64| {
            for byte in v.to_bits().to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for (x, y) in &self.positions {
            feed(*x);
            feed(*y);
        }
        for v in [
            self.depth,
            self.buried_depth,
            self.borehole_radius,
            ground.conductivity,
            ground.diffusivity,
        ] {
            feed(v);
        }
        format!("{h:016x}")
    }
}

/// Grid cell of the `i`-th borehole. Shell `s` holds the cells with
/// `max(col, row) == s`: column `s` top-down, then row `s` left to right.
fn shell_cell(i: usize) -> (usize, usize) {
    let s = (i as f64).sqrt() as usize;
    let s = if (s + 1) * (s + 1) <= i { s + 1 } else { s };
    let k = i - s * s;
    if k < s {
        (s, k)
    } else {
        (k - s, s)
    }
}

/// Borefield response factors on a time grid, interpolated linearly in ln t.
#[derive(Debug, Clone, PartialEq)]
pub struct GFunctionTable {
    times: Vec<f64>,
    values: Vec<f64>,
    fingerprint: String,
}

impl GFunctionTable {
    pub fn new(times: Vec<f64>, values: Vec<f64>, fingerprint: String) -> Result<Self, GroundError> {
        if times.is_empty() || times.len() != values.len() {
            return Err(GroundError::Cache(
                "times and values must be non-empty and equal length".into(),
            ));
        }
        if times[0] <= 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(GroundError::Cache(
                "times must be positive and strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(GroundError::Cache("values must be finite and non-negative".into()));
        }
        Ok(Self {
            times,
            values,
            fingerprint,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Response factor at `t` seconds. Zero for `t <= 0`, linear toward zero
    /// below the first tabulated time and flat beyond the last.
    pub fn value_at(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let n = self.times.len();
        if t <= self.times[0] {
            return self.values[0] * t / self.times[0];
        }
        if t >= self.times[n - 1] {
            return self.values[n - 1];
        }
        let i = self.times.partition_point(|&x| x <= t);
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let w = (t / t0).ln() / (t1 / t0).ln();
        self.values[i - 1] + w * (self.values[i] - self.values[i - 1])
    }

    /// Text cache: a `# gfunction <fingerprint>` header then `time value` lines.
    pub fn write_cache<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# gfunction {}", self.fingerprint)?;
        for (t, v) in self.times.iter().zip(&self.values) {
            writeln!(w, "{t:e} {v:e}")?;
        }
        Ok(())
    }

    pub fn read_cache<R: BufRead>(r: R) -> Result<Self, GroundError> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| GroundError::Cache("empty file".into()))?
            .map_err(|e| GroundError::Cache(e.to_string()))?;
        let fingerprint = header
            .strip_prefix("# gfunction ")
            .ok_or_else(|| GroundError::Cache("missing header".into()))?
            .trim()
            .to_string();
        let mut times = Vec::new();
        let mut values = Vec::new();
        for line in lines {
            let line = line.map_err(|e| GroundError::Cache(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace().map(str::parse::<f64>);
            match (parts.next(), parts.next()) {
                (Some(Ok(t)), Some(Ok(v))) => {
                    times.push(t);
                    values.push(v);
                }
                _ => return Err(GroundError::Cache(format!("bad line `{line}`"))),
            }
        }
        Self::new(times, values, fingerprint)
    }
}

/// Geometric time grid from `t_min` to `t_max` with `per_decade` points per decade.
pub fn log_times(t_min: f64, t_max: f64, per_decade: usize) -> Vec<f64> {
    let decades = (t_max / t_min).log10();
    let n = (decades * per_decade as f64).ceil().max(1.0) as usize;
    (0..=n)
        .map(|i| t_min * 10f64.powf(decades * i as f64 / n as f64))
        .collect()
}

/// Field-mean g-function under a uniform heat rate per borehole: self
/// response at the wall radius plus every cross response at its
/// center-to-center distance, averaged over boreholes.
pub fn borefield_gfunction(
    layout: &BorefieldLayout,
    times: &[f64],
    ground: &GroundProperties,
) -> Result<GFunctionTable, GroundError> {
    ground.validate()?;
    let alpha = ground.diffusivity_si();
    let pairs = layout.pair_distances();
    let n = layout.len() as f64;
    let (h, d) = (layout.depth, layout.buried_depth);
    let values: Vec<f64> = times
        .par_iter()
        .map(|&t| {
            let own = fls_response(t, layout.borehole_radius, h, d, alpha);
            let cross: f64 = pairs
                .iter()
                .map(|&(dist, count)| count as f64 * fls_response(t, dist, h, d, alpha))
                .sum();
            own + cross / n
        })
        .collect();
    GFunctionTable::new(times.to_vec(), values, layout.fingerprint(ground))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ground::line_source::{fls_gfunction, BoreholeGeometry};
    use crate::units::days;

    fn grid(count: usize) -> BorefieldLayout {
        BorefieldLayout::rectangular(count, 6.0, 200.0, 5.0, 0.0635).unwrap()
    }

    #[test]
    fn layout_validation() {
        assert!(BorefieldLayout::new(vec![], 200.0, 5.0, 0.06).is_err());
        assert!(BorefieldLayout::new(vec![(0.0, 0.0), (0.1, 0.0)], 200.0, 5.0, 0.06).is_err());
        assert!(BorefieldLayout::new(vec![(0.0, 0.0)], 0.0, 5.0, 0.06).is_err());
        let l = grid(5);
        assert_eq!(l.len(), 5);
        assert_eq!(l.positions()[3], (6.0, 6.0));
        assert_eq!(l.positions()[4], (12.0, 0.0));
        let big = grid(49);
        let mut cells: Vec<_> = big.positions().to_vec();
        cells.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cells.dedup();
        assert_eq!(cells.len(), 49);
        assert!(big.positions().iter().all(|p| p.0 <= 36.0 && p.1 <= 36.0));
    }

    #[test]
    fn single_borehole_matches_fls() {
        let g = GroundProperties::default();
        let times = log_times(3600.0, days(7300.0), 4);
        let table = borefield_gfunction(&grid(1), &times, &g).unwrap();
        let b = BoreholeGeometry {
            length: 200.0,
            buried_depth: 5.0,
            radius: 0.0635,
        };
        for (t, v) in table.times().iter().zip(table.values()) {
            assert_eq!(*v, fls_gfunction(*t, &b, &g));
        }
    }

    #[test]
    fn interaction_raises_long_term_response() {
        let g = GroundProperties::default();
        let t = [days(7300.0)];
        let one = borefield_gfunction(&grid(1), &t, &g).unwrap().values()[0];
        let four = borefield_gfunction(&grid(4), &t, &g).unwrap().values()[0];
        assert!(four > one);
    }

    #[test]
    fn relabeling_is_invariant() {
        let g = GroundProperties::default();
        let times = log_times(3600.0, days(3650.0), 3);
        let a = BorefieldLayout::new(vec![(0.0, 0.0), (6.0, 0.0)], 200.0, 5.0, 0.0635).unwrap();
        let b = BorefieldLayout::new(vec![(6.0, 0.0), (0.0, 0.0)], 200.0, 5.0, 0.0635).unwrap();
        let ta = borefield_gfunction(&a, &times, &g).unwrap();
        let tb = borefield_gfunction(&b, &times, &g).unwrap();
        assert_eq!(ta.values(), tb.values());
    }

    #[test]
    fn values_nondecreasing_in_time_and_count() {
        let g = GroundProperties::default();
        let times = log_times(600.0, days(7300.0), 6);
        let mut prev: Option<GFunctionTable> = None;
        for count in [1, 2, 4, 9] {
            let t = borefield_gfunction(&grid(count), &times, &g).unwrap();
            assert!(t.values().windows(2).all(|w| w[1] >= w[0]));
            assert!(t.values()[0] >= 0.0);
            if let Some(p) = &prev {
                assert!(t.values().iter().zip(p.values()).all(|(a, b)| a >= b));
            }
            prev = Some(t);
        }
    }

    #[test]
    fn interpolation_and_cache_round_trip() {
        let table = GFunctionTable::new(vec![1.0, 10.0, 100.0], vec![1.0, 2.0, 3.0], "abc".into()).unwrap();
        assert_eq!(table.value_at(0.0), 0.0);
        assert_eq!(table.value_at(0.5), 0.5);
        assert!((table.value_at(10f64.powf(1.5)) - 2.5).abs() < 1e-12);
        assert_eq!(table.value_at(1e6), 3.0);
        let mut buf = Vec::new();
        table.write_cache(&mut buf).unwrap();
        let back = GFunctionTable::read_cache(buf.as_slice()).unwrap();
        assert_eq!(back, table);
        assert!(GFunctionTable::read_cache("nope\n".as_bytes()).is_err());
    }
}
