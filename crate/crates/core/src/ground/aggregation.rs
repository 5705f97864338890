use std::collections::VecDeque;
use std::f64::consts::PI;

use super::{GFunctionTable, GroundError, GroundProperties};

#[derive(Debug, Clone, Copy)]
struct Cell {
    /// First step index covered.
    start: u64,
    /// Width in steps, always a power of two.
    width: u64,
    /// Mean heat rate over the cell, W/m.
    rate: f64,
}

/// Temporal superposition state with geometrically widening cells.
///
/// Cells are kept newest first. Each push appends a one-step cell; whenever a
/// width class holds more than `cells_per_level` cells its two oldest merge
/// into one cell of double width. Cell boundaries stay on step boundaries so
/// the only approximation is the averaging inside merged cells.
#[derive(Debug, Clone)]
pub struct LoadAggregator {
    dt: f64,
    cells_per_level: usize,
    cells: VecDeque<Cell>,
    steps: u64,
    injected: f64,
}

impl LoadAggregator {
    pub fn new(dt: f64, cells_per_level: usize) -> Result<Self, GroundError> {
        if !(dt > 0.0) || cells_per_level < 2 {
            return Err(GroundError::Domain(format!(
                "aggregation needs dt > 0 and at least 2 cells per level (dt {dt}, cells {cells_per_level})"
            )));
        }
        Ok(Self {
            dt,
            cells_per_level,
            cells: VecDeque::new(),
            steps: 0,
            injected: 0.0,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Elapsed time, s.
    pub fn time(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    /// Records the heat rate (W/m, positive into the ground) of the step that
    /// just ended.
    pub fn push(&mut self, rate: f64, dt: f64) -> Result<(), GroundError> {
        if (dt - self.dt).abs() > 1e-9 * self.dt {
            return Err(GroundError::TimeStep {
                expected: self.dt,
                got: dt,
            });
        }
        self.cells.push_front(Cell {
            start: self.steps,
            width: 1,
            rate,
        });
        self.steps += 1;
        self.injected += rate * self.dt;
        self.merge();
        Ok(())
    }

    fn merge(&mut self) {
        let mut width = 1;
        let mut begin = 0;
        loop {
            let count = self.cells.iter().skip(begin).take_while(|c| c.width == width).count();
            if count <= self.cells_per_level {
                // Lower classes are only disturbed by merges from below.
                break;
            }
            let older = begin + count - 1;
            let a = self.cells[older - 1];
            let b = self.cells[older];
            let merged = Cell {
                start: b.start,
                width: a.width + b.width,
                rate: (a.rate * a.width as f64 + b.rate * b.width as f64) / (a.width + b.width) as f64,
            };
            self.cells.remove(older);
            self.cells[older - 1] = merged;
            begin += count - 2;
            width *= 2;
        }
    }

    /// Energy stored in the cells, J/m.
    pub fn aggregated_energy(&self) -> f64 {
        self.cells.iter().map(|c| c.rate * c.width as f64 * self.dt).sum()
    }

    /// Energy pushed so far, J/m.
    pub fn injected_energy(&self) -> f64 {
        self.injected
    }

    /// Mean borehole-wall temperature at the current time, degC.
    pub fn wall_temperature(&self, g: &GFunctionTable, ground: &GroundProperties) -> f64 {
        ground.undisturbed_temperature + self.temperature_rise(g) / (2.0 * PI * ground.conductivity)
    }

    /// Sum of `rate * (g(age_old) - g(age_new))`, 2 pi k units.
    fn temperature_rise(&self, g: &GFunctionTable) -> f64 {
        let now = self.steps;
        let mut g_new = 0.0;
        let mut sum = 0.0;
        for c in &self.cells {
            let g_old = g.value_at((now - c.start) as f64 * self.dt);
            sum += c.rate * (g_old - g_new);
            g_new = g_old;
        }
        sum
    }
}

/// Wall temperature after every step by direct superposition of the whole
/// history, O(n^2). Reference path for the aggregated scheme.
pub fn direct_wall_temperatures(history: &[f64], dt: f64, g: &GFunctionTable, ground: &GroundProperties) -> Vec<f64> {
    let n = history.len();
    let g_at: Vec<f64> = (0..=n).map(|k| g.value_at(k as f64 * dt)).collect();
    let scale = 1.0 / (2.0 * PI * ground.conductivity);
    (1..=n)
        .map(|step| {
            let mut sum = 0.0;
            let mut prev = 0.0;
            for (i, q) in history[..step].iter().enumerate() {
                sum += (q - prev) * g_at[step - i];
                prev = *q;
            }
            ground.undisturbed_temperature + sum * scale
        })
        .collect()
}
