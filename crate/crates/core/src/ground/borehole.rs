use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{GroundError, GroundProperties};
use crate::units::{CP_WATER, RHO_WATER};

/// Single U-tube pipe geometry. Defaults to 1.25" SDR-11 HDPE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipeGeometry {
    /// m.
    pub outer_diameter: f64,
    /// Standard dimension ratio, outer diameter over wall thickness.
    pub sdr: f64,
    /// W/(m K).
    pub pipe_conductivity: f64,
    /// Center-to-center distance between the two legs, m.
    pub shank_spacing: f64,
}

impl Default for PipeGeometry {
    fn default() -> Self {
        Self {
            outer_diameter: 0.042_164,
            sdr: 11.0,
            pipe_conductivity: 0.4,
            shank_spacing: 0.0635,
        }
    }
}

impl PipeGeometry {
    pub fn outer_radius(&self) -> f64 {
        0.5 * self.outer_diameter
    }

    pub fn inner_radius(&self) -> f64 {
        self.outer_radius() - self.outer_diameter / self.sdr
    }

    /// Conduction resistance of one pipe wall, m K/W.
    pub fn wall_resistance(&self) -> f64 {
        (self.outer_radius() / self.inner_radius()).ln() / (2.0 * PI * self.pipe_conductivity)
    }

    fn validate(&self, borehole_radius: f64) -> Result<(), GroundError> {
        let rp = self.outer_radius();
        let xc = 0.5 * self.shank_spacing;
        if !(self.sdr > 2.0) || !(self.pipe_conductivity > 0.0) || !(rp > 0.0) {
            return Err(GroundError::Geometry(format!("invalid pipe {self:?}")));
        }
        if rp >= borehole_radius {
            return Err(GroundError::Geometry(format!(
                "pipe radius {rp} m does not fit in borehole radius {borehole_radius} m"
            )));
        }
        if xc < rp {
            return Err(GroundError::Geometry(format!(
                "legs overlap: half spacing {xc} m < pipe radius {rp} m"
            )));
        }
        if xc + rp > borehole_radius {
            return Err(GroundError::Geometry(format!(
                "legs protrude from the borehole: {xc} + {rp} > {borehole_radius} m"
            )));
        }
        Ok(())
    }
}

/// How the borehole thermal resistance is obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoreholeResistance {
    /// Zeroth-order multipole from the pipe geometry.
    Multipole(PipeGeometry),
    /// User-supplied value, m K/W.
    Fixed(f64),
}

impl Default for BoreholeResistance {
    fn default() -> Self {
        BoreholeResistance::Multipole(PipeGeometry::default())
    }
}

/// Effective fluid-to-wall resistance R_b, m K/W.
pub fn borehole_resistance(ground: &GroundProperties, spec: &BoreholeResistance) -> Result<f64, GroundError> {
    match spec {
        BoreholeResistance::Fixed(rb) if *rb > 0.0 => Ok(*rb),
        BoreholeResistance::Fixed(rb) => Err(GroundError::Geometry(format!("R_b must be positive, got {rb}"))),
        BoreholeResistance::Multipole(pipe) => {
            ground.validate()?;
            let rb = ground.borehole_radius();
            pipe.validate(rb)?;
            let kb = ground.grout_conductivity;
            let sigma = (kb - ground.conductivity) / (kb + ground.conductivity);
            let rp = pipe.outer_radius();
            let xc = 0.5 * pipe.shank_spacing;
            let grout =
                ((rb / rp).ln() + (rb / (2.0 * xc)).ln() + sigma * (rb.powi(4) / (rb.powi(4) - xc.powi(4))).ln())
                    / (4.0 * PI * kb);
            Ok(grout + 0.5 * pipe.wall_resistance())
        }
    }
}

/// Delta-circuit resistances between the two legs and the borehole wall.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaNetwork {
    /// Each leg to the wall, m K/W.
    pub pipe_to_wall: f64,
    /// Leg to leg, m K/W.
    pub pipe_to_pipe: f64,
}

impl DeltaNetwork {
    /// R_b is the two pipe-to-wall legs in parallel.
    pub fn borehole_resistance(&self) -> f64 {
        0.5 * self.pipe_to_wall
    }
}

/// Delta network from the zeroth-order multipole self and mutual terms.
///
/// With a fixed R_b override the wall legs are `2 R_b` and the leg-to-leg
/// resistance still comes from the pipe geometry.
pub fn delta_network(
    ground: &GroundProperties,
    pipe: &PipeGeometry,
    fixed_rb: Option<f64>,
) -> Result<DeltaNetwork, GroundError> {
    ground.validate()?;
    let rb = ground.borehole_radius();
    pipe.validate(rb)?;
    let kb = ground.grout_conductivity;
    let sigma = (kb - ground.conductivity) / (kb + ground.conductivity);
    let rp = pipe.outer_radius();
    let xc = 0.5 * pipe.shank_spacing;
    let r11 =
        ((rb / rp).ln() + sigma * (rb * rb / (rb * rb - xc * xc)).ln()) / (2.0 * PI * kb) + pipe.wall_resistance();
    let r12 = ((rb / (2.0 * xc)).ln() + sigma * (rb * rb / (rb * rb + xc * xc)).ln()) / (2.0 * PI * kb);
    let mut net = DeltaNetwork {
        pipe_to_wall: r11 + r12,
        pipe_to_pipe: (r11 * r11 - r12 * r12) / r12,
    };
    if let Some(v) = fixed_rb {
        if !(v > 0.0) {
            return Err(GroundError::Geometry(format!("R_b must be positive, got {v}")));
        }
        net.pipe_to_wall = 2.0 * v;
    }
    if !(net.pipe_to_pipe > 0.0) || !(net.pipe_to_wall > 0.0) {
        return Err(GroundError::Geometry(format!("non-physical delta network {net:?}")));
    }
    Ok(net)
}

/// Result of one [`BoreholeInternalModel::step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InternalStep {
    pub outlet: f64,
    /// Heat rate into the ground averaged over the borehole length, W/m.
    pub flux: f64,
    /// |in - out - stored - to ground| / max(|terms|), dimensionless.
    pub energy_residual: f64,
}

/// Longest fluid cell allowed to hold a single lumped temperature, m.
const MAX_CELL_LENGTH: f64 = 25.0;

/// Axially discretised U-tube. Segments share one wall temperature; each is
/// split into fluid cells no longer than 25 m holding one lumped temperature
/// per leg. Fluid thermal mass is integrated implicitly and, within a cell,
/// the steady advection-exchange equations are solved exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct BoreholeInternalModel {
    length: f64,
    segments: usize,
    cells_per_segment: usize,
    network: DeltaNetwork,
    /// Fluid heat capacity per metre of one leg, J/(m K).
    capacity_per_meter: f64,
    down: Vec<f64>,
    up: Vec<f64>,
}

struct SubSegment {
    // Scattering coefficients: d_bot = a d_top + b u_bot + e1, u_top = c d_top + d u_bot + e2.
    a: f64,
    b: f64,
    e1: f64,
    c: f64,
    d: f64,
    e2: f64,
    // Reflection below this sub-segment: u_bot = r d_bot + s.
    r: f64,
    s: f64,
    // Affine ODE data used to integrate the profile.
    inv_lambda2_m: [[f64; 2]; 2],
    forcing: [f64; 2],
    len: f64,
    cell: usize,
}

impl BoreholeInternalModel {
    pub fn new(
        segments: usize,
        length: f64,
        network: DeltaNetwork,
        pipe: &PipeGeometry,
        initial_temperature: f64,
    ) -> Result<Self, GroundError> {
        if segments == 0 || !(length > 0.0) {
            return Err(GroundError::Geometry(format!(
                "need at least one segment and positive length (got {segments}, {length})"
            )));
        }
        let ri = pipe.inner_radius();
        let cells_per_segment = ((length / segments as f64 / MAX_CELL_LENGTH).ceil() as usize).max(1);
        let cells = segments * cells_per_segment;
        Ok(Self {
            length,
            segments,
            cells_per_segment,
            network,
            capacity_per_meter: RHO_WATER * CP_WATER * PI * ri * ri,
            down: vec![initial_temperature; cells],
            up: vec![initial_temperature; cells],
        })
    }

    pub fn segments(&self) -> usize {
        self.segments
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Mean downward-leg temperature of each segment, top first.
    pub fn down_temperatures(&self) -> Vec<f64> {
        self.segment_means(&self.down)
    }

    /// Mean upward-leg temperature of each segment, top first.
    pub fn up_temperatures(&self) -> Vec<f64> {
        self.segment_means(&self.up)
    }

    fn segment_means(&self, cells: &[f64]) -> Vec<f64> {
        cells
            .chunks(self.cells_per_segment)
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect()
    }

    /// Advances one step. `wall` holds the borehole-wall temperature of each
    /// segment (top first), `flow` is the mass flow through this borehole.
    pub fn step(&mut self, wall: &[f64], inlet: f64, flow: f64, dt: f64) -> Result<InternalStep, GroundError> {
        let n = self.segments();
        if wall.len() != n {
            return Err(GroundError::Domain(format!(
                "expected {n} wall temperatures, got {}",
                wall.len()
            )));
        }
        if !(flow >= 0.0) || !(dt > 0.0) {
            return Err(GroundError::Domain(format!("flow {flow} must be >= 0 and dt {dt} > 0")));
        }
        let cps = self.cells_per_segment;
        let cells = n * cps;
        let dz = self.length / cells as f64;
        let wall_of = |c: usize| wall[c / cps];
        let ga = 1.0 / self.network.pipe_to_wall;
        let gp = 1.0 / self.network.pipe_to_pipe;
        let kappa = self.capacity_per_meter / dt;
        let big_g = ga + gp + kappa;
        let w = flow * CP_WATER;
        let root = (big_g * big_g - gp * gp).sqrt();
        let old_down = self.down.clone();
        let old_up = self.up.clone();

        let outlet;
        if w == 0.0 || root * self.length / w > 1e5 {
            // No advection: each segment is an isolated 2x2 implicit balance.
            for i in 0..cells {
                let rhs_d = ga * wall_of(i) + kappa * old_down[i];
                let rhs_u = ga * wall_of(i) + kappa * old_up[i];
                let det = big_g * big_g - gp * gp;
                self.down[i] = (big_g * rhs_d + gp * rhs_u) / det;
                self.up[i] = (gp * rhs_d + big_g * rhs_u) / det;
            }
            outlet = self.up[0];
        } else {
            let lambda = root / w;
            let m = [[-big_g / w, gp / w], [-gp / w, big_g / w]];
            let inv_l2 = 1.0 / (lambda * lambda);
            let per_cell = ((lambda * dz / 4.0).ceil() as usize).max(1);
            let len = dz / per_cell as f64;
            let (ch, sh) = ((lambda * len).cosh(), (lambda * len).sinh());
            let mut subs: Vec<SubSegment> = Vec::with_capacity(cells * per_cell);
            for i in 0..cells {
                let forcing = [
                    (ga * wall_of(i) + kappa * old_down[i]) / w,
                    -(ga * wall_of(i) + kappa * old_up[i]) / w,
                ];
                // Phi = cosh I + sinh/lambda M, phi = (sinh/lambda I + (cosh-1)/lambda^2 M) m.
                let phi_m = |r: usize, c: usize| {
                    let id = if r == c { 1.0 } else { 0.0 };
                    ch * id + sh / lambda * m[r][c]
                };
                let int_m = |r: usize, c: usize| {
                    let id = if r == c { 1.0 } else { 0.0 };
                    sh / lambda * id + (ch - 1.0) * inv_l2 * m[r][c]
                };
                let (_, pb, pc, pd) = (phi_m(0, 0), phi_m(0, 1), phi_m(1, 0), phi_m(1, 1));
                let p1 = int_m(0, 0) * forcing[0] + int_m(0, 1) * forcing[1];
                let p2 = int_m(1, 0) * forcing[0] + int_m(1, 1) * forcing[1];
                for _ in 0..per_cell {
                    subs.push(SubSegment {
                        a: 1.0 / pd,
                        b: pb / pd,
                        e1: p1 - pb * p2 / pd,
                        c: -pc / pd,
                        d: 1.0 / pd,
                        e2: -p2 / pd,
                        r: 0.0,
                        s: 0.0,
                        inv_lambda2_m: [
                            [m[0][0] * inv_l2, m[0][1] * inv_l2],
                            [m[1][0] * inv_l2, m[1][1] * inv_l2],
                        ],
                        forcing,
                        len,
                        cell: i,
                    });
                }
            }
            // Bottom-up reflection sweep; the U-bend imposes u = d at the bottom.
            let (mut r, mut s) = (1.0, 0.0);
            for sub in subs.iter_mut().rev() {
                let (rb, sb) = (r, s);
                sub.r = rb;
                sub.s = sb;
                let denom = 1.0 - sub.b * rb;
                r = sub.c + sub.d * rb * sub.a / denom;
                s = sub.d * rb * (sub.b * sb + sub.e1) / denom + sub.d * sb + sub.e2;
            }
            outlet = r * inlet + s;
            // Top-down pass recovers boundary temperatures and segment means.
            let mut sums = vec![[0.0f64; 2]; cells];
            let (mut d_top, mut u_top) = (inlet, outlet);
            for sub in &subs {
                let d_bot = (sub.a * d_top + sub.b * sub.s + sub.e1) / (1.0 - sub.b * sub.r);
                let u_bot = sub.r * d_bot + sub.s;
                // int x dz = M^-1 (x_bot - x_top - m len), with M^-1 = M / lambda^2.
                let v = [
                    d_bot - d_top - sub.forcing[0] * sub.len,
                    u_bot - u_top - sub.forcing[1] * sub.len,
                ];
                let im = &sub.inv_lambda2_m;
                sums[sub.cell][0] += im[0][0] * v[0] + im[0][1] * v[1];
                sums[sub.cell][1] += im[1][0] * v[0] + im[1][1] * v[1];
                d_top = d_bot;
                u_top = u_bot;
            }
            for (i, sum) in sums.iter().enumerate() {
                self.down[i] = sum[0] / dz;
                self.up[i] = sum[1] / dz;
            }
        }

        let to_ground: f64 = (0..cells)
            .map(|i| ga * dz * (self.down[i] + self.up[i] - 2.0 * wall_of(i)))
            .sum();
        let stored: f64 = (0..cells)
            .map(|i| self.capacity_per_meter * dz * (self.down[i] - old_down[i] + self.up[i] - old_up[i]) / dt)
            .sum();
        let advected = w * (inlet - outlet);
        let scale = advected.abs().max(to_ground.abs()).max(stored.abs()).max(1e-12);
        Ok(InternalStep {
            outlet,
            flux: to_ground / self.length,
            energy_residual: (advected - to_ground - stored).abs() / scale,
        })
    }
}
