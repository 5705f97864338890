//! Design and simulation toolkit for hybrid ground-source / air-source heat
//! pump district plants.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`load_model`] turns metered building data into benchmark targets and
//!    scales unscaled hourly profiles onto them.
//! 2. [`sizing`] computes required ground-loop lengths with the three-pulse
//!    Kavanaugh-Rafferty method.
//! 3. [`hybrid`] sweeps the cooling shave factor and picks the split with the
//!    lowest 20-year net present cost.
//! 4. [`plant`] verifies a design with a fixed-step dynamic simulation backed
//!    by the transient ground model in [`ground`].

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::excessive_precision)]

pub mod ground;
pub mod hybrid;
pub mod load_model;
pub mod optim;
pub mod plant;
pub mod profile;
pub mod quadrature;
pub mod sizing;
pub mod synth;
pub mod units;

pub use profile::{LoadProfile, Mode, Provenance, HOURS_PER_YEAR};
