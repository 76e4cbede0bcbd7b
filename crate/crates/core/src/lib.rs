//! Simulation and estimation toolkit for absolute detector calibration with
//! spatially multimode twin beams.
//!
//! - [`model`]: domain types and closed-form moment predictors.
//! - [`simulator`]: deterministic synthetic CCD frame stacks with known ground truth.
//! - [`estimation`]: region statistics, noise-reduction estimators, centre-of-symmetry
//!   search, area scan, cosmic-ray rejection and uncertainty propagation.
//! - [`io`]: binary frame stacks with JSON sidecars, run configs and CSV tables.

pub mod error;
pub mod estimation;
pub mod io;
pub mod model;
pub mod registry;
pub mod scenarios;
pub mod selftest;
pub mod simulator;

pub use error::{Error, Result};
