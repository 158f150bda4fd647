//! Two-slit optical field, energy-flow lines, simulated weak measurements and
//! trajectory reconstruction from per-plane momentum maps.

// Negated comparisons are used on purpose so that NaN fails validity checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod flow;
pub mod grid;
pub mod reconstruct;
pub mod spectral;
pub mod wavefield;
pub mod weakmeas;

pub use config::OpticalConfig;
pub use error::{Error, Result};
pub use grid::{Grid, GridSpec};
pub use wavefield::{PhaseProfile, PlaneField};
