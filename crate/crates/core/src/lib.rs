//! Desk-scale ocean observing-system simulation toolkit: synthetic
//! SSH/SST truth generation, simulated satellite observation operators,
//! gap-free SSH reconstruction (optimal interpolation and variational),
//! and geostrophic / spectral / eddy-detection evaluation.

pub mod dynamics;
pub mod eddylab;
pub mod truth;
pub mod error;
pub mod evalmetrics;
pub mod grid;
pub mod interp;
pub mod io;
pub mod obs;
pub mod objective;
pub mod track_deriv;
pub mod tracks;

pub use error::{OsseError, Result};
