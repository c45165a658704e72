//! Dual-field, structure-preserving finite elements for 2D incompressible
//! flow and particle-laden gravity currents.

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod femspace;
pub mod io;
pub mod linsolve;
pub mod mesh;
pub mod operators;
pub mod quadrature;
pub mod run;
pub mod sparse;
pub mod stepper;

pub use error::{Error, Result};
