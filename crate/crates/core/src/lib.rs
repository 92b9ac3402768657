//! Adaptive P1/RT0 finite elements for Moreau-Yosida regularized
//! obstacle-type equilibrium problems, with primal-dual gap error estimators.

pub mod adaptivity;
pub mod assembly;
pub mod config;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod fem;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod problems;
pub mod solvers;
pub mod sparse;

pub use error::{Error, Result};
