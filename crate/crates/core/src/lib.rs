//! Exact constructions, density functionals and torus dynamics for optimal
//! multiple recurrence.

pub mod error;
pub mod circle;
pub mod exactlin;
pub mod setsynth;
pub mod strip;
pub mod report;
pub mod density;
pub mod sequences;
pub mod torusdyn;

pub use error::{Error, Result};
