//! Numerical laboratory for stochastic localization, heat-flow operators and
//! one-dimensional spectral models of log-concave measures.

pub mod checks;
pub mod error;
pub mod heat;
pub mod linalg;
pub mod localization;
pub mod measure;
pub mod quad;
pub mod report;
pub mod rng;
pub mod spectral;
pub mod stats;
pub mod tilted;

pub use error::{Error, Result};
