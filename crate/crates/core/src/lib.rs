//! Tilted model-X knockoffs for FDR-controlled variable selection on
//! selected and case-control samples.

pub mod crt;
pub mod error;
pub mod experiment;
pub mod filter;
pub mod knockoff;
pub mod lasso;
pub mod linalg;
pub mod logistic;
pub mod model;
pub mod rng;
pub mod scenario;
pub mod tilt;

pub use error::{Error, Result};
