//! Random walks in periodic bistochastic environments: generation,
//! spectral analysis, simulation, estimators and exact operator oracles.

pub mod env;
pub mod estimators;
pub mod error;
pub mod generators;
pub mod lattice;
pub mod resolvent;
pub mod rng;
pub mod spectral;
pub mod walker;

pub use env::{decompose, mean_drift, validate, Environment, RateDecomposition, ValidationReport};
pub use error::{Error, Result};
pub use generators::{generate, GeneratorSpec};
pub use lattice::{Direction, Torus};
