//! Particle simulation of McKean-Vlasov stochastic differential equations.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod measure;
pub mod model;
pub mod rng;
pub mod scheme;
pub mod verify;

pub use error::{Error, Result};
