//! Simulation, likelihood inference and asymptotic checks for the
//! jump-type CIR process
//!
//! ```text
//! dY = (a - bY) dt + σ sqrt(Y) dW + dJ,
//! ```
//!
//! where `J` is a subordinator with Lévy measure `m`.

pub mod affine;
pub mod config;
pub mod error;
pub mod harness;
pub mod inference;
pub mod levy;
pub mod malliavin;
pub mod quad;
pub mod rng;
pub mod runner;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use levy::LevyMeasure;
pub use sim::{CirParams, Criticality, SamplePath, Scheme};
