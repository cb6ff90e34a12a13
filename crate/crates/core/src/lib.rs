//! Deterministic evaluation engine for video repetition counting.

pub mod cli;
pub mod counting;
pub mod error;
pub mod estimator;
pub mod io;
pub mod metrics;
pub mod multispeed;
mod sum;

pub use error::{Error, Result};
