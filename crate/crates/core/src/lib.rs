//! Link-level analytics and Monte Carlo verification for RIS-aided NOMA downlinks.

pub mod benchmarks;
pub mod channel;
pub mod closedform;
pub mod error;
pub mod experiment;
pub mod montecarlo;
pub mod specfun;

pub use error::{Error, Result};
