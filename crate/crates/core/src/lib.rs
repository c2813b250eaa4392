//! Hybrid-domain NOMA uplink: SCMA codebooks, Rayleigh channel, message
//! passing detection, group SIC receiver, sum-rate model, alternating power
//! and factor-graph optimization, exhaustive oracle and Monte Carlo drivers.

pub mod channel;
pub mod error;
pub mod hd_receiver;
pub mod mpa;
pub mod optimizer;
pub mod oracle;
pub mod rate;
pub mod scma;
pub mod sim;
pub mod solver;

pub use error::{Error, Result};
