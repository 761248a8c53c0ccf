//! Finite-horizon tabular MDP laboratory for comparing sim-to-real transfer
//! strategies: exact dynamic programming, fitted Q-iteration oracles,
//! min-eigenvalue exploration design, staged reward-free coverage, the
//! competing transfer protocols, and a reproducible experiment harness.

pub mod dataset;
pub mod design;
pub mod error;
pub mod harness;
pub mod instances;
pub mod mdp;
pub mod policy;
pub mod regression;
pub mod rng;
pub mod transfer;

pub use error::{Error, Result};
