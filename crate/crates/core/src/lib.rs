//! Federated-learning simulator and label-distribution leakage toolkit.
//!
//! Clients train a shared model with FedAvg; an honest-but-curious server
//! trains a predictor on dummy clients built from proxy data and uses it to
//! recover each real client's label distribution from the parameters it
//! uploads. The crate also measures how additive gradient noise trades
//! global accuracy against that leakage, and how client models cluster by
//! dominant label in a low-dimensional projection of parameter space.

pub mod analysis;
pub mod attack;
pub mod cli;
pub mod data;
pub mod error;
pub mod federation;
pub mod nn;
pub mod rng;

pub use error::{Error, Result};
