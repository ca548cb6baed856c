//! Simulator for differentially private wireless federated learning with
//! over-the-air aggregation and Rand-k sparsification.
//!
//! Devices sparsify their local updates with a shared random coordinate set,
//! scale them so every device arrives at the server with the same amplitude β,
//! and transmit simultaneously. The receiver noise of the fading channel is the
//! only privacy noise. The crate exposes every piece of that pipeline as a
//! standalone function plus a deterministic round loop that also runs the
//! DP-FedAvg, FedAvg, and full-dimension wireless baselines.
//!
//! Module map:
//! - [`numerics`]: vectors, clipping, seeded random streams
//! - [`learner`]: synthetic federations, models, local SGD
//! - [`sparsifier`]: Rand-k projection and its exhaustive oracles
//! - [`channel`]: fading gains, superposition, energy accounting
//! - [`privacy`]: sensitivity, Gaussian calibration, amplification, C₂
//! - [`power`]: alignment coefficient rules and the grid oracle
//! - [`orchestrator`]: the round loop for every algorithm
//! - [`analysis`]: convergence-bound evaluation and constant estimation
//! - [`harness`]: config files, CSV/JSON output, sweeps
//! - [`validation`]: oracle and invariant checks with a pass/fail table

// `!(x > 0.0)` is used throughout so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod channel;
pub mod error;
pub mod harness;
pub mod learner;
pub mod numerics;
pub mod orchestrator;
pub mod power;
pub mod privacy;
pub mod sparsifier;
pub mod validation;

pub use error::{Error, Result};
pub use numerics::{ModelVector, RngStream};
