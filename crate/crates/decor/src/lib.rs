//! Decentralized SGD with pairwise-canceling correlated Gaussian noise:
//! a deterministic simulator, a SecRDP/SecLDP privacy accountant with noise
//! calibration, and a privacy-utility experiment harness against the CDP
//! and LDP baselines.
//!
//! Modules:
//! - [`graph`]: topologies, Laplacian spectra, gossip weights.
//! - [`accountant`]: exact and closed-form per-step SecRDP coefficients,
//!   composition/conversion, calibration.
//! - [`noise`]: seeded antisymmetric edge noise and per-user noise.
//! - [`problems`]: least-squares and logistic benchmark objectives.
//! - [`engine`]: the training loop, baselines, stepsize schedules.
//! - [`sweep`]: budget-matched hyperparameter sweeps.
//! - [`cli`]: the `decor` binary surface.

pub mod accountant;
pub mod cli;
pub mod engine;
pub mod graph;
pub mod noise;
pub mod problems;
pub mod rng;
pub mod sweep;
