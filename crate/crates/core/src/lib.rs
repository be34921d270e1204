//! Symbol detection for finite-memory and memoryless MIMO channels.
//!
//! The crate pairs classical channel-model-based detectors (Viterbi, BCJR,
//! exhaustive MAP, iterative soft interference cancellation) with their
//! data-driven counterparts (ViterbiNet, BCJRNet, DeepSIC). The data-driven
//! variants keep the structure of the classical algorithm and replace only
//! the channel-dependent computation with a small trained network.
//!
//! Module map:
//!
//! - [`channels`]: constellations, ISI-AWGN / ISI-Poisson / MIMO channel
//!   simulators, dataset generation and CSI perturbation.
//! - [`nn`]: dense MLPs with softmax heads, cross-entropy, Adam training.
//! - [`density`]: one-dimensional Gaussian mixture fitting by EM.
//! - [`detect_model`]: trellis detectors and MIMO detectors that need CSI.
//! - [`detect_ml`]: learned likelihoods and the DeepSIC receiver.
//! - [`harness`]: SER sweeps, oracle suites, config and CSV plumbing.

pub mod channels;
pub mod density;
pub mod detect_ml;
pub mod detect_model;
mod error;
pub mod harness;
pub mod nn;
pub mod rng;

pub use error::{Error, Result};
