//! Quantization-based distributed estimation for bandwidth-constrained sensor
//! networks.
//!
//! A fleet of `K` sensors observes a scalar parameter `θ` through independent
//! noise, quantizes each observation to a handful of bits with a probabilistic
//! (dithered) quantizer, and ships the bits to a fusion center that estimates
//! `θ` from the arithmetic mean of the received messages. This crate provides
//! the full stack for studying and training such systems:
//!
//! - [`model`] — priors, noise models, SNR arithmetic, and synthetic training
//!   data (raw observation pairs or an artificial observation grid).
//! - [`net`] — a small feed-forward network engine with exact gradients and an
//!   Adam optimizer; used for both the probability controllers and the fusion
//!   estimator.
//! - [`quantizer`] — binary, parallel multi-bit, and one-hot multi-bit
//!   probabilistic quantizers, plus the noisy quantization probability `γ(θ)`
//!   in exact, empirical, and grid forms.
//! - [`fusion`] — mean-fusion statistics, one-hot encoding, estimator
//!   application, and closed-form posterior means.
//! - [`bounds`] — conditional laws of the fused statistics, the achievable
//!   MSE lower bounds, Fisher information, and brute-force oracles.
//! - [`training`] — the sequential two-stage scheme: train the quantizer
//!   controller against a bound-derived loss, freeze it, then train the
//!   fusion estimator against the achieved-MSE loss.
//! - [`baseline`] — the sine-controller + maximum-likelihood-fusion reference
//!   (SQMLF) and the `4/(π²K)` reference curve.
//! - [`harness`] — experiment configs, Monte-Carlo evaluation, sweeps over
//!   `K`/SNR/scheme, and CSV/SVG artifact emission.

pub mod baseline;
pub mod bounds;
pub mod error;
pub mod fusion;
pub mod model;
pub mod net;
pub mod quad;
pub mod quantizer;
pub mod rng;

pub use error::{Error, Result};
