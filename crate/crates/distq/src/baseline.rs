//! Analytic reference pipeline: the quarter-sine probability controller with
//! maximum-likelihood fusion, and its Monte-Carlo reference MSE.
//!
//! The sine controller is the closed-form optimum for binary sensors under
//! the uniform prior when observations are clean; its trained counterparts
//! are judged against this pipeline and against the `4/(π²K)` floor it
//! approaches as the fleet grows.

use crate::error::{Error, Result};
use crate::model::{observe, sample_prior, NoiseModel, PriorModel};
use crate::quantizer::{draw_dithers, quantize_binary};
use crate::rng::{derive_seed, Purpose};
use rayon::prelude::*;
use std::f64::consts::PI;

/// Quarter-sine probability controller: `[1 + sin(π x / 2)] / 2`, with the
/// input clamped to [-1, 1] first so out-of-range noisy readings saturate
/// instead of folding back.
pub fn g_sine(x: f64) -> f64 {
    let x = x.clamp(-1.0, 1.0);
    (1.0 + (PI * x / 2.0).sin()) / 2.0
}

/// Derivative of [`g_sine`]: `(π/4) cos(π x / 2)` inside [-1, 1], zero on the
/// clamped flats outside.
pub fn g_sine_derivative(x: f64) -> f64 {
    if !(-1.0..=1.0).contains(&x) {
        return 0.0;
    }
    PI / 4.0 * (PI * x / 2.0).cos()
}

/// Maximum-likelihood fusion for the sine controller: the binomial ML
/// estimate of the response probability is the bit mean itself, so
/// `θ̂ = (2/π) arcsin(2ū − 1)` inverts the controller. Endpoints map to ±1.
pub fn sqmlf_estimate(ubar: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&ubar) {
        return Err(Error::Contract(format!("bit mean {ubar} outside [0, 1]")));
    }
    Ok(2.0 / PI * (2.0 * ubar - 1.0).asin())
}

/// A Monte-Carlo mean-squared-error estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseEstimate {
    pub mse: f64,
    pub stderr: f64,
    pub trials: usize,
}

impl MseEstimate {
    /// Summarize a sample of independent squared errors.
    pub fn from_squared_errors(squared_errors: &[f64]) -> Result<Self> {
        let n = squared_errors.len();
        if n < 2 {
            return Err(Error::Contract("MSE estimate needs at least two trials".into()));
        }
        let mse = squared_errors.iter().sum::<f64>() / n as f64;
        let variance = squared_errors.iter().map(|&e| (e - mse) * (e - mse)).sum::<f64>()
            / (n - 1) as f64;
        let estimate = Self { mse, stderr: (variance / n as f64).sqrt(), trials: n };
        if !estimate.mse.is_finite() || !estimate.stderr.is_finite() {
            return Err(Error::NumericalIntegrity(format!(
                "Monte-Carlo summary is not finite: mse={}, stderr={}",
                estimate.mse, estimate.stderr
            )));
        }
        Ok(estimate)
    }
}

/// Monte-Carlo MSE of the full sine/ML pipeline: each trial draws θ from
/// uniform[-1, 1], gives every sensor an observation `X = θ + noise`, has the
/// sensors quantize `G_sine(X)` with independent dithers, mean-fuses the bits,
/// and inverts the controller.
///
/// Trial `t` keys its θ from `(seed, t)` and its observation and dither
/// streams from trial- and sensor-indexed substreams, so results are
/// deterministic, order-independent, and pair across pipelines that share
/// the seed.
pub fn sqmlf_reference_mse(
    sensors: usize,
    noise: &NoiseModel,
    n_trials: usize,
    seed: u64,
) -> Result<MseEstimate> {
    if sensors == 0 {
        return Err(Error::Contract("reference MSE needs at least one sensor".into()));
    }
    if n_trials < 1000 {
        return Err(Error::Contract(format!(
            "reference MSE needs at least 1000 trials, got {n_trials}"
        )));
    }
    let prior = PriorModel::uniform(-1.0, 1.0)?;
    let thetas = sample_prior(&prior, n_trials, seed)?;
    let squared_errors: Vec<f64> = thetas
        .par_iter()
        .enumerate()
        .map(|(t, &theta)| {
            let obs_seed = derive_seed(seed, Purpose::MonteCarlo, t as u64);
            let xs = observe(noise, theta, sensors, obs_seed)?;
            let mut ones = 0u64;
            for (k, &x) in xs.iter().enumerate() {
                let z = draw_dithers(seed, k as u64, t as u64, 1)[0];
                ones += u64::from(quantize_binary(g_sine(x), z)?);
            }
            let ubar = ones as f64 / sensors as f64;
            let estimate = sqmlf_estimate(ubar)?;
            Ok((estimate - theta) * (estimate - theta))
        })
        .collect::<Result<_>>()?;
    MseEstimate::from_squared_errors(&squared_errors)
}
