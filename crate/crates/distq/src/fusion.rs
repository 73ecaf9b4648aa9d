//! Fusion-center side: mean-fusion statistics, one-hot encoding, estimator
//! application, and closed-form posterior means used as oracles.
//!
//! The fusion center never sees raw readings — only the arithmetic mean of
//! the received messages (scalar bit mean, per-bit mean vector, or one-hot
//! symbol frequencies). Every estimator therefore consumes a fixed-dimension
//! statistic regardless of how many sensors reported, which is what lets one
//! trained estimator serve any fleet size.

use crate::error::{Error, Result};
use crate::model::PriorModel;
use crate::net::{Activation, Mlp, NetCheckpoint};
use crate::quantizer::{QuantizedMessage, SchemeKind};
use serde::{Deserialize, Serialize};

/// Which mean statistic a fused value represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusedVariant {
    /// Mean of single bits: `ū ∈ {0, 1/K, …, 1}`.
    ScalarMean,
    /// Per-bit means of `M`-bit messages: entries in `{0, 1/K, …, 1}`.
    VectorMean,
    /// One-hot symbol frequencies: entries sum to 1, each a multiple of `1/K`.
    OneHotMean,
}

/// The arithmetic mean of `K` quantized messages, in one of three shapes.
///
/// Entries times the sensor count are exact integers by construction
/// (messages are counted, then divided once).
#[derive(Debug, Clone, PartialEq)]
pub struct FusedStatistic {
    variant: FusedVariant,
    values: Vec<f64>,
    sensors: usize,
}

impl FusedStatistic {
    /// Build a statistic, enforcing the per-variant invariants: every entry
    /// times `sensors` must be an integer count in `[0, sensors]`, and
    /// one-hot frequencies must sum to one.
    pub fn new(variant: FusedVariant, values: Vec<f64>, sensors: usize) -> Result<Self> {
        if sensors == 0 {
            return Err(Error::Contract("fused statistic needs at least one sensor".into()));
        }
        match variant {
            FusedVariant::ScalarMean => {
                if values.len() != 1 {
                    return Err(Error::Contract(format!(
                        "scalar-mean statistic must have one entry, got {}",
                        values.len()
                    )));
                }
            }
            FusedVariant::VectorMean => {
                if values.is_empty() {
                    return Err(Error::Contract("vector-mean statistic must be nonempty".into()));
                }
            }
            FusedVariant::OneHotMean => {
                if values.len() < 2 || !values.len().is_power_of_two() {
                    return Err(Error::Contract(format!(
                        "one-hot mean must cover a power-of-two symbol count, got {}",
                        values.len()
                    )));
                }
            }
        }
        let k = sensors as f64;
        let mut count_total = 0i64;
        for &v in &values {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Contract(format!("fused entry {v} outside [0, 1]")));
            }
            let count = v * k;
            if (count - count.round()).abs() > 1e-9 {
                return Err(Error::Contract(format!(
                    "fused entry {v} times {sensors} sensors is not an integer count"
                )));
            }
            count_total += count.round() as i64;
        }
        if variant == FusedVariant::OneHotMean && count_total != sensors as i64 {
            return Err(Error::Contract(format!(
                "one-hot frequencies account for {count_total} of {sensors} messages"
            )));
        }
        Ok(Self { variant, values, sensors })
    }

    pub fn variant(&self) -> FusedVariant {
        self.variant
    }

    /// The mean values; length 1 (scalar), `M` (vector), or `2^M` (one-hot).
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sensors(&self) -> usize {
        self.sensors
    }

    /// Input dimension an estimator must have to consume this statistic.
    pub fn dimension(&self) -> usize {
        self.values.len()
    }
}

/// One-hot encoding of a symbol: exactly one nonzero entry, at the symbol's
/// index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OneHotVector {
    entries: Vec<u8>,
    index: usize,
}

impl OneHotVector {
    pub fn entries(&self) -> &[u8] {
        &self.entries
    }

    /// Index of the single nonzero entry (the source symbol).
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Input dimension of the fused statistic for a scheme: 1 for binary, `M`
/// for parallel, `2^M` for one-hot.
pub fn fused_input_dim(scheme: SchemeKind) -> usize {
    match scheme {
        SchemeKind::Binary => 1,
        SchemeKind::Parallel { bits } => bits as usize,
        SchemeKind::OneHot { .. } => scheme.symbol_count(),
    }
}

/// Arithmetic mean of the received messages, shaped by scheme: bit mean,
/// per-bit mean vector, or one-hot symbol frequencies.
///
/// Counts are accumulated as integers and divided once, so the result is
/// exact and independent of message order.
pub fn mean_fuse(messages: &[QuantizedMessage], scheme: SchemeKind) -> Result<FusedStatistic> {
    if messages.is_empty() {
        return Err(Error::Contract("cannot fuse an empty message list".into()));
    }
    let bits = scheme.bits();
    for (i, msg) in messages.iter().enumerate() {
        if msg.bit_count() != bits {
            return Err(Error::Contract(format!(
                "message {i} has {} bits but the {} scheme carries {bits}",
                msg.bit_count(),
                scheme.name()
            )));
        }
    }
    let k = messages.len();
    let scale = 1.0 / k as f64;
    match scheme {
        SchemeKind::Binary => {
            let ones: u64 = messages.iter().map(|m| u64::from(m.bits()[0])).sum();
            FusedStatistic::new(FusedVariant::ScalarMean, vec![ones as f64 * scale], k)
        }
        SchemeKind::Parallel { bits } => {
            let mut counts = vec![0u64; bits as usize];
            for msg in messages {
                for (c, &b) in counts.iter_mut().zip(msg.bits()) {
                    *c += u64::from(b);
                }
            }
            let values = counts.iter().map(|&c| c as f64 * scale).collect();
            FusedStatistic::new(FusedVariant::VectorMean, values, k)
        }
        SchemeKind::OneHot { .. } => {
            let mut counts = vec![0u64; scheme.symbol_count()];
            for msg in messages {
                counts[msg.symbol()] += 1;
            }
            let values = counts.iter().map(|&c| c as f64 * scale).collect();
            FusedStatistic::new(FusedVariant::OneHotMean, values, k)
        }
    }
}

/// Re-encode a received `M`-bit message as a one-hot vector over `2^M`
/// symbols: an indicator at the message's symbol index.
pub fn onehot_encode(message: &QuantizedMessage, bits: u32) -> Result<OneHotVector> {
    if message.bit_count() != bits {
        return Err(Error::Contract(format!(
            "message carries {} bits, expected {bits}",
            message.bit_count()
        )));
    }
    let len = 1usize << bits;
    if message.symbol() >= len {
        return Err(Error::Contract(format!(
            "symbol {} out of range for {bits} bits",
            message.symbol()
        )));
    }
    let mut entries = vec![0u8; len];
    entries[message.symbol()] = 1;
    Ok(OneHotVector { entries, index: message.symbol() })
}

/// Apply a fusion estimator to a fused statistic: `θ̂ = F(stat)`.
///
/// The estimator must be a scalar-output, tanh-headed network whose input
/// dimension matches the statistic, so its output always lies in `(-1, 1)`.
/// The same network applies unchanged to statistics from any sensor count.
pub fn estimate(fc_net: &Mlp, stat: &FusedStatistic) -> Result<f64> {
    if fc_net.input_dim() != stat.dimension() {
        return Err(Error::Config(format!(
            "estimator takes {} inputs but the statistic has dimension {}",
            fc_net.input_dim(),
            stat.dimension()
        )));
    }
    if fc_net.output_dim() != 1 {
        return Err(Error::Config(format!(
            "estimator must emit one value, got {}",
            fc_net.output_dim()
        )));
    }
    if fc_net.head() != Activation::Tanh {
        return Err(Error::Config("estimator needs a tanh head".into()));
    }
    Ok(fc_net.forward(stat.values())?[0])
}

/// Posterior mean of θ for each value of a discrete statistic:
/// `E[θ | s_j] = ∫ θ p(s_j|θ) dπ(θ) / ∫ p(s_j|θ) dπ(θ)`.
///
/// `law(θ)` returns `p(s_j | θ)` for every support index `j`. Statistic
/// values the prior never produces (zero marginal) map to the prior mean:
/// they contribute nothing to any MSE, and the prior mean keeps the table
/// odd-symmetric for symmetric setups.
pub fn posterior_mean(
    prior: &PriorModel,
    support_size: usize,
    mut law: impl FnMut(f64) -> Result<Vec<f64>>,
) -> Result<Vec<f64>> {
    if support_size == 0 {
        return Err(Error::Contract("statistic support must be nonempty".into()));
    }
    let mut numerator = vec![0.0; support_size];
    let mut denominator = vec![0.0; support_size];
    for (&theta, &w) in prior.nodes().iter().zip(prior.weights()) {
        let probs = law(theta)?;
        if probs.len() != support_size {
            return Err(Error::Contract(format!(
                "law returned {} probabilities for a support of {support_size}",
                probs.len()
            )));
        }
        for (j, &p) in probs.iter().enumerate() {
            if !p.is_finite() || p < -1e-12 {
                return Err(Error::NumericalIntegrity(format!(
                    "conditional probability {p} at theta={theta}"
                )));
            }
            numerator[j] += w * theta * p;
            denominator[j] += w * p;
        }
    }
    Ok(numerator
        .iter()
        .zip(&denominator)
        .map(|(&num, &den)| if den > 0.0 { num / den } else { prior.mean() })
        .collect())
}

/// Serialized fusion estimator: the statistic scheme it consumes plus the
/// network checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorCheckpoint {
    pub format_version: u32,
    pub scheme: SchemeKind,
    pub net: NetCheckpoint,
}

/// Version tag written into estimator checkpoints.
pub const ESTIMATOR_FORMAT_VERSION: u32 = 1;

/// Check that a network can serve as the fusion estimator for a scheme.
pub fn validate_estimator(scheme: SchemeKind, net: &Mlp) -> Result<()> {
    let dim = fused_input_dim(scheme);
    if net.input_dim() != dim {
        return Err(Error::Config(format!(
            "{} estimator takes a dimension-{dim} statistic, network expects {}",
            scheme.name(),
            net.input_dim()
        )));
    }
    if net.output_dim() != 1 {
        return Err(Error::Config(format!(
            "estimator must emit one value, got {}",
            net.output_dim()
        )));
    }
    if net.head() != Activation::Tanh {
        return Err(Error::Config("estimator needs a tanh head".into()));
    }
    Ok(())
}

/// Snapshot an estimator network together with its scheme.
pub fn estimator_checkpoint(scheme: SchemeKind, net: &Mlp, seed: u64) -> Result<EstimatorCheckpoint> {
    validate_estimator(scheme, net)?;
    Ok(EstimatorCheckpoint {
        format_version: ESTIMATOR_FORMAT_VERSION,
        scheme,
        net: net.to_checkpoint(seed),
    })
}

/// Rebuild an estimator from a checkpoint, re-validating shape and head.
pub fn estimator_from_checkpoint(checkpoint: &EstimatorCheckpoint) -> Result<Mlp> {
    if checkpoint.format_version != ESTIMATOR_FORMAT_VERSION {
        return Err(Error::Config(format!(
            "unsupported estimator checkpoint version {}",
            checkpoint.format_version
        )));
    }
    let net = Mlp::from_checkpoint(&checkpoint.net)?;
    validate_estimator(checkpoint.scheme, &net)?;
    Ok(net)
}

/// Write an estimator checkpoint as pretty JSON.
pub fn save_estimator(path: &std::path::Path, checkpoint: &EstimatorCheckpoint) -> Result<()> {
    let text = serde_json::to_string_pretty(checkpoint)?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Read an estimator checkpoint written by [`save_estimator`].
pub fn load_estimator(path: &std::path::Path) -> Result<EstimatorCheckpoint> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}
