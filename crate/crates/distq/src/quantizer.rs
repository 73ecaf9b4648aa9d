//! Probabilistic quantizer schemes and the quantization probability γ(θ).
//!
//! Three schemes share one interface. A *binary* quantizer emits one bit with
//! probability `G(x)` given the sensor reading `x`, realized by comparing a
//! uniform dither against the controller output. A *parallel* quantizer runs
//! `M` independent binary quantizers, one per bit. A *one-hot* quantizer maps
//! the reading to a probability vector over all `2^M` symbols and draws the
//! symbol with a single dither.
//!
//! The response probability `γ(θ) = E_X[G(X) | θ]` — the chance of each
//! message conditioned on the latent parameter rather than the noisy reading —
//! comes in three forms: [`gamma_exact`] integrates the controller against the
//! noise with Gauss–Hermite quadrature on a node-doubling ladder and reports
//! whether successive refinements agreed, [`gamma_empirical`] averages the
//! controller over raw observation samples, and [`gamma_grid`] averages it
//! over a fixed observation grid with normalized density weights.

use crate::error::{Error, Result};
use crate::model::{NoiseModel, ObservationGrid};
use crate::net::{Activation, Mlp, NetCheckpoint};
use crate::quad::{gauss_hermite, QuadratureRule};
use crate::rng::{substream, Purpose};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

/// Refinement agreement required of the quadrature ladder before a γ value is
/// reported as converged.
pub const GAMMA_QUADRATURE_TOL: f64 = 1e-8;

/// Node counts of the Gauss–Hermite ladder: start at 65 and double until two
/// successive rungs agree within [`GAMMA_QUADRATURE_TOL`].
pub const GAMMA_NODE_LADDER: [usize; 6] = [65, 130, 260, 520, 1040, 2080];

/// Largest supported message width in bits; keeps `2^M` symbol tables small.
pub const MAX_MESSAGE_BITS: u32 = 16;

static GAMMA_RULES: [OnceLock<QuadratureRule>; GAMMA_NODE_LADDER.len()] =
    [const { OnceLock::new() }; GAMMA_NODE_LADDER.len()];

fn ladder_rule(level: usize) -> &'static QuadratureRule {
    GAMMA_RULES[level].get_or_init(|| gauss_hermite(GAMMA_NODE_LADDER[level]))
}

/// Scheme tag: how many bits a message carries and how they are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case")]
pub enum SchemeKind {
    /// One dithered quantizer emitting a single bit.
    Binary,
    /// `bits` independent dithered quantizers, one per bit.
    Parallel { bits: u32 },
    /// One categorical draw over all `2^bits` symbols.
    #[serde(rename = "onehot")]
    OneHot { bits: u32 },
}

impl SchemeKind {
    /// Message width in bits.
    pub fn bits(&self) -> u32 {
        match *self {
            SchemeKind::Binary => 1,
            SchemeKind::Parallel { bits } | SchemeKind::OneHot { bits } => bits,
        }
    }

    /// Number of distinct symbols a message can take, `2^bits`.
    pub fn symbol_count(&self) -> usize {
        1usize << self.bits()
    }

    /// How many controller networks the scheme carries.
    pub fn controller_count(&self) -> usize {
        match *self {
            SchemeKind::Binary | SchemeKind::OneHot { .. } => 1,
            SchemeKind::Parallel { bits } => bits as usize,
        }
    }

    /// Uniform dithers consumed per quantization.
    pub fn dither_count(&self) -> usize {
        match *self {
            SchemeKind::Binary | SchemeKind::OneHot { .. } => 1,
            SchemeKind::Parallel { bits } => bits as usize,
        }
    }

    /// Stable lowercase name used in result tables and filenames.
    pub fn name(&self) -> &'static str {
        match self {
            SchemeKind::Binary => "binary",
            SchemeKind::Parallel { .. } => "parallel",
            SchemeKind::OneHot { .. } => "onehot",
        }
    }

    fn validate(&self) -> Result<()> {
        let bits = self.bits();
        if bits == 0 {
            return Err(Error::Config("message width must be at least one bit".into()));
        }
        if bits > MAX_MESSAGE_BITS {
            return Err(Error::Config(format!(
                "message width {bits} exceeds the supported maximum {MAX_MESSAGE_BITS}"
            )));
        }
        Ok(())
    }
}

/// One quantized sensor message: its bit vector and the equivalent symbol.
///
/// The symbol is the MSB-first value of the bits: `bits[0]` is the most
/// significant. Both views are kept consistent by construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedMessage {
    bits: Vec<u8>,
    symbol: usize,
}

impl QuantizedMessage {
    /// Build a message from its bit vector (entries must be 0 or 1).
    pub fn from_bits(bits: Vec<u8>) -> Result<Self> {
        let symbol = bits_to_symbol(&bits)?;
        Ok(Self { bits, symbol })
    }

    /// Build a message from a symbol and a bit width.
    pub fn from_symbol(symbol: usize, bits: u32) -> Result<Self> {
        let bits = symbol_to_bits(symbol, bits)?;
        Ok(Self { bits, symbol })
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn symbol(&self) -> usize {
        self.symbol
    }

    pub fn bit_count(&self) -> u32 {
        self.bits.len() as u32
    }
}

/// MSB-first expansion of `symbol` into `bits` bits.
pub fn symbol_to_bits(symbol: usize, bits: u32) -> Result<Vec<u8>> {
    if bits == 0 || bits > MAX_MESSAGE_BITS {
        return Err(Error::Contract(format!("bit width {bits} out of range 1..={MAX_MESSAGE_BITS}")));
    }
    if symbol >= (1usize << bits) {
        return Err(Error::Contract(format!("symbol {symbol} does not fit in {bits} bits")));
    }
    Ok((0..bits).map(|m| ((symbol >> (bits - 1 - m)) & 1) as u8).collect())
}

/// MSB-first value of a bit vector.
pub fn bits_to_symbol(bits: &[u8]) -> Result<usize> {
    if bits.is_empty() || bits.len() > MAX_MESSAGE_BITS as usize {
        return Err(Error::Contract(format!(
            "bit vector length {} out of range 1..={MAX_MESSAGE_BITS}",
            bits.len()
        )));
    }
    let mut symbol = 0usize;
    for &b in bits {
        if b > 1 {
            return Err(Error::Contract(format!("bit value {b} is not 0 or 1")));
        }
        symbol = (symbol << 1) | b as usize;
    }
    Ok(symbol)
}

/// A quantizer scheme together with its controller network(s).
///
/// Immutable once constructed; quantization over sensors and trials can run
/// in parallel against a shared spec.
#[derive(Debug, Clone)]
pub struct QuantizerSpec {
    kind: SchemeKind,
    controllers: Vec<Mlp>,
}

impl QuantizerSpec {
    /// Binary scheme: one scalar controller with a sigmoid head.
    pub fn binary(controller: Mlp) -> Result<Self> {
        require_scalar_sigmoid(&controller, "binary controller")?;
        Ok(Self { kind: SchemeKind::Binary, controllers: vec![controller] })
    }

    /// Parallel scheme: one scalar sigmoid-head controller per bit.
    pub fn parallel(controllers: Vec<Mlp>) -> Result<Self> {
        if controllers.is_empty() {
            return Err(Error::Config("parallel scheme needs at least one controller".into()));
        }
        let kind = SchemeKind::Parallel { bits: controllers.len() as u32 };
        kind.validate()?;
        for (m, controller) in controllers.iter().enumerate() {
            require_scalar_sigmoid(controller, &format!("parallel controller {m}"))?;
        }
        Ok(Self { kind, controllers })
    }

    /// One-hot scheme: one controller with a softmax head over `2^bits` symbols.
    pub fn onehot(bits: u32, controller: Mlp) -> Result<Self> {
        let kind = SchemeKind::OneHot { bits };
        kind.validate()?;
        if controller.input_dim() != 1 {
            return Err(Error::Config(format!(
                "one-hot controller must take a scalar input, got dimension {}",
                controller.input_dim()
            )));
        }
        if controller.output_dim() != kind.symbol_count() {
            return Err(Error::Config(format!(
                "one-hot controller must emit {} symbol probabilities, got {}",
                kind.symbol_count(),
                controller.output_dim()
            )));
        }
        if controller.head() != Activation::Softmax {
            return Err(Error::Config("one-hot controller needs a softmax head".into()));
        }
        Ok(Self { kind, controllers: vec![controller] })
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    pub fn controllers(&self) -> &[Mlp] {
        &self.controllers
    }

    /// Mutable controller access for in-crate training loops. Optimizer
    /// steps preserve shapes, so the constructor validation stays intact.
    pub(crate) fn controllers_mut(&mut self) -> &mut [Mlp] {
        &mut self.controllers
    }

    /// Raw controller response at reading `x`: `[G(x)]` for binary,
    /// per-bit probabilities for parallel, the symbol vector for one-hot.
    pub fn controller_probs(&self, x: f64) -> Result<Vec<f64>> {
        match self.kind {
            SchemeKind::Binary | SchemeKind::OneHot { .. } => self.controllers[0].forward(&[x]),
            SchemeKind::Parallel { .. } => {
                self.controllers.iter().map(|c| c.scalar(x)).collect()
            }
        }
    }

    /// Conditional law of the emitted symbol given the reading `x`,
    /// as a probability vector over all `2^bits` symbols.
    pub fn symbol_probs(&self, x: f64) -> Result<Vec<f64>> {
        match self.kind {
            SchemeKind::Binary => {
                let g = self.controllers[0].scalar(x)?;
                Ok(vec![1.0 - g, g])
            }
            SchemeKind::Parallel { .. } => {
                let bit_probs = self.controller_probs(x)?;
                embed_bit_probs(&bit_probs)
            }
            SchemeKind::OneHot { .. } => self.controllers[0].forward(&[x]),
        }
    }

    /// Quantize a reading with caller-supplied dithers, one per
    /// [`SchemeKind::dither_count`] slot.
    pub fn quantize_with_dithers(&self, x: f64, dithers: &[f64]) -> Result<QuantizedMessage> {
        let needed = self.kind.dither_count();
        if dithers.len() != needed {
            return Err(Error::Contract(format!(
                "{} scheme needs {needed} dithers, got {}",
                self.kind.name(),
                dithers.len()
            )));
        }
        match self.kind {
            SchemeKind::Binary => {
                let g = self.controllers[0].scalar(x)?;
                QuantizedMessage::from_bits(vec![quantize_binary(g, dithers[0])?])
            }
            SchemeKind::Parallel { .. } => {
                let mut bits = Vec::with_capacity(self.controllers.len());
                for (controller, &z) in self.controllers.iter().zip(dithers) {
                    bits.push(quantize_binary(controller.scalar(x)?, z)?);
                }
                QuantizedMessage::from_bits(bits)
            }
            SchemeKind::OneHot { bits } => {
                let probs = self.controllers[0].forward(&[x])?;
                let symbol = quantize_onehot_symbol(&probs, dithers[0])?;
                QuantizedMessage::from_symbol(symbol, bits)
            }
        }
    }

    /// Snapshot the scheme and all controller parameters.
    pub fn to_checkpoint(&self, seed: u64) -> QuantizerCheckpoint {
        QuantizerCheckpoint {
            format_version: QUANTIZER_FORMAT_VERSION,
            scheme: self.kind,
            controllers: self.controllers.iter().map(|c| c.to_checkpoint(seed)).collect(),
        }
    }

    /// Rebuild a spec from a checkpoint, re-validating every shape.
    pub fn from_checkpoint(checkpoint: &QuantizerCheckpoint) -> Result<Self> {
        if checkpoint.format_version != QUANTIZER_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported quantizer checkpoint version {}",
                checkpoint.format_version
            )));
        }
        if checkpoint.controllers.len() != checkpoint.scheme.controller_count() {
            return Err(Error::Config(format!(
                "{} scheme expects {} controllers, checkpoint has {}",
                checkpoint.scheme.name(),
                checkpoint.scheme.controller_count(),
                checkpoint.controllers.len()
            )));
        }
        let nets: Vec<Mlp> = checkpoint
            .controllers
            .iter()
            .map(Mlp::from_checkpoint)
            .collect::<Result<_>>()?;
        match checkpoint.scheme {
            SchemeKind::Binary => Self::binary(nets.into_iter().next().expect("one controller")),
            SchemeKind::Parallel { .. } => Self::parallel(nets),
            SchemeKind::OneHot { bits } => {
                Self::onehot(bits, nets.into_iter().next().expect("one controller"))
            }
        }
    }
}

fn require_scalar_sigmoid(controller: &Mlp, role: &str) -> Result<()> {
    if controller.input_dim() != 1 || controller.output_dim() != 1 {
        return Err(Error::Config(format!(
            "{role} must map a scalar to a scalar, got {}→{}",
            controller.input_dim(),
            controller.output_dim()
        )));
    }
    if controller.head() != Activation::Sigmoid {
        return Err(Error::Config(format!("{role} needs a sigmoid head")));
    }
    Ok(())
}

/// Serialized quantizer: scheme tag plus one network checkpoint per controller.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuantizerCheckpoint {
    pub format_version: u32,
    pub scheme: SchemeKind,
    pub controllers: Vec<NetCheckpoint>,
}

/// Version tag written into quantizer checkpoints.
pub const QUANTIZER_FORMAT_VERSION: u32 = 1;

/// Write a quantizer checkpoint as pretty JSON.
pub fn save_quantizer(path: &std::path::Path, checkpoint: &QuantizerCheckpoint) -> Result<()> {
    let text = serde_json::to_string_pretty(checkpoint)?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Read a quantizer checkpoint written by [`save_quantizer`].
pub fn load_quantizer(path: &std::path::Path) -> Result<QuantizerCheckpoint> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Dithered binary quantization: emit 1 exactly when the dither falls below
/// the controller output, so that `P(bit = 1 | x) = g_of_x` over uniform
/// dithers. Ties (`z == g`) emit 0.
pub fn quantize_binary(g_of_x: f64, z: f64) -> Result<u8> {
    if !(0.0..=1.0).contains(&g_of_x) {
        return Err(Error::Contract(format!("controller output {g_of_x} outside [0, 1]")));
    }
    if !(0.0..1.0).contains(&z) {
        return Err(Error::Contract(format!("dither {z} outside [0, 1)")));
    }
    Ok(u8::from(z < g_of_x))
}

/// Categorical draw from a probability vector: returns the symbol `m` whose
/// cumulative sub-interval `[Σ_{j<m} p_j, Σ_{j≤m} p_j)` contains the dither.
pub fn quantize_onehot_symbol(probs: &[f64], z: f64) -> Result<usize> {
    if probs.is_empty() {
        return Err(Error::Contract("empty probability vector".into()));
    }
    if !(0.0..1.0).contains(&z) {
        return Err(Error::Contract(format!("dither {z} outside [0, 1)")));
    }
    let mut total = 0.0;
    for &p in probs {
        if !p.is_finite() || p < -1e-12 {
            return Err(Error::Contract(format!("invalid symbol probability {p}")));
        }
        total += p;
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Contract(format!("symbol probabilities sum to {total}, expected 1")));
    }
    let mut acc = 0.0;
    for (m, &p) in probs.iter().enumerate() {
        acc += p.max(0.0);
        if z < acc {
            return Ok(m);
        }
    }
    // The cumulative sum fell a rounding error short of 1; the dither
    // belongs to the final interval.
    Ok(probs.len() - 1)
}

/// Quantize with a parallel spec, drawing one independent dither per bit from
/// the seed's dither stream.
pub fn quantize_parallel(spec: &QuantizerSpec, x: f64, seed: u64) -> Result<QuantizedMessage> {
    match spec.kind() {
        SchemeKind::Parallel { .. } => {
            let dithers = draw_dithers(seed, 0, 0, spec.kind().dither_count());
            spec.quantize_with_dithers(x, &dithers)
        }
        other => Err(Error::Contract(format!(
            "quantize_parallel needs a parallel spec, got {}",
            other.name()
        ))),
    }
}

/// Quantize with a one-hot spec and an explicit dither.
pub fn quantize_onehot(spec: &QuantizerSpec, x: f64, z: f64) -> Result<QuantizedMessage> {
    match spec.kind() {
        SchemeKind::OneHot { .. } => spec.quantize_with_dithers(x, &[z]),
        other => Err(Error::Contract(format!(
            "quantize_onehot needs a one-hot spec, got {}",
            other.name()
        ))),
    }
}

/// Uniform dithers for one quantization, counter-keyed by `(sensor, trial)`:
/// the `m`-th entry is the dither for bit `m`. Disjoint coordinates give
/// independent streams, so sensors and trials can be processed in parallel.
pub fn draw_dithers(seed: u64, sensor: u64, trial: u64, count: usize) -> Vec<f64> {
    let mut rng = substream(seed, Purpose::Dither, sensor, trial);
    (0..count).map(|_| rng.random::<f64>()).collect()
}

/// Product-form symbol law of independent bits: entry `s` is
/// `Π_m p_m^{b_m} (1 − p_m)^{1 − b_m}` with `b` the MSB-first expansion of `s`.
///
/// This is exactly the conditional symbol law of a parallel quantizer given
/// the reading, and embeds a parallel scheme into the one-hot symbol space.
pub fn embed_bit_probs(bit_probs: &[f64]) -> Result<Vec<f64>> {
    if bit_probs.is_empty() || bit_probs.len() > MAX_MESSAGE_BITS as usize {
        return Err(Error::Contract(format!(
            "bit probability vector length {} out of range 1..={MAX_MESSAGE_BITS}",
            bit_probs.len()
        )));
    }
    for &p in bit_probs {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Contract(format!("bit probability {p} outside [0, 1]")));
        }
    }
    let m = bit_probs.len();
    let mut law = Vec::with_capacity(1 << m);
    for symbol in 0..(1usize << m) {
        let mut prob = 1.0;
        for (i, &p) in bit_probs.iter().enumerate() {
            let bit_set = (symbol >> (m - 1 - i)) & 1 == 1;
            prob *= if bit_set { p } else { 1.0 - p };
        }
        law.push(prob);
    }
    Ok(law)
}

/// A γ(θ) evaluation together with its quadrature diagnostics.
///
/// `values` holds one probability for a scalar response, per-bit response
/// probabilities for a parallel spec, or the per-symbol vector for one-hot.
/// `converged` reports whether the final two ladder rungs agreed within
/// [`GAMMA_QUADRATURE_TOL`]; `gap` is their sup-norm difference and `nodes`
/// the node count of the reported rung. Noiseless evaluations are exact and
/// always converged.
#[derive(Debug, Clone)]
pub struct GammaEstimate {
    pub values: Vec<f64>,
    pub converged: bool,
    pub gap: f64,
    pub nodes: usize,
}

impl GammaEstimate {
    /// Scalar view for single-probability responses.
    pub fn scalar(&self) -> f64 {
        self.values[0]
    }

    /// Return the values, or an error if the quadrature ladder never settled.
    pub fn require_converged(self) -> Result<Vec<f64>> {
        if self.converged {
            Ok(self.values)
        } else {
            Err(Error::QuadratureNonConvergence(format!(
                "response-probability quadrature still moving by {:.3e} (> {GAMMA_QUADRATURE_TOL:.0e}) at {} nodes",
                self.gap, self.nodes
            )))
        }
    }
}

/// Exact response probability of a spec's controllers at `theta`:
/// `γ(θ)` for binary, `(γ_m(θ))_m` for parallel, `(γ_l(θ))_l` for one-hot.
pub fn gamma_exact(spec: &QuantizerSpec, noise: &NoiseModel, theta: f64) -> Result<GammaEstimate> {
    gamma_ladder(noise, theta, |x| spec.controller_probs(x))
}

/// [`gamma_exact`] that fails instead of flagging when the ladder does not
/// converge.
pub fn gamma_exact_strict(
    spec: &QuantizerSpec,
    noise: &NoiseModel,
    theta: f64,
) -> Result<Vec<f64>> {
    gamma_exact(spec, noise, theta)?.require_converged()
}

/// Exact response probability of an arbitrary scalar controller `g`.
pub fn gamma_from_fn(
    mut g: impl FnMut(f64) -> f64,
    noise: &NoiseModel,
    theta: f64,
) -> Result<GammaEstimate> {
    gamma_ladder(noise, theta, |x| {
        let v = g(x);
        check_probability(v)?;
        Ok(vec![v])
    })
}

/// Exact response probabilities of an arbitrary vector controller `g`.
pub fn gamma_vec_from_fn(
    mut g: impl FnMut(f64) -> Vec<f64>,
    noise: &NoiseModel,
    theta: f64,
) -> Result<GammaEstimate> {
    gamma_ladder(noise, theta, |x| {
        let v = g(x);
        for &p in &v {
            check_probability(p)?;
        }
        Ok(v)
    })
}

fn check_probability(v: f64) -> Result<()> {
    if !v.is_finite() || !(-1e-12..=1.0 + 1e-12).contains(&v) {
        return Err(Error::Contract(format!("controller response {v} outside [0, 1]")));
    }
    Ok(())
}

fn gamma_ladder(
    noise: &NoiseModel,
    theta: f64,
    mut probs: impl FnMut(f64) -> Result<Vec<f64>>,
) -> Result<GammaEstimate> {
    if !theta.is_finite() {
        return Err(Error::NumericDomain(format!("non-finite theta {theta}")));
    }
    if noise.is_noiseless() {
        let values = clamp_probs(probs(theta)?);
        return Ok(GammaEstimate { values, converged: true, gap: 0.0, nodes: 0 });
    }
    let sigma = noise.sigma();
    let mut eval = |level: usize| -> Result<Vec<f64>> {
        let rule = ladder_rule(level);
        let scale = std::f64::consts::PI.sqrt();
        let mut acc: Option<Vec<f64>> = None;
        for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
            let x = theta + std::f64::consts::SQRT_2 * sigma * t;
            let v = probs(x)?;
            match &mut acc {
                None => acc = Some(v.iter().map(|p| w * p).collect()),
                Some(acc) => {
                    if v.len() != acc.len() {
                        return Err(Error::Contract(
                            "controller response dimension changed across readings".into(),
                        ));
                    }
                    for (a, p) in acc.iter_mut().zip(&v) {
                        *a += w * p;
                    }
                }
            }
        }
        let mut values = acc.ok_or_else(|| Error::Contract("empty quadrature rule".into()))?;
        for v in &mut values {
            *v /= scale;
            if !v.is_finite() {
                return Err(Error::NumericalIntegrity(format!(
                    "quadrature produced non-finite response probability at theta={theta}"
                )));
            }
        }
        Ok(values)
    };

    let mut prev = eval(0)?;
    let mut gap = f64::INFINITY;
    for level in 1..GAMMA_NODE_LADDER.len() {
        let cur = eval(level)?;
        gap = prev
            .iter()
            .zip(&cur)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        prev = cur;
        if gap <= GAMMA_QUADRATURE_TOL {
            return Ok(GammaEstimate {
                values: clamp_probs(prev),
                converged: true,
                gap,
                nodes: GAMMA_NODE_LADDER[level],
            });
        }
    }
    Ok(GammaEstimate {
        values: clamp_probs(prev),
        converged: false,
        gap,
        nodes: *GAMMA_NODE_LADDER.last().expect("non-empty ladder"),
    })
}

fn clamp_probs(mut values: Vec<f64>) -> Vec<f64> {
    for v in &mut values {
        *v = v.clamp(0.0, 1.0);
    }
    values
}

/// Sample-mean response probability of a scalar controller over raw
/// observations: `(1/M_obs) Σ_m G(x_m)`.
pub fn gamma_empirical(controller: &Mlp, observations: &[f64]) -> Result<f64> {
    if observations.is_empty() {
        return Err(Error::Contract("no observations to average controller over".into()));
    }
    let mut sum = 0.0;
    for &x in observations {
        sum += controller.scalar(x)?;
    }
    Ok(sum / observations.len() as f64)
}

/// Sample-mean response of a vector controller over raw observations.
pub fn gamma_empirical_vec(controller: &Mlp, observations: &[f64]) -> Result<Vec<f64>> {
    if observations.is_empty() {
        return Err(Error::Contract("no observations to average controller over".into()));
    }
    let mut sum = vec![0.0; controller.output_dim()];
    for &x in observations {
        let v = controller.forward(&[x])?;
        for (s, p) in sum.iter_mut().zip(&v) {
            *s += p;
        }
    }
    let n = observations.len() as f64;
    for s in &mut sum {
        *s /= n;
    }
    Ok(sum)
}

/// Grid response probability of a scalar controller:
/// `Σ_x G(x) w(x|θ)` with density weights normalized over the grid.
pub fn gamma_grid(
    controller: &Mlp,
    grid: &ObservationGrid,
    noise: &NoiseModel,
    theta: f64,
) -> Result<f64> {
    let weights = grid.density_weights(noise, theta)?;
    let mut sum = 0.0;
    for (&x, &w) in grid.nodes().iter().zip(&weights) {
        sum += controller.scalar(x)? * w;
    }
    Ok(sum)
}

/// Grid response of a vector controller with normalized density weights.
pub fn gamma_grid_vec(
    controller: &Mlp,
    grid: &ObservationGrid,
    noise: &NoiseModel,
    theta: f64,
) -> Result<Vec<f64>> {
    let weights = grid.density_weights(noise, theta)?;
    let mut sum = vec![0.0; controller.output_dim()];
    for (&x, &w) in grid.nodes().iter().zip(&weights) {
        let v = controller.forward(&[x])?;
        for (s, p) in sum.iter_mut().zip(&v) {
            *s += w * p;
        }
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_obs_grid, observe};
    use crate::net::init_mlp;
    use crate::rng::stream;
    use approx::assert_abs_diff_eq;

    /// Single-layer scalar sigmoid net with constant output σ(bias).
    fn constant_sigmoid(bias: f64) -> Mlp {
        Mlp::from_parts(&[1, 1], &[Activation::Sigmoid], vec![vec![0.0]], vec![vec![bias]])
            .expect("valid shape")
    }

    /// Analytic controller (tanh hidden layer): the quadrature ladder
    /// converges at its first refinement for these, so exact-γ comparisons
    /// stay fast and strict.
    fn smooth_controller(seed: u64) -> Mlp {
        init_mlp(&[1, 8, 1], &[Activation::Tanh, Activation::Sigmoid], seed).expect("valid shape")
    }

    #[test]
    fn scheme_kind_reports_shape() {
        let binary = SchemeKind::Binary;
        assert_eq!(binary.bits(), 1);
        assert_eq!(binary.symbol_count(), 2);
        assert_eq!(binary.controller_count(), 1);
        assert_eq!(binary.name(), "binary");

        let parallel = SchemeKind::Parallel { bits: 2 };
        assert_eq!(parallel.bits(), 2);
        assert_eq!(parallel.symbol_count(), 4);
        assert_eq!(parallel.controller_count(), 2);
        assert_eq!(parallel.dither_count(), 2);
        assert_eq!(parallel.name(), "parallel");

        let onehot = SchemeKind::OneHot { bits: 3 };
        assert_eq!(onehot.bits(), 3);
        assert_eq!(onehot.symbol_count(), 8);
        assert_eq!(onehot.controller_count(), 1);
        assert_eq!(onehot.dither_count(), 1);
        assert_eq!(onehot.name(), "onehot");
    }

    #[test]
    fn binary_quantizer_matches_hand_values() {
        assert_eq!(quantize_binary(0.5, 0.3).unwrap(), 1);
        for z in [0.0, 0.5, 0.999_999] {
            assert_eq!(quantize_binary(1.0, z).unwrap(), 1);
        }
        for z in [0.0, 0.3, 0.9] {
            assert_eq!(quantize_binary(0.0, z).unwrap(), 0);
        }
        // Tie: the dither does not fall strictly below the output.
        assert_eq!(quantize_binary(0.4, 0.4).unwrap(), 0);
    }

    #[test]
    fn binary_quantizer_rejects_out_of_range() {
        for (g, z) in [(-0.1, 0.5), (1.1, 0.5), (0.5, 1.0), (0.5, -0.2)] {
            let err = quantize_binary(g, z).unwrap_err();
            assert_eq!(err.category(), "contract");
        }
    }

    #[test]
    fn binary_quantizer_hits_target_frequency() {
        let mut rng = stream(977, Purpose::Dither, 0);
        let trials = 100_000;
        let mut ones = 0u64;
        for _ in 0..trials {
            let z: f64 = rng.random();
            ones += u64::from(quantize_binary(0.7, z).unwrap());
        }
        let freq = ones as f64 / trials as f64;
        assert!((freq - 0.7).abs() < 0.01, "frequency {freq}");
    }

    #[test]
    fn bit_symbol_conversions_are_msb_first() {
        assert_eq!(symbol_to_bits(2, 2).unwrap(), vec![1, 0]);
        assert_eq!(symbol_to_bits(5, 3).unwrap(), vec![1, 0, 1]);
        assert_eq!(symbol_to_bits(0, 2).unwrap(), vec![0, 0]);
        assert_eq!(bits_to_symbol(&[1, 0]).unwrap(), 2);
        for m in 1..=4u32 {
            for symbol in 0..(1usize << m) {
                let bits = symbol_to_bits(symbol, m).unwrap();
                assert_eq!(bits_to_symbol(&bits).unwrap(), symbol);
                let msg = QuantizedMessage::from_symbol(symbol, m).unwrap();
                assert_eq!(msg.symbol(), symbol);
                assert_eq!(msg.bits(), &bits[..]);
                assert_eq!(msg.bit_count(), m);
            }
        }
        assert_eq!(bits_to_symbol(&[2, 0]).unwrap_err().category(), "contract");
        assert_eq!(symbol_to_bits(4, 2).unwrap_err().category(), "contract");
        assert_eq!(bits_to_symbol(&[]).unwrap_err().category(), "contract");
    }

    #[test]
    fn parallel_saturated_controllers_fix_the_message() {
        let spec =
            QuantizerSpec::parallel(vec![constant_sigmoid(1000.0), constant_sigmoid(1000.0)])
                .unwrap();
        let msg = quantize_parallel(&spec, 0.2, 7).unwrap();
        assert_eq!(msg.bits(), &[1, 1]);
        assert_eq!(msg.symbol(), 3);

        let spec =
            QuantizerSpec::parallel(vec![constant_sigmoid(1000.0), constant_sigmoid(-1000.0)])
                .unwrap();
        for seed in [1u64, 2, 3, 99] {
            let msg = quantize_parallel(&spec, -0.4, seed).unwrap();
            assert_eq!(msg.bits(), &[1, 0], "seed {seed}");
            assert_eq!(msg.symbol(), 2);
        }
    }

    #[test]
    fn parallel_bits_factorize_at_fixed_reading() {
        let spec =
            QuantizerSpec::parallel(vec![smooth_controller(11), smooth_controller(12)]).unwrap();
        let x = 0.4;
        let trials = 100_000u64;
        let mut joint = [[0u64; 2]; 2];
        for trial in 0..trials {
            let dithers = draw_dithers(505, 0, trial, 2);
            let msg = spec.quantize_with_dithers(x, &dithers).unwrap();
            joint[msg.bits()[0] as usize][msg.bits()[1] as usize] += 1;
        }
        let n = trials as f64;
        let p1 = (joint[1][0] + joint[1][1]) as f64 / n;
        let p2 = (joint[0][1] + joint[1][1]) as f64 / n;
        for b1 in 0..2 {
            for b2 in 0..2 {
                let joint_freq = joint[b1][b2] as f64 / n;
                let m1 = if b1 == 1 { p1 } else { 1.0 - p1 };
                let m2 = if b2 == 1 { p2 } else { 1.0 - p2 };
                assert!(
                    (joint_freq - m1 * m2).abs() < 0.01,
                    "cell ({b1},{b2}): joint {joint_freq} vs product {}",
                    m1 * m2
                );
            }
        }
    }

    #[test]
    fn two_sensors_with_shared_spec_factorize() {
        // Conditionally on θ (noiseless reading = θ), messages from two
        // sensors with independent dither streams are independent.
        let spec = QuantizerSpec::binary(smooth_controller(21)).unwrap();
        let theta = -0.3;
        let trials = 100_000u64;
        let mut joint = [[0u64; 2]; 2];
        for trial in 0..trials {
            let d0 = draw_dithers(606, 0, trial, 1);
            let d1 = draw_dithers(606, 1, trial, 1);
            let u0 = spec.quantize_with_dithers(theta, &d0).unwrap().symbol();
            let u1 = spec.quantize_with_dithers(theta, &d1).unwrap().symbol();
            joint[u0][u1] += 1;
        }
        let n = trials as f64;
        let p0 = (joint[1][0] + joint[1][1]) as f64 / n;
        let p1 = (joint[0][1] + joint[1][1]) as f64 / n;
        for (b0, row) in joint.iter().enumerate() {
            for (b1, &count) in row.iter().enumerate() {
                let joint_freq = count as f64 / n;
                let m0 = if b0 == 1 { p0 } else { 1.0 - p0 };
                let m1 = if b1 == 1 { p1 } else { 1.0 - p1 };
                assert!((joint_freq - m0 * m1).abs() < 0.01);
            }
        }
    }

    #[test]
    fn onehot_deterministic_vectors_pick_their_symbol() {
        for z in [0.0, 0.3, 0.9] {
            assert_eq!(quantize_onehot_symbol(&[1.0, 0.0, 0.0, 0.0], z).unwrap(), 0);
            assert_eq!(quantize_onehot_symbol(&[0.0, 0.0, 1.0, 0.0], z).unwrap(), 2);
        }
        let msg = QuantizedMessage::from_symbol(2, 2).unwrap();
        assert_eq!(msg.bits(), &[1, 0]);

        // Spec-level: a softmax head saturated on symbol 2.
        let net = Mlp::from_parts(
            &[1, 4],
            &[Activation::Softmax],
            vec![vec![0.0, 0.0, 0.0, 0.0]],
            vec![vec![0.0, 0.0, 50.0, 0.0]],
        )
        .unwrap();
        let spec = QuantizerSpec::onehot(2, net).unwrap();
        for z in [0.1, 0.5, 0.9] {
            let msg = quantize_onehot(&spec, 0.7, z).unwrap();
            assert_eq!(msg.symbol(), 2);
            assert_eq!(msg.bits(), &[1, 0]);
        }
    }

    #[test]
    fn onehot_symbol_frequencies_match_uniform_law() {
        // Zero weights and biases → softmax emits exactly 1/4 per symbol.
        let net = Mlp::from_parts(
            &[1, 4],
            &[Activation::Softmax],
            vec![vec![0.0; 4]],
            vec![vec![0.0; 4]],
        )
        .unwrap();
        let spec = QuantizerSpec::onehot(2, net).unwrap();
        let mut counts = [0u64; 4];
        let trials = 100_000u64;
        for trial in 0..trials {
            let dithers = draw_dithers(404, 0, trial, 1);
            counts[spec.quantize_with_dithers(0.3, &dithers).unwrap().symbol()] += 1;
        }
        for &c in &counts {
            let freq = c as f64 / trials as f64;
            assert!((freq - 0.25).abs() < 0.01, "frequency {freq}");
        }
    }

    #[test]
    fn onehot_symbol_rejects_bad_probability_vectors() {
        assert_eq!(quantize_onehot_symbol(&[], 0.5).unwrap_err().category(), "contract");
        assert_eq!(
            quantize_onehot_symbol(&[0.5, 0.2], 0.5).unwrap_err().category(),
            "contract"
        );
        assert_eq!(
            quantize_onehot_symbol(&[1.2, -0.2], 0.5).unwrap_err().category(),
            "contract"
        );
        assert_eq!(
            quantize_onehot_symbol(&[0.5, 0.5], 1.0).unwrap_err().category(),
            "contract"
        );
    }

    #[test]
    fn embedding_lists_products_in_symbol_order() {
        let law = embed_bit_probs(&[0.3, 0.8]).unwrap();
        let expected = [0.7 * 0.2, 0.7 * 0.8, 0.3 * 0.2, 0.3 * 0.8];
        for (got, want) in law.iter().zip(&expected) {
            assert_abs_diff_eq!(got, want, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(law.iter().sum::<f64>(), 1.0, epsilon = 1e-15);

        assert_eq!(embed_bit_probs(&[0.3]).unwrap(), vec![0.7, 0.3]);
        assert_eq!(embed_bit_probs(&[1.0, 1.0]).unwrap(), vec![0.0, 0.0, 0.0, 1.0]);
        assert_eq!(embed_bit_probs(&[1.5]).unwrap_err().category(), "contract");
    }

    #[test]
    fn parallel_symbol_frequencies_match_embedded_law() {
        let spec =
            QuantizerSpec::parallel(vec![smooth_controller(31), smooth_controller(32)]).unwrap();
        let x = -0.6;
        let law = spec.symbol_probs(x).unwrap();
        assert_abs_diff_eq!(law.iter().sum::<f64>(), 1.0, epsilon = 1e-12);

        let trials = 100_000u64;
        let mut counts = [0u64; 4];
        for trial in 0..trials {
            let dithers = draw_dithers(808, 0, trial, 2);
            counts[spec.quantize_with_dithers(x, &dithers).unwrap().symbol()] += 1;
        }
        for (symbol, &c) in counts.iter().enumerate() {
            let freq = c as f64 / trials as f64;
            assert!(
                (freq - law[symbol]).abs() < 0.01,
                "symbol {symbol}: frequency {freq} vs law {}",
                law[symbol]
            );
        }
    }

    #[test]
    fn noiseless_gamma_is_the_controller_itself() {
        let noise = NoiseModel::noiseless(3.0).unwrap();
        let binary = QuantizerSpec::binary(smooth_controller(41)).unwrap();
        let onehot = QuantizerSpec::onehot(
            2,
            init_mlp(&[1, 6, 4], &[Activation::Relu, Activation::Softmax], 42).unwrap(),
        )
        .unwrap();
        for theta in [-0.7, 0.0, 0.9] {
            let est = gamma_exact(&binary, &noise, theta).unwrap();
            assert!(est.converged);
            assert_eq!(est.gap, 0.0);
            assert_eq!(est.scalar(), binary.controllers()[0].scalar(theta).unwrap());

            let est = gamma_exact(&onehot, &noise, theta).unwrap();
            assert!(est.converged);
            assert_eq!(est.values, onehot.controllers()[0].forward(&[theta]).unwrap());
        }
    }

    #[test]
    fn constant_controller_gamma_is_constant_under_any_noise() {
        // Zero-parameter sigmoid head outputs exactly 1/2.
        let spec = QuantizerSpec::binary(constant_sigmoid(0.0)).unwrap();
        let noise = NoiseModel::gaussian(0.8, 5.0).unwrap();
        for theta in [-1.0, 0.1, 2.0] {
            let est = gamma_exact(&spec, &noise, theta).unwrap();
            assert!(est.converged);
            assert_abs_diff_eq!(est.scalar(), 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn clamped_line_gamma_is_half_at_the_symmetry_point() {
        let g = |x: f64| (1.0 + x.clamp(-1.0, 1.0)) / 2.0;
        let noise = NoiseModel::gaussian(0.5, 3.0).unwrap();
        let est = gamma_from_fn(g, &noise, 0.0).unwrap();
        assert!(est.converged);
        assert_abs_diff_eq!(est.scalar(), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn gamma_values_are_probabilities_even_without_convergence() {
        // A very steep controller: quadrature refinement moves slowly, but the
        // reported values must still be probabilities and the one-hot vector
        // must still sum to one.
        let steep = Mlp::from_parts(
            &[1, 1],
            &[Activation::Sigmoid],
            vec![vec![200.0]],
            vec![vec![-3.0]],
        )
        .unwrap();
        let noise = NoiseModel::gaussian(1.0, 3.0).unwrap();
        let spec = QuantizerSpec::binary(steep).unwrap();
        let est = gamma_exact(&spec, &noise, 0.015).unwrap();
        assert!(est.values.iter().all(|&v| (0.0..=1.0).contains(&v)));

        let onehot = QuantizerSpec::onehot(
            2,
            init_mlp(&[1, 6, 4], &[Activation::Relu, Activation::Softmax], 43).unwrap(),
        )
        .unwrap();
        let est = gamma_exact(&onehot, &noise, 0.1).unwrap();
        assert!(est.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_abs_diff_eq!(est.values.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn pathological_response_trips_the_convergence_flag() {
        // Response depends on the bit pattern of the reading: different
        // quadrature rules sample different readings, so refinements never
        // agree and the strict variant must fail.
        let g = |x: f64| if x.to_bits() & 1 == 0 { 0.0 } else { 1.0 };
        let noise = NoiseModel::gaussian(1.0, 3.0).unwrap();
        let est = gamma_from_fn(g, &noise, 0.3).unwrap();
        assert!(!est.converged);
        assert!(est.gap > GAMMA_QUADRATURE_TOL);
        assert_eq!(est.nodes, *GAMMA_NODE_LADDER.last().unwrap());
        let err = gamma_from_fn(g, &noise, 0.3).unwrap().require_converged().unwrap_err();
        assert_eq!(err.category(), "quadrature-non-convergence");
    }

    #[test]
    fn empirical_gamma_matches_hand_cases() {
        let controller = smooth_controller(51);
        let x0 = 0.25;
        let obs = vec![x0; 10];
        assert_abs_diff_eq!(
            gamma_empirical(&controller, &obs).unwrap(),
            controller.scalar(x0).unwrap(),
            epsilon = 1e-15
        );

        let saturated = constant_sigmoid(1000.0);
        assert_eq!(gamma_empirical(&saturated, &obs).unwrap(), 1.0);

        let err = gamma_empirical(&controller, &[]).unwrap_err();
        assert_eq!(err.category(), "contract");
        let err = gamma_empirical_vec(&controller, &[]).unwrap_err();
        assert_eq!(err.category(), "contract");
    }

    #[test]
    fn empirical_gamma_is_consistent_with_exact() {
        let controller = smooth_controller(61);
        let spec = QuantizerSpec::binary(controller.clone()).unwrap();
        let noise = NoiseModel::gaussian(0.6, 3.0).unwrap();
        let theta = 0.2;
        let m_obs = 40_000;
        let obs = observe(&noise, theta, m_obs, 913).unwrap();
        let empirical = gamma_empirical(&controller, &obs).unwrap();
        let exact = gamma_exact_strict(&spec, &noise, theta).unwrap()[0];
        let tol = 3.0 / (m_obs as f64).sqrt();
        assert!(
            (empirical - exact).abs() < tol,
            "empirical {empirical} vs exact {exact}, tolerance {tol}"
        );
    }

    #[test]
    fn grid_gamma_reproduces_constant_controllers() {
        let grid = build_obs_grid(3.0, 500).unwrap();
        let noise = NoiseModel::gaussian(0.4, 3.0).unwrap();
        let constant = constant_sigmoid(0.0);
        for theta in [-0.8, 0.0, 0.6] {
            assert_abs_diff_eq!(
                gamma_grid(&constant, &grid, &noise, theta).unwrap(),
                0.5,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn grid_gamma_agrees_with_exact_on_a_fine_grid() {
        let controller = smooth_controller(71);
        let spec = QuantizerSpec::binary(controller.clone()).unwrap();
        let grid = build_obs_grid(3.0, 500).unwrap();
        let noise = NoiseModel::gaussian(0.7, 3.0).unwrap();
        let theta = 0.3;
        let on_grid = gamma_grid(&controller, &grid, &noise, theta).unwrap();
        let exact = gamma_exact_strict(&spec, &noise, theta).unwrap()[0];
        assert!(
            (on_grid - exact).abs() < 1e-3,
            "grid {on_grid} vs exact {exact}"
        );

        let vec_form = gamma_grid_vec(&controller, &grid, &noise, theta).unwrap();
        assert_eq!(vec_form.len(), 1);
        assert_abs_diff_eq!(vec_form[0], on_grid, epsilon = 1e-15);
    }

    #[test]
    fn spec_constructors_reject_bad_controllers() {
        let wide = init_mlp(&[1, 4, 2], &[Activation::Relu, Activation::Sigmoid], 1).unwrap();
        assert_eq!(QuantizerSpec::binary(wide).unwrap_err().category(), "config");

        let tanh_head = init_mlp(&[1, 4, 1], &[Activation::Relu, Activation::Tanh], 2).unwrap();
        assert_eq!(QuantizerSpec::binary(tanh_head).unwrap_err().category(), "config");

        assert_eq!(QuantizerSpec::parallel(vec![]).unwrap_err().category(), "config");

        let three_out = init_mlp(&[1, 4, 3], &[Activation::Relu, Activation::Softmax], 3).unwrap();
        assert_eq!(QuantizerSpec::onehot(2, three_out).unwrap_err().category(), "config");

        let sigmoid_head =
            init_mlp(&[1, 4, 4], &[Activation::Relu, Activation::Sigmoid], 4).unwrap();
        assert_eq!(QuantizerSpec::onehot(2, sigmoid_head).unwrap_err().category(), "config");

        let four_out = init_mlp(&[1, 4, 4], &[Activation::Relu, Activation::Softmax], 5).unwrap();
        assert_eq!(QuantizerSpec::onehot(0, four_out).unwrap_err().category(), "config");
    }

    #[test]
    fn quantize_with_dithers_validates_inputs() {
        let spec =
            QuantizerSpec::parallel(vec![smooth_controller(81), smooth_controller(82)]).unwrap();
        let err = spec.quantize_with_dithers(0.1, &[0.5]).unwrap_err();
        assert_eq!(err.category(), "contract");

        let err = spec.quantize_with_dithers(f64::NAN, &[0.5, 0.5]).unwrap_err();
        assert_eq!(err.category(), "numeric-domain");

        let binary = QuantizerSpec::binary(smooth_controller(83)).unwrap();
        let err = quantize_parallel(&binary, 0.1, 1).unwrap_err();
        assert_eq!(err.category(), "contract");
        let err = quantize_onehot(&binary, 0.1, 0.5).unwrap_err();
        assert_eq!(err.category(), "contract");
    }

    #[test]
    fn dither_streams_are_deterministic_and_separated() {
        let a = draw_dithers(3, 0, 0, 4);
        let b = draw_dithers(3, 0, 0, 4);
        assert_eq!(a, b);
        assert!(a.iter().all(|&z| (0.0..1.0).contains(&z)));
        assert_ne!(draw_dithers(3, 1, 0, 4), a);
        assert_ne!(draw_dithers(3, 0, 1, 4), a);
        assert_ne!(draw_dithers(4, 0, 0, 4), a);
    }

    #[test]
    fn checkpoint_round_trip_preserves_behavior_bit_for_bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("quantizer.json");

        let spec =
            QuantizerSpec::parallel(vec![smooth_controller(91), smooth_controller(92)]).unwrap();
        save_quantizer(&path, &spec.to_checkpoint(91)).unwrap();
        let restored = QuantizerSpec::from_checkpoint(&load_quantizer(&path).unwrap()).unwrap();
        assert_eq!(restored.kind(), spec.kind());
        for i in 0..=20 {
            let x = -2.0 + 0.2 * i as f64;
            let a = spec.controller_probs(x).unwrap();
            let b = restored.controller_probs(x).unwrap();
            assert_eq!(
                a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }

        let onehot = QuantizerSpec::onehot(
            2,
            init_mlp(&[1, 6, 4], &[Activation::Relu, Activation::Softmax], 93).unwrap(),
        )
        .unwrap();
        let path2 = dir.path().join("onehot.json");
        save_quantizer(&path2, &onehot.to_checkpoint(93)).unwrap();
        let restored = QuantizerSpec::from_checkpoint(&load_quantizer(&path2).unwrap()).unwrap();
        assert_eq!(restored.kind(), onehot.kind());

        // Tampered checkpoints are rejected on reload.
        let mut broken = onehot.to_checkpoint(93);
        broken.scheme = SchemeKind::OneHot { bits: 3 };
        assert_eq!(QuantizerSpec::from_checkpoint(&broken).unwrap_err().category(), "config");

        let mut broken = onehot.to_checkpoint(93);
        broken.format_version = 99;
        assert_eq!(QuantizerSpec::from_checkpoint(&broken).unwrap_err().category(), "config");

        let mut broken = spec.to_checkpoint(91);
        broken.controllers.pop();
        assert_eq!(QuantizerSpec::from_checkpoint(&broken).unwrap_err().category(), "config");
    }
}
