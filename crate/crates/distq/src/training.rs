//! Two-stage training: minimize the batch quantizer loss over the controller
//! parameters, freeze the result, then minimize the fusion-center loss over
//! the estimator parameters.
//!
//! Both stages run the same mini-batch Adam loop and differ only in the loss.
//! The quantizer loss is a batch estimate of the achievable-MSE bound written
//! as a ratio of sums, so samples couple through shared denominators and its
//! gradient is derived through the quotient rule rather than per-sample. The
//! fusion-center loss is an expected squared error over the statistic's
//! support, weighted by each sample's response probabilities.

use crate::bounds::{compositions, product_counts};
use crate::error::{Error, Result};
use crate::fusion::{estimator_checkpoint, fused_input_dim, save_estimator, validate_estimator};
use crate::model::{DatasetD1, NoiseModel, ObservationGrid};
use crate::net::{adam_step, ForwardTrace, Mlp, MlpGradients, OptimizerState};
use crate::quantizer::{save_quantizer, QuantizerSpec, SchemeKind};
use crate::rng::{stream, Purpose};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;
use std::path::PathBuf;
use std::time::Instant;

/// Where per-sample response probabilities come from during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// Average the controller over each sample's recorded observations.
    D1Empirical,
    /// Average the controller over a fixed observation grid, weighted by the
    /// known noise density around each sample's θ.
    D2Grid,
}

/// Hyperparameters for one training stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingConfig {
    /// Sensor count in the loss exponents (`K_S` for stage one, `K_F` for
    /// stage two) — purely a loss parameter, independent of the data.
    pub k_train: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub regime: Regime,
    /// Response probabilities are clamped to `[floor, 1-floor]` before the
    /// loss sees them.
    pub gamma_floor: f64,
    /// Save a checkpoint every this many epochs (requires `checkpoint_dir`).
    #[serde(default)]
    pub checkpoint_every: Option<usize>,
    #[serde(default)]
    pub checkpoint_dir: Option<PathBuf>,
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_train == 0 {
            return Err(Error::Contract("k_train must be at least 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Contract(format!(
                "batch size must be at least 2 (a single-sample batch has \
                 identically zero quantizer loss), got {}",
                self.batch_size
            )));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::Contract(format!(
                "learning rate must be finite and nonnegative, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..0.5).contains(&self.gamma_floor) {
            return Err(Error::Contract(format!(
                "gamma floor must lie in [0, 0.5), got {}",
                self.gamma_floor
            )));
        }
        if self.checkpoint_every == Some(0) {
            return Err(Error::Contract("checkpoint interval must be at least 1".into()));
        }
        if self.checkpoint_every.is_some() && self.checkpoint_dir.is_none() {
            return Err(Error::Contract(
                "checkpoint interval set without a checkpoint directory".into(),
            ));
        }
        Ok(())
    }
}

/// Training data bound to a γ-production strategy.
pub enum GammaSource<'a> {
    /// Raw samples: `(θ_t, observations)` pairs recorded in the field.
    Empirical { data: &'a DatasetD1 },
    /// θ samples plus an artificial observation grid and the noise model
    /// that weights it.
    Grid { thetas: &'a [f64], grid: &'a ObservationGrid, noise: &'a NoiseModel },
}

impl GammaSource<'_> {
    pub fn regime(&self) -> Regime {
        match self {
            GammaSource::Empirical { .. } => Regime::D1Empirical,
            GammaSource::Grid { .. } => Regime::D2Grid,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            GammaSource::Empirical { data } => data.len(),
            GammaSource::Grid { thetas, .. } => thetas.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn theta(&self, index: usize) -> f64 {
        match self {
            GammaSource::Empirical { data } => data.entries()[index].theta,
            GammaSource::Grid { thetas, .. } => thetas[index],
        }
    }

    /// Response probabilities of `spec` for sample `index`, clamped to
    /// `[floor, 1-floor]`: the observation mean of the controller outputs
    /// (empirical) or their noise-weighted grid average.
    pub fn gamma(&self, spec: &QuantizerSpec, index: usize, floor: f64) -> Result<Vec<f64>> {
        let dim = fused_input_dim(spec.kind());
        let mut values = vec![0.0; dim];
        match self {
            GammaSource::Empirical { data } => {
                let entry = &data.entries()[index];
                for &x in &entry.observations {
                    for (v, p) in values.iter_mut().zip(spec.controller_probs(x)?) {
                        *v += p;
                    }
                }
                let scale = 1.0 / entry.observations.len() as f64;
                for v in &mut values {
                    *v *= scale;
                }
            }
            GammaSource::Grid { thetas, grid, noise } => {
                let weights = grid.density_weights(noise, thetas[index])?;
                for (&x, &w) in grid.nodes().iter().zip(&weights) {
                    for (v, p) in values.iter_mut().zip(spec.controller_probs(x)?) {
                        *v += w * p;
                    }
                }
            }
        }
        for v in &mut values {
            *v = v.clamp(floor, 1.0 - floor);
        }
        Ok(values)
    }
}

/// Terms whose log-weight falls below this many nats are dropped from the
/// batch sums, keeping `K` in the thousands free of underflow.
pub const LOG_WEIGHT_FLOOR_NATS: f64 = -60.0;

/// Support of the fused statistic for a scheme, with the log-multiplicity of
/// each support point baked in.
struct LossSupport {
    counts: Vec<Vec<usize>>,
    ln_multiplicity: Vec<f64>,
    /// Multinomial weights use `c_l/q_l` score terms; product-of-binomial
    /// weights use `c_m/γ_m − (K−c_m)/(1−γ_m)`.
    multinomial: bool,
    sensors: usize,
}

fn loss_support(scheme: SchemeKind, sensors: usize) -> Result<LossSupport> {
    scheme.validate()?;
    if sensors == 0 {
        return Err(Error::Contract("loss needs at least one sensor".into()));
    }
    let ln_choose = |k: usize| -> f64 {
        ln_factorial(sensors as u64)
            - ln_factorial(k as u64)
            - ln_factorial((sensors - k) as u64)
    };
    match scheme {
        SchemeKind::Binary | SchemeKind::Parallel { .. } => {
            let bits = scheme.bits() as usize;
            let counts = if bits == 1 {
                (0..=sensors).map(|k| vec![k]).collect()
            } else {
                product_counts(sensors, bits)
            };
            let ln_multiplicity =
                counts.iter().map(|c: &Vec<usize>| c.iter().map(|&k| ln_choose(k)).sum()).collect();
            Ok(LossSupport { counts, ln_multiplicity, multinomial: false, sensors })
        }
        SchemeKind::OneHot { .. } => {
            let counts = compositions(sensors, scheme.symbol_count());
            let ln_k = ln_factorial(sensors as u64);
            let ln_multiplicity = counts
                .iter()
                .map(|c: &Vec<usize>| {
                    ln_k - c.iter().map(|&i| ln_factorial(i as u64)).sum::<f64>()
                })
                .collect();
            Ok(LossSupport { counts, ln_multiplicity, multinomial: true, sensors })
        }
    }
}

/// `w_t(c)` for one sample: multiplicity times the probability-power terms,
/// or 0 when the log-weight falls below the floor. Accepts probabilities in
/// the closed interval [0, 1]; zero bases with positive exponents give a
/// clean −∞ log-weight and drop out.
fn sample_weights(support: &LossSupport, probs: &[f64]) -> Vec<f64> {
    let k = support.sensors;
    support
        .counts
        .iter()
        .zip(&support.ln_multiplicity)
        .map(|(counts, &ln_mult)| {
            let mut ln_w = ln_mult;
            for (&c, &p) in counts.iter().zip(probs) {
                if c > 0 {
                    ln_w += c as f64 * p.ln();
                }
                if !support.multinomial && c < k {
                    ln_w += (k - c) as f64 * (1.0 - p).ln();
                }
            }
            if ln_w < LOG_WEIGHT_FLOOR_NATS {
                0.0
            } else {
                ln_w.exp()
            }
        })
        .collect()
}

/// Batch quantizer loss and its gradient with respect to every sample's
/// response probabilities.
#[derive(Debug, Clone)]
pub struct QuantizerLoss {
    pub loss: f64,
    /// `∂loss/∂γ_{t,m}`, indexed `[sample][component]`.
    pub gamma_gradients: Vec<Vec<f64>>,
    /// Set when some component sits at a clamp boundary for every sample in
    /// the batch — that controller output receives no usable gradient.
    pub dead_controller: bool,
}

/// Batch estimate of the achievable-MSE bound:
/// `Σ_t θ_t² − Σ_c (Σ_t θ_t w_t(c))² / (Σ_t w_t(c))`,
/// where `w_t(c)` is the probability that `K` sensors produce the fused
/// count `c` given sample `t`'s response probabilities.
///
/// Samples couple through the shared denominators, so the gradient is the
/// quotient rule applied per support point, not a per-sample derivative. A
/// single-sample batch telescopes to zero — hence the B ≥ 2 training
/// precondition — but is still computed faithfully here.
pub fn quantizer_loss(
    scheme: SchemeKind,
    sensors: usize,
    batch: &[(f64, Vec<f64>)],
    gamma_floor: f64,
) -> Result<QuantizerLoss> {
    let support = loss_support(scheme, sensors)?;
    let dim = fused_input_dim(scheme);
    if batch.is_empty() {
        return Err(Error::Contract("quantizer loss needs a nonempty batch".into()));
    }
    for (t, (theta, probs)) in batch.iter().enumerate() {
        if !theta.is_finite() {
            return Err(Error::Contract(format!("sample {t} has non-finite theta {theta}")));
        }
        if probs.len() != dim {
            return Err(Error::Contract(format!(
                "sample {t} has {} response probabilities, the {} scheme needs {dim}",
                probs.len(),
                scheme.name()
            )));
        }
        for &p in probs {
            if !p.is_finite() || p <= 0.0 || p >= 1.0 {
                return Err(Error::Contract(format!(
                    "sample {t} has response probability {p} outside (0, 1)"
                )));
            }
        }
    }

    let weights: Vec<Vec<f64>> =
        batch.iter().map(|(_, probs)| sample_weights(&support, probs)).collect();
    let n_support = support.counts.len();
    let mut numerator = vec![0.0; n_support];
    let mut denominator = vec![0.0; n_support];
    for ((theta, _), w_t) in batch.iter().zip(&weights) {
        for ((num, den), &w) in numerator.iter_mut().zip(&mut denominator).zip(w_t) {
            *num += theta * w;
            *den += w;
        }
    }
    let theta_square: f64 = batch.iter().map(|(theta, _)| theta * theta).sum();
    let explained: f64 = numerator
        .iter()
        .zip(&denominator)
        .map(|(&num, &den)| if den > 0.0 { num * num / den } else { 0.0 })
        .sum();
    let loss = theta_square - explained;

    // Per-support-point quotient-rule factors, reused across samples.
    let ratio_terms: Vec<(f64, f64)> = numerator
        .iter()
        .zip(&denominator)
        .map(|(&num, &den)| {
            if den > 0.0 {
                (2.0 * num / den, (num / den) * (num / den))
            } else {
                (0.0, 0.0)
            }
        })
        .collect();
    let k = sensors as f64;
    let gamma_gradients: Vec<Vec<f64>> = batch
        .iter()
        .zip(&weights)
        .map(|((theta, probs), w_t)| {
            let mut grad = vec![0.0; dim];
            for ((counts, &w), &(a, b)) in
                support.counts.iter().zip(w_t).zip(&ratio_terms)
            {
                if w == 0.0 {
                    continue;
                }
                let factor = w * (a * theta - b);
                for ((g, &c), &p) in grad.iter_mut().zip(counts).zip(probs) {
                    let score = if support.multinomial {
                        c as f64 / p
                    } else {
                        c as f64 / p - (k - c as f64) / (1.0 - p)
                    };
                    *g -= factor * score;
                }
            }
            grad
        })
        .collect();

    let dead_controller = (0..dim).any(|m| {
        batch
            .iter()
            .all(|(_, probs)| probs[m] <= gamma_floor || probs[m] >= 1.0 - gamma_floor)
    });

    Ok(QuantizerLoss { loss, gamma_gradients, dead_controller })
}

/// Batch fusion-center loss and its gradients with respect to the estimator
/// parameters.
#[derive(Debug, Clone)]
pub struct FcLoss {
    pub loss: f64,
    pub gradients: MlpGradients,
}

/// Expected squared error of the estimator over the fused statistic's
/// support: `Σ_t Σ_c w_t(c) (θ_t − F(c/K))²`, with `w_t(c)` built from the
/// frozen quantizer's response probabilities.
///
/// Gradients flow only into the estimator; the probabilities are data here.
/// Saturated probabilities (exact 0 or 1) are legal: impossible support
/// points simply drop out.
pub fn fc_loss(
    scheme: SchemeKind,
    sensors: usize,
    batch: &[(f64, Vec<f64>)],
    fc_net: &Mlp,
) -> Result<FcLoss> {
    validate_estimator(scheme, fc_net)?;
    let support = loss_support(scheme, sensors)?;
    let dim = fused_input_dim(scheme);
    if batch.is_empty() {
        return Err(Error::Contract("fusion-center loss needs a nonempty batch".into()));
    }
    let mut clean: Vec<(f64, Vec<f64>)> = Vec::with_capacity(batch.len());
    for (t, (theta, probs)) in batch.iter().enumerate() {
        if !theta.is_finite() {
            return Err(Error::Contract(format!("sample {t} has non-finite theta {theta}")));
        }
        if probs.len() != dim {
            return Err(Error::Contract(format!(
                "sample {t} has {} response probabilities, the {} scheme needs {dim}",
                probs.len(),
                scheme.name()
            )));
        }
        let mut p = probs.clone();
        for v in &mut p {
            if !v.is_finite() || !(-1e-12..=1.0 + 1e-12).contains(v) {
                return Err(Error::Contract(format!(
                    "sample {t} has response probability {v} outside [0, 1]"
                )));
            }
            *v = v.clamp(0.0, 1.0);
        }
        clean.push((*theta, p));
    }

    // Accumulate the batch moments of each support point once; the network
    // is then evaluated once per support point, not per sample.
    let n_support = support.counts.len();
    let mut s0 = vec![0.0; n_support];
    let mut s1 = vec![0.0; n_support];
    let mut s2 = vec![0.0; n_support];
    for (theta, probs) in &clean {
        let w_t = sample_weights(&support, probs);
        for (((a, b), c), &w) in s0.iter_mut().zip(&mut s1).zip(&mut s2).zip(&w_t) {
            *a += w;
            *b += w * theta;
            *c += w * theta * theta;
        }
    }

    let k = sensors as f64;
    let mut loss = 0.0;
    let mut gradients = MlpGradients::zeros_like(fc_net);
    let mut input = vec![0.0; dim];
    for (counts, ((&a, &b), &c)) in
        support.counts.iter().zip(s0.iter().zip(&s1).zip(&s2))
    {
        if a == 0.0 && b == 0.0 && c == 0.0 {
            continue;
        }
        for (slot, &count) in input.iter_mut().zip(counts) {
            *slot = count as f64 / k;
        }
        let trace = fc_net.forward_trace(&input)?;
        let estimate = trace.output()[0];
        loss += c - 2.0 * estimate * b + estimate * estimate * a;
        let upstream = 2.0 * (estimate * a - b);
        let (grad, _) = fc_net.backward(&trace, &[upstream])?;
        gradients.accumulate(&grad, 1.0);
    }
    Ok(FcLoss { loss, gradients })
}

/// One recorded training step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRow {
    pub epoch: usize,
    pub batch: usize,
    pub loss: f64,
    pub wall_time_s: f64,
}

/// Write a loss trace as CSV with columns `epoch,batch,loss,wall_time_s`.
pub fn write_loss_trace(path: &std::path::Path, rows: &[TraceRow]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(std::io::Error::from)?;
    Ok(())
}

/// Stage-one outcome: the trained quantizer, the per-batch loss trace, and
/// how many steps flagged a gradient-starved controller.
pub struct QuantizerTraining {
    pub spec: QuantizerSpec,
    pub trace: Vec<TraceRow>,
    pub dead_controller_steps: usize,
}

/// Stage-two outcome.
pub struct FcTraining {
    pub net: Mlp,
    pub trace: Vec<TraceRow>,
}

/// Shared epoch/batch bookkeeping for both stages.
struct BatchPlan {
    indices: Vec<usize>,
    batches_per_epoch: usize,
}

impl BatchPlan {
    fn new(config: &TrainingConfig, samples: usize) -> Result<Self> {
        let batches_per_epoch = samples / config.batch_size;
        if batches_per_epoch == 0 {
            return Err(Error::Contract(format!(
                "batch size {} exceeds the {samples}-sample dataset",
                config.batch_size
            )));
        }
        Ok(Self { indices: (0..samples).collect(), batches_per_epoch })
    }

    /// Reshuffle for an epoch; any trailing partial batch is dropped.
    fn shuffle(&mut self, seed: u64, epoch: usize) {
        let mut rng = stream(seed, Purpose::Shuffle, epoch as u64);
        self.indices.shuffle(&mut rng);
    }

    fn batch(&self, batch_index: usize, batch_size: usize) -> &[usize] {
        &self.indices[batch_index * batch_size..(batch_index + 1) * batch_size]
    }
}

fn check_finite_step(loss: f64, epoch: usize, batch: usize) -> Result<()> {
    if !loss.is_finite() {
        return Err(Error::NumericalIntegrity(format!(
            "training diverged: loss {loss} at epoch {epoch}, batch {batch}"
        )));
    }
    Ok(())
}

/// Per-controller slice of the loss's probability components: `(offset,
/// width)` into the flat γ vector.
fn controller_layout(spec: &QuantizerSpec) -> Vec<(usize, usize)> {
    let mut layout = Vec::with_capacity(spec.controllers().len());
    let mut offset = 0;
    for net in spec.controllers() {
        layout.push((offset, net.output_dim()));
        offset += net.output_dim();
    }
    layout
}

/// Stage one: minimize the quantizer loss over the controller parameters
/// with mini-batch Adam. Returns the final-epoch parameters (no early
/// stopping) plus the per-batch loss trace.
pub fn train_quantizer(
    config: &TrainingConfig,
    source: &GammaSource,
    mut spec: QuantizerSpec,
) -> Result<QuantizerTraining> {
    config.validate()?;
    if config.regime != source.regime() {
        return Err(Error::Contract(format!(
            "config regime {:?} does not match the data source {:?}",
            config.regime,
            source.regime()
        )));
    }
    let mut plan = BatchPlan::new(config, source.len())?;
    let layout = controller_layout(&spec);
    let dim = fused_input_dim(spec.kind());
    let mut optimizers: Vec<OptimizerState> = spec
        .controllers()
        .iter()
        .map(|net| OptimizerState::new(net, config.learning_rate))
        .collect();

    // Grid-regime caches: the density weights of every sample are fixed for
    // the whole run.
    let density_cache: Vec<Vec<f64>> = match source {
        GammaSource::Grid { thetas, grid, noise } => thetas
            .iter()
            .map(|&theta| grid.density_weights(noise, theta))
            .collect::<Result<_>>()?,
        GammaSource::Empirical { .. } => Vec::new(),
    };

    let started = Instant::now();
    let mut trace = Vec::new();
    let mut dead_controller_steps = 0;
    for epoch in 0..config.epochs {
        plan.shuffle(config.seed, epoch);
        for batch_index in 0..plan.batches_per_epoch {
            let batch_ids = plan.batch(batch_index, config.batch_size);

            // Evaluate per-sample response probabilities, remembering what
            // the backward pass needs.
            let mut batch: Vec<(f64, Vec<f64>)> = Vec::with_capacity(batch_ids.len());
            let mut masks: Vec<Vec<f64>> = Vec::with_capacity(batch_ids.len());
            // Empirical: traces[controller][sample][observation].
            let mut obs_traces: Vec<Vec<Vec<ForwardTrace>>> =
                vec![Vec::with_capacity(batch_ids.len()); spec.controllers().len()];
            // Grid: traces[controller][node], shared by every sample.
            let mut node_traces: Vec<Vec<ForwardTrace>> = Vec::new();

            match source {
                GammaSource::Empirical { data } => {
                    for &i in batch_ids {
                        let entry = &data.entries()[i];
                        let mut raw = vec![0.0; dim];
                        for ((ci, net), &(offset, width)) in
                            spec.controllers().iter().enumerate().zip(&layout)
                        {
                            let mut per_sample = Vec::with_capacity(entry.observations.len());
                            for &x in &entry.observations {
                                let tr = net.forward_trace(&[x])?;
                                for (slot, &v) in
                                    raw[offset..offset + width].iter_mut().zip(tr.output())
                                {
                                    *slot += v;
                                }
                                per_sample.push(tr);
                            }
                            obs_traces[ci].push(per_sample);
                        }
                        let scale = 1.0 / entry.observations.len() as f64;
                        let (probs, mask) = clamp_with_mask(&raw, scale, config.gamma_floor);
                        batch.push((entry.theta, probs));
                        masks.push(mask);
                    }
                }
                GammaSource::Grid { grid, .. } => {
                    node_traces = spec
                        .controllers()
                        .iter()
                        .map(|net| {
                            grid.nodes().iter().map(|&x| net.forward_trace(&[x])).collect()
                        })
                        .collect::<Result<_>>()?;
                    for &i in batch_ids {
                        let mut raw = vec![0.0; dim];
                        for (traces, &(offset, width)) in node_traces.iter().zip(&layout) {
                            for (tr, &w) in traces.iter().zip(&density_cache[i]) {
                                for (slot, &v) in
                                    raw[offset..offset + width].iter_mut().zip(tr.output())
                                {
                                    *slot += w * v;
                                }
                            }
                        }
                        let (probs, mask) = clamp_with_mask(&raw, 1.0, config.gamma_floor);
                        batch.push((source.theta(i), probs));
                        masks.push(mask);
                    }
                }
            }

            let step = quantizer_loss(spec.kind(), config.k_train, &batch, config.gamma_floor)?;
            check_finite_step(step.loss, epoch, batch_index)?;
            dead_controller_steps += usize::from(step.dead_controller);

            // Chain the γ gradients into each controller and take the step.
            for (ci, &(offset, width)) in layout.iter().enumerate() {
                let net = &spec.controllers()[ci];
                let mut accumulated = MlpGradients::zeros_like(net);
                match source {
                    GammaSource::Empirical { data } => {
                        for (t, &i) in batch_ids.iter().enumerate() {
                            let upstream: Vec<f64> = (0..width)
                                .map(|o| {
                                    step.gamma_gradients[t][offset + o] * masks[t][offset + o]
                                })
                                .collect();
                            if upstream.iter().all(|&u| u == 0.0) {
                                continue;
                            }
                            let scale = 1.0 / data.entries()[i].observations.len() as f64;
                            for tr in &obs_traces[ci][t] {
                                let (grad, _) = net.backward(tr, &upstream)?;
                                accumulated.accumulate(&grad, scale);
                            }
                        }
                    }
                    GammaSource::Grid { grid, .. } => {
                        for (node, tr) in node_traces[ci].iter().enumerate() {
                            let mut upstream = vec![0.0; width];
                            for (t, &i) in batch_ids.iter().enumerate() {
                                let w = density_cache[i][node];
                                for (o, slot) in upstream.iter_mut().enumerate() {
                                    *slot += w
                                        * step.gamma_gradients[t][offset + o]
                                        * masks[t][offset + o];
                                }
                            }
                            if upstream.iter().all(|&u| u == 0.0) {
                                continue;
                            }
                            let _ = grid;
                            let (grad, _) = net.backward(tr, &upstream)?;
                            accumulated.accumulate(&grad, 1.0);
                        }
                    }
                }
                if !accumulated.is_finite() {
                    return Err(Error::NumericalIntegrity(format!(
                        "training diverged: non-finite controller gradient at epoch {epoch}, \
                         batch {batch_index}"
                    )));
                }
                adam_step(&mut optimizers[ci], &mut spec.controllers_mut()[ci], &accumulated)?;
            }

            trace.push(TraceRow {
                epoch,
                batch: batch_index,
                loss: step.loss,
                wall_time_s: started.elapsed().as_secs_f64(),
            });
        }
        maybe_checkpoint_quantizer(config, epoch, &spec)?;
    }
    Ok(QuantizerTraining { spec, trace, dead_controller_steps })
}

/// Clamp scaled raw probabilities to `[floor, 1-floor]`, returning the
/// clamped values and a pass-through mask (0 where the clamp is active, so
/// no gradient flows into a saturated output).
fn clamp_with_mask(raw: &[f64], scale: f64, floor: f64) -> (Vec<f64>, Vec<f64>) {
    let mut probs = Vec::with_capacity(raw.len());
    let mut mask = Vec::with_capacity(raw.len());
    for &r in raw {
        let v = r * scale;
        if v <= floor || v >= 1.0 - floor {
            probs.push(v.clamp(floor, 1.0 - floor));
            mask.push(0.0);
        } else {
            probs.push(v);
            mask.push(1.0);
        }
    }
    (probs, mask)
}

fn maybe_checkpoint_quantizer(
    config: &TrainingConfig,
    epoch: usize,
    spec: &QuantizerSpec,
) -> Result<()> {
    let (Some(every), Some(dir)) = (config.checkpoint_every, config.checkpoint_dir.as_ref())
    else {
        return Ok(());
    };
    if (epoch + 1) % every != 0 {
        return Ok(());
    }
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("quantizer-epoch-{:04}.json", epoch + 1));
    save_quantizer(&path, &spec.to_checkpoint(config.seed))
}

fn maybe_checkpoint_estimator(
    config: &TrainingConfig,
    epoch: usize,
    scheme: SchemeKind,
    net: &Mlp,
) -> Result<()> {
    let (Some(every), Some(dir)) = (config.checkpoint_every, config.checkpoint_dir.as_ref())
    else {
        return Ok(());
    };
    if (epoch + 1) % every != 0 {
        return Ok(());
    }
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("estimator-epoch-{:04}.json", epoch + 1));
    save_estimator(&path, &estimator_checkpoint(scheme, net, config.seed)?)
}

/// Stage two: with the quantizer frozen, minimize the fusion-center loss
/// over the estimator parameters. The response probabilities are computed
/// once per sample up front — the frozen quantizer never changes, so neither
/// do they.
pub fn train_fc(
    config: &TrainingConfig,
    source: &GammaSource,
    frozen: &QuantizerSpec,
    mut net: Mlp,
) -> Result<FcTraining> {
    config.validate()?;
    if config.regime != source.regime() {
        return Err(Error::Contract(format!(
            "config regime {:?} does not match the data source {:?}",
            config.regime,
            source.regime()
        )));
    }
    validate_estimator(frozen.kind(), &net)?;
    let mut plan = BatchPlan::new(config, source.len())?;
    let gamma_star: Vec<Vec<f64>> = (0..source.len())
        .map(|i| source.gamma(frozen, i, config.gamma_floor))
        .collect::<Result<_>>()?;

    let mut optimizer = OptimizerState::new(&net, config.learning_rate);
    let started = Instant::now();
    let mut trace = Vec::new();
    for epoch in 0..config.epochs {
        plan.shuffle(config.seed, epoch);
        for batch_index in 0..plan.batches_per_epoch {
            let batch: Vec<(f64, Vec<f64>)> = plan
                .batch(batch_index, config.batch_size)
                .iter()
                .map(|&i| (source.theta(i), gamma_star[i].clone()))
                .collect();
            let step = fc_loss(frozen.kind(), config.k_train, &batch, &net)?;
            check_finite_step(step.loss, epoch, batch_index)?;
            if !step.gradients.is_finite() {
                return Err(Error::NumericalIntegrity(format!(
                    "training diverged: non-finite estimator gradient at epoch {epoch}, \
                     batch {batch_index}"
                )));
            }
            adam_step(&mut optimizer, &mut net, &step.gradients)?;
            trace.push(TraceRow {
                epoch,
                batch: batch_index,
                loss: step.loss,
                wall_time_s: started.elapsed().as_secs_f64(),
            });
        }
        maybe_checkpoint_estimator(config, epoch, frozen.kind(), &net)?;
    }
    Ok(FcTraining { net, trace })
}
