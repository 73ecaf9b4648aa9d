//! Exact conditional laws of fused statistics, MSE lower bounds, Fisher
//! information, and brute-force enumeration oracles for small instances.
//!
//! The central object is a [`ConditionalLaw`]: the distribution of the fused
//! statistic given θ, evaluated in log space from the per-sensor response
//! probabilities. The MSE lower bound is the Bayes risk of the posterior-mean
//! estimator applied to that statistic; brute-force enumeration over whole
//! message matrices provides an independent oracle for it.

use crate::error::{Error, Result};
use crate::model::PriorModel;
use statrs::function::factorial::ln_factorial;

/// Response-probability clamp used inside log-space law evaluation, so a
/// saturated controller (exact 0 or 1) cannot produce `ln 0` NaNs.
pub const LAW_PROB_CLAMP: f64 = 1e-12;

/// Scalar response curve θ → γ(θ).
pub type GammaFn = Box<dyn Fn(f64) -> Result<f64> + Send + Sync>;

/// Vector response curve θ → per-symbol probabilities.
pub type GammaVecFn = Box<dyn Fn(f64) -> Result<Vec<f64>> + Send + Sync>;

enum LawKind {
    /// Counts of 1-bits across `K` identical binary sensors.
    Binomial { gamma: GammaFn },
    /// Per-bit 1-counts across `K` identical multi-bit sensors; bits are
    /// conditionally independent given θ, so the law is a product of
    /// binomials.
    Parallel { gammas: Vec<GammaFn> },
    /// Symbol counts across `K` identical one-hot sensors: a multinomial
    /// over compositions of `K` into the symbol count.
    Multinomial { gamma_vec: GammaVecFn, symbols: usize },
}

/// Distribution of a fused statistic given θ.
///
/// The support is the finite set of values the statistic can take (bit-count
/// vectors divided by the sensor count); [`ConditionalLaw::probs`] evaluates
/// the probability of every support point at one θ, in log space, and checks
/// the result normalizes.
pub struct ConditionalLaw {
    sensors: usize,
    counts: Vec<Vec<usize>>,
    kind: LawKind,
}

impl ConditionalLaw {
    pub fn sensors(&self) -> usize {
        self.sensors
    }

    /// Integer count vectors underlying each support point, in enumeration
    /// order (length 1 for binary, `M` for parallel, `2^M` for one-hot).
    pub fn support_counts(&self) -> &[Vec<usize>] {
        &self.counts
    }

    /// Fused-statistic values: the count vectors divided by the sensor count.
    pub fn support(&self) -> Vec<Vec<f64>> {
        let k = self.sensors as f64;
        self.counts
            .iter()
            .map(|c| c.iter().map(|&i| i as f64 / k).collect())
            .collect()
    }

    pub fn support_size(&self) -> usize {
        self.counts.len()
    }

    /// `p(s | θ)` for every support point `s`, in enumeration order.
    ///
    /// Each vector is checked to be finite, nonnegative, and normalized to 1
    /// within 1e-9 before it is returned.
    pub fn probs(&self, theta: f64) -> Result<Vec<f64>> {
        let k = self.sensors;
        let probs: Vec<f64> = match &self.kind {
            LawKind::Binomial { gamma } => {
                let pmf = binomial_pmf(k, checked_gamma(gamma(theta)?, theta)?);
                self.counts.iter().map(|c| pmf[c[0]]).collect()
            }
            LawKind::Parallel { gammas } => {
                let pmfs: Vec<Vec<f64>> = gammas
                    .iter()
                    .map(|g| Ok(binomial_pmf(k, checked_gamma(g(theta)?, theta)?)))
                    .collect::<Result<_>>()?;
                self.counts
                    .iter()
                    .map(|c| c.iter().zip(&pmfs).map(|(&i, pmf)| pmf[i]).product())
                    .collect()
            }
            LawKind::Multinomial { gamma_vec, symbols } => {
                let q = checked_symbol_probs(gamma_vec(theta)?, *symbols, theta)?;
                let ln_q: Vec<f64> = q.iter().map(|&p| p.ln()).collect();
                let ln_k_fact = ln_factorial(k as u64);
                self.counts
                    .iter()
                    .map(|c| {
                        let mut ln_p = ln_k_fact;
                        for (&i, &lq) in c.iter().zip(&ln_q) {
                            ln_p += i as f64 * lq - ln_factorial(i as u64);
                        }
                        ln_p.exp()
                    })
                    .collect()
            }
        };
        let mut total = 0.0;
        for &p in &probs {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::NumericalIntegrity(format!(
                    "law probability {p} at theta={theta}"
                )));
            }
            total += p;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::NumericalIntegrity(format!(
                "law sums to {total} at theta={theta}"
            )));
        }
        Ok(probs)
    }
}

fn checked_gamma(gamma: f64, theta: f64) -> Result<f64> {
    if !gamma.is_finite() || !(-1e-12..=1.0 + 1e-12).contains(&gamma) {
        return Err(Error::NumericalIntegrity(format!(
            "response probability {gamma} at theta={theta}"
        )));
    }
    Ok(gamma.clamp(LAW_PROB_CLAMP, 1.0 - LAW_PROB_CLAMP))
}

/// Validate a symbol-probability vector, clamp its entries away from 0 and 1,
/// and renormalize so the multinomial still sums to one exactly.
fn checked_symbol_probs(mut q: Vec<f64>, symbols: usize, theta: f64) -> Result<Vec<f64>> {
    if q.len() != symbols {
        return Err(Error::Contract(format!(
            "symbol law returned {} probabilities, expected {symbols}",
            q.len()
        )));
    }
    let mut total = 0.0;
    for p in &mut q {
        if !p.is_finite() || *p < -1e-12 {
            return Err(Error::NumericalIntegrity(format!(
                "symbol probability {p} at theta={theta}"
            )));
        }
        *p = p.clamp(LAW_PROB_CLAMP, 1.0 - LAW_PROB_CLAMP);
        total += *p;
    }
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::NumericalIntegrity(format!(
            "symbol law sums to {total} at theta={theta}"
        )));
    }
    for p in &mut q {
        *p /= total;
    }
    Ok(q)
}

/// Binomial pmf over 0..=K in log space: `C(K,k) γ^k (1-γ)^{K-k}`.
fn binomial_pmf(k: usize, gamma: f64) -> Vec<f64> {
    let ln_gamma = gamma.ln();
    let ln_one_minus = (1.0 - gamma).ln();
    let ln_k_fact = ln_factorial(k as u64);
    (0..=k)
        .map(|j| {
            let ln_coeff = ln_k_fact - ln_factorial(j as u64) - ln_factorial((k - j) as u64);
            (ln_coeff + j as f64 * ln_gamma + (k - j) as f64 * ln_one_minus).exp()
        })
        .collect()
}

/// All count vectors in `{0..K}^M`, lexicographic (first coordinate slowest).
pub(crate) fn product_counts(sensors: usize, bits: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity((sensors + 1).pow(bits as u32));
    let mut current = vec![0usize; bits];
    loop {
        out.push(current.clone());
        // Odometer increment from the last coordinate.
        let mut pos = bits;
        while pos > 0 {
            pos -= 1;
            if current[pos] < sensors {
                current[pos] += 1;
                break;
            }
            current[pos] = 0;
            if pos == 0 {
                return out;
            }
        }
    }
}

/// All compositions `(i_0, …, i_{L-1})` of `total` into `parts` nonnegative
/// terms, ordered with the last coordinate varying slowest from 0 upward.
pub(crate) fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for last in 0..=total {
        for mut head in compositions(total - last, parts - 1) {
            head.push(last);
            out.push(head);
        }
    }
    out
}

/// Law of the fused bit mean for `K` identical binary sensors with response
/// curve γ: `p(ū = k/K | θ) = C(K,k) γ(θ)^k (1-γ(θ))^{K-k}`.
pub fn binomial_law(gamma_fn: GammaFn, sensors: usize) -> Result<ConditionalLaw> {
    if sensors == 0 {
        return Err(Error::Contract("law needs at least one sensor".into()));
    }
    Ok(ConditionalLaw {
        sensors,
        counts: (0..=sensors).map(|k| vec![k]).collect(),
        kind: LawKind::Binomial { gamma: gamma_fn },
    })
}

/// Law of the per-bit mean vector for `K` identical parallel sensors: a
/// product of independent binomials, one per bit, over support `{0..K}^M/K`
/// enumerated lexicographically.
pub fn parallel_law(gamma_fns: Vec<GammaFn>, sensors: usize) -> Result<ConditionalLaw> {
    if sensors == 0 {
        return Err(Error::Contract("law needs at least one sensor".into()));
    }
    if gamma_fns.is_empty() {
        return Err(Error::Contract("parallel law needs at least one bit".into()));
    }
    Ok(ConditionalLaw {
        sensors,
        counts: product_counts(sensors, gamma_fns.len()),
        kind: LawKind::Parallel { gammas: gamma_fns },
    })
}

/// Law of the one-hot symbol frequencies for `K` identical sensors: a
/// multinomial over the `C(K+L-1, L-1)` compositions of `K` into `L` symbol
/// counts.
pub fn onehot_law(gamma_vec_fn: GammaVecFn, symbols: usize, sensors: usize) -> Result<ConditionalLaw> {
    if sensors == 0 {
        return Err(Error::Contract("law needs at least one sensor".into()));
    }
    if symbols < 2 {
        return Err(Error::Contract(format!(
            "one-hot law needs at least two symbols, got {symbols}"
        )));
    }
    Ok(ConditionalLaw {
        sensors,
        counts: compositions(sensors, symbols),
        kind: LawKind::Multinomial { gamma_vec: gamma_vec_fn, symbols },
    })
}

/// Accumulated prior moments of a law: for each support point `s`,
/// `numerator = E_θ[θ p(s|θ)]` and `marginal = E_θ[p(s|θ)]`.
fn law_moments(law: &ConditionalLaw, prior: &PriorModel) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = law.support_size();
    let mut numerator = vec![0.0; n];
    let mut marginal = vec![0.0; n];
    for (&theta, &w) in prior.nodes().iter().zip(prior.weights()) {
        let probs = law.probs(theta)?;
        for ((num, mar), &p) in numerator.iter_mut().zip(&mut marginal).zip(&probs) {
            *num += w * theta * p;
            *mar += w * p;
        }
    }
    Ok((numerator, marginal))
}

/// Minimum achievable MSE of any estimator that consumes the fused
/// statistic: `E[θ²] − Σ_s E_θ[θ p(s|θ)]² / E_θ[p(s|θ)]`, the Bayes risk of
/// the posterior mean. Zero-marginal support points contribute 0.
pub fn mse_lower_bound(law: &ConditionalLaw, prior: &PriorModel) -> Result<f64> {
    let (numerator, marginal) = law_moments(law, prior)?;
    let explained: f64 = numerator
        .iter()
        .zip(&marginal)
        .map(|(&num, &mar)| if mar > 0.0 { num * num / mar } else { 0.0 })
        .sum();
    let bound = prior.second_moment() - explained;
    if bound < -1e-10 {
        return Err(Error::NumericalIntegrity(format!(
            "MSE lower bound came out negative: {bound}"
        )));
    }
    Ok(bound.max(0.0))
}

/// Exact MSE of a fixed estimator table `estimates[s] = θ̂(s)` applied to the
/// fused statistic: `E[θ²] − 2 Σ_s θ̂(s) E[θ p(s|θ)] + Σ_s θ̂(s)² E[p(s|θ)]`.
///
/// Always at least [`mse_lower_bound`], with equality when the table is the
/// posterior mean.
pub fn population_estimator_mse(
    law: &ConditionalLaw,
    estimates: &[f64],
    prior: &PriorModel,
) -> Result<f64> {
    if estimates.len() != law.support_size() {
        return Err(Error::Contract(format!(
            "estimator table has {} entries for a support of {}",
            estimates.len(),
            law.support_size()
        )));
    }
    let (numerator, marginal) = law_moments(law, prior)?;
    let mut mse = prior.second_moment();
    for ((&g, &num), &mar) in estimates.iter().zip(&numerator).zip(&marginal) {
        mse += g * (g * mar - 2.0 * num);
    }
    Ok(mse)
}

/// Per-sensor Fisher information about θ carried by one quantized bit, times
/// the sensor count: `K γ'(θ)² / (γ(θ)(1−γ(θ)))`.
///
/// The derivative is taken from `gamma_derivative_fn` when supplied, else by
/// central differences with step 1e-6.
pub fn fisher_info(
    gamma_fn: &dyn Fn(f64) -> Result<f64>,
    gamma_derivative_fn: Option<&dyn Fn(f64) -> Result<f64>>,
    theta: f64,
    sensors: usize,
) -> Result<f64> {
    if sensors == 0 {
        return Err(Error::Contract("Fisher information needs at least one sensor".into()));
    }
    let gamma = gamma_fn(theta)?;
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Singularity(format!(
            "response probability {gamma} at theta={theta} has no Fisher information"
        )));
    }
    let derivative = match gamma_derivative_fn {
        Some(d) => d(theta)?,
        None => {
            let step = 1e-6;
            (gamma_fn(theta + step)? - gamma_fn(theta - step)?) / (2.0 * step)
        }
    };
    Ok(sensors as f64 * derivative * derivative / (gamma * (1.0 - gamma)))
}

/// Fisher information of the fused statistic computed directly from the law:
/// `Σ_s p(s|θ) (d ln p(s|θ)/dθ)²` with the score by central differences.
///
/// Independent of the closed form in [`fisher_info`]; the two must agree.
pub fn fisher_info_direct(law: &ConditionalLaw, theta: f64, step: f64) -> Result<f64> {
    if !(step > 0.0) {
        return Err(Error::Contract(format!("difference step must be positive, got {step}")));
    }
    let center = law.probs(theta)?;
    let plus = law.probs(theta + step)?;
    let minus = law.probs(theta - step)?;
    let mut info = 0.0;
    for ((&p0, &pp), &pm) in center.iter().zip(&plus).zip(&minus) {
        // Support points the statistic essentially never visits carry no
        // information; skipping them avoids ln(0) in the score.
        if p0 < 1e-300 || pp < 1e-300 || pm < 1e-300 {
            continue;
        }
        let score = (pp.ln() - pm.ln()) / (2.0 * step);
        info += p0 * score * score;
    }
    if !info.is_finite() {
        return Err(Error::NumericalIntegrity(format!(
            "direct Fisher information diverged at theta={theta}"
        )));
    }
    Ok(info)
}

/// Reference MSE floor for K binary sensors: `4/(π²K)`, the reciprocal of
/// the constant Fisher information `Kπ²/4` achieved by the quarter-sine
/// response curve under the uniform prior on [-1, 1].
pub fn pcrlb_binary(sensors: usize) -> Result<f64> {
    if sensors == 0 {
        return Err(Error::Contract("PCRLB needs at least one sensor".into()));
    }
    Ok(4.0 / (std::f64::consts::PI * std::f64::consts::PI * sensors as f64))
}

/// Largest message space [`brute_force_mmse`] will enumerate, in bits.
pub const BRUTE_FORCE_BIT_LIMIT: u32 = 20;

fn message_space_size(sensors: usize, symbols: usize) -> Result<usize> {
    if sensors == 0 {
        return Err(Error::Contract("enumeration needs at least one sensor".into()));
    }
    if symbols < 2 {
        return Err(Error::Contract(format!(
            "enumeration needs at least two symbols, got {symbols}"
        )));
    }
    let bits = sensors as u32 * (usize::BITS - (symbols - 1).leading_zeros());
    if bits > BRUTE_FORCE_BIT_LIMIT {
        return Err(Error::SpaceTooLarge(format!(
            "{sensors} sensors with {symbols} symbols span 2^{bits} message matrices; \
             the enumeration limit is 2^{BRUTE_FORCE_BIT_LIMIT}"
        )));
    }
    Ok(symbols.pow(sensors as u32))
}

/// Prior moments of every whole message matrix `(u_1, …, u_K)`, enumerated
/// lexicographically: for each matrix, `E_θ[θ Π_k p(u_k|θ)]` and
/// `E_θ[Π_k p(u_k|θ)]`. Sensors are identical and conditionally independent
/// given θ, with per-sensor symbol law `symbol_law(θ)`.
fn matrix_moments(
    sensors: usize,
    symbols: usize,
    symbol_law: &mut dyn FnMut(f64) -> Result<Vec<f64>>,
    prior: &PriorModel,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let total = message_space_size(sensors, symbols)?;
    let mut numerator = vec![0.0; total];
    let mut marginal = vec![0.0; total];
    let mut matrix_probs = vec![0.0; total];
    for (&theta, &w) in prior.nodes().iter().zip(prior.weights()) {
        let per_sensor = symbol_law(theta)?;
        if per_sensor.len() != symbols {
            return Err(Error::Contract(format!(
                "symbol law returned {} probabilities, expected {symbols}",
                per_sensor.len()
            )));
        }
        // p(matrix|θ) for all matrices at once: extend the product one
        // sensor at a time.
        matrix_probs[0] = 1.0;
        let mut filled = 1;
        for _ in 0..sensors {
            for slot in (0..filled).rev() {
                let base = matrix_probs[slot];
                for (u, &p) in per_sensor.iter().enumerate() {
                    matrix_probs[slot * symbols + u] = base * p;
                }
            }
            filled *= symbols;
        }
        for ((num, mar), &p) in numerator.iter_mut().zip(&mut marginal).zip(&matrix_probs) {
            *num += w * theta * p;
            *mar += w * p;
        }
    }
    Ok((numerator, marginal))
}

/// Exact MMSE over the *whole* message matrix, by enumerating every matrix:
/// `E[θ²] − Σ_u E_θ[θ p(u|θ)]² / E_θ[p(u|θ)]`.
///
/// This is the oracle the fused-statistic bounds must match: the mean is a
/// sufficient statistic, so discarding everything but the mean loses nothing.
pub fn brute_force_mmse(
    sensors: usize,
    symbols: usize,
    mut symbol_law: impl FnMut(f64) -> Result<Vec<f64>>,
    prior: &PriorModel,
) -> Result<f64> {
    let (numerator, marginal) = matrix_moments(sensors, symbols, &mut symbol_law, prior)?;
    let explained: f64 = numerator
        .iter()
        .zip(&marginal)
        .map(|(&num, &mar)| if mar > 0.0 { num * num / mar } else { 0.0 })
        .sum();
    let mmse = prior.second_moment() - explained;
    if mmse < -1e-10 {
        return Err(Error::NumericalIntegrity(format!(
            "brute-force MMSE came out negative: {mmse}"
        )));
    }
    Ok(mmse.max(0.0))
}

/// Posterior mean of θ for every whole message matrix, enumerated
/// lexicographically over `(u_1, …, u_K)`. Zero-marginal matrices map to the
/// prior mean, matching the fused-statistic convention.
pub fn enumerate_message_posteriors(
    sensors: usize,
    symbols: usize,
    mut symbol_law: impl FnMut(f64) -> Result<Vec<f64>>,
    prior: &PriorModel,
) -> Result<Vec<(Vec<usize>, f64)>> {
    let (numerator, marginal) = matrix_moments(sensors, symbols, &mut symbol_law, prior)?;
    let mut out = Vec::with_capacity(numerator.len());
    for (index, (&num, &mar)) in numerator.iter().zip(&marginal).enumerate() {
        let mut matrix = vec![0usize; sensors];
        let mut rest = index;
        for slot in (0..sensors).rev() {
            matrix[slot] = rest % symbols;
            rest /= symbols;
        }
        let mean = if mar > 0.0 { num / mar } else { prior.mean() };
        out.push((matrix, mean));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{init_mlp, Activation, Mlp};
    use crate::quantizer::embed_bit_probs;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn uniform_prior() -> PriorModel {
        PriorModel::uniform(-1.0, 1.0).unwrap()
    }

    fn boxed(f: impl Fn(f64) -> Result<f64> + Send + Sync + 'static) -> GammaFn {
        Box::new(f)
    }

    /// Smooth strictly-interior response curve built from a tiny network.
    fn smooth_gamma(seed: u64) -> GammaFn {
        let net = init_mlp(&[1, 8, 1], &[Activation::Tanh, Activation::Sigmoid], seed).unwrap();
        boxed(move |theta| net.scalar(theta))
    }

    fn smooth_net(seed: u64) -> Mlp {
        init_mlp(&[1, 8, 1], &[Activation::Tanh, Activation::Sigmoid], seed).unwrap()
    }

    #[test]
    fn binomial_law_matches_hand_values() {
        let law = binomial_law(boxed(|_| Ok(0.5)), 2).unwrap();
        let probs = law.probs(0.3).unwrap();
        assert_eq!(probs.len(), 3);
        for (p, want) in probs.iter().zip([0.25, 0.5, 0.25]) {
            assert_abs_diff_eq!(p, &want, epsilon = 1e-14);
        }
        assert_eq!(law.support(), vec![vec![0.0], vec![0.5], vec![1.0]]);

        let law = binomial_law(boxed(|theta| Ok((1.0 + theta) / 4.0)), 1).unwrap();
        for theta in [-0.9, 0.0, 0.4] {
            let gamma = (1.0 + theta) / 4.0;
            let probs = law.probs(theta).unwrap();
            assert_abs_diff_eq!(probs[0], 1.0 - gamma, epsilon = 1e-12);
            assert_abs_diff_eq!(probs[1], gamma, epsilon = 1e-12);
        }
    }

    #[test]
    fn extreme_response_probabilities_stay_normalized() {
        let law = binomial_law(boxed(|_| Ok(0.999)), 50).unwrap();
        let probs = law.probs(0.0).unwrap();
        assert!(probs.iter().all(|p| p.is_finite() && *p >= 0.0));
        let total: f64 = probs.iter().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);

        // Fully saturated curves survive via the clamp.
        let law = binomial_law(boxed(|_| Ok(1.0)), 50).unwrap();
        let probs = law.probs(0.0).unwrap();
        let total: f64 = probs.iter().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
        assert!(probs[50] > 0.999);
    }

    #[test]
    fn single_bit_parallel_law_reduces_to_binomial() {
        let reference = binomial_law(smooth_gamma(3), 4).unwrap();
        let single = parallel_law(vec![smooth_gamma(3)], 4).unwrap();
        assert_eq!(single.support_counts(), reference.support_counts());
        for theta in [-0.8, -0.1, 0.5, 0.97] {
            let a = reference.probs(theta).unwrap();
            let b = single.probs(theta).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn two_bit_single_sensor_law_is_the_product_of_bit_laws() {
        let (a, b) = (0.3, 0.8);
        let law = parallel_law(vec![boxed(move |_| Ok(a)), boxed(move |_| Ok(b))], 1).unwrap();
        // Lexicographic support over (i_1, i_2).
        assert_eq!(
            law.support_counts(),
            &[vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]
        );
        let probs = law.probs(0.0).unwrap();
        let want = [(1.0 - a) * (1.0 - b), (1.0 - a) * b, a * (1.0 - b), a * b];
        for (p, w) in probs.iter().zip(want) {
            assert_abs_diff_eq!(p, &w, epsilon = 1e-14);
        }
    }

    #[test]
    fn parallel_laws_normalize_for_random_controllers() {
        let prior = uniform_prior();
        for (seed, sensors, bits) in [(10u64, 3usize, 2usize), (11, 10, 3), (12, 7, 1)] {
            let gammas: Vec<GammaFn> =
                (0..bits).map(|m| smooth_gamma(seed * 100 + m as u64)).collect();
            let law = parallel_law(gammas, sensors).unwrap();
            assert_eq!(law.support_size(), (sensors + 1).pow(bits as u32));
            for &theta in prior.nodes().iter().step_by(200) {
                let total: f64 = law.probs(theta).unwrap().iter().sum();
                assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn onehot_support_enumerates_compositions() {
        let law = onehot_law(Box::new(|_| Ok(vec![0.5, 0.5])), 2, 2).unwrap();
        assert_eq!(law.support_counts(), &[vec![2, 0], vec![1, 1], vec![0, 2]]);
        assert_eq!(law.support_size(), 3);

        // Support size is C(K+L-1, L-1).
        let law = onehot_law(Box::new(|_| Ok(vec![0.25; 4])), 4, 6).unwrap();
        assert_eq!(law.support_size(), 84); // C(9,3)
        for counts in law.support_counts() {
            assert_eq!(counts.iter().sum::<usize>(), 6);
        }
    }

    #[test]
    fn two_symbol_onehot_law_is_binomial_in_the_second_symbol() {
        let net = smooth_net(21);
        let vec_fn: GammaVecFn = Box::new(move |theta| {
            let g = net.scalar(theta)?;
            Ok(vec![1.0 - g, g])
        });
        let onehot = onehot_law(vec_fn, 2, 5).unwrap();
        let binom = binomial_law(smooth_gamma(21), 5).unwrap();
        for theta in [-0.7, 0.0, 0.3, 0.9] {
            let a = onehot.probs(theta).unwrap();
            let b = binom.probs(theta).unwrap();
            // Composition (K-j, j) carries the same probability as j ones.
            for (j, p) in b.iter().enumerate() {
                assert_abs_diff_eq!(a[j], *p, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn onehot_laws_normalize_for_random_controllers() {
        let prior = uniform_prior();
        for (seed, sensors, symbols) in [(31u64, 8usize, 4usize), (32, 5, 3), (33, 8, 2)] {
            let net = init_mlp(
                &[1, 6, symbols],
                &[Activation::Tanh, Activation::Softmax],
                seed,
            )
            .unwrap();
            let vec_fn: GammaVecFn = Box::new(move |theta| net.forward(&[theta]));
            let law = onehot_law(vec_fn, symbols, sensors).unwrap();
            for &theta in prior.nodes().iter().step_by(250) {
                let total: f64 = law.probs(theta).unwrap().iter().sum();
                assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn uninformative_quantizers_leave_the_prior_variance() {
        let prior = uniform_prior();
        let law = binomial_law(boxed(|_| Ok(0.37)), 6).unwrap();
        let bound = mse_lower_bound(&law, &prior).unwrap();
        assert_abs_diff_eq!(bound, 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn single_sensor_linear_curve_has_closed_form_bound() {
        // γ(θ) = (1+θ)/2 under uniform[-1,1]: bound = 1/3 − 2(1/6)²/(1/2) = 2/9.
        let prior = uniform_prior();
        let law = binomial_law(boxed(|theta| Ok((1.0 + theta) / 2.0)), 1).unwrap();
        let bound = mse_lower_bound(&law, &prior).unwrap();
        assert_abs_diff_eq!(bound, 2.0 / 9.0, epsilon = 1e-12);
    }

    #[test]
    fn bounds_agree_with_brute_force_enumeration() {
        let prior = uniform_prior();

        // Binary sensors: fused bit count vs all 2^K message vectors.
        for sensors in 1..=4usize {
            let net = smooth_net(40 + sensors as u64);
            let gamma: GammaFn = {
                let net = net.clone();
                boxed(move |theta| net.scalar(theta))
            };
            let fused = mse_lower_bound(&binomial_law(gamma, sensors).unwrap(), &prior).unwrap();
            let full = brute_force_mmse(
                sensors,
                2,
                |theta| {
                    let g = net.scalar(theta)?;
                    Ok(vec![1.0 - g, g])
                },
                &prior,
            )
            .unwrap();
            assert_abs_diff_eq!(fused, full, epsilon = 1e-11);
        }

        // Two-bit parallel sensors, K=3.
        let bit_nets = [smooth_net(50), smooth_net(51)];
        let gammas: Vec<GammaFn> = bit_nets
            .iter()
            .map(|net| {
                let net = net.clone();
                boxed(move |theta| net.scalar(theta))
            })
            .collect();
        let fused = mse_lower_bound(&parallel_law(gammas, 3).unwrap(), &prior).unwrap();
        let full = brute_force_mmse(
            3,
            4,
            |theta| {
                let bits: Vec<f64> =
                    bit_nets.iter().map(|n| n.scalar(theta)).collect::<Result<_>>()?;
                Ok(embed_bit_probs(&bits)?)
            },
            &prior,
        )
        .unwrap();
        assert_abs_diff_eq!(fused, full, epsilon = 1e-10);

        // Two-bit one-hot sensors, K=3.
        let net = init_mlp(&[1, 6, 4], &[Activation::Tanh, Activation::Softmax], 52).unwrap();
        let vec_fn: GammaVecFn = {
            let net = net.clone();
            Box::new(move |theta| net.forward(&[theta]))
        };
        let fused = mse_lower_bound(&onehot_law(vec_fn, 4, 3).unwrap(), &prior).unwrap();
        let full = brute_force_mmse(3, 4, |theta| net.forward(&[theta]), &prior).unwrap();
        assert_abs_diff_eq!(fused, full, epsilon = 1e-10);
    }

    #[test]
    fn embedded_parallel_controllers_reproduce_their_bound_in_the_onehot_family() {
        let prior = uniform_prior();
        let bit_nets = [smooth_net(60), smooth_net(61)];
        let gammas: Vec<GammaFn> = bit_nets
            .iter()
            .map(|net| {
                let net = net.clone();
                boxed(move |theta| net.scalar(theta))
            })
            .collect();
        let parallel = mse_lower_bound(&parallel_law(gammas, 3).unwrap(), &prior).unwrap();

        let vec_fn: GammaVecFn = Box::new(move |theta| {
            let bits: Vec<f64> =
                bit_nets.iter().map(|n| n.scalar(theta)).collect::<Result<_>>()?;
            Ok(embed_bit_probs(&bits)?)
        });
        let embedded = mse_lower_bound(&onehot_law(vec_fn, 4, 3).unwrap(), &prior).unwrap();
        assert_abs_diff_eq!(parallel, embedded, epsilon = 1e-12);
    }

    #[test]
    fn more_sensors_never_raise_the_bound() {
        let prior = uniform_prior();
        let net = smooth_net(70);
        let mut previous = f64::INFINITY;
        for sensors in 1..=6usize {
            let gamma: GammaFn = {
                let net = net.clone();
                boxed(move |theta| net.scalar(theta))
            };
            let bound = mse_lower_bound(&binomial_law(gamma, sensors).unwrap(), &prior).unwrap();
            assert!(
                bound <= previous + 1e-10,
                "bound rose from {previous} to {bound} at K={sensors}"
            );
            assert!((0.0..=prior.second_moment() + 1e-12).contains(&bound));
            previous = bound;
        }
    }

    #[test]
    fn posterior_mean_table_attains_the_bound() {
        let prior = uniform_prior();
        let net = smooth_net(80);
        let law = {
            let net = net.clone();
            binomial_law(boxed(move |theta| net.scalar(theta)), 4).unwrap()
        };
        let table = crate::fusion::posterior_mean(&prior, law.support_size(), |theta| {
            law.probs(theta)
        })
        .unwrap();
        let attained = population_estimator_mse(&law, &table, &prior).unwrap();
        let bound = mse_lower_bound(&law, &prior).unwrap();
        assert_abs_diff_eq!(attained, bound, epsilon = 1e-12);

        // Any other table does strictly worse.
        let zeros = vec![0.0; law.support_size()];
        let worse = population_estimator_mse(&law, &zeros, &prior).unwrap();
        assert!(worse > bound + 1e-6);
    }

    #[test]
    fn quarter_sine_curve_has_constant_fisher_information() {
        let sine = |theta: f64| Ok((1.0 + (PI * theta / 2.0).sin()) / 2.0);
        let sine_derivative = |theta: f64| Ok(PI / 4.0 * (PI * theta / 2.0).cos());
        for sensors in [1usize, 2, 5, 10] {
            for theta in [-0.9, -0.5, 0.0, 0.3, 0.8] {
                let analytic =
                    fisher_info(&sine, Some(&sine_derivative), theta, sensors).unwrap();
                assert_abs_diff_eq!(
                    analytic,
                    sensors as f64 * PI * PI / 4.0,
                    epsilon = 1e-10
                );
                // Central-difference fallback agrees.
                let numeric = fisher_info(&sine, None, theta, sensors).unwrap();
                assert_abs_diff_eq!(numeric, analytic, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn constant_curves_carry_no_information_and_saturated_ones_are_singular() {
        let info = fisher_info(&|_| Ok(0.42), None, 0.1, 5).unwrap();
        assert_abs_diff_eq!(info, 0.0, epsilon = 1e-20);

        let err = fisher_info(&|_| Ok(1.0), None, 0.25, 5).unwrap_err();
        assert_eq!(err.category(), "singularity");
        assert!(err.to_string().contains("0.25"));
    }

    #[test]
    fn closed_form_fisher_matches_the_direct_law_computation() {
        let sine = |theta: f64| Ok((1.0 + (PI * theta / 2.0).sin()) / 2.0);
        for sensors in [1usize, 2, 5] {
            let law = binomial_law(boxed(sine), sensors).unwrap();
            for theta in [-0.6, 0.0, 0.45] {
                let closed = fisher_info(&sine, None, theta, sensors).unwrap();
                let direct = fisher_info_direct(&law, theta, 1e-5).unwrap();
                assert_abs_diff_eq!(closed, direct, epsilon = 1e-6 * closed.max(1.0));
                // The fused statistic carries K times one sensor's information.
                let single = binomial_law(boxed(sine), 1).unwrap();
                let per_sensor = fisher_info_direct(&single, theta, 1e-5).unwrap();
                assert_abs_diff_eq!(
                    direct,
                    sensors as f64 * per_sensor,
                    epsilon = 1e-6 * direct.max(1.0)
                );
            }
        }
    }

    #[test]
    fn pcrlb_values_and_scaling() {
        assert_abs_diff_eq!(pcrlb_binary(100).unwrap(), 4.052847345693511e-3, epsilon = 1e-17);
        assert_abs_diff_eq!(pcrlb_binary(250).unwrap(), 1.6211389382774045e-3, epsilon = 1e-17);
        for sensors in [1usize, 5, 64, 123] {
            assert_eq!(
                pcrlb_binary(2 * sensors).unwrap(),
                pcrlb_binary(sensors).unwrap() / 2.0
            );
        }
        assert_eq!(pcrlb_binary(0).unwrap_err().category(), "contract");
    }

    #[test]
    fn brute_force_refuses_oversized_spaces() {
        let prior = uniform_prior();
        let err = brute_force_mmse(21, 2, |_| Ok(vec![0.5, 0.5]), &prior).unwrap_err();
        assert_eq!(err.category(), "space-too-large");
        assert!(err.to_string().contains("2^21"));

        assert!(brute_force_mmse(5, 2, |_| Ok(vec![0.5, 0.5]), &prior).is_ok());
    }

    #[test]
    fn message_posteriors_depend_only_on_the_fused_count() {
        let prior = uniform_prior();
        let net = smooth_net(90);
        let posteriors = enumerate_message_posteriors(
            3,
            2,
            |theta| {
                let g = net.scalar(theta)?;
                Ok(vec![1.0 - g, g])
            },
            &prior,
        )
        .unwrap();
        assert_eq!(posteriors.len(), 8);
        // Group by number of ones; all matrices in a group share a posterior.
        let mut by_count: Vec<Vec<f64>> = vec![Vec::new(); 4];
        for (matrix, mean) in &posteriors {
            by_count[matrix.iter().sum::<usize>()].push(*mean);
        }
        for group in by_count {
            for pair in group.windows(2) {
                assert_abs_diff_eq!(pair[0], pair[1], epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn broken_response_curves_are_reported() {
        let law = binomial_law(boxed(|_| Ok(f64::NAN)), 3).unwrap();
        assert_eq!(law.probs(0.0).unwrap_err().category(), "numerical-integrity");

        let law = binomial_law(boxed(|_| Ok(1.7)), 3).unwrap();
        assert_eq!(law.probs(0.0).unwrap_err().category(), "numerical-integrity");

        let vec_fn: GammaVecFn = Box::new(|_| Ok(vec![0.9, 0.9]));
        let law = onehot_law(vec_fn, 2, 3).unwrap();
        assert_eq!(law.probs(0.0).unwrap_err().category(), "numerical-integrity");
    }
}
