//! Gaussian quadrature rules.
//!
//! Two rules cover every integral in the crate: Gauss–Legendre for
//! expectations over the (bounded) prior, and Gauss–Hermite for expectations
//! over Gaussian observation noise. Both deliver spectral accuracy on the
//! smooth integrands that arise here (compositions of network outputs with
//! binomial weight functions), which is what lets bound evaluations agree
//! with closed forms and enumeration oracles to 1e-10.

/// Nodes and weights of a quadrature rule on its natural domain.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Gauss–Legendre rule with `n` nodes on `[-1, 1]`; weights sum to 2 and the
/// rule integrates polynomials up to degree `2n − 1` exactly.
///
/// Nodes are found by Newton iteration on the Legendre recurrence, seeded
/// with the Chebyshev-angle approximation; each root converges in a handful
/// of steps to machine precision.
pub fn gauss_legendre(n: usize) -> QuadratureRule {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev approximation to the i-th root (descending order).
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Evaluate P_n(x) and P'_n(x) via the three-term recurrence.
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * x * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            dp = n as f64 * (x * p1 - p2) / (x * x - 1.0);
            let dx = -p1 / dp;
            x += dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        // The middle node of an odd rule is exactly zero; the loop above
        // computed it to rounding error, so pin it.
        nodes[n / 2] = 0.0;
    }
    QuadratureRule { nodes, weights }
}

/// Evaluate the orthonormal Hermite polynomial `h̃_n` (orthonormal under the
/// weight `e^(-x²)`) and its derivative at `x` via the normalized recurrence.
///
/// Beyond the oscillatory region the values grow like `e^(x²/2)`, which
/// overflows `f64` once `n·x²` is large, so the running pair is renormalized
/// by exact powers of two; the returned `(p, dp, exponent)` represent the true
/// values `p·2^exponent` and `dp·2^exponent`. Newton steps use the ratio
/// `p/dp`, where the shared exponent cancels.
fn hermite_scaled(n: usize, x: f64) -> (f64, f64, i64) {
    const RESCALE_LIMIT: f64 = 1.0e150;
    const RESCALE_POW: i32 = 500;
    let scale_down = 2.0f64.powi(-RESCALE_POW);
    let mut exponent: i64 = 0;
    let mut p_prev = 0.0;
    let mut p = std::f64::consts::PI.powf(-0.25);
    for j in 0..n {
        let next = x * (2.0 / (j + 1) as f64).sqrt() * p - ((j as f64) / (j + 1) as f64).sqrt() * p_prev;
        p_prev = p;
        p = next;
        if p.abs() > RESCALE_LIMIT || p_prev.abs() > RESCALE_LIMIT {
            p *= scale_down;
            p_prev *= scale_down;
            exponent += RESCALE_POW as i64;
        }
    }
    // h̃'_n = √(2n) · h̃_{n-1}.
    let dp = (2.0 * n as f64).sqrt() * p_prev;
    (p, dp, exponent)
}

/// Gauss–Hermite weight `2 / h̃'_n(x)²` from the scaled derivative, computed
/// in logs so extreme nodes underflow gracefully to zero instead of breaking.
fn hermite_weight(dp: f64, exponent: i64) -> f64 {
    let ln_w = std::f64::consts::LN_2 * (1.0 - 2.0 * exponent as f64) - 2.0 * dp.abs().ln();
    ln_w.exp()
}

/// Number of Gauss–Hermite nodes of the `n`-point rule strictly below `t`:
/// the Sturm count of the Hermite Jacobi matrix (zero diagonal, off-diagonal
/// `β_j = √(j/2)`), whose eigenvalues are exactly those nodes. Each bisection
/// step with this count keeps a guaranteed bracket around one root, which
/// asymptotic seed formulas cannot promise once rules grow past a couple of
/// hundred nodes.
fn hermite_sturm_count(n: usize, t: f64) -> usize {
    let mut count = 0;
    let mut d = -t;
    if d == 0.0 {
        d = -1e-300;
    }
    if d < 0.0 {
        count += 1;
    }
    for j in 1..n {
        let beta_sq = j as f64 / 2.0;
        d = -t - beta_sq / d;
        if d == 0.0 {
            d = -1e-300;
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

/// Gauss–Hermite rule with `n` nodes for the physicists' weight `e^(-x²)` on
/// `(-∞, ∞)`; weights sum to `√π`.
///
/// Each node in the positive half is isolated by Sturm bisection on the
/// Jacobi matrix — a guaranteed bracket at any rule size — then polished to
/// machine precision with Newton steps on the scaled recurrence. The negative
/// half mirrors by symmetry, and weights at extreme nodes underflow cleanly
/// to zero. The refinement ladder for noisy quantization probabilities relies
/// on this staying correct into the thousands of nodes.
pub fn gauss_hermite(n: usize) -> QuadratureRule {
    assert!(n >= 1, "Gauss-Hermite rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = (n + 1) / 2;
    // All eigenvalues lie inside (-radius, radius).
    let radius = ((2 * n + 1) as f64).sqrt();
    for i in 0..m {
        // The i-th largest positive root is eigenvalue n-1-i in ascending
        // order; bisect until the bracket is tight, then polish.
        let target = n - 1 - i;
        let (mut lo, mut hi) = (0.0, radius);
        while hi - lo > 1e-12 * radius {
            let mid = 0.5 * (lo + hi);
            if hermite_sturm_count(n, mid) > target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let mut z = 0.5 * (lo + hi);
        let mut dp = 1.0;
        let mut exponent = 0i64;
        for _ in 0..20 {
            let (p, dpi, ei) = hermite_scaled(n, z);
            dp = dpi;
            exponent = ei;
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        let w = hermite_weight(dp, exponent);
        nodes[n - 1 - i] = z;
        nodes[i] = -z;
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    if n % 2 == 1 {
        // Odd rules have a node exactly at the origin.
        nodes[n / 2] = 0.0;
        let (_, dp, exponent) = hermite_scaled(n, 0.0);
        weights[n / 2] = hermite_weight(dp, exponent);
    }
    QuadratureRule { nodes, weights }
}

/// Expectation `E[f(X)]` for `X ~ N(mean, sigma²)` under a Gauss–Hermite
/// rule: substituting `x = mean + √2·sigma·t` gives
/// `E[f] = (1/√π) Σ w_i f(mean + √2·sigma·t_i)`.
pub fn hermite_expectation(rule: &QuadratureRule, mean: f64, sigma: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let scale = std::f64::consts::SQRT_2 * sigma;
    let mut acc = 0.0;
    for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
        acc += w * f(mean + scale * t);
    }
    acc / std::f64::consts::PI.sqrt()
}
