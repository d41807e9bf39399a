//! Random graphs with a fixed number of edges and Wigner matrices with
//! sub-Weibull entries, with their parameter estimates.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::cumulants::d_param;
use crate::error::{Error, Result};
use crate::matrix_core::{CovTensor, SymMatrix};
use crate::rng::rng_from_seed;

/// Number of vertex pairs `C(d, 2)`.
pub fn pair_count(d: usize) -> usize {
    d * d.saturating_sub(1) / 2
}

/// Marks `m` distinct positions out of `total` by a partial Fisher-Yates
/// shuffle kept sparse in a hash map.
fn choose_positions(total: usize, m: usize, rng: &mut impl Rng) -> Vec<bool> {
    let mut swaps: HashMap<usize, usize> = HashMap::with_capacity(2 * m);
    let mut chosen = vec![false; total];
    for i in 0..m {
        let j = rng.gen_range(i..total);
        let vj = *swaps.get(&j).unwrap_or(&j);
        let vi = *swaps.get(&i).unwrap_or(&i);
        swaps.insert(j, vi);
        chosen[vj] = true;
    }
    chosen
}

/// Adjacency matrix of a uniform simple graph on `d` vertices with `m`
/// edges. Pairs are indexed row by row over the upper triangle; when `m`
/// exceeds half the pairs the complement is sampled instead.
pub fn sample_gnm(d: usize, m: usize, seed: u64) -> Result<SymMatrix> {
    let total = pair_count(d);
    if m > total {
        return Err(Error::Domain(format!("{m} edges exceed the {total} available pairs")));
    }
    let mut rng = rng_from_seed(seed);
    let complement = m > total / 2;
    let picks = if complement { total - m } else { m };
    let chosen = choose_positions(total, picks, &mut rng);
    let mut a = SymMatrix::zeros(d);
    let mut t = 0;
    for i in 0..d {
        for j in (i + 1)..d {
            if chosen[t] != complement {
                a.set(i, j, 1.0);
            }
            t += 1;
        }
    }
    Ok(a)
}

/// `(A - p (J - I)) / sqrt(p (1 - p) d)` with `p = m / C(d, 2)`.
pub fn gnm_centered(a: &SymMatrix, m: usize) -> Result<SymMatrix> {
    let d = a.dim();
    let total = pair_count(d);
    if m == 0 || m >= total {
        return Err(Error::Degenerate(format!("edge count {m} leaves no randomness")));
    }
    let p = m as f64 / total as f64;
    let s = 1.0 / (p * (1.0 - p) * d as f64).sqrt();
    Ok(SymMatrix::from_fn(d, |i, j| if i == j { 0.0 } else { (a.get(i, j) - p) * s }))
}

/// Exact entry covariance of the centered graph matrix.
pub fn gnm_exact_cov(d: usize, m: usize) -> Result<CovTensor> {
    let total = pair_count(d);
    if m == 0 || m >= total {
        return Err(Error::Degenerate(format!("edge count {m} leaves no randomness")));
    }
    if d > 32 {
        return Err(Error::Domain("dense covariance limited to d <= 32".into()));
    }
    let n = total as f64;
    let mf = m as f64;
    let p = mf / n;
    let scale = 1.0 / (p * (1.0 - p) * d as f64);
    let cross = scale * p * ((mf - 1.0) / (n - 1.0) - p);
    let dd = d * d;
    let mut cov = SymMatrix::zeros(dd);
    for a in 0..dd {
        let (i, j) = (a / d, a % d);
        if i == j {
            continue;
        }
        for b in a..dd {
            let (k, r) = (b / d, b % d);
            if k == r {
                continue;
            }
            let same = (i == k && j == r) || (i == r && j == k);
            cov.set(a, b, if same { 1.0 / d as f64 } else { cross });
        }
    }
    CovTensor::new(d, cov)
}

/// Parameters of the graph model in the matrix-series form.
#[derive(Debug, Clone, PartialEq)]
pub struct FerayParams {
    pub p: f64,
    pub r_bound: f64,
    pub varsigma_sq_bound: f64,
    pub eta: f64,
    pub gamma: f64,
    /// Bounds on `K_r` for `r <= k_max`, indexed by `r`.
    pub k_bounds: Vec<f64>,
    pub d_bound: f64,
    /// Set when `m < 10 d`, where the asymptotic regime is doubtful.
    pub sparse_warning: bool,
}

/// Parameters of `G(d, m)` from cumulant constants `c_k[r] = C_r`
/// (`3 <= r <= k_max`): `K_r <= k_max^{k_max} p C_r`, `eta = p`,
/// `gamma = 0`, `R <= sqrt(2 / (d p))`, `varsigma^2 <= 2 / p`.
pub fn feray_graph_params(d: usize, m: usize, c_k: &[f64], k_max: usize) -> Result<FerayParams> {
    let total = pair_count(d);
    if m == 0 || m > total / 2 {
        return Err(Error::Domain(format!("need 0 < m <= C(d,2)/2, got m = {m}")));
    }
    if k_max < 3 || c_k.len() <= k_max {
        return Err(Error::Shape(format!("need C_r for 3 <= r <= {k_max}")));
    }
    let p = m as f64 / total as f64;
    let lead = (k_max as f64).powi(k_max as i32);
    let k_bounds: Vec<f64> = (0..=k_max).map(|r| if r < 3 { 0.0 } else { lead * p * c_k[r] }).collect();
    let d_bound = d_param(&k_bounds, p, 0.0, k_max)?;
    Ok(FerayParams {
        p,
        r_bound: (2.0 / (d as f64 * p)).sqrt(),
        varsigma_sq_bound: 2.0 / p,
        eta: p,
        gamma: 0.0,
        k_bounds,
        d_bound,
        sparse_warning: m < 10 * d,
    })
}

/// Sub-Weibull tail parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubWeibullSpec {
    pub theta: f64,
    pub scale: f64,
}

impl SubWeibullSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta >= 1.0) || !self.theta.is_finite() {
            return Err(Error::Domain(format!("theta must be at least 1, got {}", self.theta)));
        }
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(Error::Domain(format!("scale must be positive, got {}", self.scale)));
        }
        Ok(())
    }

    /// Standard deviation of the raw variable `sign * L * E^theta`.
    pub fn raw_std(&self) -> f64 {
        self.scale * statrs::function::gamma::gamma(2.0 * self.theta + 1.0).sqrt()
    }
}

/// Symmetric matrix with i.i.d. entries on and above the diagonal, each
/// distributed as `sign * L * E^theta` with `E ~ Exp(1)` and rescaled to
/// unit variance.
pub fn sample_subweibull_wigner(d: usize, spec: &SubWeibullSpec, seed: u64) -> Result<SymMatrix> {
    spec.validate()?;
    let mut rng = rng_from_seed(seed);
    let norm = 1.0 / spec.raw_std();
    let mut w = SymMatrix::zeros(d);
    for i in 0..d {
        for j in i..d {
            let e: f64 = Exp1.sample(&mut rng);
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            w.set(i, j, sign * spec.scale * e.powf(spec.theta) * norm);
        }
    }
    Ok(w)
}

/// Entry covariance of `W / sqrt(d)` for a unit-variance Wigner matrix.
pub fn wigner_exact_cov(d: usize) -> Result<CovTensor> {
    if d > 32 {
        return Err(Error::Domain("dense covariance limited to d <= 32".into()));
    }
    let dd = d * d;
    let mut cov = SymMatrix::zeros(dd);
    let v = 1.0 / d as f64;
    for i in 0..d {
        for j in 0..d {
            cov.set(i * d + j, i * d + j, v);
            cov.set(i * d + j, j * d + i, v);
        }
    }
    CovTensor::new(d, cov)
}

/// `2 delta + c' (d^{-1/4} x^{3/4} + d^{-1/6} x^{theta - 1/3} + d^{-1/2} x^theta)`.
pub fn baiyin_epsilon(d: usize, theta: f64, delta: f64, x: f64, c_prime: f64) -> Result<f64> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::Domain(format!("delta must lie in (0, 1], got {delta}")));
    }
    if !(x > 1.0) {
        return Err(Error::Domain(format!("x must exceed 1, got {x}")));
    }
    if !(theta >= 1.0) {
        return Err(Error::Domain(format!("theta must be at least 1, got {theta}")));
    }
    if !(c_prime >= 0.0) || !c_prime.is_finite() {
        return Err(Error::Domain("c' must be finite and nonnegative".into()));
    }
    let df = d as f64;
    Ok(2.0 * delta
        + c_prime * (df.powf(-0.25) * x.powf(0.75) + df.powf(-1.0 / 6.0) * x.powf(theta - 1.0 / 3.0) + df.powf(-0.5) * x.powf(theta)))
}

/// `min(1, (d + 1)(1 + delta)^{-x})`.
pub fn baiyin_tail(d: usize, delta: f64, x: f64) -> f64 {
    ((d as f64 + 1.0) * (1.0 + delta).powf(-x)).min(1.0)
}

/// Catalan number `C_k`.
pub fn catalan(k: u32) -> f64 {
    let mut c = 1.0;
    for i in 0..k {
        c = c * 2.0 * (2.0 * i as f64 + 1.0) / (i as f64 + 2.0);
    }
    c
}
