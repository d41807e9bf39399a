//! Block Markov chain model: a chain on `d` states grouped in `K` clusters,
//! whose cluster sequence is itself a Markov chain with matrix `p` and whose
//! state is uniform within the current cluster.
//!
//! The matrix of interest is the centered and scaled transition-count
//! matrix `M = sqrt(d/n) (N - E N)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dependence::{self, FiniteChain};
use crate::dyson::{block_coupling, DysonSystem};
use crate::error::{Error, Result};
use crate::free_bounds::{minmax_coupling, BlockProfile};
use crate::matrix_core::{lu_solve, CovTensor, RectMatrix, SymMatrix};
use crate::rng::rng_from_seed;

pub const SPEC_VERSION: u32 = 1;
const CLOSED_FORM_MAX_COND: f64 = 1e12;
const BRUTEFORCE_MAX_N: usize = 10_000;

/// Cluster transition matrix and cluster sizes of a block Markov chain run
/// for `n` steps.
#[derive(Debug, Clone)]
pub struct BmcSpec {
    k: usize,
    p: RectMatrix,
    sizes: Vec<usize>,
    n: usize,
    pi: Vec<f64>,
    offsets: Vec<usize>,
    cluster_of: Vec<usize>,
}

/// JSON form of a [`BmcSpec`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BmcConfig {
    #[serde(default = "default_version")]
    pub spec_version: u32,
    #[serde(rename = "K")]
    pub k: usize,
    pub p: Vec<Vec<f64>>,
    pub cluster_sizes: Vec<usize>,
    pub n: usize,
    /// Limiting cluster proportions; defaults to `cluster_sizes / d`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
}

fn default_version() -> u32 {
    SPEC_VERSION
}

/// Parameters of the refined estimates for the block Markov chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrakParams {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub frak_d: f64,
    pub frak_g: f64,
    pub frak_v: f64,
    pub frak_u: f64,
    pub frak_e: f64,
    pub psi_c: usize,
}

/// Norm threshold at moment order `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdRow {
    pub p: u32,
    pub threshold: f64,
}

/// Bounds on `|M|` for one spec.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub d: usize,
    pub n: usize,
    pub params: FrakParams,
    pub m_hat: f64,
    pub psi_e: usize,
    pub r_bound: f64,
    pub varsigma_sq_bound: f64,
    pub sigma_sq_bound: f64,
    pub v_sq_bound: f64,
    pub free_norm_bound: f64,
    pub thresholds: Vec<ThresholdRow>,
}

impl BmcSpec {
    pub fn new(p: RectMatrix, sizes: Vec<usize>, n: usize) -> Result<Self> {
        let k = sizes.len();
        if p.rows() != k || p.cols() != k {
            return Err(Error::Shape(format!("p must be {k}x{k} to match the cluster sizes")));
        }
        if sizes.contains(&0) {
            return Err(Error::Domain("cluster sizes must be positive".into()));
        }
        if n < 2 {
            return Err(Error::Domain("path length n must be at least 2".into()));
        }
        let pi = dependence::stationary_distribution(&p)?;
        let mut offsets = Vec::with_capacity(k + 1);
        let mut cluster_of = Vec::new();
        let mut acc = 0;
        for (c, &s) in sizes.iter().enumerate() {
            offsets.push(acc);
            acc += s;
            cluster_of.extend(std::iter::repeat_n(c, s));
        }
        offsets.push(acc);
        Ok(BmcSpec { k, p, sizes, n, pi, offsets, cluster_of })
    }

    pub fn from_config(cfg: &BmcConfig) -> Result<Self> {
        if cfg.spec_version != SPEC_VERSION {
            return Err(Error::Config(format!("unsupported spec_version {}", cfg.spec_version)));
        }
        if cfg.p.len() != cfg.k || cfg.cluster_sizes.len() != cfg.k || cfg.p.iter().any(|r| r.len() != cfg.k) {
            return Err(Error::Config(format!("K = {} does not match p and cluster_sizes", cfg.k)));
        }
        let p = RectMatrix::from_vec(cfg.k, cfg.k, cfg.p.concat())?;
        Self::new(p, cfg.cluster_sizes.clone(), cfg.n).map_err(|e| match e {
            Error::Shape(m) | Error::Domain(m) | Error::Ergodicity(m) => Error::Config(m),
            other => other,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: BmcConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_config(&cfg)
    }

    pub fn to_config(&self) -> BmcConfig {
        BmcConfig {
            spec_version: SPEC_VERSION,
            k: self.k,
            p: (0..self.k).map(|i| (0..self.k).map(|j| self.p.get(i, j)).collect()).collect(),
            cluster_sizes: self.sizes.clone(),
            n: self.n,
            alpha: None,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.offsets[self.k]
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> &RectMatrix {
        &self.p
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn cluster_of(&self, state: usize) -> usize {
        self.cluster_of[state]
    }

    /// Empirical proportions `#V_i / d`.
    pub fn alpha_hat(&self) -> Vec<f64> {
        let d = self.d() as f64;
        self.sizes.iter().map(|&s| s as f64 / d).collect()
    }

    /// Same clusters with a different path length.
    pub fn with_n(&self, n: usize) -> Result<Self> {
        Self::new(self.p.clone(), self.sizes.clone(), n)
    }

    /// `P(E = (i, j)) = pi_a p_ab / (#V_a #V_b)` for a stationary step.
    fn edge_prob(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.cluster_of[i], self.cluster_of[j]);
        self.pi[a] * self.p.get(a, b) / (self.sizes[a] * self.sizes[b]) as f64
    }

    /// One-step state transition probability.
    fn step_prob(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.cluster_of[i], self.cluster_of[j]);
        self.p.get(a, b) / self.sizes[b] as f64
    }
}

/// Cluster sizes and chain of the four-cluster example used in the figures,
/// at dimension `d` (sizes rounded, remainder added to the largest cluster)
/// and `n = n_factor * d`.
pub fn benchmark_spec(d: usize, n_factor: usize) -> Result<BmcSpec> {
    let p = RectMatrix::from_vec(
        4,
        4,
        vec![0.3, 0.7, 0.0, 0.0, 0.0, 0.0, 0.2, 0.8, 0.2, 0.7, 0.0, 0.1, 0.0, 0.0, 0.7, 0.3],
    )?;
    let mut sizes: Vec<usize> = BENCHMARK_ALPHA.iter().map(|a| ((a * d as f64).round() as usize).max(1)).collect();
    let total: usize = sizes.iter().sum();
    if total != d {
        sizes[2] = (sizes[2] + d).checked_sub(total).ok_or_else(|| Error::Domain("d too small".into()))?;
    }
    BmcSpec::new(p, sizes, n_factor * d)
}

/// Limiting cluster proportions of [`benchmark_spec`].
pub const BENCHMARK_ALPHA: [f64; 4] = [0.2, 0.1, 0.4, 0.3];

/// Stationary law of an ergodic cluster chain.
pub fn stationary_distribution(p: &RectMatrix) -> Result<Vec<f64>> {
    dependence::stationary_distribution(p)
}

fn sample_index(cum: &[f64], u: f64) -> usize {
    cum.iter().position(|&c| u < c).unwrap_or(cum.len() - 1)
}

/// Samples a path `Z_1, ..., Z_n` of states.
pub fn simulate_path(spec: &BmcSpec, seed: u64) -> Vec<usize> {
    let mut rng = rng_from_seed(seed);
    let k = spec.k;
    let cum = |w: &mut dyn Iterator<Item = f64>| -> Vec<f64> {
        let mut acc = 0.0;
        w.map(|x| {
            acc += x;
            acc
        })
        .collect()
    };
    let start = cum(&mut spec.pi.iter().cloned());
    let rows: Vec<Vec<f64>> = (0..k).map(|a| cum(&mut (0..k).map(|b| spec.p.get(a, b)))).collect();
    let mut path = Vec::with_capacity(spec.n);
    let mut c = sample_index(&start, rng.gen::<f64>() * start[k - 1]);
    path.push(spec.offsets[c] + rng.gen_range(0..spec.sizes[c]));
    for _ in 1..spec.n {
        let row = &rows[c];
        c = sample_index(row, rng.gen::<f64>() * row[k - 1]);
        path.push(spec.offsets[c] + rng.gen_range(0..spec.sizes[c]));
    }
    path
}

/// Counts `N_ij` of transitions `i -> j` along the path.
pub fn frequency_matrix(spec: &BmcSpec, path: &[usize]) -> RectMatrix {
    let d = spec.d();
    let mut m = RectMatrix::zeros(d, d);
    for w in path.windows(2) {
        let v = m.get(w[0], w[1]);
        m.set(w[0], w[1], v + 1.0);
    }
    m
}

/// `E N_ij = (n - 1) pi_a p_ab / (#V_a #V_b)`.
pub fn expected_frequency(spec: &BmcSpec) -> RectMatrix {
    let d = spec.d();
    let scale = (spec.n - 1) as f64;
    RectMatrix::from_fn(d, d, |i, j| scale * spec.edge_prob(i, j))
}

/// `M = sqrt(d/n) (N - E N)`.
pub fn centered_scaled(spec: &BmcSpec, path: &[usize]) -> RectMatrix {
    let d = spec.d();
    let mut m = frequency_matrix(spec, path);
    let s = (d as f64 / spec.n as f64).sqrt();
    let scale = (spec.n - 1) as f64;
    for i in 0..d {
        for j in 0..d {
            m.set(i, j, s * (m.get(i, j) - scale * spec.edge_prob(i, j)));
        }
    }
    m
}

/// Samples `M` directly from a seed.
pub fn sample_m(spec: &BmcSpec, seed: u64) -> RectMatrix {
    centered_scaled(spec, &simulate_path(spec, seed))
}

fn identity(k: usize) -> RectMatrix {
    RectMatrix::from_fn(k, k, |i, j| if i == j { 1.0 } else { 0.0 })
}

fn centered_chain(spec: &BmcSpec) -> RectMatrix {
    let k = spec.k;
    RectMatrix::from_fn(k, k, |i, j| spec.p.get(i, j) - spec.pi[j])
}

fn mat_pow(a: &RectMatrix, mut e: usize) -> RectMatrix {
    let mut result = identity(a.rows());
    let mut base = a.clone();
    while e > 0 {
        if e & 1 == 1 {
            result = result.matmul(&base).unwrap();
        }
        base = base.matmul(&base).unwrap();
        e >>= 1;
    }
    result
}

/// `q = (1/n) sum_{t=1}^{n-3} (n - 2 - t) (p^t - Pi)` by direct summation.
pub fn q_bruteforce(spec: &BmcSpec) -> Result<RectMatrix> {
    if spec.n > BRUTEFORCE_MAX_N {
        return Err(Error::Domain(format!("brute force limited to n <= {BRUTEFORCE_MAX_N}")));
    }
    let k = spec.k;
    let n = spec.n;
    let mut q = RectMatrix::zeros(k, k);
    let mut pt = spec.p.clone();
    for t in 1..n.saturating_sub(2) {
        let w = (n - 2 - t) as f64;
        for u in 0..k {
            for v in 0..k {
                q.set(u, v, q.get(u, v) + w * (pt.get(u, v) - spec.pi[v]));
            }
        }
        pt = pt.matmul(&spec.p)?;
    }
    let scale = 1.0 / n as f64;
    Ok(RectMatrix::from_fn(k, k, |u, v| scale * q.get(u, v)))
}

/// `q` from the resolvent identity
/// `q = (1/n) (A - I)^{-2} (A^{n-1} - (n-2) A^2 + (n-3) A)` with
/// `A = p - Pi`, valid for `n >= 4`. Returns the condition number of
/// `A - I` alongside.
pub fn q_closed_form(spec: &BmcSpec) -> Result<(RectMatrix, f64)> {
    let k = spec.k;
    let n = spec.n;
    if n < 4 {
        return Ok((RectMatrix::zeros(k, k), 1.0));
    }
    let a = centered_chain(spec);
    let a2 = a.matmul(&a)?;
    let an = mat_pow(&a, n - 1);
    let rhs = RectMatrix::from_fn(k, k, |i, j| an.get(i, j) - (n - 2) as f64 * a2.get(i, j) + (n - 3) as f64 * a.get(i, j));
    let b = RectMatrix::from_fn(k, k, |i, j| a.get(i, j) - if i == j { 1.0 } else { 0.0 });
    let (y, cond) = lu_solve(&b, &rhs)?;
    let (x, _) = lu_solve(&b, &y)?;
    let scale = 1.0 / n as f64;
    Ok((RectMatrix::from_fn(k, k, |i, j| scale * x.get(i, j)), cond))
}

fn frakd_from_q(spec: &BmcSpec, q: &RectMatrix) -> f64 {
    let k = spec.k;
    let d = spec.d() as f64;
    let mut best = 0.0f64;
    for u in 0..k {
        for v in 0..k {
            for w in 0..k {
                let val = q.get(u, v).abs() / spec.sizes[v] as f64 * spec.p.get(v, w) / spec.sizes[w] as f64;
                best = best.max(val);
            }
        }
    }
    d * d * best
}

/// `frak d` by direct `O(n K^3)` summation.
pub fn frakd_bruteforce(spec: &BmcSpec) -> Result<f64> {
    Ok(frakd_from_q(spec, &q_bruteforce(spec)?))
}

/// `frak d` from the closed form alone, with the condition number of `A - I`.
pub fn frakd_closed_form(spec: &BmcSpec) -> Result<(f64, f64)> {
    let (q, cond) = q_closed_form(spec)?;
    Ok((frakd_from_q(spec, &q), cond))
}

/// `frak d` from the closed form, falling back to summation when `A - I`
/// is badly conditioned.
pub fn frakd(spec: &BmcSpec) -> Result<f64> {
    let (q, cond) = q_closed_form(spec)?;
    if cond > CLOSED_FORM_MAX_COND || !q.is_finite() {
        return frakd_bruteforce(spec);
    }
    Ok(frakd_from_q(spec, &q))
}

/// Coupling matrix of the Dyson system with proportions `alpha_hat`.
pub fn c_hat(spec: &BmcSpec) -> RectMatrix {
    block_coupling(&spec.alpha_hat(), &spec.pi, &spec.p)
}

/// Variational value for the finite-`d` profile.
pub fn mhat(spec: &BmcSpec) -> Result<f64> {
    Ok(minmax_coupling(&c_hat(spec))?.0)
}

/// Variational value for the limiting profile with proportions `alpha`.
pub fn limiting_m(alpha: &[f64], pi: &[f64], p: &RectMatrix) -> Result<f64> {
    let profile = BlockProfile::new(alpha.to_vec(), RectMatrix::zeros(alpha.len(), alpha.len()))?;
    let c = block_coupling(&profile.alpha, pi, p);
    Ok(minmax_coupling(&c)?.0)
}

/// Dyson system of the spec, with proportions `alpha_hat`.
pub fn dyson_system(spec: &BmcSpec) -> Result<DysonSystem> {
    DysonSystem::new(spec.alpha_hat(), spec.pi.clone(), spec.p.clone())
}

/// The refined parameters `c_1, c_2, c_3, d, g, v, u, E` and `Psi(C)`.
pub fn frak_params(spec: &BmcSpec) -> Result<FrakParams> {
    let k = spec.k;
    let d = spec.d() as f64;
    let n = spec.n as f64;
    let sz = |i: usize| spec.sizes[i] as f64;
    let pi = &spec.pi;
    let p = &spec.p;
    let mut c1 = 0.0f64;
    let mut c2 = 0.0f64;
    let mut c3 = 0.0f64;
    for u in 0..k {
        c1 = c1.max(pi[u] / sz(u));
        for v in 0..k {
            c2 = c2.max(pi[u] * p.get(u, v) / (sz(u) * sz(v)));
            for w in 0..k {
                c3 = c3.max(pi[u] * p.get(u, v) * p.get(v, w) / (sz(u) * sz(v) * sz(w)));
            }
        }
    }
    let c1 = d * c1;
    let c2 = d * d * c2;
    let c3 = d * d * d * c3;
    let fd = frakd(spec)?;
    let frak_g = c1 + (11.0 * c2 * c2 + 6.0 * c3 + 8.0 * c2 * fd) / d;
    let frak_v = 2.0 * ((c2 + 3.0 * c2 * c2 + 4.0 * c3 + 2.0 * c2 * fd) + (2.0 * c3 + 8.0 * c2 * c2 + 6.0 * c2 * fd) / d);
    let ch = c_hat(spec);
    let mut frak_u = 0.0f64;
    for i in 0..2 * k {
        let row_min = (0..2 * k)
            .filter(|&j| ch.get(i, j) > 0.0)
            .map(|j| 2.0 * c1.sqrt() / ch.get(i, j))
            .fold(f64::INFINITY, f64::min);
        if row_min.is_finite() {
            frak_u = frak_u.max(row_min);
        }
    }
    let frak_e = frak_u * ((d / n) * c2 + 3.0 * c2 * c2 + 5.0 * c3 + 2.0 * c2 * fd) + frak_u / d * (8.0 * c2 * c2 + 6.0 * c2 * fd);
    let psi_c = dependence::capital_psi(&FiniteChain::stationary(p.clone(), spec.n)?)?;
    Ok(FrakParams { c1, c2, c3, frak_d: fd, frak_g, frak_v, frak_u, frak_e, psi_c })
}

/// Norm thresholds `threshold(p)` for `p = 1..=p_max`; the tail bound at
/// `x` is `d x^{-2p}` (see [`threshold_tail`]).
pub fn bound_report(spec: &BmcSpec, p_max: u32) -> Result<BoundReport> {
    if p_max == 0 {
        return Err(Error::Domain("p_max must be positive".into()));
    }
    let fp = frak_params(spec)?;
    let m_hat = mhat(spec)?;
    let d = spec.d() as f64;
    let ratio = d / spec.n as f64;
    let psi_e = fp.psi_c + 1;
    let pe = psi_e as f64;
    let thresholds = (1..=p_max)
        .map(|q| {
            let qf = q as f64;
            let threshold = m_hat
                + fp.frak_e / d
                + 2.0 * (fp.frak_v * fp.frak_g / d).powf(0.25) * qf.powf(0.75)
                + 60.0 * (4.0 * ratio * pe.powi(4) * fp.c1 * fp.c1).powf(1.0 / 6.0) * qf.powf(2.0 / 3.0)
                + 120.0 * ratio.sqrt() * pe * qf;
            ThresholdRow { p: q, threshold }
        })
        .collect();
    Ok(BoundReport {
        d: spec.d(),
        n: spec.n,
        params: fp,
        m_hat,
        psi_e,
        r_bound: 2.0 * ratio.sqrt(),
        varsigma_sq_bound: fp.c1,
        sigma_sq_bound: fp.frak_g,
        v_sq_bound: fp.frak_v / d,
        free_norm_bound: m_hat + fp.frak_e / d,
        thresholds,
    })
}

/// `min(1, d x^{-2p})`.
pub fn threshold_tail(d: usize, p: u32, x: f64) -> f64 {
    (d as f64 * x.powf(-2.0 * p as f64)).min(1.0)
}

/// Exact covariance of the entries of `M`, indexed by `(i*d + j, k*d + m)`.
pub fn exact_cov_m(spec: &BmcSpec) -> Result<CovTensor> {
    let d = spec.d();
    if d > 64 {
        return Err(Error::Domain(format!("dense covariance limited to d <= 64, got {d}")));
    }
    let n = spec.n;
    let nf = n as f64;
    let q = if n >= 4 { q_bruteforce_or_closed(spec)? } else { RectMatrix::zeros(spec.k, spec.k) };
    let qt = |j: usize, k: usize| q.get(spec.cluster_of[j], spec.cluster_of[k]) / spec.sizes[spec.cluster_of[k]] as f64;
    let n1 = (n - 1) as f64;
    let n2 = n.saturating_sub(2) as f64;
    let dd = d * d;
    let mut cov = vec![0.0; dd * dd];
    for a in 0..dd {
        let (i, j) = (a / d, a % d);
        let pij = spec.edge_prob(i, j);
        let qij = spec.step_prob(i, j);
        for b in a..dd {
            let (k, m) = (b / d, b % d);
            let pkm = spec.edge_prob(k, m);
            let qkm = spec.step_prob(k, m);
            let mut v = n1 * (if a == b { pij } else { 0.0 } - pij * pkm);
            v += n2 * (if j == k { pij * qkm } else { 0.0 } - pij * pkm);
            v += n2 * (if m == i { pkm * qij } else { 0.0 } - pij * pkm);
            v += nf * (pij * qkm * qt(j, k) + pkm * qij * qt(m, i));
            let v = v * d as f64 / nf;
            cov[a * dd + b] = v;
            cov[b * dd + a] = v;
        }
    }
    CovTensor::new(d, SymMatrix::new(dd, cov)?)
}

fn q_bruteforce_or_closed(spec: &BmcSpec) -> Result<RectMatrix> {
    let (q, cond) = q_closed_form(spec)?;
    if cond > CLOSED_FORM_MAX_COND || !q.is_finite() {
        q_bruteforce(spec)
    } else {
        Ok(q)
    }
}

/// `E[M M^T]` and `E[M^T M]` from a covariance tensor of a centered matrix.
pub fn second_moments(cov: &CovTensor) -> (SymMatrix, SymMatrix) {
    let d = cov.d();
    let rows = SymMatrix::from_fn(d, |i, k| (0..d).map(|j| cov.entry(i, j, k, j)).sum());
    let cols = SymMatrix::from_fn(d, |j, l| (0..d).map(|i| cov.entry(i, j, i, l)).sum());
    (rows, cols)
}

/// `sigma(S)^2 = max(|E M M^T|, |E M^T M|)` for the dilation `S` of `M`.
pub fn sigma_s_squared(cov: &CovTensor) -> Result<f64> {
    let (r, c) = second_moments(cov);
    Ok(crate::matrix_core::operator_norm(&r)?.max(crate::matrix_core::operator_norm(&c)?))
}

/// `v(S)^2 = 2 |Cov(M)|` for the dilation `S` of `M`: each entry of `M`
/// appears twice in `S`.
pub fn v_s_squared(cov: &CovTensor) -> Result<f64> {
    Ok(2.0 * crate::matrix_core::v_param(cov)?.powi(2))
}

/// The linear map `W -> E[S W S]` on diagonal `W = diag(w_1, w_2)` for
/// the dilation `S` of a centered `M`.
pub fn dilation_phi(cov: &CovTensor, w: &[f64]) -> SymMatrix {
    let d = cov.d();
    let (w1, w2) = w.split_at(d);
    let mut out = SymMatrix::zeros(2 * d);
    for i in 0..d {
        for k in i..d {
            let v: f64 = (0..d).map(|j| w2[j] * cov.entry(i, j, k, j)).sum();
            out.set(i, k, v);
        }
    }
    for j in 0..d {
        for l in j..d {
            let v: f64 = (0..d).map(|i| w1[i] * cov.entry(i, j, i, l)).sum();
            out.set(d + j, d + l, v);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_cluster(n: usize) -> BmcSpec {
        let p = RectMatrix::from_vec(2, 2, vec![0.3, 0.7, 0.6, 0.4]).unwrap();
        BmcSpec::new(p, vec![1, 2], n).unwrap()
    }

    #[test]
    fn config_roundtrip_and_strictness() {
        let spec = two_cluster(10);
        let text = serde_json::to_string(&spec.to_config()).unwrap();
        let back = BmcSpec::from_json(&text).unwrap();
        assert_eq!(back.d(), 3);
        let bad = r#"{"K":1,"p":[[1.0]],"cluster_sizes":[2],"n":5,"extra":1}"#;
        assert!(matches!(BmcSpec::from_json(bad), Err(Error::Config(_))));
        let ok = r#"{"K":1,"p":[[1.0]],"cluster_sizes":[2],"n":5}"#;
        assert!(BmcSpec::from_json(ok).is_ok());
        let periodic = r#"{"K":2,"p":[[0,1],[1,0]],"cluster_sizes":[1,1],"n":5}"#;
        assert!(matches!(BmcSpec::from_json(periodic), Err(Error::Config(_))));
    }

    #[test]
    fn counts_sum_to_n_minus_one() {
        let spec = two_cluster(500);
        let path = simulate_path(&spec, 9);
        let f = frequency_matrix(&spec, &path);
        assert_eq!(f.as_slice().iter().sum::<f64>(), 499.0);
        let e = expected_frequency(&spec);
        assert!((e.as_slice().iter().sum::<f64>() - 499.0).abs() < 1e-9);
    }

    #[test]
    fn periodic_chain_rejected() {
        let p = RectMatrix::from_vec(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert!(matches!(stationary_distribution(&p), Err(Error::Ergodicity(_))));
    }

    #[test]
    fn one_cluster_limit_is_two() {
        let p = RectMatrix::from_vec(1, 1, vec![1.0]).unwrap();
        let m = limiting_m(&[1.0], &[1.0], &p).unwrap();
        assert!((m - 2.0).abs() < 1e-8);
    }

    #[test]
    fn closed_form_q_matches_sum() {
        for n in [4usize, 5, 9, 50] {
            let spec = two_cluster(n);
            let (a, _) = q_closed_form(&spec).unwrap();
            let b = q_bruteforce(&spec).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    assert!((a.get(i, j) - b.get(i, j)).abs() < 1e-13, "n={n}");
                }
            }
        }
    }

    // Oracle: enumerate every path of a tiny chain and compute the
    // covariance of the transition counts directly.
    #[test]
    fn exact_covariance_by_enumeration() {
        for n in [2usize, 3, 5] {
            let spec = two_cluster(n);
            let d = spec.d();
            let dd = d * d;
            let mut mean = vec![0.0; dd];
            let mut second = vec![0.0; dd * dd];
            let total = d.pow(n as u32);
            for code in 0..total {
                let path: Vec<usize> = (0..n).map(|t| (code / d.pow(t as u32)) % d).collect();
                let c0 = spec.cluster_of(path[0]);
                let mut prob = spec.pi[c0] / spec.sizes[c0] as f64;
                for w in path.windows(2) {
                    prob *= spec.step_prob(w[0], w[1]);
                }
                if prob == 0.0 {
                    continue;
                }
                let mut counts = vec![0.0; dd];
                for w in path.windows(2) {
                    counts[w[0] * d + w[1]] += 1.0;
                }
                for a in 0..dd {
                    mean[a] += prob * counts[a];
                    for b in 0..dd {
                        second[a * dd + b] += prob * counts[a] * counts[b];
                    }
                }
            }
            let cov = exact_cov_m(&spec).unwrap();
            let scale = d as f64 / n as f64;
            for a in 0..dd {
                for b in 0..dd {
                    let direct = scale * (second[a * dd + b] - mean[a] * mean[b]);
                    assert!((direct - cov.matrix().get(a, b)).abs() < 1e-13, "n={n} a={a} b={b}");
                }
            }
        }
    }

    #[test]
    fn benchmark_sizes() {
        let spec = benchmark_spec(400, 100).unwrap();
        assert_eq!(spec.sizes(), &[80, 40, 160, 120]);
        assert_eq!(spec.n(), 40_000);
    }
}
