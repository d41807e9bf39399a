//! Closed-form norm bounds: the variational formula for block variance
//! profiles, a diagonal upper bound on the free norm, the Pisier bracket and
//! the deviation terms of the Markov and matrix-series bounds.

use crate::error::{Error, Result};
use crate::matrix_core::{jacobi_eigen, lu_solve, RectMatrix, SymMatrix};

/// Absolute constants of the bounds, kept configurable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConstants {
    /// Tail constant of the Markov bound.
    pub markov_tail: f64,
    /// Expectation constant of the Markov bound.
    pub markov_expectation: f64,
    /// Constant of the moment universality bound.
    pub moments: f64,
    /// Base of the tail constant of the matrix-series bound.
    pub series_tail: f64,
    /// Base of the expectation constant of the matrix-series bound.
    pub series_expectation: f64,
}

impl Default for BoundConstants {
    fn default() -> Self {
        BoundConstants {
            markov_tail: 120.0,
            markov_expectation: 240.0,
            moments: 60.0,
            series_tail: 8.0,
            series_expectation: 16.0,
        }
    }
}

/// Block variance profile: weights `alpha` and coupling matrix `c`.
#[derive(Debug, Clone)]
pub struct BlockProfile {
    pub alpha: Vec<f64>,
    pub c: RectMatrix,
}

impl BlockProfile {
    pub fn new(alpha: Vec<f64>, c: RectMatrix) -> Result<Self> {
        let n = alpha.len();
        if c.rows() != n || c.cols() != n {
            return Err(Error::Shape(format!("profile needs a {n}x{n} coupling matrix")));
        }
        let s: f64 = alpha.iter().sum();
        if alpha.iter().any(|&a| !(a > 0.0)) || (s - 1.0).abs() > 1e-12 {
            return Err(Error::Domain("block weights must be positive and sum to 1".into()));
        }
        if c.as_slice().iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain("coupling entries must be finite and nonnegative".into()));
        }
        Ok(BlockProfile { alpha, c })
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    /// Largest row sum of `c`.
    pub fn max_row_sum(&self) -> f64 {
        let n = self.len();
        (0..n).map(|i| (0..n).map(|j| self.c.get(i, j)).sum::<f64>()).fold(0.0, f64::max)
    }
}

/// Parameters of the Markov bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkovBoundParams {
    pub sigma: f64,
    pub v: f64,
    pub varsigma: f64,
    pub r: f64,
    pub psi: f64,
    pub d: usize,
}

/// Parameters of the matrix-series bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesBoundParams {
    pub sigma: f64,
    pub v: f64,
    pub varsigma_a: f64,
    pub r_a: f64,
    pub d_gamma: f64,
    pub eta: f64,
    pub gamma: f64,
    pub d: usize,
}

/// Threshold, probability and expectation bound at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailBound {
    pub threshold: f64,
    pub probability: f64,
    pub expectation_bound: f64,
}

fn nonneg(name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(Error::Domain(format!("{name} must be finite and nonnegative, got {v}")));
    }
    Ok(())
}

impl MarkovBoundParams {
    pub fn validate(&self) -> Result<()> {
        for (n, v) in [("sigma", self.sigma), ("v", self.v), ("varsigma", self.varsigma), ("R", self.r), ("Psi", self.psi)] {
            nonneg(n, v)?;
        }
        if self.d == 0 {
            return Err(Error::Domain("dimension must be positive".into()));
        }
        Ok(())
    }
}

impl SeriesBoundParams {
    pub fn validate(&self) -> Result<()> {
        for (n, v) in [
            ("sigma", self.sigma),
            ("v", self.v),
            ("varsigma", self.varsigma_a),
            ("R", self.r_a),
            ("D", self.d_gamma),
            ("gamma", self.gamma),
        ] {
            nonneg(n, v)?;
        }
        if !(self.eta > 0.0) {
            return Err(Error::Domain(format!("eta must be positive, got {}", self.eta)));
        }
        if self.d == 0 {
            return Err(Error::Domain("dimension must be positive".into()));
        }
        Ok(())
    }
}

fn profile_values(c: &RectMatrix, u: &[f64]) -> Vec<f64> {
    let n = u.len();
    let ex: Vec<f64> = u.iter().map(|v| v.exp()).collect();
    (0..n).map(|i| (-u[i]).exp() + (0..n).map(|j| c.get(i, j) * ex[j]).sum::<f64>()).collect()
}

fn max_of(v: &[f64]) -> (usize, f64) {
    v.iter().enumerate().fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
}

/// Subgradient descent on `u = log x` with step `1/sqrt(iter)`.
fn subgradient_stage(c: &RectMatrix) -> Vec<f64> {
    let n = c.rows();
    let mut u = vec![0.0; n];
    let mut best_u = u.clone();
    let mut best = max_of(&profile_values(c, &u)).1;
    let mut checkpoint = best;
    for iter in 1..=100_000usize {
        let (i, _) = max_of(&profile_values(c, &u));
        let mut g: Vec<f64> = (0..n).map(|k| c.get(i, k) * u[k].exp()).collect();
        g[i] -= (-u[i]).exp();
        let gn = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if gn == 0.0 {
            break;
        }
        let step = 1.0 / (iter as f64).sqrt();
        for k in 0..n {
            u[k] -= step * g[k] / gn;
        }
        let val = max_of(&profile_values(c, &u)).1;
        if val < best {
            best = val;
            best_u.clone_from(&u);
        }
        if iter % 500 == 0 {
            if checkpoint - best < 1e-10 {
                break;
            }
            checkpoint = best;
        }
    }
    best_u
}

/// Log-barrier Newton method for `min t` subject to `g_i(u) <= t`.
fn barrier_stage(c: &RectMatrix, u0: &[f64]) -> Result<Vec<f64>> {
    let n = c.rows();
    let m = n as f64;
    let f0 = max_of(&profile_values(c, u0)).1;
    let mut y: Vec<f64> = u0.to_vec();
    y.push(f0 * (1.0 + 1e-2) + 1e-3);
    let phi = |y: &[f64], tau: f64| -> f64 {
        let g = profile_values(c, &y[..n]);
        let t = y[n];
        let mut s = tau * t;
        for gi in g {
            let slack = t - gi;
            if slack <= 0.0 {
                return f64::INFINITY;
            }
            s -= slack.ln();
        }
        s
    };
    let mut tau = m / (1e-2 * f0.max(1e-12));
    while m / tau > 1e-14 * f0.max(1e-300) {
        for _ in 0..200 {
            let u = &y[..n];
            let t = y[n];
            let ex: Vec<f64> = u.iter().map(|v| v.exp()).collect();
            let emx: Vec<f64> = u.iter().map(|v| (-v).exp()).collect();
            let g = profile_values(c, u);
            let mut grad = vec![0.0; n + 1];
            let mut hess = vec![0.0; (n + 1) * (n + 1)];
            grad[n] = tau;
            for i in 0..n {
                let s = t - g[i];
                // gradient of t - g_i in (u, t)
                let mut dg = vec![0.0; n + 1];
                for k in 0..n {
                    dg[k] = c.get(i, k) * ex[k];
                }
                dg[i] -= emx[i];
                dg[n] = -1.0;
                for k in 0..=n {
                    grad[k] += dg[k] / s;
                }
                for a in 0..=n {
                    for b in 0..=n {
                        hess[a * (n + 1) + b] += dg[a] * dg[b] / (s * s);
                    }
                }
                for k in 0..n {
                    let mut curv = c.get(i, k) * ex[k];
                    if k == i {
                        curv += emx[i];
                    }
                    hess[k * (n + 1) + k] += curv / s;
                }
            }
            let h = RectMatrix::from_vec(n + 1, n + 1, hess)?;
            let rhs = RectMatrix::from_vec(n + 1, 1, grad.clone())?;
            let step = lu_solve(&h, &rhs)?.0;
            let decrement: f64 = (0..=n).map(|k| grad[k] * step.get(k, 0)).sum();
            if decrement / 2.0 < 1e-15 {
                break;
            }
            let base = phi(&y, tau);
            let mut alpha = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let cand: Vec<f64> = (0..=n).map(|k| y[k] - alpha * step.get(k, 0)).collect();
                let val = phi(&cand, tau);
                if val.is_finite() && val <= base - 0.25 * alpha * decrement {
                    y = cand;
                    moved = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !moved {
                break;
            }
        }
        tau *= 8.0;
    }
    y.truncate(n);
    Ok(y)
}

/// `inf_{x > 0} max_i {1/x_i + sum_j c_ij x_j}` and a minimizer.
///
/// A subgradient pass in `u = log x` locates the basin; a barrier Newton
/// method on the epigraph form then drives the value to full precision.
pub fn minmax_m(profile: &BlockProfile) -> Result<(f64, Vec<f64>)> {
    minmax_coupling(&profile.c)
}

/// [`minmax_m`] on a bare coupling matrix.
pub fn minmax_coupling(c: &RectMatrix) -> Result<(f64, Vec<f64>)> {
    let n = c.rows();
    if c.cols() != n || n == 0 {
        return Err(Error::Shape("coupling matrix must be square and nonempty".into()));
    }
    if c.as_slice().iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::Domain("coupling entries must be finite and nonnegative".into()));
    }
    for j in 0..n {
        if (0..n).all(|i| c.get(i, j) == 0.0) {
            return Err(Error::Unbounded(format!("column {j} of the coupling matrix is zero")));
        }
    }
    let u0 = subgradient_stage(c);
    let u = barrier_stage(c, &u0)?;
    let val = max_of(&profile_values(c, &u)).1;
    let val0 = max_of(&profile_values(c, &u0)).1;
    let (u, val) = if val <= val0 { (u, val) } else { (u0, val0) };
    Ok((val, u.iter().map(|v| v.exp()).collect()))
}

/// Pisier bracket `(max(|ES|, sigma), |ES| + 2 sigma)` containing the free
/// norm.
pub fn pisier_bracket(mean_norm: f64, sigma: f64) -> (f64, f64) {
    (mean_norm.max(sigma), mean_norm + 2.0 * sigma)
}

fn lehner_objective(mean: &SymMatrix, phis: &[SymMatrix], eta: f64, u: &[f64]) -> SymMatrix {
    let d = mean.dim();
    SymMatrix::from_fn(d, |i, j| {
        let mut v = eta * mean.get(i, j);
        if i == j {
            v += (-u[i]).exp();
        }
        for (k, p) in phis.iter().enumerate() {
            v += u[k].exp() * p.get(i, j);
        }
        v
    })
}

fn lehner_one_sign(mean: &SymMatrix, phis: &[SymMatrix], eta: f64) -> Result<f64> {
    let d = mean.dim();
    const U_MAX: f64 = 60.0;
    let scale = crate::matrix_core::operator_norm(mean)?
        + crate::matrix_core::operator_norm(&phis.iter().fold(SymMatrix::zeros(d), |a, p| a.add(p).unwrap()))?
        + 1.0;
    let mut u = vec![0.0; d];
    let mut best = f64::INFINITY;
    let eval = |u: &[f64], beta: f64| -> Result<(f64, f64, Vec<f64>)> {
        let a = lehner_objective(mean, phis, eta, u);
        let (vals, vecs) = jacobi_eigen(&a)?;
        let lmax = *vals.last().unwrap();
        let w: Vec<f64> = vals.iter().map(|l| (beta * (l - lmax)).exp()).collect();
        let z: f64 = w.iter().sum();
        let smooth = lmax + z.ln() / beta;
        let mut grad = vec![0.0; d];
        for (e, &we) in w.iter().enumerate() {
            let p = we / z;
            if p < 1e-14 {
                continue;
            }
            let v: Vec<f64> = (0..d).map(|i| vecs.get(i, e)).collect();
            for k in 0..d {
                let pv = phis[k].matvec(&v);
                let quad: f64 = v.iter().zip(&pv).map(|(a, b)| a * b).sum();
                grad[k] += p * (-(-u[k]).exp() * v[k] * v[k] + u[k].exp() * quad);
            }
        }
        Ok((lmax, smooth, grad))
    };
    for stage in 0..6 {
        let beta = 10f64.powi(stage + 1) / scale;
        // BFGS on the smoothed maximum, projected onto the box |u| <= U_MAX
        let mut hinv: Vec<f64> = (0..d * d).map(|i| if i % (d + 1) == 0 { 1.0 } else { 0.0 }).collect();
        let (lmax, mut f, mut g) = eval(&u, beta)?;
        best = best.min(lmax);
        for _ in 0..400 {
            let dir: Vec<f64> = (0..d).map(|i| -(0..d).map(|j| hinv[i * d + j] * g[j]).sum::<f64>()).collect();
            let slope: f64 = dir.iter().zip(&g).map(|(a, b)| a * b).sum();
            let (dir, slope) = if slope < 0.0 { (dir, slope) } else { (g.iter().map(|x| -x).collect(), -g.iter().map(|x| x * x).sum::<f64>()) };
            if slope.abs() < 1e-16 {
                break;
            }
            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..50 {
                let cand: Vec<f64> = u.iter().zip(&dir).map(|(a, b)| (a + step * b).clamp(-U_MAX, U_MAX)).collect();
                let (lm, fc, gc) = eval(&cand, beta)?;
                best = best.min(lm);
                if fc <= f + 1e-4 * step * slope {
                    accepted = Some((cand, fc, gc));
                    break;
                }
                step *= 0.5;
            }
            let Some((nu, nf, ng)) = accepted else { break };
            let s: Vec<f64> = nu.iter().zip(&u).map(|(a, b)| a - b).collect();
            let yv: Vec<f64> = ng.iter().zip(&g).map(|(a, b)| a - b).collect();
            let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
            let improvement = f - nf;
            u = nu;
            f = nf;
            g = ng;
            if sy > 1e-18 {
                let rho = 1.0 / sy;
                let hy: Vec<f64> = (0..d).map(|i| (0..d).map(|j| hinv[i * d + j] * yv[j]).sum()).collect();
                let yhy: f64 = yv.iter().zip(&hy).map(|(a, b)| a * b).sum();
                for i in 0..d {
                    for j in 0..d {
                        hinv[i * d + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                    }
                }
            }
            if improvement.abs() < 1e-15 * scale {
                break;
            }
        }
    }
    Ok(best)
}

/// Upper bound on the free norm from Lehner's variational formula,
/// restricted to positive diagonal `W`:
/// `max_{eta = +-1} inf_W lambda_max(W^{-1} + eta E[S] + Phi(W))`, where
/// `phi(w)` returns `Phi(diag(w))` and must be linear in `w`.
pub fn lehner_diagonal_upper(mean: &SymMatrix, phi: &dyn Fn(&[f64]) -> SymMatrix) -> Result<f64> {
    let d = mean.dim();
    if d == 0 || d > 64 {
        return Err(Error::Domain(format!("dimension {d} outside 1..=64")));
    }
    let phis: Vec<SymMatrix> = (0..d)
        .map(|k| {
            let mut e = vec![0.0; d];
            e[k] = 1.0;
            phi(&e)
        })
        .collect();
    if phis.iter().any(|p| p.dim() != d) {
        return Err(Error::Shape("covariance map returned a matrix of the wrong size".into()));
    }
    let up = lehner_one_sign(mean, &phis, 1.0)?;
    let down = lehner_one_sign(mean, &phis, -1.0)?;
    Ok(up.max(down))
}

/// Deviation term of the Markov bound.
pub fn markov_epsilon(p: &MarkovBoundParams, x: f64) -> Result<f64> {
    p.validate()?;
    nonneg("x", x)?;
    Ok((p.v * p.sigma).sqrt() * x.powf(0.75)
        + (p.r.cbrt() * p.psi.powf(2.0 / 3.0) * p.varsigma.powf(2.0 / 3.0)) * x.powf(2.0 / 3.0)
        + p.r * p.psi * x)
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::Domain(format!("delta must lie in (0, 1], got {delta}")));
    }
    Ok(())
}

/// Tail threshold, its probability bound and the expectation bound of the
/// Markov model.
pub fn markov_tail(
    p: &MarkovBoundParams,
    consts: &BoundConstants,
    delta: f64,
    x: f64,
    free_norm: f64,
) -> Result<TailBound> {
    check_delta(delta)?;
    nonneg("free norm", free_norm)?;
    let threshold = (1.0 + delta) * free_norm + consts.markov_tail * markov_epsilon(p, x)?;
    let probability = ((p.d as f64 + 1.0) * (1.0 + delta).powf(-x)).min(1.0);
    let xe = (p.d as f64 + 1.0).ln() / (1.0 + delta).ln();
    let expectation_bound = (1.0 + delta) * free_norm + consts.markov_expectation * markov_epsilon(p, xe)?;
    Ok(TailBound { threshold, probability, expectation_bound })
}

/// Deviation term of the moment bound of the Markov model.
pub fn moments_epsilon(p: &MarkovBoundParams, consts: &BoundConstants, order: f64) -> Result<f64> {
    p.validate()?;
    if !(order >= 1.0) {
        return Err(Error::Domain(format!("moment order must be at least 1, got {order}")));
    }
    Ok(2.0 * (p.v * p.sigma).sqrt() * order.powf(0.75)
        + consts.moments * (p.r.cbrt() * p.psi.powf(2.0 / 3.0) * p.varsigma.powf(2.0 / 3.0)) * order.powf(2.0 / 3.0)
        + consts.moments * p.r * p.psi * order)
}

/// Deviation term of the matrix-series bound.
pub fn series_epsilon(p: &SeriesBoundParams, x: f64) -> Result<f64> {
    p.validate()?;
    nonneg("x", x)?;
    Ok((p.v * p.sigma).sqrt() * x.powf(0.75)
        + p.eta.cbrt() * p.r_a.cbrt() * p.d_gamma * p.varsigma_a.powf(2.0 / 3.0) * x.powf((2.0 + 3.0 * p.gamma) / 3.0)
        + p.r_a * p.d_gamma * x.powf(1.0 + p.gamma))
}

/// Tail threshold, probability bound and expectation bound of the
/// matrix-series model.
pub fn series_tail(
    p: &SeriesBoundParams,
    consts: &BoundConstants,
    delta: f64,
    x: f64,
    free_norm: f64,
) -> Result<TailBound> {
    check_delta(delta)?;
    nonneg("free norm", free_norm)?;
    let threshold = (1.0 + delta) * free_norm + consts.series_tail.powf(1.0 + p.gamma) * series_epsilon(p, x)?;
    let probability = ((p.d as f64 + 1.0) * (1.0 + delta).powf(-x)).min(1.0);
    let xe = (p.d as f64 + 1.0).ln() / (1.0 + delta).ln();
    let expectation_bound =
        (1.0 + delta) * free_norm + consts.series_expectation.powf(1.0 + p.gamma) * series_epsilon(p, xe)?;
    Ok(TailBound { threshold, probability, expectation_bound })
}

/// `H_p` and the moment-universality gap bound of the Markov model.
pub fn universality_h(
    p: &MarkovBoundParams,
    consts: &BoundConstants,
    x0_moment: f64,
    order: u32,
) -> Result<(f64, f64)> {
    p.validate()?;
    nonneg("deterministic moment", x0_moment)?;
    if order < 3 {
        return Err(Error::Domain(format!("moment order must be at least 3, got {order}")));
    }
    let q = order as f64;
    let h = x0_moment
        + p.sigma
        + (p.v * p.sigma).sqrt() * q.powf(0.75)
        + p.r.cbrt() * p.psi.powf(2.0 / 3.0) * p.varsigma.powf(2.0 / 3.0) * q.powf(2.0 / 3.0)
        + p.r * p.psi * q;
    let gap = consts.moments.powi(order as i32) * q.powi(3) * p.r * p.psi * p.psi * p.varsigma * p.varsigma * h.powi(order as i32 - 3);
    Ok((h, gap))
}
