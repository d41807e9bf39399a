//! Vector Dyson equation of a block variance profile, its Stieltjes
//! transform, spectral density and right edge of the support.

use num_complex::Complex64;

use crate::dependence::check_stochastic;
use crate::error::{Error, Result};
use crate::matrix_core::RectMatrix;

pub const DAMPING: f64 = 0.5;
pub const RESIDUAL_TOL: f64 = 1e-12;
pub const MAX_ITER: usize = 100_000;
pub const MIN_IMAG: f64 = 1e-6;
pub const DEFAULT_EPS: f64 = 1e-3;

/// Cluster weights `alpha`, transition matrix `p` and its stationary law `pi`.
#[derive(Debug, Clone)]
pub struct DysonSystem {
    k: usize,
    alpha: Vec<f64>,
    pi: Vec<f64>,
    p: RectMatrix,
    coupling: RectMatrix,
}

/// Solution of the Dyson system at one spectral parameter.
#[derive(Debug, Clone)]
pub struct DysonSolution {
    pub a: Vec<Complex64>,
    pub s: Complex64,
    pub iterations: usize,
}

impl DysonSystem {
    pub fn new(alpha: Vec<f64>, pi: Vec<f64>, p: RectMatrix) -> Result<Self> {
        let k = alpha.len();
        if pi.len() != k || p.rows() != k {
            return Err(Error::Shape("alpha, pi and p must agree in size".into()));
        }
        check_stochastic(&p)?;
        let sa: f64 = alpha.iter().sum();
        if alpha.iter().any(|&a| !(a > 0.0)) || (sa - 1.0).abs() > 1e-12 {
            return Err(Error::Domain("alpha must be positive and sum to 1".into()));
        }
        let sp: f64 = pi.iter().sum();
        if pi.iter().any(|&a| !(a >= 0.0)) || (sp - 1.0).abs() > 1e-12 {
            return Err(Error::Domain("pi must be a probability vector".into()));
        }
        for j in 0..k {
            let flow: f64 = (0..k).map(|i| pi[i] * p.get(i, j)).sum();
            if (flow - pi[j]).abs() > 1e-10 {
                return Err(Error::Domain("pi is not stationary for p".into()));
            }
        }
        let coupling = block_coupling(&alpha, &pi, &p);
        Ok(DysonSystem { k, alpha, pi, p, coupling })
    }

    /// The semicircle system: one cluster.
    pub fn semicircle() -> Self {
        Self::new(vec![1.0], vec![1.0], RectMatrix::from_vec(1, 1, vec![1.0]).unwrap()).unwrap()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn p(&self) -> &RectMatrix {
        &self.p
    }

    /// `2K x 2K` coupling matrix of the system.
    pub fn coupling(&self) -> &RectMatrix {
        &self.coupling
    }

    /// Largest row sum of the coupling matrix, the squared `sigma` of the
    /// underlying variance profile.
    pub fn sigma_squared(&self) -> f64 {
        let n = 2 * self.k;
        (0..n).map(|i| (0..n).map(|j| self.coupling.get(i, j)).sum::<f64>()).fold(0.0, f64::max)
    }

    fn apply(&self, z: Complex64, a: &[Complex64], out: &mut [Complex64]) {
        let n = 2 * self.k;
        for i in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..n {
                let c = self.coupling.get(i, j);
                if c != 0.0 {
                    acc += a[j] * c;
                }
            }
            out[i] = (z - acc).inv();
        }
    }

    fn stieltjes(&self, a: &[Complex64]) -> Complex64 {
        let k = self.k;
        (0..k).map(|i| (a[i] + a[k + i]) * (0.5 * self.alpha[i])).sum()
    }
}

/// Coupling of the block system: row `i <= K` couples to column cluster
/// `j` through `pi_i p_ij / alpha_i`, row `K + i` to row cluster `j`
/// through `pi_j p_ji / alpha_i`.
pub fn block_coupling(alpha: &[f64], pi: &[f64], p: &RectMatrix) -> RectMatrix {
    let k = alpha.len();
    let mut c = RectMatrix::zeros(2 * k, 2 * k);
    for i in 0..k {
        for j in 0..k {
            c.set(i, k + j, pi[i] * p.get(i, j) / alpha[i]);
            c.set(k + i, j, pi[j] * p.get(j, i) / alpha[i]);
        }
    }
    c
}

fn iterate(sys: &DysonSystem, z: Complex64, mut history: Option<&mut Vec<f64>>) -> Result<DysonSolution> {
    if !(z.im >= MIN_IMAG) || !z.re.is_finite() {
        return Err(Error::Domain(format!("need Im z >= {MIN_IMAG}, got {z}")));
    }
    let n = 2 * sys.k;
    let mut a = vec![z.inv(); n];
    let mut g = vec![Complex64::new(0.0, 0.0); n];
    for it in 0..MAX_ITER {
        sys.apply(z, &a, &mut g);
        let mut res = 0.0f64;
        for i in 0..n {
            res = res.max((g[i] - a[i]).norm());
        }
        if let Some(h) = history.as_deref_mut() {
            h.push(res);
        }
        if res < RESIDUAL_TOL {
            let s = sys.stieltjes(&g);
            return Ok(DysonSolution { a: g, s, iterations: it + 1 });
        }
        for i in 0..n {
            a[i] = a[i] * (1.0 - DAMPING) + g[i] * DAMPING;
        }
    }
    Err(Error::Convergence(format!("Dyson iteration at z = {z} did not converge in {MAX_ITER} steps")))
}

/// Solves the Dyson system at `z` by damped fixed-point iteration from
/// `a = 1/z`.
pub fn solve_dyson(sys: &DysonSystem, z: Complex64) -> Result<DysonSolution> {
    iterate(sys, z, None)
}

/// Sup-norm residual of every step of [`solve_dyson`] at `z`.
pub fn residual_history(sys: &DysonSystem, z: Complex64) -> Result<Vec<f64>> {
    let mut h = Vec::new();
    iterate(sys, z, Some(&mut h))?;
    Ok(h)
}

/// `-Im s(x + i eps) / pi` on a grid; values below `1e-12` are set to 0.
pub fn density_grid(sys: &DysonSystem, xs: &[f64], eps: f64) -> Result<Vec<f64>> {
    xs.iter()
        .map(|&x| {
            let s = solve_dyson(sys, Complex64::new(x, eps))?.s;
            let rho = -s.im / std::f64::consts::PI;
            Ok(if rho < 1e-12 { 0.0 } else { rho })
        })
        .collect()
}

/// Whether the real Dyson system at `x` has a positive solution, decided by
/// monotone iteration from `a = 0`.
fn real_solution_exists(c: &RectMatrix, x: f64) -> bool {
    let n = c.rows();
    let mut a = vec![0.0f64; n];
    for _ in 0..2_000_000 {
        let mut next = vec![0.0; n];
        let mut delta = 0.0f64;
        for i in 0..n {
            let denom = x - (0..n).map(|j| c.get(i, j) * a[j]).sum::<f64>();
            if denom <= 0.0 {
                return false;
            }
            next[i] = 1.0 / denom;
            delta = delta.max((next[i] - a[i]) / next[i]);
        }
        a = next;
        if delta < 1e-15 {
            return true;
        }
    }
    true
}

/// Right edge of the support of the symmetrized density.
///
/// The density at `eps = 1e-4` is scanned first to reject degenerate
/// systems; the edge itself is located by bisection on the smallest real
/// `x` at which the Dyson system admits a positive real solution.
pub fn support_edge(sys: &DysonSystem) -> Result<f64> {
    let upper = 2.0 * sys.sigma_squared().sqrt();
    if !(upper > 0.0) {
        return Err(Error::Degenerate("variance profile is zero".into()));
    }
    let probe: Vec<f64> = (0..200).map(|i| upper * (i as f64 + 0.5) / 200.0).collect();
    let rho = density_grid(sys, &probe, 1e-4)?;
    if rho.iter().all(|&r| r <= 1e-4) {
        return Err(Error::Degenerate("density vanishes on the probe grid".into()));
    }
    let c = sys.coupling();
    let mut lo = 0.0;
    let mut hi = upper * (1.0 + 1e-9) + 1e-12;
    while hi - lo > 1e-7 {
        let mid = 0.5 * (lo + hi);
        if real_solution_exists(c, mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Semicircle density `sqrt(4 - x^2) / (2 pi)` on `[-2, 2]`.
pub fn semicircle_density(x: f64) -> f64 {
    if x.abs() >= 2.0 {
        0.0
    } else {
        (4.0 - x * x).sqrt() / (2.0 * std::f64::consts::PI)
    }
}
