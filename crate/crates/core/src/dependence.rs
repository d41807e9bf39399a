//! Mixing coefficients of finite Markov chains: the psi coefficient of a
//! joint law, the psi-mixing time `Psi`, total-variation mixing times and
//! the bound of `Psi` through the mixing time.

use crate::error::{Error, Result};
use crate::matrix_core::RectMatrix;

const STOCHASTIC_TOL: f64 = 1e-12;
const STATIONARY_TOL: f64 = 1e-10;
const POWER_ITER_TOL: f64 = 1e-14;
const MAX_STEPS: usize = 1_000_000;

/// Fixed threshold in the definition of `Psi`.
pub const PSI_THRESHOLD: f64 = 0.25;

/// Markov chain on `{0, ..., K-1}` run for `n` steps from `mu0`.
#[derive(Debug, Clone)]
pub struct FiniteChain {
    p: RectMatrix,
    mu0: Vec<f64>,
    n: usize,
}

/// Joint law of a pair `(X, Y)` on a finite grid, row index `x`.
#[derive(Debug, Clone)]
pub struct JointPmf {
    rows: usize,
    cols: usize,
    mass: Vec<f64>,
}

pub fn check_stochastic(p: &RectMatrix) -> Result<()> {
    if p.rows() != p.cols() || p.rows() == 0 {
        return Err(Error::Shape(format!("transition matrix must be square and nonempty, got {}x{}", p.rows(), p.cols())));
    }
    for i in 0..p.rows() {
        let mut s = 0.0;
        for j in 0..p.cols() {
            let v = p.get(i, j);
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Domain(format!("entry ({i},{j}) = {v} is not a probability")));
            }
            s += v;
        }
        if (s - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::Domain(format!("row {i} sums to {s}")));
        }
    }
    Ok(())
}

fn check_probability(mu: &[f64], what: &str) -> Result<()> {
    let s: f64 = mu.iter().sum();
    if mu.iter().any(|&x| !(x >= 0.0)) || (s - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::Domain(format!("{what} is not a probability vector")));
    }
    Ok(())
}

impl FiniteChain {
    pub fn new(p: RectMatrix, mu0: Vec<f64>, n: usize) -> Result<Self> {
        check_stochastic(&p)?;
        if mu0.len() != p.rows() {
            return Err(Error::Shape("initial law has the wrong length".into()));
        }
        check_probability(&mu0, "initial law")?;
        if n == 0 {
            return Err(Error::Domain("chain length must be positive".into()));
        }
        Ok(FiniteChain { p, mu0, n })
    }

    /// Chain started from its stationary law.
    pub fn stationary(p: RectMatrix, n: usize) -> Result<Self> {
        let pi = stationary_distribution(&p)?;
        Self::new(p, pi, n)
    }

    pub fn transition(&self) -> &RectMatrix {
        &self.p
    }

    pub fn initial(&self) -> &[f64] {
        &self.mu0
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

impl JointPmf {
    pub fn new(rows: usize, cols: usize, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != rows * cols {
            return Err(Error::Shape("joint mass has the wrong length".into()));
        }
        check_probability(&mass, "joint law")?;
        Ok(JointPmf { rows, cols, mass })
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.mass[x * self.cols + y]
    }

    pub fn marginals(&self) -> (Vec<f64>, Vec<f64>) {
        let mut px = vec![0.0; self.rows];
        let mut py = vec![0.0; self.cols];
        for x in 0..self.rows {
            for y in 0..self.cols {
                px[x] += self.get(x, y);
                py[y] += self.get(x, y);
            }
        }
        (px, py)
    }
}

/// `psi(X, Y) = max |P(x,y) - P(x)P(y)| / (P(x)P(y))` over cells with
/// positive marginals; `+inf` when a cell has joint mass but a zero
/// marginal.
pub fn psi_coefficient(j: &JointPmf) -> f64 {
    let (px, py) = j.marginals();
    let mut best = 0.0f64;
    for x in 0..j.rows {
        for y in 0..j.cols {
            let prod = px[x] * py[y];
            let joint = j.get(x, y);
            if prod > 0.0 {
                best = best.max((joint - prod).abs() / prod);
            } else if joint > 0.0 {
                return f64::INFINITY;
            }
        }
    }
    best
}

/// Product `a b` of stochastic matrices with each row renormalized to sum 1.
pub fn stochastic_product(a: &RectMatrix, b: &RectMatrix) -> RectMatrix {
    let mut c = a.matmul(b).expect("square stochastic matrices");
    let n = c.cols();
    for row in c.as_mut_slice().chunks_mut(n) {
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            for v in row.iter_mut() {
                *v /= s;
            }
        }
    }
    c
}

/// Whether some power of `p` is entrywise positive (irreducible and
/// aperiodic), checked at Wielandt's exponent `(K-1)^2 + 1`.
pub fn is_primitive(p: &RectMatrix) -> bool {
    let k = p.rows();
    let adj: Vec<bool> = p.as_slice().iter().map(|&v| v > 0.0).collect();
    let mut cur = adj.clone();
    let steps = (k - 1) * (k - 1);
    for _ in 0..steps {
        let mut next = vec![false; k * k];
        for i in 0..k {
            for m in 0..k {
                if cur[i * k + m] {
                    for j in 0..k {
                        if adj[m * k + j] {
                            next[i * k + j] = true;
                        }
                    }
                }
            }
        }
        cur = next;
    }
    cur.iter().all(|&b| b)
}

/// Stationary law of an ergodic chain by power iteration from the uniform
/// law, stopping when one step moves it by less than `1e-14` in `l1`.
pub fn stationary_distribution(p: &RectMatrix) -> Result<Vec<f64>> {
    check_stochastic(p)?;
    if !is_primitive(p) {
        return Err(Error::Ergodicity("transition matrix is reducible or periodic".into()));
    }
    let k = p.rows();
    let mut pi = vec![1.0 / k as f64; k];
    for _ in 0..MAX_STEPS {
        let mut next = vec![0.0; k];
        for i in 0..k {
            for j in 0..k {
                next[j] += pi[i] * p.get(i, j);
            }
        }
        let s: f64 = next.iter().sum();
        for v in next.iter_mut() {
            *v /= s;
        }
        let diff: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if diff < POWER_ITER_TOL {
            return Ok(pi);
        }
    }
    Err(Error::Ergodicity(format!("power iteration did not settle within {MAX_STEPS} steps")))
}

/// Joint law of `(Z_0, Z_lag)` for the chain started from `mu`.
pub fn lag_joint(p: &RectMatrix, mu: &[f64], lag: usize) -> Result<JointPmf> {
    check_stochastic(p)?;
    let k = p.rows();
    let mut pt = RectMatrix::from_fn(k, k, |i, j| if i == j { 1.0 } else { 0.0 });
    for _ in 0..lag {
        pt = stochastic_product(&pt, p);
    }
    let mass: Vec<f64> = (0..k * k).map(|c| mu[c / k] * pt.get(c / k, c % k)).collect();
    let s: f64 = mass.iter().sum();
    JointPmf::new(k, k, mass.into_iter().map(|v| v / s).collect())
}

fn relative_deviation(pt: &RectMatrix, pi: &[f64]) -> f64 {
    let k = pi.len();
    let mut best = 0.0f64;
    for i in 0..k {
        if pi[i] == 0.0 {
            continue;
        }
        for j in 0..k {
            if pi[j] == 0.0 {
                continue;
            }
            best = best.max((pt.get(i, j) - pi[j]).abs() / pi[j]);
        }
    }
    best
}

/// `psi(Z_0, Z_lag)` for a stationary chain.
pub fn psi_at_lag(p: &RectMatrix, pi: &[f64], lag: usize) -> Result<f64> {
    Ok(psi_coefficient(&lag_joint(p, pi, lag)?))
}

/// `Psi = min{n, min{t >= 1 : max_ij |P^t_ij - pi_j| / pi_j <= 1/4}}` for
/// a chain started from its stationary law.
pub fn capital_psi(chain: &FiniteChain) -> Result<usize> {
    let p = chain.transition();
    let pi = stationary_distribution(p)?;
    let dev: f64 = pi.iter().zip(chain.initial()).map(|(a, b)| (a - b).abs()).sum();
    if dev > STATIONARY_TOL {
        return Err(Error::Domain(format!("chain is not started from its stationary law (l1 gap {dev:e})")));
    }
    let mut pt = p.clone();
    for t in 1..chain.len() {
        if relative_deviation(&pt, &pi) <= PSI_THRESHOLD {
            return Ok(t);
        }
        pt = stochastic_product(&pt, p);
    }
    Ok(chain.len())
}

/// Total-variation distance `(1/2) sum |mu - nu|`.
pub fn tv_distance(mu: &[f64], nu: &[f64]) -> Result<f64> {
    if mu.len() != nu.len() {
        return Err(Error::Shape("laws have different supports".into()));
    }
    Ok(0.5 * mu.iter().zip(nu).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Smallest `t >= 1` with `max_i TV(P^t(i, .), pi) <= eps`.
pub fn mixing_time(p: &RectMatrix, eps: f64) -> Result<usize> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("eps must lie in (0, 1), got {eps}")));
    }
    let pi = stationary_distribution(p)?;
    let k = pi.len();
    let mut pt = p.clone();
    for t in 1..=MAX_STEPS {
        let mut worst = 0.0f64;
        for i in 0..k {
            let row: Vec<f64> = (0..k).map(|j| pt.get(i, j)).collect();
            worst = worst.max(tv_distance(&row, &pi)?);
        }
        if worst <= eps {
            return Ok(t);
        }
        pt = stochastic_product(&pt, p);
    }
    Err(Error::IterationLimit(format!("mixing time exceeds {MAX_STEPS} steps")))
}

/// `ceil((log2(1/pi_min) + 3) t_mix)` with `t_mix` at `eps = 1/4`.
pub fn psipi_bound(p: &RectMatrix) -> Result<usize> {
    let pi = stationary_distribution(p)?;
    let pi_min = pi.iter().cloned().fold(f64::INFINITY, f64::min);
    let tmix = mixing_time(p, 0.25)? as f64;
    Ok((((1.0 / pi_min).log2() + 3.0) * tmix).ceil() as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state(stay: f64) -> RectMatrix {
        RectMatrix::from_vec(2, 2, vec![stay, 1.0 - stay, 1.0 - stay, stay]).unwrap()
    }

    #[test]
    fn psi_of_identical_uniform_pair() {
        let j = JointPmf::new(2, 2, vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        assert!((psi_coefficient(&j) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn psi_of_sticky_chain_lag_one() {
        let p = two_state(0.9);
        assert!((psi_at_lag(&p, &[0.5, 0.5], 1).unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn capital_psi_examples() {
        let iid = RectMatrix::from_vec(2, 2, vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        assert_eq!(capital_psi(&FiniteChain::stationary(iid, 100).unwrap()).unwrap(), 1);
        let sticky = two_state(0.9);
        assert_eq!(capital_psi(&FiniteChain::stationary(sticky.clone(), 100).unwrap()).unwrap(), 7);
        assert_eq!(capital_psi(&FiniteChain::stationary(sticky.clone(), 5).unwrap()).unwrap(), 5);
        let off = FiniteChain::new(sticky, vec![1.0, 0.0], 100).unwrap();
        assert!(matches!(capital_psi(&off), Err(Error::Domain(_))));
    }

    #[test]
    fn tv_example() {
        assert!((tv_distance(&[0.7, 0.3], &[0.3, 0.7]).unwrap() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn mixing_and_psipi() {
        let iid = RectMatrix::from_vec(2, 2, vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        assert_eq!(mixing_time(&iid, 0.25).unwrap(), 1);
        assert_eq!(psipi_bound(&iid).unwrap(), 4);
        let sticky = two_state(0.9);
        assert_eq!(mixing_time(&sticky, 0.25).unwrap(), 4);
        assert_eq!(psipi_bound(&sticky).unwrap(), 16);
    }

    #[test]
    fn periodic_and_reducible_rejected() {
        let flip = RectMatrix::from_vec(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert!(matches!(stationary_distribution(&flip), Err(Error::Ergodicity(_))));
        let ident = RectMatrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(matches!(stationary_distribution(&ident), Err(Error::Ergodicity(_))));
    }

    #[test]
    fn zero_marginal_cells() {
        let j = JointPmf::new(2, 2, vec![0.5, 0.5, 0.0, 0.0]).unwrap();
        assert!(psi_coefficient(&j).is_finite());
    }
}
