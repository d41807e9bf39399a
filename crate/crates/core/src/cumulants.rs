//! Classical and Boolean joint cumulants of finitely supported random
//! vectors, the run-partition expansion linking them, and the cumulant
//! parameters `K` and `D`.

use crate::error::{Error, Result};
use crate::matrix_core::RectMatrix;

pub const MAX_PARTITION_SIZE: usize = 10;
pub const MAX_CLASSICAL_ORDER: usize = 10;
pub const MAX_BOOLEAN_ORDER: usize = 16;
pub const MAX_RUNS_ORDER: usize = 8;

const PROB_TOL: f64 = 1e-12;

/// Finitely supported law of a random vector `(Y_0, ..., Y_{n-1})`.
#[derive(Debug, Clone)]
pub struct MomentOracle {
    nvars: usize,
    atoms: Vec<(Vec<f64>, f64)>,
}

impl MomentOracle {
    pub fn new(nvars: usize, atoms: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        let mut total = 0.0;
        for (x, p) in &atoms {
            if x.len() != nvars {
                return Err(Error::Shape(format!("atom has {} coordinates, expected {nvars}", x.len())));
            }
            if !(*p >= 0.0) || !p.is_finite() {
                return Err(Error::Domain(format!("negative or invalid probability {p}")));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric("atom has non-finite coordinates".into()));
            }
            total += p;
        }
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::Domain(format!("probabilities sum to {total}, not 1")));
        }
        Ok(MomentOracle { nvars, atoms })
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn atoms(&self) -> &[(Vec<f64>, f64)] {
        &self.atoms
    }

    /// `E[Y_{idx_0} ... Y_{idx_{k-1}}]`.
    pub fn moment(&self, idx: &[usize]) -> f64 {
        self.atoms.iter().map(|(x, p)| p * idx.iter().map(|&i| x[i]).product::<f64>()).sum()
    }

    fn check_indices(&self, idx: &[usize]) -> Result<()> {
        if let Some(&i) = idx.iter().find(|&&i| i >= self.nvars) {
            return Err(Error::Shape(format!("variable index {i} out of range for {} variables", self.nvars)));
        }
        Ok(())
    }

    /// Moments of every sub-product of `idx`, indexed by bit mask over the
    /// positions of `idx`.
    fn subset_moments(&self, idx: &[usize]) -> Vec<f64> {
        let k = idx.len();
        let mut out = vec![0.0; 1 << k];
        let mut prod = vec![0.0; 1 << k];
        for (x, p) in &self.atoms {
            prod[0] = 1.0;
            for mask in 1usize..(1 << k) {
                let low = mask.trailing_zeros() as usize;
                prod[mask] = prod[mask & (mask - 1)] * x[idx[low]];
            }
            for (o, v) in out.iter_mut().zip(&prod) {
                *o += p * v;
            }
        }
        out
    }
}

/// Partition of `{0, ..., k-1}` with blocks sorted by least element and
/// elements sorted within blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SetPartition {
    pub blocks: Vec<Vec<usize>>,
}

impl SetPartition {
    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }
}

fn for_each_rgs(k: usize, mut f: impl FnMut(&[usize], usize)) {
    // restricted growth strings a_0 = 0, a_i <= 1 + max(a_0..a_{i-1}), lexicographic
    if k == 0 {
        return;
    }
    let mut a = vec![0usize; k];
    let mut maxes = vec![0usize; k];
    loop {
        let nb = maxes[k - 1] + 1;
        f(&a, nb);
        let mut i = k - 1;
        loop {
            if i == 0 {
                return;
            }
            if a[i] <= maxes[i - 1] {
                a[i] += 1;
                maxes[i] = maxes[i - 1].max(a[i]);
                for j in (i + 1)..k {
                    a[j] = 0;
                    maxes[j] = maxes[i];
                }
                break;
            }
            i -= 1;
        }
    }
}

/// All set partitions of a `k`-set in canonical order, `1 <= k <= 10`.
pub fn set_partitions(k: usize) -> Result<Vec<SetPartition>> {
    if k == 0 || k > MAX_PARTITION_SIZE {
        return Err(Error::Domain(format!("partition size {k} outside 1..={MAX_PARTITION_SIZE}")));
    }
    let mut out = Vec::new();
    for_each_rgs(k, |a, nb| {
        let mut blocks = vec![Vec::new(); nb];
        for (i, &b) in a.iter().enumerate() {
            blocks[b].push(i);
        }
        out.push(SetPartition { blocks });
    });
    Ok(out)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|x| x as f64).product()
}

/// Classical joint cumulant `kappa(Y_{idx_0}, ..., Y_{idx_{k-1}})` by
/// moment-cumulant inversion over set partitions.
pub fn classical_cumulant(oracle: &MomentOracle, idx: &[usize]) -> Result<f64> {
    let k = idx.len();
    if k == 0 || k > MAX_CLASSICAL_ORDER {
        return Err(Error::Domain(format!("cumulant order {k} outside 1..={MAX_CLASSICAL_ORDER}")));
    }
    oracle.check_indices(idx)?;
    let mom = oracle.subset_moments(idx);
    let coef: Vec<f64> = (0..=k)
        .map(|b| if b == 0 { 0.0 } else { (if b % 2 == 1 { 1.0 } else { -1.0 }) * factorial(b - 1) })
        .collect();
    let mut total = 0.0;
    let mut masks = vec![0usize; k];
    for_each_rgs(k, |a, nb| {
        for m in masks[..nb].iter_mut() {
            *m = 0;
        }
        for (i, &b) in a.iter().enumerate() {
            masks[b] |= 1 << i;
        }
        let prod: f64 = masks[..nb].iter().map(|&m| mom[m]).product();
        total += coef[nb] * prod;
    });
    Ok(total)
}

/// Boolean cumulant `b(Y_{idx_0}, ..., Y_{idx_{k-1}})` as the alternating
/// sum over interval partitions.
pub fn boolean_cumulant(oracle: &MomentOracle, idx: &[usize]) -> Result<f64> {
    let k = idx.len();
    if k == 0 || k > MAX_BOOLEAN_ORDER {
        return Err(Error::Domain(format!("Boolean cumulant order {k} outside 1..={MAX_BOOLEAN_ORDER}")));
    }
    oracle.check_indices(idx)?;
    // interval moments E[Y_{idx_a} ... Y_{idx_b}]
    let mut iv = vec![0.0; k * k];
    for (x, p) in oracle.atoms() {
        for a in 0..k {
            let mut prod = 1.0;
            for b in a..k {
                prod *= x[idx[b]];
                iv[a * k + b] += p * prod;
            }
        }
    }
    let mut total = 0.0;
    for cuts in 0usize..(1 << (k - 1)) {
        let mut start = 0;
        let mut prod = 1.0;
        for pos in 0..k {
            if pos == k - 1 || cuts & (1 << pos) != 0 {
                prod *= iv[start * k + pos];
                start = pos + 1;
            }
        }
        if cuts.count_ones() % 2 == 1 {
            total -= prod;
        } else {
            total += prod;
        }
    }
    Ok(total)
}

/// Partition of the values of a permutation `rho` of `{1, ..., k}` (given
/// as `rho(1), ..., rho(k)`) into its maximal increasing runs.
pub fn runs_partition(rho: &[usize]) -> Result<Vec<Vec<usize>>> {
    let k = rho.len();
    let mut seen = vec![false; k + 1];
    for &r in rho {
        if r == 0 || r > k || seen[r] {
            return Err(Error::Domain(format!("{rho:?} is not a permutation of 1..={k}")));
        }
        seen[r] = true;
    }
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    for (i, &r) in rho.iter().enumerate() {
        if i == 0 || r < rho[i - 1] {
            blocks.push(vec![r]);
        } else {
            blocks.last_mut().unwrap().push(r);
        }
    }
    Ok(blocks)
}

fn next_permutation(a: &mut [usize]) -> bool {
    let n = a.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && a[i - 1] >= a[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while a[j] <= a[i - 1] {
        j -= 1;
    }
    a.swap(i - 1, j);
    a[i..].reverse();
    true
}

/// Classical cumulant of the variables `idx` (stably sorted) written as a
/// signed sum of products of Boolean cumulants over the run partitions of
/// permutations fixing 1.
pub fn classical_from_boolean(oracle: &MomentOracle, idx: &[usize]) -> Result<f64> {
    let k = idx.len();
    if k == 0 || k > MAX_RUNS_ORDER {
        return Err(Error::Domain(format!("order {k} outside 1..={MAX_RUNS_ORDER}")));
    }
    oracle.check_indices(idx)?;
    let mut sorted = idx.to_vec();
    sorted.sort();
    let mut bcache: Vec<Option<f64>> = vec![None; 1 << k];
    let mut boolean_of = |mask: usize| -> Result<f64> {
        if let Some(v) = bcache[mask] {
            return Ok(v);
        }
        let sub: Vec<usize> = (0..k).filter(|j| mask & (1 << j) != 0).map(|j| sorted[j]).collect();
        let v = boolean_cumulant(oracle, &sub)?;
        bcache[mask] = Some(v);
        Ok(v)
    };
    let mut tail: Vec<usize> = (2..=k).collect();
    let mut total = 0.0;
    loop {
        let mut rho = Vec::with_capacity(k);
        rho.push(1);
        rho.extend_from_slice(&tail);
        let blocks = runs_partition(&rho)?;
        let mut prod = 1.0;
        for b in &blocks {
            let mask = b.iter().fold(0usize, |m, &v| m | (1 << (v - 1)));
            prod *= boolean_of(mask)?;
        }
        if blocks.len() % 2 == 1 {
            total += prod;
        } else {
            total -= prod;
        }
        if !next_permutation(&mut tail) {
            break;
        }
    }
    Ok(total)
}

/// A time-inhomogeneous finite Markov chain `W_1, ..., W_k` together with
/// real functions `g_i` on the state spaces.
#[derive(Debug, Clone)]
pub struct MarkovFunctional {
    /// Law of `W_1`.
    pub initial: Vec<f64>,
    /// `kernels[i]` is the transition matrix from `W_{i+1}` to `W_{i+2}`.
    pub kernels: Vec<RectMatrix>,
    /// `funcs[i]` holds the values of `g_{i+1}`.
    pub funcs: Vec<Vec<f64>>,
}

impl MarkovFunctional {
    pub fn validate(&self) -> Result<()> {
        let k = self.funcs.len();
        if k == 0 || self.kernels.len() + 1 != k {
            return Err(Error::Shape("need k functions and k - 1 kernels".into()));
        }
        let tot: f64 = self.initial.iter().sum();
        if (tot - 1.0).abs() > PROB_TOL || self.initial.iter().any(|&p| p < 0.0) {
            return Err(Error::Domain("initial law is not a probability vector".into()));
        }
        let mut size = self.initial.len();
        if self.funcs[0].len() != size {
            return Err(Error::Shape("g_1 has the wrong length".into()));
        }
        for (i, t) in self.kernels.iter().enumerate() {
            if t.rows() != size {
                return Err(Error::Shape(format!("kernel {} has the wrong number of rows", i + 1)));
            }
            for r in 0..t.rows() {
                let row: f64 = (0..t.cols()).map(|c| t.get(r, c)).sum();
                if (row - 1.0).abs() > PROB_TOL || (0..t.cols()).any(|c| t.get(r, c) < 0.0) {
                    return Err(Error::Domain(format!("kernel {} is not row-stochastic", i + 1)));
                }
            }
            size = t.cols();
            if self.funcs[i + 1].len() != size {
                return Err(Error::Shape(format!("g_{} has the wrong length", i + 2)));
            }
        }
        Ok(())
    }

    /// Marginal laws of `W_1, ..., W_k`.
    pub fn marginals(&self) -> Vec<Vec<f64>> {
        let mut out = vec![self.initial.clone()];
        for t in &self.kernels {
            let prev = out.last().unwrap();
            let next: Vec<f64> = (0..t.cols()).map(|c| (0..t.rows()).map(|r| prev[r] * t.get(r, c)).sum()).collect();
            out.push(next);
        }
        out
    }

    /// Joint law of `(g_1(W_1), ..., g_k(W_k))` as a moment oracle.
    pub fn induced_oracle(&self) -> Result<MomentOracle> {
        self.validate()?;
        let k = self.funcs.len();
        let mut atoms = Vec::new();
        let mut path = vec![0usize; k];
        fn rec(
            me: &MarkovFunctional,
            pos: usize,
            prob: f64,
            path: &mut Vec<usize>,
            atoms: &mut Vec<(Vec<f64>, f64)>,
        ) {
            let k = me.funcs.len();
            if pos == k {
                let x = (0..k).map(|i| me.funcs[i][path[i]]).collect();
                atoms.push((x, prob));
                return;
            }
            let n = me.funcs[pos].len();
            for s in 0..n {
                let p = if pos == 0 { me.initial[s] } else { me.kernels[pos - 1].get(path[pos - 1], s) };
                if p == 0.0 {
                    continue;
                }
                path[pos] = s;
                rec(me, pos + 1, prob * p, path, atoms);
            }
        }
        rec(self, 0, 1.0, &mut path, &mut atoms);
        MomentOracle::new(k, atoms)
    }
}

/// Telescoping sum over all state paths
/// `g_1(w_1) P(w_1) prod_{i>=2} g_i(w_i) (P(w_i | w_{i-1}) - P(w_i))`,
/// evaluated by summing out one coordinate at a time.
pub fn boolean_markov_telescoping(chain: &MarkovFunctional) -> Result<f64> {
    chain.validate()?;
    let marg = chain.marginals();
    let mut acc: Vec<f64> = chain.initial.iter().zip(&chain.funcs[0]).map(|(p, g)| p * g).collect();
    for (i, t) in chain.kernels.iter().enumerate() {
        let g = &chain.funcs[i + 1];
        let pm = &marg[i + 1];
        acc = (0..t.cols())
            .map(|c| {
                let s: f64 = (0..t.rows()).map(|r| acc[r] * (t.get(r, c) - pm[c])).sum();
                g[c] * s
            })
            .collect();
    }
    Ok(acc.iter().sum())
}

/// Classical cumulants `kappa(Y_{i_1}, ..., Y_{i_k})` for all index tuples
/// of a fixed order, stored with `i_1` as the slowest index.
#[derive(Debug, Clone)]
pub struct CumulantTable {
    pub nvars: usize,
    pub order: usize,
    pub values: Vec<f64>,
}

impl CumulantTable {
    pub fn from_oracle(oracle: &MomentOracle, order: usize) -> Result<Self> {
        let n = oracle.nvars();
        let total = n.checked_pow(order as u32).ok_or_else(|| Error::Domain("table too large".into()))?;
        let mut values = Vec::with_capacity(total);
        let mut idx = vec![0usize; order];
        for _ in 0..total {
            values.push(classical_cumulant(oracle, &idx)?);
            for pos in (0..order).rev() {
                idx[pos] += 1;
                if idx[pos] < n {
                    break;
                }
                idx[pos] = 0;
            }
        }
        Ok(CumulantTable { nvars: n, order, values })
    }
}

/// `K = max_{i_1} sum_{i_2, ..., i_k} |kappa(Y_{i_1}, ..., Y_{i_k})|`.
pub fn k_param(table: &CumulantTable) -> f64 {
    if table.nvars == 0 {
        return 0.0;
    }
    let row = table.values.len() / table.nvars;
    table.values.chunks(row).map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// `max_{3<=m<=k_max} (K_m / (eta (m!)^{1+gamma}))^{1/m}`, where
/// `k_values[m]` holds `K_m`.
pub fn d_param(k_values: &[f64], eta: f64, gamma: f64, k_max: usize) -> Result<f64> {
    if !(eta > 0.0) {
        return Err(Error::Domain(format!("eta must be positive, got {eta}")));
    }
    if !(gamma >= 0.0) {
        return Err(Error::Domain(format!("gamma must be nonnegative, got {gamma}")));
    }
    if k_max < 3 || k_values.len() <= k_max {
        return Err(Error::Shape(format!("need K_m for 3 <= m <= {k_max}")));
    }
    let mut best = 0.0f64;
    for m in 3..=k_max {
        let km = k_values[m];
        if km < 0.0 {
            return Err(Error::Domain(format!("K_{m} is negative")));
        }
        let denom = eta * factorial(m).powf(1.0 + gamma);
        best = best.max((km / denom).powf(1.0 / m as f64));
    }
    Ok(best)
}

/// Random law on `nvars` coordinates with `natoms` atoms, coordinates
/// uniform in `[-1, 1]`.
pub fn random_oracle(nvars: usize, natoms: usize, rng: &mut impl rand::Rng) -> Result<MomentOracle> {
    let w: Vec<f64> = (0..natoms).map(|_| rng.gen_range(0.1..1.0)).collect();
    let tot: f64 = w.iter().sum();
    let mut atoms: Vec<(Vec<f64>, f64)> =
        w.iter().map(|&p| ((0..nvars).map(|_| rng.gen_range(-1.0..1.0)).collect(), p / tot)).collect();
    let drift: f64 = 1.0 - atoms.iter().map(|a| a.1).sum::<f64>();
    atoms[0].1 += drift;
    MomentOracle::new(nvars, atoms)
}

fn random_stochastic(rows: usize, cols: usize, rng: &mut impl rand::Rng) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let w: Vec<f64> = (0..cols).map(|_| rng.gen_range(0.05..1.0)).collect();
        let tot: f64 = w.iter().sum();
        out.extend(w.iter().map(|x| x / tot));
    }
    out
}

/// Random inhomogeneous chain of length `k` with 2 to `max_states` states
/// per step and function values uniform in `[-1, 1]`.
pub fn random_markov_functional(k: usize, max_states: usize, rng: &mut impl rand::Rng) -> Result<MarkovFunctional> {
    let sizes: Vec<usize> = (0..k).map(|_| rng.gen_range(2..=max_states.max(2))).collect();
    let initial = random_stochastic(1, sizes[0], rng);
    let mut kernels = Vec::new();
    for w in sizes.windows(2) {
        kernels.push(RectMatrix::from_vec(w[0], w[1], random_stochastic(w[0], w[1], rng))?);
    }
    let funcs = sizes.iter().map(|&s| (0..s).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let chain = MarkovFunctional { initial, kernels, funcs };
    chain.validate()?;
    Ok(chain)
}

/// Outcome of [`verify_identities`].
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct IdentityReport {
    pub run_expansion_checks: usize,
    pub run_expansion_max_error: f64,
    pub telescoping_checks: usize,
    pub telescoping_max_error: f64,
    pub failures: usize,
}

impl IdentityReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

pub const RUN_EXPANSION_TOL: f64 = 1e-10;
pub const TELESCOPING_TOL: f64 = 1e-12;

/// Checks the run-partition expansion against direct classical cumulants
/// for each order `3..=k_max` on `oracles` random laws, and the Markov
/// telescoping formula against direct Boolean cumulants on `oracles`
/// random chains of each length `2..=min(k_max, 5)`.
pub fn verify_identities(k_max: usize, oracles: usize, seed: u64) -> Result<IdentityReport> {
    if !(3..=MAX_RUNS_ORDER).contains(&k_max) {
        return Err(Error::Domain(format!("k_max must lie in 3..={MAX_RUNS_ORDER}, got {k_max}")));
    }
    let mut rng = crate::rng::rng_from_seed(seed);
    let mut rep = IdentityReport {
        run_expansion_checks: 0,
        run_expansion_max_error: 0.0,
        telescoping_checks: 0,
        telescoping_max_error: 0.0,
        failures: 0,
    };
    for k in 3..=k_max {
        for _ in 0..oracles {
            let o = random_oracle(k, 6, &mut rng)?;
            let idx: Vec<usize> = (0..k).collect();
            let err = (classical_from_boolean(&o, &idx)? - classical_cumulant(&o, &idx)?).abs();
            rep.run_expansion_checks += 1;
            rep.run_expansion_max_error = rep.run_expansion_max_error.max(err);
            if !(err <= RUN_EXPANSION_TOL) {
                rep.failures += 1;
            }
        }
    }
    for k in 2..=k_max.min(5) {
        for _ in 0..oracles {
            let chain = random_markov_functional(k, 4, &mut rng)?;
            let o = chain.induced_oracle()?;
            let idx: Vec<usize> = (0..k).collect();
            let err = (boolean_markov_telescoping(&chain)? - boolean_cumulant(&o, &idx)?).abs();
            rep.telescoping_checks += 1;
            rep.telescoping_max_error = rep.telescoping_max_error.max(err);
            if !(err <= TELESCOPING_TOL) {
                rep.failures += 1;
            }
        }
    }
    Ok(rep)
}
