//! Trial harness: Gaussian models, empirical spectra, histograms and KS
//! distances.

use std::io::Write;

use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::bmc::{self, BmcSpec};
use crate::error::{Error, Result};
use crate::free_bounds::{universality_h, BoundConstants, MarkovBoundParams};
use crate::matrix_core::{jacobi_eigen, selfadjoint_dilation, singular_values, symmetric_eigenvalues, CovTensor, RectMatrix, SymMatrix};
use crate::models::{self, SubWeibullSpec};
use crate::numfmt::g12;
use crate::rng::{rng_from_seed, trial_seed};

pub const MAX_MOMENT_ORDER: u32 = 12;
const CLIP_TOL: f64 = 1e-9;

/// Random matrix model sampled by [`run_trials`].
#[derive(Debug, Clone)]
pub enum Model {
    /// Centered, scaled frequency matrix of a block Markov chain.
    Bmc(BmcSpec),
    /// Centered, scaled adjacency matrix of `G(d, m)`.
    Gnm { d: usize, m: usize },
    /// `W / sqrt(d)` for a sub-Weibull Wigner matrix `W`.
    Wigner { d: usize, spec: SubWeibullSpec },
}

impl Model {
    pub fn d(&self) -> usize {
        match self {
            Model::Bmc(s) => s.d(),
            Model::Gnm { d, .. } | Model::Wigner { d, .. } => *d,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Model::Bmc(_) => Ok(()),
            Model::Gnm { d, m } => {
                let total = models::pair_count(*d);
                if *d < 2 || *m == 0 || *m >= total {
                    return Err(Error::Domain(format!("G(d, m) needs d >= 2 and 0 < m < C(d,2), got d = {d}, m = {m}")));
                }
                Ok(())
            }
            Model::Wigner { d, spec } => {
                if *d == 0 {
                    return Err(Error::Domain("dimension must be positive".into()));
                }
                spec.validate()
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrialConfig {
    pub model: Model,
    pub trials: usize,
    pub base_seed: u64,
    /// Number of leading spectral values kept per sample; `None` keeps all.
    pub keep_values: Option<usize>,
    /// Normalized tracial moments of orders `1..=moment_order` are recorded.
    pub moment_order: u32,
    /// Worker threads; 0 lets rayon decide.
    pub threads: usize,
}

impl TrialConfig {
    pub fn new(model: Model, trials: usize, base_seed: u64) -> Self {
        TrialConfig { model, trials, base_seed, keep_values: None, moment_order: 0, threads: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Domain("at least one trial is required".into()));
        }
        if self.moment_order > MAX_MOMENT_ORDER {
            return Err(Error::Domain(format!("moment order is limited to {MAX_MOMENT_ORDER}")));
        }
        self.model.validate()
    }
}

/// Spectrum of one trial. For the Markov model `values` holds singular
/// values of `M`; for the symmetric models it holds eigenvalues of `S`.
/// Both are sorted in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSample {
    pub trial: usize,
    pub values: Vec<f64>,
    pub norm: f64,
    /// `moments[p - 1]` is the normalized trace of `S^p`.
    pub moments: Vec<f64>,
}

/// Runs `f` on a pool with `threads` workers (0 for the default pool).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Samples the model matrix of one trial. For the Markov model this is the
/// dilation of `M`.
pub fn sample_model(model: &Model, seed: u64) -> Result<SymMatrix> {
    match model {
        Model::Bmc(spec) => selfadjoint_dilation(&bmc::sample_m(spec, seed)),
        Model::Gnm { d, m } => models::gnm_centered(&models::sample_gnm(*d, *m, seed)?, *m),
        Model::Wigner { d, spec } => Ok(models::sample_subweibull_wigner(*d, spec, seed)?.scale(1.0 / (*d as f64).sqrt())),
    }
}

fn one_trial(cfg: &TrialConfig, t: usize) -> Result<SpectralSample> {
    let seed = trial_seed(cfg.base_seed, t as u64);
    let (values, norm, moments) = match &cfg.model {
        Model::Bmc(spec) => {
            let sv = singular_values(&bmc::sample_m(spec, seed))?;
            let d = sv.len() as f64;
            let moments = (1..=cfg.moment_order)
                .map(|p| if p % 2 == 1 { 0.0 } else { sv.iter().map(|s| s.powi(p as i32)).sum::<f64>() / d })
                .collect();
            let norm = sv[0];
            (sv, norm, moments)
        }
        model => {
            let s = sample_model(model, seed)?;
            let mut ev = symmetric_eigenvalues(&s)?;
            ev.reverse();
            let norm = ev[0].abs().max(ev[ev.len() - 1].abs());
            let moments = (1..=cfg.moment_order).map(|p| crate::matrix_core::normalized_power_sum(&ev, p)).collect();
            (ev, norm, moments)
        }
    };
    let values = match cfg.keep_values {
        Some(k) => values.into_iter().take(k).collect(),
        None => values,
    };
    Ok(SpectralSample { trial: t, values, norm, moments })
}

/// Runs `cfg.trials` independent trials; trial `t` uses the seed
/// `trial_seed(base_seed, t)`, so the output does not depend on scheduling.
pub fn run_trials(cfg: &TrialConfig) -> Result<Vec<SpectralSample>> {
    cfg.validate()?;
    with_threads(cfg.threads, || (0..cfg.trials).into_par_iter().map(|t| one_trial(cfg, t)).collect())?
}

/// Square root of a covariance matrix with eigenvalues clipped at zero.
/// Eigenvalues below `-1e-9 |C|` are rejected.
pub fn covariance_root(cov: &SymMatrix) -> Result<RectMatrix> {
    let n = cov.dim();
    let (vals, vecs) = jacobi_eigen(cov)?;
    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if vals.iter().any(|&v| v < -CLIP_TOL * scale.max(1.0)) {
        return Err(Error::Domain("covariance is indefinite beyond tolerance".into()));
    }
    let roots: Vec<f64> = vals.iter().map(|v| v.max(0.0).sqrt()).collect();
    Ok(RectMatrix::from_fn(n, n, |i, j| (0..n).map(|k| vecs.get(i, k) * roots[k] * vecs.get(j, k)).sum()))
}

fn correlated_normals(root: &RectMatrix, rng: &mut impl rand::Rng) -> Vec<f64> {
    let n = root.rows();
    let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    (0..n).map(|i| (0..n).map(|k| root.get(i, k) * z[k]).sum()).collect()
}

/// Gaussian matrix with prescribed mean and entry covariance, with the
/// factorization computed once.
#[derive(Debug, Clone)]
pub struct GaussianModel {
    d: usize,
    mean: Vec<f64>,
    /// `(i, j)` index pairs of the sampled coordinates.
    coords: Vec<(usize, usize)>,
    root: RectMatrix,
    symmetric: bool,
}

impl GaussianModel {
    /// Symmetric Gaussian model of a symmetric random matrix.
    pub fn symmetric(mean: &SymMatrix, cov: &CovTensor) -> Result<Self> {
        let d = mean.dim();
        if cov.d() != d {
            return Err(Error::Shape("mean and covariance dimensions differ".into()));
        }
        let coords: Vec<(usize, usize)> = (0..d).flat_map(|i| (i..d).map(move |j| (i, j))).collect();
        let c = SymMatrix::from_fn(coords.len(), |a, b| cov.entry(coords[a].0, coords[a].1, coords[b].0, coords[b].1));
        Ok(GaussianModel {
            d,
            mean: coords.iter().map(|&(i, j)| mean.get(i, j)).collect(),
            root: covariance_root(&c)?,
            coords,
            symmetric: true,
        })
    }

    /// Centered Gaussian model of a square random matrix with all `d^2`
    /// entries free.
    pub fn rectangular(cov: &CovTensor) -> Result<Self> {
        let d = cov.d();
        Ok(GaussianModel {
            d,
            mean: vec![0.0; d * d],
            coords: (0..d * d).map(|a| (a / d, a % d)).collect(),
            root: covariance_root(cov.matrix())?,
            symmetric: false,
        })
    }

    fn draw(&self, rng: &mut impl rand::Rng) -> Vec<f64> {
        let x = correlated_normals(&self.root, rng);
        x.iter().zip(&self.mean).map(|(a, b)| a + b).collect()
    }

    /// Symmetric sample; rectangular models return their dilation.
    pub fn sample(&self, seed: u64) -> Result<SymMatrix> {
        let mut rng = rng_from_seed(seed);
        if self.symmetric {
            let x = self.draw(&mut rng);
            let mut s = SymMatrix::zeros(self.d);
            for (v, &(i, j)) in x.iter().zip(&self.coords) {
                s.set(i, j, *v);
            }
            Ok(s)
        } else {
            selfadjoint_dilation(&self.sample_rect(&mut rng)?)
        }
    }

    fn sample_rect(&self, rng: &mut impl rand::Rng) -> Result<RectMatrix> {
        RectMatrix::from_vec(self.d, self.d, self.draw(rng))
    }
}

/// One draw of the symmetric Gaussian model with the given mean and
/// covariance.
pub fn gaussian_model_sample(mean: &SymMatrix, cov: &CovTensor, seed: u64) -> Result<SymMatrix> {
    GaussianModel::symmetric(mean, cov)?.sample(seed)
}

/// KS statistic `sup |F_emp - F|` over the sample points of sorted `samples`.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Domain("no samples".into()));
    }
    let n = samples.len() as f64;
    let mut worst = 0.0f64;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        worst = worst.max((i as f64 / n - f).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    Ok(worst.min(1.0))
}

/// Piecewise linear CDF obtained by trapezoid integration of a density on a
/// grid, normalized to total mass one.
#[derive(Debug, Clone)]
pub struct TheoryCdf {
    xs: Vec<f64>,
    cum: Vec<f64>,
}

impl TheoryCdf {
    pub fn from_density(xs: &[f64], rho: &[f64]) -> Result<Self> {
        if xs.len() < 2 || xs.len() != rho.len() {
            return Err(Error::Shape("density grid needs at least two matching points".into()));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("grid must be strictly increasing".into()));
        }
        let mut cum = vec![0.0; xs.len()];
        for i in 1..xs.len() {
            cum[i] = cum[i - 1] + 0.5 * (rho[i] + rho[i - 1]) * (xs[i] - xs[i - 1]);
        }
        let total = cum[cum.len() - 1];
        if !(total > 0.0) {
            return Err(Error::Degenerate("density has no mass on the grid".into()));
        }
        cum.iter_mut().for_each(|c| *c /= total);
        Ok(TheoryCdf { xs: xs.to_vec(), cum })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return 0.0;
        }
        if x >= self.xs[n - 1] {
            return 1.0;
        }
        let k = self.xs.partition_point(|&g| g <= x);
        let (x0, x1) = (self.xs[k - 1], self.xs[k]);
        let t = (x - x0) / (x1 - x0);
        self.cum[k - 1] + t * (self.cum[k] - self.cum[k - 1])
    }
}

/// Fixed-width histogram over `[lo, hi)`; `mass` is the fraction of all
/// values falling in the bin.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramBin {
    pub left: f64,
    pub right: f64,
    pub mass: f64,
}

pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Vec<HistogramBin>> {
    if bins == 0 || !(hi > lo) {
        return Err(Error::Domain("histogram needs bins > 0 and hi > lo".into()));
    }
    let w = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        if v >= lo && v < hi {
            counts[(((v - lo) / w) as usize).min(bins - 1)] += 1;
        }
    }
    let n = values.len().max(1) as f64;
    Ok(counts
        .iter()
        .enumerate()
        .map(|(b, &c)| HistogramBin { left: lo + b as f64 * w, right: lo + (b + 1) as f64 * w, mass: c as f64 / n })
        .collect())
}

/// Sample mean and standard error of the mean.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Result of comparing a tracial moment of the Markov model with its
/// Gaussian model.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct MomentGap {
    pub order: u32,
    pub s_moment: f64,
    pub g_moment: f64,
    pub gap: f64,
    pub standard_error: f64,
    pub s_variance: f64,
    pub g_variance: f64,
    pub theory_bound: f64,
    pub holds: bool,
}

/// Estimates `E tr S^p` and `E tr G^p` for the dilation `S` of a Markov
/// model and its Gaussian model `G` over `trials` draws each. Orders 1 and 2
/// match exactly, so their bound is 0; higher orders use the moment
/// universality bound with `X_0 = 0`.
pub fn moment_gap(spec: &BmcSpec, trials: usize, base_seed: u64, order: u32, threads: usize) -> Result<MomentGap> {
    let d = spec.d();
    if d > 32 {
        return Err(Error::Domain(format!("moment gap needs d <= 32, got {d}")));
    }
    if order == 0 || order > 6 {
        return Err(Error::Domain(format!("moment order must lie in 1..=6, got {order}")));
    }
    if trials < 2 {
        return Err(Error::Domain("at least two trials are required".into()));
    }
    let cov = bmc::exact_cov_m(spec)?;
    let gm = GaussianModel::rectangular(&cov)?;
    let trace_power = |m: &RectMatrix| -> Result<f64> {
        let sv = singular_values(m)?;
        Ok(if order % 2 == 1 { 0.0 } else { sv.iter().map(|s| s.powi(order as i32)).sum::<f64>() / d as f64 })
    };
    let pairs: Vec<(f64, f64)> = with_threads(threads, || {
        (0..trials)
            .into_par_iter()
            .map(|t| {
                let seed = trial_seed(base_seed, t as u64);
                let s = trace_power(&bmc::sample_m(spec, seed))?;
                let mut rng = rng_from_seed(trial_seed(!base_seed, t as u64));
                let g = trace_power(&gm.sample_rect(&mut rng)?)?;
                Ok((s, g))
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let ss: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let gs: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let (ms, se_s) = mean_and_se(&ss);
    let (mg, se_g) = mean_and_se(&gs);
    let nt = trials as f64;
    let s_variance = se_s * se_s * nt;
    let g_variance = se_g * se_g * nt;
    let se = (se_s * se_s + se_g * se_g).sqrt();
    let theory_bound = if order <= 2 {
        0.0
    } else {
        let report = bmc::bound_report(spec, 1)?;
        let params = MarkovBoundParams {
            sigma: bmc::sigma_s_squared(&cov)?.sqrt(),
            v: bmc::v_s_squared(&cov)?.sqrt(),
            varsigma: report.varsigma_sq_bound.sqrt(),
            r: report.r_bound,
            psi: report.psi_e as f64,
            d: 2 * d,
        };
        universality_h(&params, &BoundConstants::default(), 0.0, order)?.1
    };
    let gap = ms - mg;
    Ok(MomentGap {
        order,
        s_moment: ms,
        g_moment: mg,
        gap,
        standard_error: se,
        s_variance,
        g_variance,
        theory_bound,
        holds: gap.abs() <= theory_bound + 3.0 * se,
    })
}

/// Writes one CSV row per trial: `trial,norm,s_1..s_k,m_1..m_P`.
pub fn write_trials_csv(out: &mut (impl Write + ?Sized), samples: &[SpectralSample]) -> Result<()> {
    let k = samples.iter().map(|s| s.values.len()).max().unwrap_or(0);
    let p = samples.iter().map(|s| s.moments.len()).max().unwrap_or(0);
    let mut header = vec!["trial".to_string(), "norm".to_string()];
    header.extend((1..=k).map(|i| format!("s_{i}")));
    header.extend((1..=p).map(|i| format!("m_{i}")));
    writeln!(out, "{}", header.join(","))?;
    for s in samples {
        let mut row = vec![s.trial.to_string(), g12(s.norm)];
        row.extend(s.values.iter().map(|&v| g12(v)));
        row.extend(s.moments.iter().map(|&v| g12(v)));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn write_histogram_csv(out: &mut (impl Write + ?Sized), bins: &[HistogramBin]) -> Result<()> {
    writeln!(out, "bin_left,bin_right,mass")?;
    for b in bins {
        writeln!(out, "{},{},{}", g12(b.left), g12(b.right), g12(b.mass))?;
    }
    Ok(())
}
