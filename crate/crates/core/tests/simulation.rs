use num_complex::Complex64;

use freeconc::bmc::{self, BmcSpec};
use freeconc::dependence::{self, FiniteChain};
use freeconc::dyson::{self, DysonSystem};
use freeconc::matrix_core::{CovTensor, RectMatrix, SymMatrix};
use freeconc::models::{self, SubWeibullSpec};
use freeconc::montecarlo::{self, GaussianModel, Model, TheoryCdf, TrialConfig};
use freeconc::rng::{rng_from_seed, trial_seed};

fn small_spec(n_factor: usize) -> BmcSpec {
    let p = bmc::benchmark_spec(40, 10).unwrap().p().clone();
    BmcSpec::new(p, vec![3, 2, 4, 3], 12 * n_factor).unwrap()
}

#[test]
fn gnm_pairs_of_edges_are_uniform() {
    // d = 4 has 6 vertex pairs, hence 15 graphs with 2 edges; m = 4 goes
    // through complement sampling and must be uniform as well
    let d = 4;
    for m in [2usize, 4] {
        let mut counts = std::collections::HashMap::new();
        let draws = 150_000;
        for s in 0..draws {
            let a = models::sample_gnm(d, m, trial_seed(77, s)).unwrap();
            let key: Vec<bool> = (0..d).flat_map(|i| ((i + 1)..d).map(move |j| (i, j))).map(|(i, j)| a.get(i, j) == 1.0).collect();
            *counts.entry(key).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 15);
        let expect = draws as f64 / 15.0;
        let chi2: f64 = counts.values().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
        // 0.999 quantile of chi-square with 14 degrees of freedom
        assert!(chi2 < 36.12, "m = {m}: chi2 = {chi2}");
    }
}

#[test]
fn gnm_extremes_and_complement() {
    assert_eq!(models::sample_gnm(5, 0, 1).unwrap(), SymMatrix::zeros(5));
    let full = models::sample_gnm(5, 10, 1).unwrap();
    assert_eq!(full, SymMatrix::from_fn(5, |i, j| if i == j { 0.0 } else { 1.0 }));
    for seed in 0..20 {
        let a = models::sample_gnm(9, 30, seed).unwrap();
        let comp = SymMatrix::from_fn(9, |i, j| if i == j { 0.0 } else { 1.0 - a.get(i, j) });
        let edges = |m: &SymMatrix| (0..9).flat_map(|i| ((i + 1)..9).map(move |j| (i, j))).filter(|&(i, j)| m.get(i, j) == 1.0).count();
        assert_eq!(edges(&comp), 36 - 30);
    }
}

#[test]
fn gnm_centered_two_values() {
    let (d, m) = (12usize, 20usize);
    let p = m as f64 / 66.0;
    let s = models::gnm_centered(&models::sample_gnm(d, m, 3).unwrap(), m).unwrap();
    let scale = (p * (1.0 - p) * d as f64).sqrt();
    for i in 0..d {
        for j in 0..d {
            let v = s.get(i, j);
            if i == j {
                assert_eq!(v, 0.0);
            } else {
                assert!((v - (1.0 - p) / scale).abs() < 1e-12 || (v + p / scale).abs() < 1e-12);
            }
        }
    }
}

fn upper_entries(w: &SymMatrix) -> Vec<f64> {
    let d = w.dim();
    (0..d).flat_map(|i| (i..d).map(move |j| (i, j))).map(|(i, j)| w.get(i, j)).collect()
}

#[test]
fn subweibull_standardized() {
    let spec = SubWeibullSpec { theta: 1.0, scale: 2.5 };
    let xs = upper_entries(&models::sample_subweibull_wigner(1414, &spec, 5).unwrap());
    let n = xs.len() as f64;
    assert!(n >= 1e6);
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!(mean.abs() < 4.0 / n.sqrt(), "mean {mean}");
    assert!((0.99..=1.01).contains(&var), "var {var}");
    // unit-variance Laplace: P(|X| > x) = exp(-sqrt(2) x)
    for x in [0.5, 1.0, 2.0] {
        let frac = xs.iter().filter(|v| v.abs() > x).count() as f64 / n;
        let exact = (-(2f64.sqrt()) * x).exp();
        assert!((frac - exact).abs() < 4.0 * (exact / n).sqrt(), "x = {x}: {frac} vs {exact}");
    }
}

#[test]
fn subweibull_tail_shape() {
    let theta = 2.0;
    let spec = SubWeibullSpec { theta, scale: 1.0 };
    let xs = upper_entries(&models::sample_subweibull_wigner(1414, &spec, 6).unwrap());
    let n = xs.len() as f64;
    // |X| = E^2 / sqrt(24), so the tail holds with L' = 1 / sqrt(24)
    let l = 1.0 / 24f64.sqrt();
    for x in [0.5, 1.0, 2.0, 4.0, 8.0] {
        let frac = xs.iter().filter(|v| v.abs() > x).count() as f64 / n;
        assert!(frac <= 2.0 * (-(x / l).powf(1.0 / theta)).exp(), "x = {x}: {frac}");
    }
}

#[test]
fn gaussian_model_diagonal_variances() {
    let d = 3;
    let vars = [0.5, 1.0, 2.0, 1.5, 0.25, 3.0];
    let coords: Vec<(usize, usize)> = (0..d).flat_map(|i| (i..d).map(move |j| (i, j))).collect();
    let mut cov = SymMatrix::zeros(d * d);
    for (&(i, j), &v) in coords.iter().zip(&vars) {
        for (a, b) in [(i * d + j, i * d + j), (i * d + j, j * d + i), (j * d + i, j * d + i)] {
            cov.set(a, b, v);
        }
    }
    let cov = CovTensor::new(d, cov).unwrap();
    let mean = SymMatrix::from_fn(d, |i, j| (i + 2 * j) as f64 * 0.1 + (j + 2 * i) as f64 * 0.1);
    let gm = GaussianModel::symmetric(&mean, &cov).unwrap();
    let n = 100_000;
    let mut sum = vec![0.0; coords.len()];
    let mut sq = vec![0.0; coords.len()];
    for t in 0..n {
        let g = gm.sample(trial_seed(3, t)).unwrap();
        for (k, &(i, j)) in coords.iter().enumerate() {
            let x = g.get(i, j) - mean.get(i, j);
            sum[k] += x;
            sq[k] += x * x;
        }
    }
    let nf = n as f64;
    for k in 0..coords.len() {
        let var = sq[k] / nf - (sum[k] / nf).powi(2);
        let se = vars[k] * (2.0 / nf).sqrt();
        assert!((var - vars[k]).abs() < 3.0 * se, "entry {k}: {var} vs {}", vars[k]);
    }
}

#[test]
fn gaussian_model_rejects_indefinite() {
    let mut c = SymMatrix::identity(4);
    c.set(0, 0, -1.0);
    let cov = CovTensor::new(2, c).unwrap();
    assert!(GaussianModel::rectangular(&cov).is_err());
}

#[test]
fn moment_gap_orders_one_and_two() {
    let spec = small_spec(50);
    let g1 = montecarlo::moment_gap(&spec, 200, 1, 1, 0).unwrap();
    assert_eq!((g1.s_moment, g1.g_moment), (0.0, 0.0));
    let g2 = montecarlo::moment_gap(&spec, 20_000, 2, 2, 0).unwrap();
    assert!(g2.holds, "{g2:?}");
    assert_eq!(g2.theory_bound, 0.0);
}

#[test]
fn moment_gap_order_four_within_bound() {
    let spec = small_spec(50);
    let g = montecarlo::moment_gap(&spec, 100_000, 4, 4, 0).unwrap();
    assert!(g.holds, "{g:?}");
    assert!(g.theory_bound > g.gap.abs());
}

#[test]
fn ks_calibrated_on_semicircle() {
    let xs: Vec<f64> = (0..=4000).map(|i| -2.0 + 4.0 * i as f64 / 4000.0).collect();
    let rho: Vec<f64> = xs.iter().map(|&x| dyson::semicircle_density(x)).collect();
    let cdf = TheoryCdf::from_density(&xs, &rho).unwrap();
    let mut rng = rng_from_seed(12);
    let n = 10_000;
    let mut samples = Vec::with_capacity(n);
    while samples.len() < n {
        // 2X for (X, Y) uniform on the unit disk is semicircular
        let x: f64 = rand::Rng::gen_range(&mut rng, -1.0..1.0);
        let y: f64 = rand::Rng::gen_range(&mut rng, -1.0..1.0);
        if x * x + y * y <= 1.0 {
            samples.push(2.0 * x);
        }
    }
    samples.sort_by(f64::total_cmp);
    let ks = montecarlo::ks_distance(&samples, |x| cdf.eval(x)).unwrap();
    assert!(ks < 1.63 / (n as f64).sqrt(), "{ks}");
}

#[test]
fn run_trials_deterministic_across_threads() {
    let cfg = TrialConfig { moment_order: 4, ..TrialConfig::new(Model::Gnm { d: 40, m: 200 }, 6, 5) };
    let a = montecarlo::run_trials(&cfg).unwrap();
    let b = montecarlo::run_trials(&TrialConfig { threads: 3, ..cfg.clone() }).unwrap();
    assert_eq!(a, b);
    let single = montecarlo::run_trials(&TrialConfig { trials: 1, ..cfg }).unwrap();
    assert_eq!(single[0], a[0]);
}

#[test]
fn density_integrates_to_one() {
    let benchmark = bmc::dyson_system(&bmc::benchmark_spec(40, 10).unwrap()).unwrap();
    let p = RectMatrix::from_vec(2, 2, vec![0.3, 0.7, 0.6, 0.4]).unwrap();
    let pi = dependence::stationary_distribution(&p).unwrap();
    let two = DysonSystem::new(vec![0.4, 0.6], pi, p).unwrap();
    for sys in [DysonSystem::semicircle(), benchmark, two] {
        let edge = dyson::support_edge(&sys).unwrap();
        let xs: Vec<f64> = (0..2000).map(|i| -edge - 1.0 + (2.0 * edge + 2.0) * i as f64 / 1999.0).collect();
        let rho = dyson::density_grid(&sys, &xs, 1e-4).unwrap();
        let mass: f64 = xs.windows(2).zip(rho.windows(2)).map(|(x, r)| 0.5 * (r[0] + r[1]) * (x[1] - x[0])).sum();
        assert!((0.99..=1.01).contains(&mass), "mass {mass}");
    }
}

#[test]
fn herglotz_and_contraction() {
    let benchmark = bmc::dyson_system(&bmc::benchmark_spec(40, 10).unwrap()).unwrap();
    for sys in [DysonSystem::semicircle(), benchmark] {
        for x in [-3.0, -1.0, 0.0, 0.5, 2.0, 2.6] {
            let z = Complex64::new(x, 0.1);
            let sol = dyson::solve_dyson(&sys, z).unwrap();
            assert!(sol.a.iter().all(|a| a.im < 0.0) && sol.s.im < 0.0);
            let h = dyson::residual_history(&sys, z).unwrap();
            let burn = h.len() / 4;
            assert!(h[burn..].windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)), "x = {x}");
        }
    }
}

#[test]
fn frequency_counts_and_centering() {
    let spec = small_spec(10);
    for seed in 0..10 {
        let path = bmc::simulate_path(&spec, seed);
        let n = bmc::frequency_matrix(&spec, &path);
        assert_eq!(n.as_slice().iter().sum::<f64>() as usize, spec.n() - 1);
    }
    let cov = bmc::exact_cov_m(&spec).unwrap();
    let d = spec.d();
    let t = 10_000;
    let mut mean = vec![0.0; d * d];
    for s in 0..t {
        let m = bmc::sample_m(&spec, trial_seed(21, s));
        for (acc, v) in mean.iter_mut().zip(m.as_slice()) {
            *acc += v / t as f64;
        }
    }
    for (a, &mu) in mean.iter().enumerate() {
        let sd = cov.matrix().get(a, a).sqrt();
        assert!(mu.abs() <= 4.0 * sd / (t as f64).sqrt() + 1e-12, "entry {a}: {} vs sd {sd}", mu);
    }
}

#[test]
fn psi_of_state_and_edge_chains() {
    let p = RectMatrix::from_vec(3, 3, vec![0.1, 0.6, 0.3, 0.5, 0.2, 0.3, 0.3, 0.3, 0.4]).unwrap();
    let sizes = [1usize, 2, 2];
    let cluster: Vec<usize> = sizes.iter().enumerate().flat_map(|(c, &s)| std::iter::repeat_n(c, s)).collect();
    let d = cluster.len();
    let pz = RectMatrix::from_fn(d, d, |x, y| p.get(cluster[x], cluster[y]) / sizes[cluster[y]] as f64);
    let pe = RectMatrix::from_fn(d * d, d * d, |a, b| if a % d == b / d { pz.get(a % d, b % d) } else { 0.0 });
    let n = 500;
    let psi_c = dependence::capital_psi(&FiniteChain::stationary(p, n).unwrap()).unwrap();
    let psi_z = dependence::capital_psi(&FiniteChain::stationary(pz, n).unwrap()).unwrap();
    let psi_e = dependence::capital_psi(&FiniteChain::stationary(pe, n).unwrap()).unwrap();
    assert_eq!(psi_z, psi_c);
    assert!(psi_e <= psi_c + 1, "{psi_e} vs {psi_c}");
}

#[test]
fn feray_shapes() {
    let c = vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
    let half = models::feray_graph_params(10, 45 / 2, &c, 5).unwrap();
    assert!(half.varsigma_sq_bound <= 2.0 / (22.0 / 45.0) + 1e-12);
    for (d, m) in [(50usize, 400usize), (100, 2000), (200, 4000)] {
        let f = models::feray_graph_params(d, m, &c, 5).unwrap();
        let combined = f.r_bound * f.varsigma_sq_bound.sqrt();
        assert!((combined - 2.0 / (d as f64).sqrt() / f.p).abs() < 1e-12 * combined);
    }
}
