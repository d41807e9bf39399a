//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;

use freeconc::bmc::{self, BmcSpec, BENCHMARK_ALPHA};
use freeconc::cumulants::{
    boolean_cumulant, boolean_markov_telescoping, classical_cumulant, classical_from_boolean, random_markov_functional,
    random_oracle,
};
use freeconc::dependence::{self, FiniteChain};
use freeconc::dyson::{self, semicircle_density, DysonSystem};
use freeconc::free_bounds::{lehner_diagonal_upper, minmax_coupling, pisier_bracket};
use freeconc::matrix_core::{operator_norm, CovTensor, RectMatrix, SymMatrix};
use freeconc::models;
use freeconc::montecarlo::{self, Model, TheoryCdf, TrialConfig};
use freeconc::rng::{rng_from_seed, trial_seed};

type Outcome = (bool, String);

fn benchmark_limit_system() -> DysonSystem {
    let spec = bmc::benchmark_spec(400, 100).unwrap();
    DysonSystem::new(BENCHMARK_ALPHA.to_vec(), spec.pi().to_vec(), spec.p().clone()).unwrap()
}

fn random_stochastic(k: usize, zero_prob: f64, rng: &mut impl Rng) -> RectMatrix {
    loop {
        let mut data = Vec::with_capacity(k * k);
        for _ in 0..k {
            let mut row: Vec<f64> = (0..k).map(|_| if rng.gen::<f64>() < zero_prob { 0.0 } else { rng.gen_range(0.05..1.0) }).collect();
            let s: f64 = row.iter().sum();
            if s == 0.0 {
                row[rng.gen_range(0..k)] = 1.0;
            }
            let s: f64 = row.iter().sum();
            data.extend(row.iter().map(|x| x / s));
        }
        let p = RectMatrix::from_vec(k, k, data).unwrap();
        if dependence::is_primitive(&p) {
            return p;
        }
    }
}

fn c1_semicircle_density() -> Outcome {
    let sys = DysonSystem::semicircle();
    let eps = 1e-4;
    let xs: Vec<f64> = (0..400).map(|i| -1.9 + 3.8 * i as f64 / 399.0).collect();
    let rho = dyson::density_grid(&sys, &xs, eps).unwrap();
    let err = xs.iter().zip(&rho).map(|(&x, &r)| (r - semicircle_density(x)).abs()).fold(0.0, f64::max);
    (err < 5.0 * eps, format!("max abs error {err:.3e} (limit {:.1e})", 5.0 * eps))
}

fn c2_edge_vs_minmax() -> Outcome {
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for (name, sys) in [("K=1", DysonSystem::semicircle()), ("benchmark", benchmark_limit_system())] {
        let edge = dyson::support_edge(&sys).unwrap();
        let m = minmax_coupling(sys.coupling()).unwrap().0;
        worst = worst.max((edge - m).abs());
        parts.push(format!("{name}: edge {edge:.6} minmax {m:.6}"));
    }
    (worst < 2e-3, format!("{}; max gap {worst:.2e}", parts.join(", ")))
}

fn c3_k1_limit() -> Outcome {
    let p = RectMatrix::from_vec(1, 1, vec![1.0]).unwrap();
    let m = bmc::limiting_m(&[1.0], &[1.0], &p).unwrap();
    ((m - 2.0).abs() < 1e-8, format!("limiting m = {m:.12}"))
}

fn c4_norm_distribution() -> Outcome {
    let spec = bmc::benchmark_spec(400, 100).unwrap();
    let cfg = TrialConfig::new(Model::Bmc(spec.clone()), 20, 2024);
    let samples = montecarlo::run_trials(&cfg).unwrap();
    let sys = bmc::dyson_system(&spec).unwrap();
    let edge = dyson::support_edge(&sys).unwrap();
    let hi = 1.2 * edge;
    let n = 4000;
    let xs: Vec<f64> = (0..=n).map(|i| hi * i as f64 / n as f64).collect();
    let rho = dyson::density_grid(&sys, &xs, 1e-4).unwrap();
    let cdf = TheoryCdf::from_density(&xs, &rho).unwrap();
    let mut pooled: Vec<f64> = samples.iter().flat_map(|s| s.values.iter().copied()).collect();
    pooled.sort_by(f64::total_cmp);
    let ks = montecarlo::ks_distance(&pooled, |x| cdf.eval(x)).unwrap();
    let norms: Vec<f64> = samples.iter().map(|s| s.norm).collect();
    let mean = norms.iter().sum::<f64>() / norms.len() as f64;
    let m = bmc::mhat(&spec).unwrap();
    let rel = (mean - m).abs() / m;
    (ks < 0.05 && rel < 0.05, format!("KS {ks:.4}, mean norm {mean:.4} vs minmax {m:.4} (rel {rel:.2e})"))
}

fn c5_cumulant_identities() -> Outcome {
    let mut rng = rng_from_seed(5);
    let mut cfb_err = 0.0f64;
    for k in 3..=6 {
        let idx: Vec<usize> = (0..k).collect();
        for _ in 0..50 {
            let o = random_oracle(k, 6, &mut rng).unwrap();
            let e = (classical_from_boolean(&o, &idx).unwrap() - classical_cumulant(&o, &idx).unwrap()).abs();
            cfb_err = cfb_err.max(e);
        }
    }
    let mut tel_err = 0.0f64;
    for c in 0..20 {
        let k = 2 + c % 4;
        let chain = random_markov_functional(k, 4, &mut rng).unwrap();
        let idx: Vec<usize> = (0..k).collect();
        let b = boolean_cumulant(&chain.induced_oracle().unwrap(), &idx).unwrap();
        tel_err = tel_err.max((boolean_markov_telescoping(&chain).unwrap() - b).abs());
    }
    (cfb_err < 1e-10 && tel_err < 1e-12, format!("run expansion max error {cfb_err:.2e}, telescoping max error {tel_err:.2e}"))
}

fn c6_psi_suite() -> Outcome {
    let mut rng = rng_from_seed(6);
    let mut failures = Vec::new();
    for c in 0..100 {
        let p = random_stochastic(3, 0.25, &mut rng);
        let pi = dependence::stationary_distribution(&p).unwrap();
        let psi: Vec<f64> = (0..=40).map(|t| dependence::psi_at_lag(&p, &pi, t).unwrap()).collect();
        for s in 1..=20 {
            for t in 1..=20 {
                if psi[s + t] > psi[s] * psi[t] + 1e-10 {
                    failures.push(format!("chain {c}: submultiplicativity at ({s},{t})"));
                }
            }
        }
        let cap = dependence::capital_psi(&FiniteChain::stationary(p.clone(), 10_000).unwrap()).unwrap();
        for (j, &v) in psi.iter().enumerate().take((4 * cap).min(40) + 1).skip(cap) {
            if v > 0.25f64.powi((j / cap) as i32) + 1e-10 {
                failures.push(format!("chain {c}: decay at lag {j}"));
            }
        }
        let bound = dependence::psipi_bound(&p).unwrap();
        if cap > bound {
            failures.push(format!("chain {c}: Psi {cap} > bound {bound}"));
        }
    }
    let p = RectMatrix::from_vec(2, 2, vec![0.9, 0.1, 0.1, 0.9]).unwrap();
    let two = dependence::capital_psi(&FiniteChain::stationary(p, 1000).unwrap()).unwrap();
    if two != 7 {
        failures.push(format!("two-state chain gives Psi = {two}"));
    }
    let ok = failures.is_empty();
    (ok, if ok { "100 chains checked, two-state Psi = 7".to_string() } else { failures[..failures.len().min(3)].join("; ") })
}

fn random_spec(rng: &mut impl Rng) -> BmcSpec {
    let k = rng.gen_range(1..=4);
    let p = random_stochastic(k, 0.2, rng);
    let sizes = (0..k).map(|_| rng.gen_range(1..=4)).collect();
    let n = rng.gen_range(4..=200);
    BmcSpec::new(p, sizes, n).unwrap()
}

fn c7_frakd_exact() -> Outcome {
    let mut rng = rng_from_seed(7);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let spec = random_spec(&mut rng);
        let (closed, _) = bmc::frakd_closed_form(&spec).unwrap();
        let brute = bmc::frakd_bruteforce(&spec).unwrap();
        let rel = if brute == 0.0 { closed.abs() } else { (closed - brute).abs() / brute.abs() };
        worst = worst.max(rel);
    }
    (worst < 1e-10, format!("max relative error {worst:.2e} over 50 specs"))
}

fn batch_se(xs: &[f64]) -> (f64, f64) {
    montecarlo::mean_and_se(xs)
}

fn c8_parameter_inequalities() -> Outcome {
    let p = bmc::benchmark_spec(400, 100).unwrap().p().clone();
    let spec = BmcSpec::new(p, vec![3, 2, 6, 5], 1600).unwrap();
    let d = spec.d();
    let fp = bmc::frak_params(&spec).unwrap();
    let amin = spec.alpha_hat().iter().cloned().fold(f64::INFINITY, f64::min);
    let c_ok = fp.c1 <= 1.0 / amin + 1e-12 && fp.c2 <= amin.powi(-2) + 1e-12 && fp.c3 <= amin.powi(-3) + 1e-12;
    let trials = 10_000;
    let batches = 20;
    let per = trials / batches;
    let dd = d * d;
    let mut sig_b = Vec::new();
    let mut v_b = Vec::new();
    for b in 0..batches {
        let mut mmt = vec![0.0; dd];
        let mut mtm = vec![0.0; dd];
        let mut sum = vec![0.0; dd];
        let mut outer = vec![0.0; dd * dd];
        for t in 0..per {
            let m = bmc::sample_m(&spec, trial_seed(8, (b * per + t) as u64));
            let x = m.as_slice();
            for i in 0..d {
                for k in 0..d {
                    let mut r = 0.0;
                    let mut c = 0.0;
                    for j in 0..d {
                        r += x[i * d + j] * x[k * d + j];
                        c += x[j * d + i] * x[j * d + k];
                    }
                    mmt[i * d + k] += r;
                    mtm[i * d + k] += c;
                }
            }
            for a in 0..dd {
                sum[a] += x[a];
                let xa = x[a];
                let row = &mut outer[a * dd..(a + 1) * dd];
                for (o, &xb) in row.iter_mut().zip(x) {
                    *o += xa * xb;
                }
            }
        }
        let nf = per as f64;
        let s_r = SymMatrix::symmetrize(d, &mmt.iter().map(|v| v / nf).collect::<Vec<_>>()).unwrap();
        let s_c = SymMatrix::symmetrize(d, &mtm.iter().map(|v| v / nf).collect::<Vec<_>>()).unwrap();
        sig_b.push(operator_norm(&s_r).unwrap().max(operator_norm(&s_c).unwrap()));
        let cov: Vec<f64> = (0..dd * dd).map(|ab| outer[ab] / nf - sum[ab / dd] * sum[ab % dd] / (nf * nf)).collect();
        let cov = SymMatrix::symmetrize(dd, &cov).unwrap();
        v_b.push(2.0 * operator_norm(&cov).unwrap());
    }
    let (sig, sig_se) = batch_se(&sig_b);
    let (v2, v_se) = batch_se(&v_b);
    let sig_ok = sig <= fp.frak_g + 3.0 * sig_se;
    let v_ok = v2 <= fp.frak_v / d as f64 + 3.0 * v_se;
    (
        c_ok && sig_ok && v_ok,
        format!(
            "c1 {:.3} c2 {:.3} c3 {:.3} vs alpha_min^-i; sigma^2 {sig:.4} (se {sig_se:.1e}) <= g {:.3}; v^2 {v2:.4} (se {v_se:.1e}) <= v/d {:.3}",
            fp.c1, fp.c2, fp.c3, fp.frak_g, fp.frak_v / d as f64
        ),
    )
}

fn symmetric_phi(cov: &CovTensor) -> impl Fn(&[f64]) -> SymMatrix + '_ {
    move |w: &[f64]| {
        let d = cov.d();
        SymMatrix::from_fn(d, |i, k| (0..d).map(|j| w[j] * cov.entry(i, j, j, k)).sum())
    }
}

fn c9_pisier_bracket() -> Outcome {
    let mut values: Vec<(String, f64, f64)> = Vec::new();
    let coupling_sigma = |c: &RectMatrix| -> f64 {
        (0..c.rows()).map(|i| (0..c.cols()).map(|j| c.get(i, j)).sum::<f64>()).fold(0.0, f64::max).sqrt()
    };
    let lim = benchmark_limit_system();
    values.push(("limiting m".into(), minmax_coupling(lim.coupling()).unwrap().0, coupling_sigma(lim.coupling())));
    for (d, f) in [(40, 10), (400, 100)] {
        let spec = bmc::benchmark_spec(d, f).unwrap();
        let c = bmc::c_hat(&spec);
        values.push((format!("m_hat d={d}"), bmc::mhat(&spec).unwrap(), coupling_sigma(&c)));
    }
    let p = bmc::benchmark_spec(400, 100).unwrap().p().clone();
    let small = BmcSpec::new(p, vec![3, 2, 4, 3], 600).unwrap();
    let cov = bmc::exact_cov_m(&small).unwrap();
    let d = small.d();
    let phi = |w: &[f64]| bmc::dilation_phi(&cov, w);
    let lehner = lehner_diagonal_upper(&SymMatrix::zeros(2 * d), &phi).unwrap();
    values.push(("Lehner bmc d=12".into(), lehner, bmc::sigma_s_squared(&cov).unwrap().sqrt()));
    let wcov = models::wigner_exact_cov(16).unwrap();
    let wphi = symmetric_phi(&wcov);
    let wl = lehner_diagonal_upper(&SymMatrix::zeros(16), &wphi).unwrap();
    values.push(("Lehner wigner d=16".into(), wl, operator_norm(&wphi(&[1.0; 16])).unwrap().sqrt()));
    let gcov = models::gnm_exact_cov(16, 40).unwrap();
    let gphi = symmetric_phi(&gcov);
    let gl = lehner_diagonal_upper(&SymMatrix::zeros(16), &gphi).unwrap();
    values.push(("Lehner gnm d=16".into(), gl, operator_norm(&gphi(&[1.0; 16])).unwrap().sqrt()));
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, v, sigma) in &values {
        let (lo, hi) = pisier_bracket(0.0, *sigma);
        // eigenvalue round-off only
        let slack = 1e-9 * hi;
        let inside = *v >= lo - slack && *v <= hi + slack;
        ok &= inside;
        parts.push(format!("{name} {v:.6} in [{lo:.6}, {hi:.6}] (margin {:.1e}){}", (v - lo).min(hi - v), if inside { "" } else { " OUTSIDE" }));
    }
    (ok, parts.join("; "))
}

fn c10_gnm_semicircle() -> Outcome {
    let d = 1000;
    let cfg = TrialConfig { moment_order: 6, keep_values: Some(0), ..TrialConfig::new(Model::Gnm { d, m: 20 * d }, 50, 10) };
    let samples = montecarlo::run_trials(&cfg).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for k in 1..=3u32 {
        let mean = samples.iter().map(|s| s.moments[2 * k as usize - 1]).sum::<f64>() / samples.len() as f64;
        let cat = models::catalan(k);
        let rel = (mean - cat).abs() / cat;
        ok &= rel < 0.1;
        parts.push(format!("E tr S^{} = {mean:.4} vs {cat}", 2 * k));
    }
    (ok, parts.join(", "))
}

fn c11_baiyin() -> Outcome {
    let d = 1000;
    let spec = models::SubWeibullSpec { theta: 1.0, scale: 1.0 };
    let cfg = TrialConfig { keep_values: Some(0), ..TrialConfig::new(Model::Wigner { d, spec }, 200, 11) };
    let samples = montecarlo::run_trials(&cfg).unwrap();
    let inside = samples.iter().filter(|s| (1.8..=2.2).contains(&s.norm)).count();
    let frac = inside as f64 / samples.len() as f64;
    let lo = samples.iter().map(|s| s.norm).fold(f64::INFINITY, f64::min);
    let hi = samples.iter().map(|s| s.norm).fold(0.0, f64::max);
    (frac >= 0.95, format!("{inside}/200 norms in [1.8, 2.2], range [{lo:.4}, {hi:.4}]"))
}

fn c12_tail_sanity() -> Outcome {
    let spec = bmc::benchmark_spec(400, 100).unwrap();
    let rep = bmc::bound_report(&spec, 3).unwrap();
    let x = 1.2;
    let level = rep.thresholds[2].threshold * x;
    let cfg = TrialConfig { keep_values: Some(0), ..TrialConfig::new(Model::Bmc(spec.clone()), 200, 12) };
    let samples = montecarlo::run_trials(&cfg).unwrap();
    let exceed = samples.iter().filter(|s| s.norm >= level).count() as f64 / 200.0;
    let bound = bmc::threshold_tail(spec.d(), 3, x);
    (exceed <= bound, format!("exceedance {exceed} of level {level:.3} vs bound {bound}"))
}

fn run_cli(args: &[&str]) -> (Vec<u8>, i32) {
    let out = Command::new(env!("CARGO_BIN_EXE_freeconc")).args(args).env_remove("FREECONC_SEED").output().unwrap();
    (out.stdout, out.status.code().unwrap_or(-1))
}

fn c13_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("benchmark.json");
    let spec = bmc::benchmark_spec(80, 20).unwrap();
    std::fs::write(&cfg, serde_json::to_string(&spec.to_config()).unwrap()).unwrap();
    let c = cfg.to_str().unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["bmc", "simulate", "--config", c, "--trials", "6", "--seed", "3", "--singular-values", "5", "--moments", "4"],
        vec!["bmc", "simulate", "--config", c, "--trials", "4", "--seed", "3", "--format", "json"],
        vec!["graph", "semicircle", "--d", "60", "--m", "600", "--trials", "5", "--seed", "9"],
        vec!["wigner", "baiyin", "--d", "60", "--delta", "0.05", "--x", "20", "--cprime", "1", "--trials", "5", "--seed", "4"],
        vec!["cumulant", "verify", "--kmax", "5", "--oracles", "10", "--seed", "7"],
        vec!["bmc", "bound", "--config", c, "--p-max", "3"],
        vec!["bmc", "density", "--config", c, "--grid-min", "0", "--grid-max", "3", "--points", "31"],
        vec!["bmc", "mlimit", "--config", c],
        vec!["psi", "chain", "--config", c],
    ];
    let mut bad = Vec::new();
    for args in &cases {
        let (a, ca) = run_cli(args);
        let (b, cb) = run_cli(args);
        let mut threaded = args.clone();
        threaded.extend(["--threads", "8"]);
        let (t, ct) = run_cli(&threaded);
        if ca != 0 || cb != 0 || ct != 0 || a != b || a != t || a.is_empty() {
            bad.push(format!("{} {}", args[0], args[1]));
        }
    }
    (bad.is_empty(), if bad.is_empty() { format!("{} invocations byte-identical across repeats and --threads 8", cases.len()) } else { format!("mismatch in {}", bad.join(", ")) })
}

type Criterion = (&'static str, Option<Duration>, fn() -> Outcome);

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("semicircle closed form", Some(Duration::from_secs(10)), c1_semicircle_density),
        ("support edge vs min-max", Some(Duration::from_secs(30)), c2_edge_vs_minmax),
        ("K=1 limit", None, c3_k1_limit),
        ("BMC norm distribution", Some(Duration::from_secs(300)), c4_norm_distribution),
        ("cumulant identities", Some(Duration::from_secs(60)), c5_cumulant_identities),
        ("psi suite", Some(Duration::from_secs(30)), c6_psi_suite),
        ("frak d exactness", None, c7_frakd_exact),
        ("parameter inequalities", None, c8_parameter_inequalities),
        ("Pisier bracket", None, c9_pisier_bracket),
        ("G(d,m) semicircle", Some(Duration::from_secs(180)), c10_gnm_semicircle),
        ("Bai-Yin", None, c11_baiyin),
        ("tail-bound sanity", None, c12_tail_sanity),
        ("CLI determinism", None, c13_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, limit, f)) in criteria.iter().enumerate() {
        let tag = format!("{}", i + 1);
        if !filter.is_empty() && !filter.contains(&tag) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = f();
        let took = start.elapsed();
        let in_time = limit.is_none_or(|l| took <= l);
        let pass = ok && in_time;
        if !pass {
            failed += 1;
        }
        let time_note = match limit {
            Some(l) if !in_time => format!(", runtime {:.1}s exceeds {}s", took.as_secs_f64(), l.as_secs()),
            _ => format!(", {:.1}s", took.as_secs_f64()),
        };
        println!("{} {:>2} {name}: {detail}{time_note}", if pass { "PASS" } else { "FAIL" }, i + 1);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
