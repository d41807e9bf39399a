use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use freeconc::bmc::{self, BmcSpec};
use freeconc::cumulants::verify_identities;
use freeconc::dependence::{self, FiniteChain};
use freeconc::dyson::{self, DEFAULT_EPS};
use freeconc::models::{self, SubWeibullSpec};
use freeconc::montecarlo::{self, Model, SpectralSample, TheoryCdf, TrialConfig};
use freeconc::numfmt::g12;
use freeconc::{Error, Result};

const SEED_ENV: &str = "FREECONC_SEED";
const DENSITY_POINTS: usize = 2000;

#[derive(Parser, Debug)]
#[command(name = "freeconc", version, about = "Free-probability norm bounds and spectral simulations")]
struct Cli {
    /// Worker threads for Monte Carlo trials (0 = auto)
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Output format
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Print the parsed, normalized input as JSON and exit
    #[arg(long, global = true)]
    emit_config: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Block Markov chains
    #[command(subcommand)]
    Bmc(BmcCmd),
    /// Random graphs with a fixed number of edges
    #[command(subcommand)]
    Graph(GraphCmd),
    /// Wigner matrices with sub-Weibull entries
    #[command(subcommand)]
    Wigner(WignerCmd),
    /// Cumulant identities
    #[command(subcommand)]
    Cumulant(CumulantCmd),
    /// Dependence coefficients of the cluster chain
    #[command(subcommand)]
    Psi(PsiCmd),
}

#[derive(Subcommand, Debug)]
enum BmcCmd {
    /// Simulate sample frequency matrices and record their spectra
    Simulate(BmcSimulate),
    /// Explicit norm bounds
    Bound(BmcBound),
    /// Limiting singular value density on a grid
    Density(BmcDensity),
    /// Limiting norm of the free model
    Mlimit(ConfigArg),
}

#[derive(Args, Debug)]
struct ConfigArg {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args, Debug)]
struct OutArg {
    /// Output path; standard output when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BmcSimulate {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of leading singular values written per trial
    #[arg(long, default_value_t = 0)]
    singular_values: usize,
    /// Normalized tracial moments of the dilation up to this order
    #[arg(long, default_value_t = 0)]
    moments: u32,
    /// Pooled singular value histogram output path
    #[arg(long)]
    histogram: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    bins: usize,
    #[arg(long, default_value_t = DEFAULT_EPS)]
    epsilon: f64,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Debug)]
struct BmcBound {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 6)]
    p_max: u32,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Debug)]
struct BmcDensity {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    grid_min: f64,
    #[arg(long, allow_negative_numbers = true)]
    grid_max: f64,
    #[arg(long, default_value_t = 401)]
    points: usize,
    #[arg(long, default_value_t = DEFAULT_EPS)]
    epsilon: f64,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Subcommand, Debug)]
enum GraphCmd {
    /// Spectra of centered G(d, m) adjacency matrices
    Semicircle(GraphSemicircle),
}

#[derive(Args, Debug)]
struct GraphSemicircle {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 6)]
    moments: u32,
    /// Number of leading eigenvalues written per trial
    #[arg(long, default_value_t = 0)]
    eigenvalues: usize,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Subcommand, Debug)]
enum WignerCmd {
    /// Norms of sub-Weibull Wigner matrices against the explicit bound
    Baiyin(WignerBaiyin),
}

#[derive(Args, Debug)]
struct WignerBaiyin {
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 1.0)]
    theta: f64,
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long)]
    delta: f64,
    #[arg(long)]
    x: f64,
    /// Constant of the bound; must be given explicitly
    #[arg(long)]
    cprime: f64,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Subcommand, Debug)]
enum CumulantCmd {
    /// Run the cumulant identity suite
    Verify(CumulantVerify),
}

#[derive(Args, Debug)]
struct CumulantVerify {
    #[arg(long, default_value_t = 6)]
    kmax: usize,
    #[arg(long, default_value_t = 50)]
    oracles: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand, Debug)]
enum PsiCmd {
    /// Psi, mixing time and the mixing-time bound of the cluster chain
    Chain(ConfigArg),
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Convergence(_) | Error::IterationLimit(_) | Error::Numeric(_) => 3,
        Error::Io(_) => 1,
        _ => 2,
    }
}

fn seed_override(seed: u64) -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| Error::Config(format!("{SEED_ENV} is not an unsigned integer: {v:?}"))),
        Err(_) => Ok(seed),
    }
}

fn load_spec(path: &Path) -> Result<BmcSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    BmcSpec::from_json(&text)
}

fn limit_alpha(spec: &BmcSpec, path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let cfg: bmc::BmcConfig = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
    Ok(cfg.alpha.unwrap_or_else(|| spec.alpha_hat()))
}

fn open_out(out: &OutArg) -> Result<Box<dyn Write>> {
    Ok(match &out.out {
        Some(p) if p.as_os_str() != "-" => Box::new(BufWriter::new(File::create(p)?)),
        _ => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json(w: &mut dyn Write, v: &serde_json::Value) -> Result<()> {
    serde_json::to_writer_pretty(&mut *w, v).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(w)?;
    Ok(())
}

fn emit(v: serde_json::Value) -> Result<u8> {
    write_json(&mut io::stdout().lock(), &v)?;
    Ok(0)
}

fn spec_json(spec: &BmcSpec) -> serde_json::Value {
    serde_json::to_value(spec.to_config()).unwrap_or(serde_json::Value::Null)
}

fn trials_csv(w: &mut dyn Write, samples: &[SpectralSample], keep: usize) -> Result<()> {
    let cut: Vec<SpectralSample> = samples
        .iter()
        .map(|s| SpectralSample { values: s.values.iter().take(keep).copied().collect(), ..s.clone() })
        .collect();
    montecarlo::write_trials_csv(w, &cut)
}

fn run(cli: Cli) -> Result<u8> {
    let threads = cli.threads;
    let format = cli.format;
    let emit_config = cli.emit_config;
    match cli.command {
        Command::Bmc(BmcCmd::Simulate(a)) => {
            let spec = load_spec(&a.config)?;
            let seed = seed_override(a.seed)?;
            if emit_config {
                return emit(json!({ "spec": spec_json(&spec), "trials": a.trials, "seed": seed,
                    "singular_values": a.singular_values, "moments": a.moments, "bins": a.bins, "epsilon": a.epsilon }));
            }
            let cfg = TrialConfig { moment_order: a.moments, threads, ..TrialConfig::new(Model::Bmc(spec.clone()), a.trials, seed) };
            let samples = montecarlo::run_trials(&cfg)?;
            let needs_theory = format == Format::Json || a.histogram.is_some();
            let mut w = open_out(&a.out)?;
            if needs_theory {
                let sys = bmc::dyson_system(&spec)?;
                let edge = dyson::support_edge(&sys)?;
                let hi = 1.2 * edge;
                let mut pooled: Vec<f64> = samples.iter().flat_map(|s| s.values.iter().copied()).collect();
                pooled.sort_by(f64::total_cmp);
                if let Some(path) = &a.histogram {
                    let bins = montecarlo::histogram(&pooled, 0.0, hi, a.bins)?;
                    let mut hw = BufWriter::new(File::create(path)?);
                    montecarlo::write_histogram_csv(&mut hw, &bins)?;
                    hw.flush()?;
                }
                if format == Format::Json {
                    let xs: Vec<f64> = (0..=DENSITY_POINTS).map(|i| hi * i as f64 / DENSITY_POINTS as f64).collect();
                    let rho = dyson::density_grid(&sys, &xs, a.epsilon)?;
                    let cdf = TheoryCdf::from_density(&xs, &rho)?;
                    let ks = montecarlo::ks_distance(&pooled, |x| cdf.eval(x))?;
                    let norms: Vec<f64> = samples.iter().map(|s| s.norm).collect();
                    let (mean_norm, se) = montecarlo::mean_and_se(&norms);
                    let m_hat = bmc::mhat(&spec)?;
                    write_json(&mut w, &json!({
                        "spec": spec_json(&spec), "trials": a.trials, "seed": seed,
                        "m_hat": m_hat, "support_edge": edge, "mean_norm": mean_norm, "norm_standard_error": se,
                        "relative_norm_gap": (mean_norm - m_hat) / m_hat, "ks": ks, "epsilon": a.epsilon,
                        "norms": norms,
                    }))?;
                }
            }
            if format == Format::Csv {
                trials_csv(&mut w, &samples, a.singular_values)?;
            }
            w.flush()?;
            Ok(0)
        }
        Command::Bmc(BmcCmd::Bound(a)) => {
            let spec = load_spec(&a.config)?;
            if emit_config {
                return emit(json!({ "spec": spec_json(&spec), "p_max": a.p_max }));
            }
            let rep = bmc::bound_report(&spec, a.p_max)?;
            let mut w = open_out(&a.out)?;
            match format {
                Format::Json => write_json(&mut w, &serde_json::to_value(&rep).map_err(|e| Error::Io(e.to_string()))?)?,
                Format::Csv => {
                    writeln!(w, "quantity,value")?;
                    let p = &rep.params;
                    let rows: [(&str, f64); 19] = [
                        ("d", rep.d as f64),
                        ("n", rep.n as f64),
                        ("c1", p.c1),
                        ("c2", p.c2),
                        ("c3", p.c3),
                        ("frak_d", p.frak_d),
                        ("frak_g", p.frak_g),
                        ("frak_v", p.frak_v),
                        ("frak_u", p.frak_u),
                        ("frak_e", p.frak_e),
                        ("psi_c", p.psi_c as f64),
                        ("psi_e", rep.psi_e as f64),
                        ("m_hat", rep.m_hat),
                        ("r_bound", rep.r_bound),
                        ("varsigma_sq_bound", rep.varsigma_sq_bound),
                        ("sigma_sq_bound", rep.sigma_sq_bound),
                        ("v_sq_bound", rep.v_sq_bound),
                        ("free_norm_bound", rep.free_norm_bound),
                        ("p_max", a.p_max as f64),
                    ];
                    for (k, v) in rows {
                        writeln!(w, "{k},{}", g12(v))?;
                    }
                    for t in &rep.thresholds {
                        writeln!(w, "threshold_p{},{}", t.p, g12(t.threshold))?;
                    }
                }
            }
            w.flush()?;
            Ok(0)
        }
        Command::Bmc(BmcCmd::Density(a)) => {
            let spec = load_spec(&a.config)?;
            if emit_config {
                return emit(json!({ "spec": spec_json(&spec), "grid_min": a.grid_min, "grid_max": a.grid_max,
                    "points": a.points, "epsilon": a.epsilon }));
            }
            if a.points < 2 || a.grid_max.partial_cmp(&a.grid_min) != Some(std::cmp::Ordering::Greater) {
                return Err(Error::Config("need at least two points and grid_max > grid_min".into()));
            }
            let sys = bmc::dyson_system(&spec)?;
            let xs: Vec<f64> =
                (0..a.points).map(|i| a.grid_min + (a.grid_max - a.grid_min) * i as f64 / (a.points - 1) as f64).collect();
            let rho = dyson::density_grid(&sys, &xs, a.epsilon)?;
            let mut w = open_out(&a.out)?;
            match format {
                Format::Csv => {
                    writeln!(w, "x,density")?;
                    for (x, r) in xs.iter().zip(&rho) {
                        writeln!(w, "{},{}", g12(*x), g12(*r))?;
                    }
                }
                Format::Json => write_json(&mut w, &json!({ "epsilon": a.epsilon, "x": xs, "density": rho }))?,
            }
            w.flush()?;
            Ok(0)
        }
        Command::Bmc(BmcCmd::Mlimit(a)) => {
            let spec = load_spec(&a.config)?;
            let alpha = limit_alpha(&spec, &a.config)?;
            if emit_config {
                return emit(json!({ "spec": spec_json(&spec), "alpha": alpha }));
            }
            let m = bmc::limiting_m(&alpha, spec.pi(), spec.p())?;
            match format {
                Format::Csv => println!("{m:.6}"),
                Format::Json => write_json(&mut io::stdout().lock(), &json!({ "m": m }))?,
            }
            Ok(0)
        }
        Command::Graph(GraphCmd::Semicircle(a)) => {
            let seed = seed_override(a.seed)?;
            if emit_config {
                return emit(json!({ "d": a.d, "m": a.m, "trials": a.trials, "seed": seed, "moments": a.moments,
                    "eigenvalues": a.eigenvalues }));
            }
            let total = models::pair_count(a.d);
            if a.m >= 1 && a.m < 10 * a.d && a.m <= total / 2 {
                eprintln!("warning: m = {} is below 10 d; the semicircle regime needs d / m -> 0", a.m);
            }
            let cfg = TrialConfig {
                moment_order: a.moments,
                threads,
                ..TrialConfig::new(Model::Gnm { d: a.d, m: a.m }, a.trials, seed)
            };
            let samples = montecarlo::run_trials(&cfg)?;
            let mut w = open_out(&a.out)?;
            match format {
                Format::Csv => trials_csv(&mut w, &samples, a.eigenvalues)?,
                Format::Json => {
                    let rows: Vec<serde_json::Value> = (1..=a.moments)
                        .map(|p| {
                            let xs: Vec<f64> = samples.iter().map(|s| s.moments[p as usize - 1]).collect();
                            let (mean, se) = montecarlo::mean_and_se(&xs);
                            let target = if p % 2 == 0 { models::catalan(p / 2) } else { 0.0 };
                            json!({ "order": p, "mean": mean, "standard_error": se, "semicircle": target })
                        })
                        .collect();
                    let norms: Vec<f64> = samples.iter().map(|s| s.norm).collect();
                    write_json(&mut w, &json!({ "d": a.d, "m": a.m, "trials": a.trials, "seed": seed,
                        "p": a.m as f64 / total as f64, "moments": rows, "norms": norms }))?;
                }
            }
            w.flush()?;
            Ok(0)
        }
        Command::Wigner(WignerCmd::Baiyin(a)) => {
            let seed = seed_override(a.seed)?;
            let spec = SubWeibullSpec { theta: a.theta, scale: a.scale };
            if emit_config {
                return emit(json!({ "d": a.d, "theta": a.theta, "scale": a.scale, "delta": a.delta, "x": a.x,
                    "cprime": a.cprime, "trials": a.trials, "seed": seed }));
            }
            let eps = models::baiyin_epsilon(a.d, a.theta, a.delta, a.x, a.cprime)?;
            let tail = models::baiyin_tail(a.d, a.delta, a.x);
            let cfg = TrialConfig { threads, keep_values: Some(0), ..TrialConfig::new(Model::Wigner { d: a.d, spec }, a.trials, seed) };
            let samples = montecarlo::run_trials(&cfg)?;
            let mut w = open_out(&a.out)?;
            match format {
                Format::Csv => trials_csv(&mut w, &samples, 0)?,
                Format::Json => {
                    let norms: Vec<f64> = samples.iter().map(|s| s.norm).collect();
                    let within = norms.iter().filter(|&&n| n <= 2.0 + eps).count();
                    write_json(&mut w, &json!({ "d": a.d, "theta": a.theta, "scale": a.scale, "delta": a.delta,
                        "x": a.x, "cprime": a.cprime, "trials": a.trials, "seed": seed, "epsilon": eps,
                        "tail_bound": tail, "fraction_within": within as f64 / a.trials as f64, "norms": norms }))?;
                }
            }
            w.flush()?;
            Ok(0)
        }
        Command::Cumulant(CumulantCmd::Verify(a)) => {
            let seed = seed_override(a.seed)?;
            if emit_config {
                return emit(json!({ "kmax": a.kmax, "oracles": a.oracles, "seed": seed }));
            }
            let rep = verify_identities(a.kmax, a.oracles, seed)?;
            let mut out = io::stdout().lock();
            match format {
                Format::Csv => {
                    writeln!(out, "check,count,max_error")?;
                    writeln!(out, "run_expansion,{},{}", rep.run_expansion_checks, g12(rep.run_expansion_max_error))?;
                    writeln!(out, "telescoping,{},{}", rep.telescoping_checks, g12(rep.telescoping_max_error))?;
                }
                Format::Json => write_json(&mut out, &serde_json::to_value(&rep).map_err(|e| Error::Io(e.to_string()))?)?,
            }
            if rep.passed() {
                Ok(0)
            } else {
                eprintln!("error: {} identity checks failed", rep.failures);
                Ok(4)
            }
        }
        Command::Psi(PsiCmd::Chain(a)) => {
            let spec = load_spec(&a.config)?;
            if emit_config {
                return emit(json!({ "spec": spec_json(&spec) }));
            }
            let chain = FiniteChain::stationary(spec.p().clone(), spec.n())?;
            let psi = dependence::capital_psi(&chain)?;
            let tmix = dependence::mixing_time(spec.p(), 0.25)?;
            let bound = dependence::psipi_bound(spec.p())?;
            let mut out = io::stdout().lock();
            match format {
                Format::Csv => {
                    writeln!(out, "quantity,value")?;
                    writeln!(out, "psi,{psi}")?;
                    writeln!(out, "t_mix,{tmix}")?;
                    writeln!(out, "psipi_bound,{bound}")?;
                }
                Format::Json => write_json(&mut out, &json!({ "psi": psi, "t_mix": tmix, "psipi_bound": bound }))?,
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
