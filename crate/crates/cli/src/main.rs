//! `overparam`: generate data, estimate constants, train, predict and run
//! the concentration harnesses and experiment presets from the shell.
//!
//! Exit codes: 0 success, 1 invalid input, 2 runtime failure or divergence,
//! 3 a verdict of `experiment` failed.

mod report;
mod svg;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use overparam::concentration;
use overparam::data;
use overparam::experiments::{self, EtaSpec, ExperimentConfig, Preset};
use overparam::gram;
use overparam::network::{self, TrainConfig};
use overparam::spectral;
use overparam::theory;
use overparam::{AssumptionConstants, Dataset, Error, Result, RngSeed};

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_VERDICT: u8 = 3;

#[derive(Parser)]
#[command(
    name = "overparam",
    version,
    about = "Gram matrices, gradient descent and concentration checks for over-parametrized two-layer ReLU networks",
    after_help = "Environment: OVERPARAM_THREADS caps the number of worker threads (default: all cores).\nExit codes: 0 ok, 1 invalid input, 2 runtime error or divergence, 3 experiment verdict failed."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum DataKind {
    /// Signed permutation of the standard basis (d = n)
    Orthogonal,
    /// i.i.d. Gaussian rows normalized to the unit sphere
    Gaussian,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConcMode {
    /// ||H^dis - H^cts|| against lambda/4
    Gram,
    /// ||H(w) - H(w~)||_F against 2nR
    Perturb,
    /// Pr[|N(0, sigma^2)| <= t] against (2t/3sigma, 4t/5sigma)
    Anti,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV (columns x0..x{d-1}, y; ±1 labels)
    GenData {
        /// Generator
        #[arg(long, value_enum)]
        kind: DataKind,
        /// Number of samples n (required)
        #[arg(long)]
        n: usize,
        /// Input dimension d (gaussian only; orthogonal uses d = n)
        #[arg(long)]
        d: Option<usize>,
        /// RNG seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV path
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate lambda, alpha, beta, gamma and theta; prints or writes JSON
    Constants {
        /// Dataset CSV
        #[arg(long)]
        data: PathBuf,
        /// Renormalize rows that are not unit norm instead of rejecting them
        #[arg(long)]
        normalize: bool,
        /// Number of Gaussian weight samples M (at least 1)
        #[arg(long, default_value_t = 200)]
        samples: usize,
        /// RNG seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output JSON path (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the network by full-batch gradient descent and write the trace CSV
    Train {
        /// Dataset CSV
        #[arg(long)]
        data: PathBuf,
        /// Renormalize rows that are not unit norm instead of rejecting them
        #[arg(long)]
        normalize: bool,
        /// Hidden width m (number of neurons)
        #[arg(long)]
        m: usize,
        /// Initialization scale: w_r(0) ~ N(0, kappa^2 I)
        #[arg(long, default_value_t = 1.0)]
        kappa: f64,
        /// Step size: a number or auto:{quartic|cubic|quadratic|reg}
        #[arg(long, default_value = "auto:quartic")]
        eta: String,
        /// Number of gradient steps
        #[arg(long, default_value_t = 100)]
        steps: usize,
        /// Regularization factor beta (0 disables the penalty)
        #[arg(long, default_value_t = 0.0)]
        reg_beta: f64,
        /// Record every this many steps (the last step is always recorded)
        #[arg(long, default_value_t = 1)]
        record_every: usize,
        /// Also record the one-step linearization residual (costs O(m n^2) per record)
        #[arg(long)]
        step_residual: bool,
        /// Weight samples for estimating alpha when the step-size rule needs it
        #[arg(long, default_value_t = 200)]
        samples: usize,
        /// RNG seed for initialization
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output trace CSV
        #[arg(long)]
        trace: PathBuf,
    },
    /// Predict ||u(k) - y||_2 from the eigensystem of H^cts and report the generalization bound
    Predict {
        /// Dataset CSV
        #[arg(long)]
        data: PathBuf,
        /// Renormalize rows that are not unit norm instead of rejecting them
        #[arg(long)]
        normalize: bool,
        /// Step size: a number or auto:{quartic|reg}
        #[arg(long)]
        eta: String,
        /// Largest step k (rows k = 0..=k_max)
        #[arg(long, default_value_t = 100)]
        k_max: usize,
        /// Confidence parameter delta for the additive generalization term
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        /// Output CSV (k,predicted)
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte-Carlo trials of the concentration lemmas; CSV per trial plus JSON summary on stdout
    Concentration {
        /// Which lemma to test
        #[arg(long, value_enum)]
        mode: ConcMode,
        /// Dataset CSV (gram and perturb modes)
        #[arg(long)]
        data: Option<PathBuf>,
        /// Renormalize rows that are not unit norm instead of rejecting them
        #[arg(long)]
        normalize: bool,
        /// Width m (gram and perturb modes)
        #[arg(long, default_value_t = 1024)]
        m: usize,
        /// Perturbation radius R in [0, 1) (perturb mode)
        #[arg(long, default_value_t = 0.05)]
        radius: f64,
        /// Standard deviation sigma (anti mode)
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// Half-width t with t/sigma <= 0.2 (anti mode)
        #[arg(long, default_value_t = 0.1)]
        t: f64,
        /// Gaussian draws per trial, at least 100000 (anti mode)
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        /// Number of independent trials
        #[arg(long, default_value_t = 10)]
        trials: usize,
        /// RNG seed; trial t uses stream t
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV (trial,statistic,violated)
        #[arg(long)]
        out: PathBuf,
        /// Also write the summary JSON here
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Run an experiment preset and write its artifacts to a run directory
    Experiment {
        /// Preset name: appendix-b, convergence, eigen-prediction or regularized
        #[arg(long, required_unless_present = "config")]
        preset: Option<String>,
        /// JSON configuration (overrides the preset defaults entirely)
        #[arg(long)]
        config: Option<PathBuf>,
        /// RNG seed
        #[arg(long)]
        seed: Option<u64>,
        /// Number of independent seeds for training presets
        #[arg(long)]
        trials: Option<usize>,
        /// Hidden width m
        #[arg(long)]
        m: Option<usize>,
        /// Number of gradient steps
        #[arg(long)]
        steps: Option<usize>,
        /// Step size: a number or auto:{quartic|cubic|quadratic|reg}
        #[arg(long)]
        eta: Option<String>,
        /// Regularization factor beta
        #[arg(long)]
        reg_beta: Option<f64>,
        /// Run directory (defaults to the config's output field)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render the CSVs of a run directory as SVG plots
    Report {
        /// Run directory written by `experiment`
        #[arg(long)]
        run_dir: PathBuf,
        /// Write SVG files next to the CSVs (otherwise only list the verdicts)
        #[arg(long)]
        svg: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_VALIDATION);
    }
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { EXIT_VALIDATION } else { EXIT_RUNTIME })
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("OVERPARAM_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|t| *t >= 1)
        .ok_or_else(|| Error::input(format!("OVERPARAM_THREADS must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::input(format!("cannot configure thread pool: {e}")))
}

fn dispatch(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::GenData { kind, n, d, seed, out } => gen_data(kind, n, d, seed, &out)?,
        Command::Constants {
            data,
            normalize,
            samples,
            seed,
            out,
        } => {
            let ds = data::load_csv(&data, normalize)?;
            let c = gram::estimate_constants(&ds, samples, RngSeed::new(seed))?;
            let json = serde_json::to_string_pretty(&c)? + "\n";
            match out {
                Some(path) => write_text(&path, &json)?,
                None => print!("{json}"),
            }
        }
        Command::Train {
            data,
            normalize,
            m,
            kappa,
            eta,
            steps,
            reg_beta,
            record_every,
            step_residual,
            samples,
            seed,
            trace,
        } => {
            let ds = data::load_csv(&data, normalize)?;
            let eta = resolve_eta(&eta, &ds, samples, seed)?;
            let mut net = network::init(m, ds.d(), kappa, RngSeed::new(seed))?;
            let cfg = TrainConfig {
                eta,
                steps,
                reg_beta,
                record_every,
                record_step_residual: step_residual,
            };
            let result = net.train(&ds, &cfg)?;
            write_text(&trace, &result.to_csv())?;
            println!("final loss_sq = {}", result.final_loss_sq());
        }
        Command::Predict {
            data,
            normalize,
            eta,
            k_max,
            delta,
            out,
        } => {
            let ds = data::load_csv(&data, normalize)?;
            let eta = resolve_eta(&eta, &ds, 1, 0)?;
            let h = gram::hcts(&ds);
            let ks: Vec<usize> = (0..=k_max).collect();
            let curve = theory::eigen_prediction(&h.mat, ds.labels(), eta, &ks)?;
            write_text(&out, &curve.to_csv())?;
            let lambda = spectral::min_eigenvalue(&h.mat)?;
            let bound = theory::generalization_bound(&h.mat, ds.labels())?;
            let additive = theory::generalization_additive_term(ds.n(), lambda, delta).ok();
            let summary = serde_json::json!({
                "generalization_bound": bound,
                "additive_term": additive,
                "lambda": lambda,
                "delta": delta,
            });
            println!("{summary}");
        }
        Command::Concentration {
            mode,
            data,
            normalize,
            m,
            radius,
            sigma,
            t,
            samples,
            trials,
            seed,
            out,
            summary,
        } => {
            let seed = RngSeed::new(seed);
            let load = || -> Result<Dataset> {
                let path = data
                    .as_deref()
                    .ok_or_else(|| Error::input("--data is required in gram and perturb modes"))?;
                data::load_csv(path, normalize)
            };
            let (report, extra) = match mode {
                ConcMode::Gram => {
                    let rep = concentration::gram_concentration_trial(&load()?, m, trials, seed)?;
                    let min_eig = rep.min_eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
                    let extra = serde_json::json!({
                        "lambda": rep.lambda,
                        "spectral_violations": rep.spectral.violation_count,
                        "min_eigenvalue_dis": min_eig,
                    });
                    (rep.frobenius, extra)
                }
                ConcMode::Perturb => {
                    let rep = concentration::perturbation_trial(&load()?, m, radius, trials, seed)?;
                    (rep, serde_json::json!({ "radius": radius }))
                }
                ConcMode::Anti => {
                    let (rep, runs) = concentration::anti_concentration_trials(sigma, t, samples, trials, seed)?;
                    let extra = serde_json::json!({
                        "empirical_mean": rep.mean(),
                        "lower": runs[0].lower,
                        "upper": runs[0].upper,
                        "standard_error": runs[0].standard_error,
                        "inside_with_3se": runs.iter().filter(|r| r.inside_with_margin(3.0)).count(),
                    });
                    (rep, extra)
                }
            };
            write_text(&out, &report.to_csv())?;
            let mut json = serde_json::json!({
                "trials": report.trials,
                "violations": report.violation_count,
                "threshold": report.threshold,
                "mean": report.mean(),
                "max": report.max(),
                "predicted_failure_prob": report.predicted_failure_prob,
            });
            if let (Some(obj), serde_json::Value::Object(more)) = (json.as_object_mut(), extra) {
                obj.extend(more);
            }
            let text = json.to_string();
            println!("{text}");
            if let Some(path) = summary {
                write_text(&path, &(text + "\n"))?;
            }
        }
        Command::Experiment {
            preset,
            config,
            seed,
            trials,
            m,
            steps,
            eta,
            reg_beta,
            out,
        } => return experiment(preset, config, seed, trials, m, steps, eta, reg_beta, out),
        Command::Report { run_dir, svg } => {
            let verdicts = run_dir.join("verdicts.csv");
            if verdicts.exists() {
                let text = fs::read_to_string(&verdicts).map_err(|e| Error::io(&verdicts, e))?;
                print!("{text}");
            }
            if svg {
                for path in report::render_run_dir(&run_dir)? {
                    println!("wrote {}", path.display());
                }
            } else if !run_dir.is_dir() {
                return Err(Error::validation(format!("run directory {} does not exist", run_dir.display())));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn gen_data(kind: DataKind, n: usize, d: Option<usize>, seed: u64, out: &Path) -> Result<()> {
    let seed = RngSeed::new(seed);
    let ds = match kind {
        DataKind::Orthogonal => {
            if let Some(d) = d.filter(|d| *d != n) {
                return Err(Error::input(format!("orthogonal data has d = n = {n}, got --d {d}")));
            }
            data::gen_orthogonal(n, seed)?
        }
        DataKind::Gaussian => {
            let d = d.ok_or_else(|| Error::input("--d is required for gaussian data"))?;
            data::gen_gaussian_sphere(n, d, seed)?
        }
    };
    data::save_csv(&ds, out)
}

/// Resolves `--eta`; automatic rules print the chosen value and its inputs.
fn resolve_eta(raw: &str, ds: &Dataset, samples: usize, seed: u64) -> Result<f64> {
    let spec: EtaSpec = raw.parse()?;
    let EtaSpec::Auto(variant) = spec else {
        let (eta, _) = spec.resolve(&AssumptionConstants::from_lambda(f64::NAN), ds.n())?;
        return Ok(eta);
    };
    let consts = if variant.needs_alpha() {
        gram::estimate_constants(ds, samples, RngSeed::new(seed).derive(3))?
    } else {
        AssumptionConstants::from_lambda(spectral::min_eigenvalue(&gram::hcts(ds).mat)?)
    };
    let (eta, used) = spec.resolve(&consts, ds.n())?;
    println!("eta = {eta} ({spec} from {})", used.join(", "));
    Ok(eta)
}

#[allow(clippy::too_many_arguments)]
fn experiment(
    preset: Option<String>,
    config: Option<PathBuf>,
    seed: Option<u64>,
    trials: Option<usize>,
    m: Option<usize>,
    steps: Option<usize>,
    eta: Option<String>,
    reg_beta: Option<f64>,
    out: Option<PathBuf>,
) -> Result<ExitCode> {
    let mut cfg = match (&config, &preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str::<ExperimentConfig>(&text)?
        }
        (None, Some(name)) => ExperimentConfig::preset(name.parse::<Preset>()?, seed.unwrap_or(42)),
        (None, None) => return Err(Error::input("either --preset or --config is required")),
    };
    if let (Some(_), Some(name)) = (&config, &preset) {
        let name: Preset = name.parse()?;
        if name != cfg.name {
            return Err(Error::input(format!("--preset {name} disagrees with config name {}", cfg.name)));
        }
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(t) = trials {
        cfg.trials = t;
    }
    if let Some(m) = m {
        cfg.m = m;
    }
    if let Some(s) = steps {
        cfg.steps = s;
    }
    if let Some(e) = eta {
        cfg.eta = e.parse()?;
    }
    if let Some(b) = reg_beta {
        cfg.reg_beta = b;
    }
    if let Some(o) = out {
        cfg.output = Some(o);
    }
    let dir = cfg
        .output
        .clone()
        .ok_or_else(|| Error::input("an output directory is required (--out or config output)"))?;

    let report = experiments::run(&cfg)?;
    for run in &report.runs {
        if !run.eta_inputs.is_empty() {
            println!(
                "eta = {} ({} from {}){}",
                run.eta,
                cfg.eta,
                run.eta_inputs.join(", "),
                if run.label.is_empty() { String::new() } else { format!(" [{}]", run.label.trim_start_matches('_')) }
            );
        }
    }
    experiments::write_run(&dir, &cfg, &report)?;
    let mut stdout = std::io::stdout().lock();
    for v in &report.verdicts {
        let _ = writeln!(
            stdout,
            "{} {}: measured {} threshold {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.check,
            v.measured,
            v.threshold
        );
    }
    Ok(if report.all_pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VERDICT)
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
