//! Reproducible experiment presets.
//!
//! Every preset takes an [`ExperimentConfig`], returns an [`ExperimentReport`]
//! carrying pass/fail verdicts, and can be written to a run directory with
//! [`write_run`]:
//!
//! ```text
//! config.json      echo of the configuration
//! constants.json   estimated constants (when the preset uses them)
//! trace*.csv       training traces
//! prediction*.csv  eigen-decomposition loss predictions
//! bound*.csv       rate bound curves
//! fig1.csv         spectrum sweep (n, lambda, theta)
//! fig2_*.csv       single-weight deviation samples and histogram
//! verdicts.csv     check,pass,measured,threshold
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{self, Dataset, LabelMode, RngSeed};
use crate::error::{Error, Result};
use crate::gram::{self, AssumptionConstants};
use crate::network::{self, TrainConfig, TrainingTrace};
use crate::spectral;
use crate::theory::{self, PredictionCurve, TheoremVariant, WidthRule};

/// Seed tags separating the random draws of one run.
const TAG_DATA: u64 = 1;
const TAG_LABELS: u64 = 2;
const TAG_CONSTANTS: u64 = 3;
const TAG_INIT: u64 = 4;

/// Loss must strictly decrease from this step on in the convergence preset.
pub const MONOTONE_FROM: usize = 5;
/// Slack on the probabilistic rate bound.
pub const RATE_SLACK: f64 = 2.0;
/// Step at which top-eigenvector and random labels are compared.
pub const LABEL_COMPARE_STEP: usize = 100;
/// Tolerance of the eigen prediction as a fraction of `‖y‖₂`.
pub const PREDICTION_TOLERANCE: f64 = 0.1;
/// Envelope on `max ‖H(w) − E H‖₂` over the deviation samples.
pub const FIG2_ENVELOPE: f64 = 10.0;
/// Envelope on `θ/√n` over the spectrum sweep.
pub const FIG1_THETA_FRACTION: f64 = 0.5;
pub const HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    AppendixB,
    Convergence,
    EigenPrediction,
    Regularized,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::AppendixB,
        Preset::Convergence,
        Preset::EigenPrediction,
        Preset::Regularized,
    ];
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::AppendixB => "appendix-b",
            Preset::Convergence => "convergence",
            Preset::EigenPrediction => "eigen-prediction",
            Preset::Regularized => "regularized",
        })
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.to_string() == s)
            .ok_or_else(|| {
                Error::input(format!(
                    "unknown preset '{s}', expected appendix-b, convergence, eigen-prediction or regularized"
                ))
            })
    }
}

/// Where the inputs come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetSpec {
    Orthogonal { n: usize },
    Gaussian { n: usize, d: usize },
    Csv {
        path: PathBuf,
        #[serde(default)]
        normalize: bool,
    },
}

impl DatasetSpec {
    /// Generates or loads the inputs; generated datasets carry ±1 labels.
    pub fn build(&self, seed: RngSeed) -> Result<Dataset> {
        match self {
            DatasetSpec::Orthogonal { n } => data::gen_orthogonal(*n, seed),
            DatasetSpec::Gaussian { n, d } => data::gen_gaussian_sphere(*n, *d, seed),
            DatasetSpec::Csv { path, normalize } => data::load_csv(path, *normalize),
        }
    }
}

/// A fixed step size or one of the theorem rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EtaRepr", into = "EtaRepr")]
pub enum EtaSpec {
    Value(f64),
    Auto(TheoremVariant),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum EtaRepr {
    Number(f64),
    Text(String),
}

impl TryFrom<EtaRepr> for EtaSpec {
    type Error = Error;

    fn try_from(r: EtaRepr) -> Result<Self> {
        match r {
            EtaRepr::Number(v) => Ok(EtaSpec::Value(v)),
            EtaRepr::Text(s) => s.parse(),
        }
    }
}

impl From<EtaSpec> for EtaRepr {
    fn from(e: EtaSpec) -> Self {
        match e {
            EtaSpec::Value(v) => EtaRepr::Number(v),
            EtaSpec::Auto(v) => EtaRepr::Text(format!("auto:{v}")),
        }
    }
}

impl FromStr for EtaSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(rule) = s.strip_prefix("auto:") {
            return Ok(EtaSpec::Auto(rule.parse()?));
        }
        s.parse::<f64>().map(EtaSpec::Value).map_err(|_| {
            Error::input(format!(
                "step size '{s}' is neither a number nor auto:{{quartic|cubic|quadratic|reg}}"
            ))
        })
    }
}

impl fmt::Display for EtaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EtaSpec::Value(v) => write!(f, "{v}"),
            EtaSpec::Auto(v) => write!(f, "auto:{v}"),
        }
    }
}

impl EtaSpec {
    /// Resolves the step size and describes the constants it read, as
    /// `name = value` strings (empty for a fixed value).
    pub fn resolve(&self, c: &AssumptionConstants, n: usize) -> Result<(f64, Vec<String>)> {
        match *self {
            EtaSpec::Value(v) => Ok((v, Vec::new())),
            EtaSpec::Auto(variant) => {
                let eta = theory::step_size(variant, c, n)?;
                let mut used = vec![format!("lambda = {}", c.lambda)];
                if variant.needs_alpha() {
                    used.push(format!("alpha = {}", c.alpha));
                }
                used.push(format!("n = {n}"));
                Ok((eta, used))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: Preset,
    pub dataset: DatasetSpec,
    #[serde(default = "default_labels")]
    pub labels: LabelMode,
    #[serde(default)]
    pub m: usize,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_eta")]
    pub eta: EtaSpec,
    #[serde(default)]
    pub steps: usize,
    #[serde(default)]
    pub reg_beta: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Independent seeds `seed, seed+1, ...` for the training presets.
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub seed: u64,
    /// Weight samples for constant estimation and the deviation histogram.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Sample counts of the spectrum sweep.
    #[serde(default)]
    pub n_list: Vec<usize>,
    /// Input dimension of the spectrum sweep.
    #[serde(default)]
    pub fig1_d: usize,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_labels() -> LabelMode {
    LabelMode::Random
}
fn default_kappa() -> f64 {
    1.0
}
fn default_eta() -> EtaSpec {
    EtaSpec::Auto(TheoremVariant::Quartic)
}
fn default_delta() -> f64 {
    0.1
}
fn default_trials() -> usize {
    1
}
fn default_samples() -> usize {
    200
}

impl ExperimentConfig {
    /// Default configuration of a preset.
    pub fn preset(name: Preset, seed: u64) -> Self {
        let base = ExperimentConfig {
            name,
            dataset: DatasetSpec::Orthogonal { n: 8 },
            labels: LabelMode::Random,
            m: 2048,
            kappa: 1.0,
            eta: default_eta(),
            steps: 200,
            reg_beta: 0.0,
            delta: default_delta(),
            trials: 1,
            seed,
            samples: default_samples(),
            n_list: Vec::new(),
            fig1_d: 0,
            output: None,
        };
        match name {
            Preset::Convergence => base,
            Preset::Regularized => ExperimentConfig {
                reg_beta: 1.0,
                ..base
            },
            Preset::EigenPrediction => ExperimentConfig {
                dataset: DatasetSpec::Gaussian { n: 16, d: 32 },
                m: 8192,
                kappa: 0.01,
                eta: EtaSpec::Value(0.1),
                ..base
            },
            Preset::AppendixB => ExperimentConfig {
                dataset: DatasetSpec::Gaussian { n: 100, d: 20 },
                m: 0,
                steps: 0,
                samples: 1000,
                n_list: (1..=20).map(|i| 50 * i).collect(),
                fig1_d: 500,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::input("trials must be at least 1"));
        }
        if self.samples == 0 {
            return Err(Error::input("samples must be at least 1"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::input(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        match self.name {
            Preset::AppendixB => {
                if self.n_list.is_empty() || self.fig1_d == 0 {
                    return Err(Error::input("appendix-b needs a non-empty n_list and fig1_d >= 1"));
                }
            }
            _ => {
                if self.m == 0 {
                    return Err(Error::input("width m must be at least 1"));
                }
                if let EtaSpec::Value(v) = self.eta {
                    if !(v >= 0.0 && v.is_finite()) {
                        return Err(Error::input(format!("step size must be finite and >= 0, got {v}")));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub check: String,
    pub pass: bool,
    pub measured: f64,
    pub threshold: f64,
}

impl Verdict {
    fn new(check: impl Into<String>, pass: bool, measured: f64, threshold: f64) -> Self {
        Verdict {
            check: check.into(),
            pass,
            measured,
            threshold,
        }
    }
}

/// One training run with its overlays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArtifacts {
    /// File-name suffix, empty for a single run.
    pub label: String,
    pub seed: u64,
    pub eta: f64,
    /// Constants that fed an automatic step size.
    pub eta_inputs: Vec<String>,
    pub label_norm: f64,
    pub trace: TrainingTrace,
    /// Predicted `‖u(k) − y‖₂`.
    pub prediction: PredictionCurve,
    /// Bound on `‖u(k) − y‖₂²` at the recorded steps, slack included.
    pub bound: PredictionCurve,
    pub diagnostics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Figure1Row {
    pub n: usize,
    pub lambda: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: Preset,
    pub constants: Option<AssumptionConstants>,
    pub runs: Vec<RunArtifacts>,
    pub figure1: Vec<Figure1Row>,
    /// `‖H(w) − H^cts‖₂` per weight sample.
    pub figure2: Vec<f64>,
    pub verdicts: Vec<Verdict>,
}

impl ExperimentReport {
    fn empty(name: Preset) -> Self {
        ExperimentReport {
            name,
            constants: None,
            runs: Vec::new(),
            figure1: Vec::new(),
            figure2: Vec::new(),
            verdicts: Vec::new(),
        }
    }

    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn verdicts_csv(&self) -> String {
        let mut out = String::from("check,pass,measured,threshold\n");
        for v in &self.verdicts {
            let _ = writeln!(out, "{},{},{},{}", v.check, v.pass, v.measured, v.threshold);
        }
        out
    }
}

/// Runs the preset named in `cfg`.
pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    match cfg.name {
        Preset::AppendixB => run_appendix_b(cfg),
        Preset::Convergence => run_convergence(cfg),
        Preset::EigenPrediction => run_eigen_prediction(cfg),
        Preset::Regularized => run_regularized(cfg),
    }
}

struct Prepared {
    ds: Dataset,
    consts: AssumptionConstants,
    eta: f64,
    eta_inputs: Vec<String>,
}

fn prepare(cfg: &ExperimentConfig, seed: RngSeed) -> Result<Prepared> {
    let ds = cfg.dataset.build(seed.derive(TAG_DATA))?;
    let ds = gram::apply_labels(ds, cfg.labels, seed.derive(TAG_LABELS))?;
    let consts = gram::estimate_constants(&ds, cfg.samples, seed.derive(TAG_CONSTANTS))?;
    let (eta, used) = cfg.eta.resolve(&consts, ds.n())?;
    Ok(Prepared {
        ds,
        consts,
        eta,
        eta_inputs: used,
    })
}

fn train_once(cfg: &ExperimentConfig, ds: &Dataset, eta: f64, reg_beta: f64, seed: RngSeed) -> Result<TrainingTrace> {
    let mut net = network::init(cfg.m, ds.d(), cfg.kappa, seed.derive(TAG_INIT))?;
    net.train(
        ds,
        &TrainConfig {
            eta,
            steps: cfg.steps,
            reg_beta,
            record_every: 1,
            record_step_residual: false,
        },
    )
}

fn seeds(cfg: &ExperimentConfig) -> Vec<(String, u64)> {
    (0..cfg.trials as u64)
        .map(|t| {
            let s = cfg.seed.wrapping_add(t);
            let label = if cfg.trials == 1 { String::new() } else { format!("_seed{s}") };
            (label, s)
        })
        .collect()
}

fn recorded_steps(trace: &TrainingTrace) -> Vec<usize> {
    trace.records.iter().map(|r| r.k).collect()
}

fn bound_curve(trace: &TrainingTrace, f: impl Fn(usize) -> Result<f64>) -> Result<PredictionCurve> {
    let steps = recorded_steps(trace);
    let values = steps.iter().map(|&k| f(k)).collect::<Result<Vec<_>>>()?;
    Ok(PredictionCurve { steps, values })
}

/// Largest `loss/bound` ratio over the trace.
fn worst_ratio(trace: &TrainingTrace, bound: &PredictionCurve) -> f64 {
    trace
        .records
        .iter()
        .zip(&bound.values)
        .map(|(r, b)| r.loss_sq / b)
        .fold(0.0, f64::max)
}

/// Number of steps `k ≥ from` at which the loss does not strictly decrease.
fn non_decreasing_steps(trace: &TrainingTrace, from: usize) -> usize {
    trace
        .records
        .windows(2)
        .filter(|w| w[0].k >= from && w[1].loss_sq >= w[0].loss_sq)
        .count()
}

fn common_diagnostics(
    variant: TheoremVariant,
    p: &Prepared,
    trace: &TrainingTrace,
    m: usize,
    delta: f64,
) -> BTreeMap<String, f64> {
    let n = p.ds.n();
    let loss0 = trace.initial_loss_sq().sqrt();
    let mut diag = BTreeMap::new();
    let max_move = trace.records.iter().map(|r| r.max_move).fold(0.0, f64::max);
    diag.insert("max_move".into(), max_move);
    diag.insert("final_flips".into(), trace.records.last().map_or(0.0, |r| r.flips as f64));
    if let Ok(r) = theory::radius(variant, &p.consts, n) {
        diag.insert("radius".into(), r);
    }
    if let Ok(d) = theory::movement_bound(variant, &p.consts, n, loss0, m) {
        diag.insert("movement_bound".into(), d);
    }
    if let Ok(w) = theory::required_width(WidthRule::from(variant), &p.consts, n, delta) {
        diag.insert("required_width".into(), w);
    }
    diag
}

fn convergence_run(cfg: &ExperimentConfig, label: String, seed: u64, reg_beta: f64) -> Result<RunArtifacts> {
    let rs = RngSeed::new(seed);
    let p = prepare(cfg, rs)?;
    let lambda = p.consts.lambda;
    let variant = if reg_beta > 0.0 { TheoremVariant::Regularized } else { TheoremVariant::Quartic };
    if reg_beta > 0.0 {
        theory::check_reg_beta(reg_beta, cfg.m, lambda, cfg.steps, p.ds.n(), p.eta)?;
    }
    let trace = train_once(cfg, &p.ds, p.eta, reg_beta, rs)?;
    let loss0 = trace.initial_loss_sq();
    let bound = if reg_beta > 0.0 {
        let d = theory::movement_bound(TheoremVariant::Regularized, &p.consts, p.ds.n(), loss0.sqrt(), cfg.m)?;
        bound_curve(&trace, |k| {
            theory::regularized_rate_bound(loss0, p.eta, lambda, k, reg_beta, d, cfg.m)
        })?
    } else {
        bound_curve(&trace, |k| Ok(RATE_SLACK * theory::rate_bound(loss0, p.eta, lambda, k)?))?
    };
    let ks = recorded_steps(&trace);
    let h = gram::hcts(&p.ds);
    let prediction = theory::eigen_prediction(&h.mat, p.ds.labels(), p.eta, &ks)?;
    let mut diagnostics = common_diagnostics(variant, &p, &trace, cfg.m, cfg.delta);
    if reg_beta > 0.0 {
        let (a, b) = theory::reg_beta_limits(cfg.m, lambda, cfg.steps, p.ds.n(), p.eta);
        diagnostics.insert("reg_beta_limit_width".into(), a);
        diagnostics.insert("reg_beta_limit_step".into(), b);
    }
    Ok(RunArtifacts {
        label,
        seed,
        eta: p.eta,
        eta_inputs: p.eta_inputs,
        label_norm: spectral::norm2(p.ds.labels()),
        trace,
        prediction,
        bound,
        diagnostics,
    })
}

fn fan_out(cfg: &ExperimentConfig, reg_beta: f64) -> Result<Vec<RunArtifacts>> {
    seeds(cfg)
        .into_par_iter()
        .map(|(label, s)| convergence_run(cfg, label, s, reg_beta))
        .collect()
}

fn first_constants(cfg: &ExperimentConfig) -> Result<AssumptionConstants> {
    Ok(prepare(cfg, RngSeed::new(cfg.seed))?.consts)
}

/// Trains and compares the loss with `2·(1 − ηλ/2)^k ‖u(0) − y‖²`.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    if cfg.reg_beta != 0.0 {
        log::warn!("convergence preset ignores reg_beta = {}", cfg.reg_beta);
    }
    let runs = fan_out(cfg, 0.0)?;
    let mut report = ExperimentReport::empty(Preset::Convergence);
    report.constants = Some(first_constants(cfg)?);
    let worst = runs.iter().map(|r| worst_ratio(&r.trace, &r.bound)).fold(0.0, f64::max);
    report.verdicts.push(Verdict::new("loss_within_rate_bound", worst <= 1.0, worst * RATE_SLACK, RATE_SLACK));
    let bad = runs
        .iter()
        .map(|r| non_decreasing_steps(&r.trace, MONOTONE_FROM))
        .sum::<usize>();
    report.verdicts.push(Verdict::new("loss_monotone_after_step_5", bad == 0, bad as f64, 0.0));
    report.runs = runs;
    Ok(report)
}

/// Checks `β` against both admissibility limits, then trains with the
/// regularized loss and compares with `(1 − ηλ/2)^k ‖u(0) − y‖² + 8βD²/(mηλ)`.
pub fn run_regularized(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    if !(cfg.reg_beta >= 0.0) {
        return Err(Error::input("reg_beta must be non-negative"));
    }
    let runs = fan_out(cfg, cfg.reg_beta)?;
    let mut report = ExperimentReport::empty(Preset::Regularized);
    report.constants = Some(first_constants(cfg)?);
    let worst = runs.iter().map(|r| worst_ratio(&r.trace, &r.bound)).fold(0.0, f64::max);
    let (check, slack) = if cfg.reg_beta > 0.0 {
        ("loss_within_regularized_bound", 1.0)
    } else {
        ("loss_within_rate_bound", RATE_SLACK)
    };
    report.verdicts.push(Verdict::new(check, worst <= 1.0, worst * slack, slack));
    report.runs = runs;
    Ok(report)
}

/// Trains on top-eigenvector labels and on random labels from the same
/// initialization and compares both loss curves with the eigen prediction.
pub fn run_eigen_prediction(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let rs = RngSeed::new(cfg.seed);
    let base = cfg.dataset.build(rs.derive(TAG_DATA))?;
    let consts = gram::estimate_constants(&base, cfg.samples, rs.derive(TAG_CONSTANTS))?;
    let (eta, used) = cfg.eta.resolve(&consts, base.n())?;
    let h = gram::hcts(&base);
    let ks: Vec<usize> = (0..=cfg.steps).collect();
    let modes = [("_top", LabelMode::Eigvec(0)), ("_random", LabelMode::Random)];
    let runs = modes
        .par_iter()
        .map(|(label, mode)| {
            let ds = gram::apply_labels(base.clone(), *mode, rs.derive(TAG_LABELS))?;
            let trace = train_once(cfg, &ds, eta, 0.0, rs)?;
            let prediction = theory::eigen_prediction(&h.mat, ds.labels(), eta, &ks)?;
            let label_norm = spectral::norm2(ds.labels());
            let gap = trace
                .records
                .iter()
                .zip(&prediction.values)
                .map(|(r, p)| (r.loss_sq.sqrt() - p).abs())
                .fold(0.0, f64::max);
            let mut diagnostics = BTreeMap::new();
            diagnostics.insert("max_prediction_gap".into(), gap);
            diagnostics.insert("final_flips".into(), trace.records.last().map_or(0.0, |r| r.flips as f64));
            Ok(RunArtifacts {
                label: (*label).into(),
                seed: cfg.seed,
                eta,
                eta_inputs: used.clone(),
                label_norm,
                bound: PredictionCurve {
                    steps: Vec::new(),
                    values: Vec::new(),
                },
                trace,
                prediction,
                diagnostics,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut report = ExperimentReport::empty(Preset::EigenPrediction);
    report.constants = Some(consts);
    for r in &runs {
        let gap = r.diagnostics["max_prediction_gap"];
        let tol = PREDICTION_TOLERANCE * r.label_norm;
        report.verdicts.push(Verdict::new(
            format!("prediction_gap{}", r.label),
            gap <= tol,
            gap,
            tol,
        ));
    }
    let k = LABEL_COMPARE_STEP.min(cfg.steps);
    let loss_at = |r: &RunArtifacts| r.trace.records.iter().find(|x| x.k == k).map_or(f64::NAN, |x| x.loss_sq);
    let ratio = loss_at(&runs[0]) / loss_at(&runs[1]);
    report.verdicts.push(Verdict::new(format!("top_vs_random_loss_ratio_k{k}"), ratio < 1.0, ratio, 1.0));
    report.runs = runs;
    Ok(report)
}

/// Spectrum sweep: λ and θ of Gaussian-sphere data over `n_list` at
/// dimension `fig1_d`. Deviation histogram: `‖H(w) − H^cts‖₂` over `samples` weight draws on the
/// configured dataset.
pub fn run_appendix_b(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let rs = RngSeed::new(cfg.seed);
    let figure1 = cfg
        .n_list
        .par_iter()
        .enumerate()
        .map(|(idx, &n)| {
            let ds = data::gen_gaussian_sphere(n, cfg.fig1_d, rs.derive(TAG_DATA).with_stream(idx as u64))?;
            let lambda = spectral::min_eigenvalue(&gram::hcts(&ds).mat)?;
            let theta = if n >= 2 { data::theta(&ds)? } else { 0.0 };
            Ok(Figure1Row { n, lambda, theta })
        })
        .collect::<Result<Vec<_>>>()?;

    let ds = cfg.dataset.build(rs.derive(TAG_DATA))?;
    let cts = gram::hcts(&ds);
    let figure2 = gram::sample_deviations(&ds, &cts, cfg.samples, rs.derive(TAG_CONSTANTS))?.norms;

    let mut report = ExperimentReport::empty(Preset::AppendixB);
    let min_lambda = figure1.iter().map(|r| r.lambda).fold(f64::INFINITY, f64::min);
    report.verdicts.push(Verdict::new("fig1_lambda_positive", min_lambda > 0.0, min_lambda, 0.0));
    let theta_frac = figure1
        .iter()
        .map(|r| r.theta / (r.n as f64).sqrt())
        .fold(0.0, f64::max);
    report.verdicts.push(Verdict::new(
        "fig1_theta_below_half_sqrt_n",
        theta_frac < FIG1_THETA_FRACTION,
        theta_frac,
        FIG1_THETA_FRACTION,
    ));
    let max_dev = figure2.iter().copied().fold(0.0, f64::max);
    report.verdicts.push(Verdict::new("fig2_max_deviation", max_dev < FIG2_ENVELOPE, max_dev, FIG2_ENVELOPE));
    report.figure1 = figure1;
    report.figure2 = figure2;
    Ok(report)
}

/// Equal-width histogram over `[0, max]`.
pub fn histogram(values: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    let top = values.iter().copied().fold(0.0, f64::max);
    let width = if top > 0.0 { top / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for v in values {
        let b = ((v / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(b, c)| (b as f64 * width, (b + 1) as f64 * width, c))
        .collect()
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))
}

fn loss_vs_bound_csv(run: &RunArtifacts) -> String {
    let mut out = String::from("k,loss_sq,bound\n");
    for (r, b) in run.trace.records.iter().zip(&run.bound.values) {
        let _ = writeln!(out, "{},{},{}", r.k, r.loss_sq, b);
    }
    out
}

/// Writes every artifact of `report` under `dir`.
pub fn write_run(dir: &Path, cfg: &ExperimentConfig, report: &ExperimentReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(dir, "config.json", &(serde_json::to_string_pretty(cfg)? + "\n"))?;
    if let Some(c) = &report.constants {
        write_file(dir, "constants.json", &(serde_json::to_string_pretty(c)? + "\n"))?;
    }
    for run in &report.runs {
        write_file(dir, &format!("trace{}.csv", run.label), &run.trace.to_csv())?;
        write_file(dir, &format!("prediction{}.csv", run.label), &run.prediction.to_csv())?;
        if !run.bound.values.is_empty() {
            write_file(dir, &format!("bound{}.csv", run.label), &loss_vs_bound_csv(run))?;
        }
        let summary = serde_json::json!({
            "seed": run.seed,
            "eta": run.eta,
            "eta_inputs": run.eta_inputs,
            "label_norm": run.label_norm,
            "initial_loss_sq": run.trace.initial_loss_sq(),
            "final_loss_sq": run.trace.final_loss_sq(),
            "diagnostics": run.diagnostics,
        });
        write_file(dir, &format!("summary{}.json", run.label), &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    }
    if !report.figure1.is_empty() {
        let mut out = String::from("n,lambda,theta\n");
        for r in &report.figure1 {
            let _ = writeln!(out, "{},{},{}", r.n, r.lambda, r.theta);
        }
        write_file(dir, "fig1.csv", &out)?;
    }
    if !report.figure2.is_empty() {
        let mut out = String::from("sample,deviation\n");
        for (s, v) in report.figure2.iter().enumerate() {
            let _ = writeln!(out, "{s},{v}");
        }
        write_file(dir, "fig2_samples.csv", &out)?;
        let mut out = String::from("lo,hi,count\n");
        for (lo, hi, c) in histogram(&report.figure2, HISTOGRAM_BINS) {
            let _ = writeln!(out, "{lo},{hi},{c}");
        }
        write_file(dir, "fig2_hist.csv", &out)?;
    }
    write_file(dir, "verdicts.csv", &report.verdicts_csv())
}
