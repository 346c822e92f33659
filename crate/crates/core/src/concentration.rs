//! Monte-Carlo harnesses for the probability lemmas behind the convergence
//! analysis.
//!
//! Trial `t` draws everything from `RngSeed { seed, stream: t }`. Trials run
//! in parallel and are merged in trial order.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{gaussian_vec, Dataset, RngSeed};
use crate::error::{Error, Result};
use crate::gram::{self, GramMatrix};
use crate::spectral::{self, norm2};
use crate::weights::Weights;

/// Smallest sample count accepted by [`anti_concentration_trial`].
pub const MIN_ANTI_SAMPLES: usize = 100_000;
/// Largest `t/σ` for which the anti-concentration interval is checked.
pub const MAX_ANTI_RATIO: f64 = 0.2;

/// One statistic per trial, compared against a threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trials: usize,
    pub values: Vec<f64>,
    pub threshold: f64,
    pub violated: Vec<bool>,
    pub violation_count: usize,
    pub predicted_failure_prob: f64,
}

impl TrialReport {
    /// Violation means `value > threshold`.
    pub fn above_threshold(values: Vec<f64>, threshold: f64, predicted_failure_prob: f64) -> Self {
        let violated = values.iter().map(|v| *v > threshold).collect();
        Self::with_flags(values, violated, threshold, predicted_failure_prob)
    }

    fn with_flags(
        values: Vec<f64>,
        violated: Vec<bool>,
        threshold: f64,
        predicted_failure_prob: f64,
    ) -> Self {
        TrialReport {
            trials: values.len(),
            violation_count: violated.iter().filter(|v| **v).count(),
            values,
            threshold,
            violated,
            predicted_failure_prob,
        }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len().max(1) as f64
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn empirical_failure_rate(&self) -> f64 {
        self.violation_count as f64 / self.trials.max(1) as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("trial,statistic,violated\n");
        for (t, (v, bad)) in self.values.iter().zip(&self.violated).enumerate() {
            let _ = writeln!(out, "{t},{v},{}", u8::from(*bad));
        }
        out
    }
}

/// Per-trial statistics of `H^dis − H^cts` at width `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramConcentrationReport {
    pub lambda: f64,
    pub m: usize,
    /// `‖H^dis − H^cts‖_F` against `λ/4`.
    pub frobenius: TrialReport,
    /// `‖H^dis − H^cts‖₂` against `λ/4`.
    pub spectral: TrialReport,
    /// `λ_min(H^dis)` per trial.
    pub min_eigenvalues: Vec<f64>,
    /// `max_ij |H^dis − H^cts|` per trial.
    pub max_entry: Vec<f64>,
}

fn check_trials(trials: usize) -> Result<()> {
    if trials == 0 {
        return Err(Error::input("need at least one trial"));
    }
    Ok(())
}

/// Hoeffding with a union bound over entries: each entry of `H^dis` is an
/// average of `m` independent terms of range 1, and entrywise deviations of
/// at most `λ/(4n)` imply `‖H^dis − H^cts‖_F ≤ λ/4`.
pub fn gram_failure_bound(n: usize, m: usize, lambda: f64) -> f64 {
    let nf = n as f64;
    let t = lambda / (4.0 * nf);
    (2.0 * nf * nf * (-(m as f64) * t * t / 2.0).exp()).min(1.0)
}

pub fn gram_concentration_trial(
    ds: &Dataset,
    m: usize,
    trials: usize,
    seed: RngSeed,
) -> Result<GramConcentrationReport> {
    check_trials(trials)?;
    if m == 0 {
        return Err(Error::input("width m must be at least 1"));
    }
    let cts = gram::hcts(ds);
    let lambda = spectral::min_eigenvalue(&cts.mat)?;
    let per_trial: Vec<Result<[f64; 4]>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed.with_stream(t as u64).rng();
            let w = Weights::gaussian(m, ds.d(), 1.0, &mut rng);
            let dis = gram::hdis(ds, &w)?;
            let diff = dis.mat.sub(&cts.mat)?;
            Ok([
                diff.frobenius_norm(),
                spectral::spectral_norm(&diff)?,
                spectral::min_eigenvalue(&dis.mat)?,
                diff.max_abs(),
            ])
        })
        .collect();
    let rows = per_trial.into_iter().collect::<Result<Vec<_>>>()?;
    let column = |c: usize| rows.iter().map(|r| r[c]).collect::<Vec<f64>>();
    let threshold = lambda / 4.0;
    let pfail = gram_failure_bound(ds.n(), m, lambda);
    Ok(GramConcentrationReport {
        lambda,
        m,
        frobenius: TrialReport::above_threshold(column(0), threshold, pfail),
        spectral: TrialReport::above_threshold(column(1), threshold, pfail),
        min_eigenvalues: column(2),
        max_entry: column(3),
    })
}

/// Moves `w` by exactly `radius` in a direction uniform on the sphere.
fn push_to_sphere(w: &mut [f64], radius: f64, rng: &mut impl Rng) {
    let mut dir = gaussian_vec(rng, w.len(), 1.0);
    let mut norm = norm2(&dir);
    while norm == 0.0 {
        dir = gaussian_vec(rng, w.len(), 1.0);
        norm = norm2(&dir);
    }
    for (wi, di) in w.iter_mut().zip(&dir) {
        *wi += radius * di / norm;
    }
}

/// `‖H(w) − H(w̃)‖_F` when every row of `w` sits at distance exactly `radius`
/// from the Gaussian `w̃`. Threshold `2nR`, predicted failure `n² e^{−mR/10}`.
pub fn perturbation_trial(
    ds: &Dataset,
    m: usize,
    radius: f64,
    trials: usize,
    seed: RngSeed,
) -> Result<TrialReport> {
    check_trials(trials)?;
    if m == 0 {
        return Err(Error::input("width m must be at least 1"));
    }
    if !(0.0..1.0).contains(&radius) {
        return Err(Error::input(format!("radius must lie in [0, 1), got {radius}")));
    }
    let d = ds.d();
    let values: Vec<Result<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed.with_stream(t as u64).rng();
            let base = Weights::gaussian(m, d, 1.0, &mut rng);
            let mut moved = base.as_slice().to_vec();
            for row in moved.chunks_mut(d) {
                push_to_sphere(row, radius, &mut rng);
            }
            let moved = Weights::new(m, d, moved)?;
            let h_base = gram::hdis(ds, &base)?;
            let h_moved = gram::hdis(ds, &moved)?;
            Ok(h_moved.mat.sub(&h_base.mat)?.frobenius_norm())
        })
        .collect();
    let values = values.into_iter().collect::<Result<Vec<_>>>()?;
    let n = ds.n() as f64;
    let pfail = (n * n * (-(m as f64) * radius / 10.0).exp()).min(1.0);
    Ok(TrialReport::above_threshold(values, 2.0 * n * radius, pfail))
}

/// Monte-Carlo estimate of `Pr[|X| ≤ t]` for `X ~ N(0, σ²)` next to the
/// interval `(2t/(3σ), 4t/(5σ))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntiConcentration {
    pub sigma: f64,
    pub t: f64,
    pub samples: usize,
    pub empirical: f64,
    pub standard_error: f64,
    pub lower: f64,
    pub upper: f64,
}

impl AntiConcentration {
    /// Empirical value strictly inside the interval.
    pub fn inside(&self) -> bool {
        self.empirical > self.lower && self.empirical < self.upper
    }

    /// `empirical ± k·SE` strictly inside the interval.
    pub fn inside_with_margin(&self, k: f64) -> bool {
        let margin = k * self.standard_error;
        self.empirical - margin > self.lower && self.empirical + margin < self.upper
    }
}

pub fn anti_concentration_trial(sigma: f64, t: f64, samples: usize, seed: RngSeed) -> Result<AntiConcentration> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::input(format!("sigma must be positive, got {sigma}")));
    }
    if !(t >= 0.0) {
        return Err(Error::input(format!("t must be non-negative, got {t}")));
    }
    if t / sigma > MAX_ANTI_RATIO {
        return Err(Error::input(format!(
            "t/sigma = {} is outside the small-deviation regime t/sigma <= {MAX_ANTI_RATIO}",
            t / sigma
        )));
    }
    if samples < MIN_ANTI_SAMPLES {
        return Err(Error::input(format!(
            "need at least {MIN_ANTI_SAMPLES} samples, got {samples}"
        )));
    }
    let mut rng = seed.rng();
    let hits = (0..samples)
        .filter(|_| (sigma * rng.sample::<f64, _>(StandardNormal)).abs() <= t)
        .count();
    let p = hits as f64 / samples as f64;
    Ok(AntiConcentration {
        sigma,
        t,
        samples,
        empirical: p,
        standard_error: (p * (1.0 - p) / samples as f64).sqrt(),
        lower: 2.0 * t / (3.0 * sigma),
        upper: 4.0 * t / (5.0 * sigma),
    })
}

/// Repeats [`anti_concentration_trial`]; a trial is violated when its
/// estimate falls outside the open interval.
pub fn anti_concentration_trials(
    sigma: f64,
    t: f64,
    samples: usize,
    trials: usize,
    seed: RngSeed,
) -> Result<(TrialReport, Vec<AntiConcentration>)> {
    check_trials(trials)?;
    let runs = (0..trials)
        .into_par_iter()
        .map(|k| anti_concentration_trial(sigma, t, samples, seed.with_stream(k as u64)))
        .collect::<Result<Vec<_>>>()?;
    let values = runs.iter().map(|r| r.empirical).collect();
    let violated = runs.iter().map(|r| !r.inside()).collect();
    let report = TrialReport::with_flags(values, violated, runs[0].upper, f64::NAN);
    Ok((report, runs))
}

/// `min(1, (n₁ + n₂) exp(−(t²/2) / (Var + Mt/3)))`.
pub fn matrix_bernstein_tail(n1: usize, n2: usize, var: f64, max_norm: f64, t: f64) -> Result<f64> {
    if !(var >= 0.0) || !(max_norm > 0.0) || !(t >= 0.0) {
        return Err(Error::input("need var >= 0, M > 0 and t >= 0"));
    }
    let dims = (n1 + n2) as f64;
    let exponent = -(t * t / 2.0) / (var + max_norm * t / 3.0);
    Ok((dims * exponent.exp()).min(1.0))
}

/// Convenience for callers that already hold `H^cts`.
pub fn deviation_from(cts: &GramMatrix, dis: &GramMatrix) -> Result<f64> {
    Ok(dis.mat.sub(&cts.mat)?.frobenius_norm())
}
