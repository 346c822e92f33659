//! Closed-form predictions and bounds.
//!
//! Hidden Ω/O constants are set to 1 and logarithms are natural. The width
//! calculators are order-of-magnitude guides, not guarantees. Step sizes and
//! radii use the explicit constants from the convergence proofs.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gram::AssumptionConstants;
use crate::spectral::{self, SymMatrix};

/// Which convergence theorem a rule belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TheoremVariant {
    /// Needs λ only; width `λ⁻⁴n⁴`.
    Quartic,
    /// Needs λ and α; width `λ⁻⁴n³α`.
    Cubic,
    /// Needs λ, α and θ; width `λ⁻⁴n²α(α+θ²)`.
    Quadratic,
    /// Quartic setting with an ℓ2 pull towards `W(0)`.
    Regularized,
}

impl TheoremVariant {
    pub const ALL: [TheoremVariant; 4] = [
        TheoremVariant::Quartic,
        TheoremVariant::Cubic,
        TheoremVariant::Quadratic,
        TheoremVariant::Regularized,
    ];

    /// Whether the rule reads α (and θ) in addition to λ.
    pub fn needs_alpha(self) -> bool {
        matches!(self, TheoremVariant::Cubic | TheoremVariant::Quadratic)
    }
}

impl fmt::Display for TheoremVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TheoremVariant::Quartic => "quartic",
            TheoremVariant::Cubic => "cubic",
            TheoremVariant::Quadratic => "quadratic",
            TheoremVariant::Regularized => "reg",
        })
    }
}

impl FromStr for TheoremVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quartic" => Ok(TheoremVariant::Quartic),
            "cubic" => Ok(TheoremVariant::Cubic),
            "quadratic" => Ok(TheoremVariant::Quadratic),
            "reg" | "regularized" => Ok(TheoremVariant::Regularized),
            _ => Err(Error::input(format!(
                "unknown theorem variant {s:?} (expected quartic, cubic, quadratic or reg)"
            ))),
        }
    }
}

fn require_lambda(c: &AssumptionConstants) -> Result<f64> {
    if c.lambda > 0.0 && c.lambda.is_finite() {
        Ok(c.lambda)
    } else {
        Err(Error::input(format!(
            "assumption part 1 requires lambda > 0, got {}",
            c.lambda
        )))
    }
}

fn require_alpha(c: &AssumptionConstants) -> Result<f64> {
    if c.alpha > 0.0 && c.alpha.is_finite() {
        Ok(c.alpha)
    } else {
        Err(Error::input(format!(
            "assumption part 2 requires alpha > 0, got {}",
            c.alpha
        )))
    }
}

fn require_theta(c: &AssumptionConstants) -> Result<f64> {
    if c.theta >= 0.0 && c.theta.is_finite() {
        Ok(c.theta)
    } else {
        Err(Error::input(format!(
            "assumption part 4 requires theta >= 0, got {}",
            c.theta
        )))
    }
}

fn require_n(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::input("n must be at least 1"));
    }
    Ok(n as f64)
}

/// Step size from the proofs: `λ/(4n²)`, `λ/(4αn)` or `λ/(16n²)`.
pub fn step_size(variant: TheoremVariant, c: &AssumptionConstants, n: usize) -> Result<f64> {
    let lambda = require_lambda(c)?;
    let n = require_n(n)?;
    Ok(match variant {
        TheoremVariant::Quartic => lambda / (4.0 * n * n),
        TheoremVariant::Cubic | TheoremVariant::Quadratic => {
            lambda / (4.0 * require_alpha(c)? * n)
        }
        TheoremVariant::Regularized => lambda / (16.0 * n * n),
    })
}

/// Largest weight movement the analysis tolerates.
pub fn radius(variant: TheoremVariant, c: &AssumptionConstants, n: usize) -> Result<f64> {
    let lambda = require_lambda(c)?;
    let n = require_n(n)?;
    Ok(match variant {
        TheoremVariant::Quadratic => {
            let alpha = require_alpha(c)?;
            let theta = require_theta(c)?;
            let factor = (1.0 / (1.0 + theta * theta).sqrt()).min(1.0 / alpha.sqrt());
            lambda / (64.0 * n.sqrt()) * factor
        }
        _ => lambda / (64.0 * n),
    })
}

/// Bound `D` on `max_r ‖w_r(k) − w_r(0)‖₂`: `c·√s·‖y − u(0)‖₂ / (√m λ)` with
/// `s = n` (or `α` for cubic/quadratic) and `c = 4` (8 when regularized).
pub fn movement_bound(
    variant: TheoremVariant,
    c: &AssumptionConstants,
    n: usize,
    loss0_norm: f64,
    m: usize,
) -> Result<f64> {
    let lambda = require_lambda(c)?;
    let n = require_n(n)?;
    if m == 0 {
        return Err(Error::input("width m must be at least 1"));
    }
    let (lead, spread) = match variant {
        TheoremVariant::Quartic => (4.0, n),
        TheoremVariant::Cubic | TheoremVariant::Quadratic => (4.0, require_alpha(c)?),
        TheoremVariant::Regularized => (8.0, n),
    };
    Ok(lead * spread.sqrt() * loss0_norm / ((m as f64).sqrt() * lambda))
}

/// `(1 − ηλ/2)^k · ‖u(0) − y‖²`.
pub fn rate_bound(loss0_sq: f64, eta: f64, lambda: f64, k: usize) -> Result<f64> {
    let q = eta * lambda / 2.0;
    if !(0.0..1.0).contains(&q) {
        return Err(Error::input(format!(
            "eta * lambda = {} must lie in [0, 2) for the rate bound",
            eta * lambda
        )));
    }
    Ok((1.0 - q).powi(k as i32) * loss0_sq)
}

/// Additive floor `8βD²/(mηλ)` of the regularized bound.
pub fn regularization_floor(reg_beta: f64, d: f64, m: usize, eta: f64, lambda: f64) -> f64 {
    8.0 * reg_beta * d * d / (m as f64 * eta * lambda)
}

/// `(1 − ηλ/2)^k ‖u(0) − y‖² + 8βD²/(mηλ)`.
pub fn regularized_rate_bound(
    loss0_sq: f64,
    eta: f64,
    lambda: f64,
    k: usize,
    reg_beta: f64,
    d: f64,
    m: usize,
) -> Result<f64> {
    Ok(rate_bound(loss0_sq, eta, lambda, k)? + regularization_floor(reg_beta, d, m, eta, lambda))
}

/// The two admissibility limits `m²λ/(128K²nη)` and `m/(4Kη)` for a run of
/// `horizon` = K steps.
pub fn reg_beta_limits(m: usize, lambda: f64, horizon: usize, n: usize, eta: f64) -> (f64, f64) {
    let (m, k, n) = (m as f64, horizon.max(1) as f64, n as f64);
    (
        m * m * lambda / (128.0 * k * k * n * eta),
        m / (4.0 * k * eta),
    )
}

/// Rejects `reg_beta` above either admissibility limit, naming the violated one.
pub fn check_reg_beta(
    reg_beta: f64,
    m: usize,
    lambda: f64,
    horizon: usize,
    n: usize,
    eta: f64,
) -> Result<()> {
    let (first, second) = reg_beta_limits(m, lambda, horizon, n, eta);
    if reg_beta > first {
        return Err(Error::validation(format!(
            "reg_beta = {reg_beta} violates beta <= m^2*lambda/(128*K^2*n*eta) = {first}"
        )));
    }
    if reg_beta > second {
        return Err(Error::validation(format!(
            "reg_beta = {reg_beta} violates beta <= m/(4*K*eta) = {second}"
        )));
    }
    Ok(())
}

/// Predicted `‖u(k) − y‖₂` at a list of steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionCurve {
    pub steps: Vec<usize>,
    pub values: Vec<f64>,
}

impl PredictionCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,predicted\n");
        for (k, v) in self.steps.iter().zip(&self.values) {
            let _ = writeln!(out, "{k},{v}");
        }
        out
    }
}

/// `(Σ_i (1 − ηλ_i)^{2k} (v_iᵀy)²)^{1/2}` from the eigensystem of `H^cts`.
pub fn eigen_prediction(h: &SymMatrix, y: &[f64], eta: f64, ks: &[usize]) -> Result<PredictionCurve> {
    if y.len() != h.order() {
        return Err(Error::input(format!(
            "{} labels for a Gram matrix of order {}",
            y.len(),
            h.order()
        )));
    }
    let eig = spectral::sym_eig(h)?;
    if let Some(top) = eig.values.last() {
        if eta * top > 1.0 {
            log::warn!("eta * lambda_max = {} exceeds 1; some factors have magnitude above 1", eta * top);
        }
    }
    let weights: Vec<(f64, f64)> = eig
        .values
        .iter()
        .zip(&eig.vectors)
        .map(|(lam, v)| {
            let p = spectral::dot(v, y);
            (1.0 - eta * lam, p * p)
        })
        .collect();
    let values = ks
        .iter()
        .map(|&k| {
            weights
                .iter()
                .map(|(f, c)| f.powi(2 * k as i32) * c)
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    Ok(PredictionCurve {
        steps: ks.to_vec(),
        values,
    })
}

/// Rules for [`required_width`]: the four theorems plus the pure
/// concentration requirement `(λ⁻²β + λ⁻¹α) log(n/δ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WidthRule {
    Quartic,
    Cubic,
    Quadratic,
    Regularized,
    Concentration,
}

impl From<TheoremVariant> for WidthRule {
    fn from(v: TheoremVariant) -> Self {
        match v {
            TheoremVariant::Quartic => WidthRule::Quartic,
            TheoremVariant::Cubic => WidthRule::Cubic,
            TheoremVariant::Quadratic => WidthRule::Quadratic,
            TheoremVariant::Regularized => WidthRule::Regularized,
        }
    }
}

/// Width suggested by a rule, leading constant 1, natural log.
pub fn required_width(rule: WidthRule, c: &AssumptionConstants, n: usize, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::input(format!("delta must lie in (0, 1), got {delta}")));
    }
    let lambda = require_lambda(c)?;
    let nf = require_n(n)?;
    let log = (nf / delta).ln();
    let l4 = lambda.powi(-4);
    Ok(match rule {
        WidthRule::Quartic => l4 * nf.powi(4) * log.powi(3),
        WidthRule::Cubic => l4 * nf.powi(3) * log.powi(3) * require_alpha(c)?,
        WidthRule::Quadratic => {
            let alpha = require_alpha(c)?;
            let theta = require_theta(c)?;
            l4 * nf * nf * log.powi(3) * alpha * (alpha + theta * theta)
        }
        WidthRule::Regularized => l4 * nf.powi(4) * log,
        WidthRule::Concentration => {
            let alpha = require_alpha(c)?;
            if !(c.beta_var >= 0.0 && c.beta_var.is_finite()) {
                return Err(Error::input(format!(
                    "assumption part 3 requires beta >= 0, got {}",
                    c.beta_var
                )));
            }
            (c.beta_var / (lambda * lambda) + alpha / lambda) * log
        }
    })
}

/// Leading term `√(2 yᵀ(H^cts)⁻¹y / n)` of the generalization bound.
pub fn generalization_bound(h: &SymMatrix, y: &[f64]) -> Result<f64> {
    let n = h.order();
    if n == 0 {
        return Err(Error::input("empty Gram matrix"));
    }
    let x = spectral::solve_spd(h, y)?;
    let quad = spectral::dot(y, &x).max(0.0);
    Ok((2.0 * quad / n as f64).sqrt())
}

/// Additive term `√(log(n/(λδ))/n)` reported next to the generalization bound.
pub fn generalization_additive_term(n: usize, lambda: f64, delta: f64) -> Result<f64> {
    let nf = require_n(n)?;
    if !(lambda > 0.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::input("need lambda > 0 and delta in (0, 1)"));
    }
    Ok(((nf / (lambda * delta)).ln().max(0.0) / nf).sqrt())
}

/// Initialization scale `ε / (√(2n log(2mn/δ)) · log(4n/δ))` that makes the
/// eigen-prediction accurate to ε, leading constant 1.
pub fn kappa_guidance(epsilon: f64, n: usize, m: usize, delta: f64) -> Result<f64> {
    let nf = require_n(n)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::input(format!("delta must lie in (0, 1), got {delta}")));
    }
    let mf = m as f64;
    Ok(epsilon / ((2.0 * nf * (2.0 * mf * nf / delta).ln()).sqrt() * (4.0 * nf / delta).ln()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn consts(lambda: f64, alpha: f64, beta: f64, theta: f64) -> AssumptionConstants {
        AssumptionConstants {
            alpha,
            beta_var: beta,
            theta,
            ..AssumptionConstants::from_lambda(lambda)
        }
    }

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    #[test]
    fn step_size_rules() {
        let c = consts(0.5, 0.5, 0.25, 0.0);
        assert!(close(step_size(TheoremVariant::Quartic, &c, 10).unwrap(), 1.25e-3, 1e-15));
        assert!(close(step_size(TheoremVariant::Cubic, &c, 10).unwrap(), 0.025, 1e-15));
        assert!(close(step_size(TheoremVariant::Regularized, &c, 10).unwrap(), 3.125e-4, 1e-15));
        assert!(close(step_size(TheoremVariant::Quartic, &c, 8).unwrap(), 0.5 / 256.0, 1e-15));
    }

    #[test]
    fn step_size_names_missing_part() {
        let c = AssumptionConstants::from_lambda(0.5);
        let err = step_size(TheoremVariant::Cubic, &c, 10).unwrap_err().to_string();
        assert!(err.contains("part 2"), "{err}");
        let c = AssumptionConstants::from_lambda(0.0);
        let err = step_size(TheoremVariant::Quartic, &c, 10).unwrap_err().to_string();
        assert!(err.contains("part 1"), "{err}");
    }

    #[test]
    fn radius_rules() {
        let c = consts(0.64, 1.0, 0.0, 0.0);
        assert!(close(radius(TheoremVariant::Quartic, &c, 10).unwrap(), 0.001, 1e-14));
        assert!(close(radius(TheoremVariant::Quadratic, &c, 4).unwrap(), 0.005, 1e-14));
        // min of equal factors reduces to λ/(64√n)
        let r = radius(TheoremVariant::Quadratic, &c, 9).unwrap();
        assert!(close(r, 0.64 / (64.0 * 3.0), 1e-14));
        let c = AssumptionConstants::from_lambda(0.64);
        assert!(radius(TheoremVariant::Quadratic, &c, 4).is_err());
    }

    #[test]
    fn movement_bound_examples() {
        let c = consts(0.5, 0.5, 0.0, 0.0);
        assert_eq!(movement_bound(TheoremVariant::Quartic, &c, 4, 0.0, 100).unwrap(), 0.0);
        let d = movement_bound(TheoremVariant::Quartic, &c, 4, 2.0, 1600).unwrap();
        assert!(close(d, 0.8, 1e-14));
        let d4 = movement_bound(TheoremVariant::Quartic, &c, 4, 2.0, 6400).unwrap();
        assert!(close(d4, 0.4, 1e-14));
        let dr = movement_bound(TheoremVariant::Regularized, &c, 4, 2.0, 1600).unwrap();
        assert!(close(dr, 1.6, 1e-14));
        let dc = movement_bound(TheoremVariant::Cubic, &c, 4, 2.0, 1600).unwrap();
        assert!(close(dc, 4.0 * 0.5f64.sqrt() * 2.0 / 20.0, 1e-14));
    }

    #[test]
    fn rate_bound_examples() {
        assert_eq!(rate_bound(4.0, 0.1, 0.5, 0).unwrap(), 4.0);
        assert!(close(rate_bound(4.0, 0.1, 0.5, 10).unwrap(), 4.0 * 0.975f64.powi(10), 1e-15));
        assert!(close(rate_bound(4.0, 0.1, 0.5, 10).unwrap(), 3.1054, 1e-4));
        assert_eq!(rate_bound(4.0, 0.1, 0.0, 50).unwrap(), 4.0);
        assert!(rate_bound(1.0, 4.0, 0.5, 1).is_err());
        assert!(rate_bound(1.0, 2.0, 1.0, 1).is_err());
    }

    #[test]
    fn reg_beta_admissibility() {
        let (a, b) = reg_beta_limits(2048, 0.5, 200, 8, 0.5 / 256.0);
        assert!(close(a, 2048.0 * 2048.0 * 0.5 / (128.0 * 40_000.0 * 8.0 * (0.5 / 256.0)), 1e-14));
        assert!(close(b, 2048.0 / (800.0 * (0.5 / 256.0)), 1e-14));
        assert!(check_reg_beta(a * 0.5, 2048, 0.5, 200, 8, 0.5 / 256.0).is_ok());
        let err = check_reg_beta(a * 2.0, 2048, 0.5, 200, 8, 0.5 / 256.0).unwrap_err();
        assert!(err.to_string().contains("128"), "{err}");
        // second limit binds when m is huge relative to K
        let (a, b) = reg_beta_limits(1_000_000, 1.0, 1, 1, 1.0);
        assert!(b < a);
        let err = check_reg_beta(b * 1.5, 1_000_000, 1.0, 1, 1, 1.0).unwrap_err();
        assert!(err.to_string().contains("4*K*eta"), "{err}");
    }

    #[test]
    fn eigen_prediction_examples() {
        let h = SymMatrix::scaled_identity(2, 0.5);
        let p = eigen_prediction(&h, &[1.0, 1.0], 0.1, &[0, 1]).unwrap();
        assert!(close(p.values[0], 2f64.sqrt(), 1e-15));
        assert!(close(p.values[1], 0.95 * 2f64.sqrt(), 1e-14));
        assert!(close(p.values[1], 1.34350, 1e-5));
        assert_eq!(p.to_csv().lines().next(), Some("k,predicted"));
        assert!(eigen_prediction(&h, &[1.0], 0.1, &[0]).is_err());
    }

    #[test]
    fn eigen_prediction_decays() {
        let h = SymMatrix::from_rows(&[vec![0.5, 0.1], vec![0.1, 0.4]]).unwrap();
        let ks: Vec<usize> = (0..500).collect();
        let p = eigen_prediction(&h, &[1.0, -2.0], 0.5, &ks).unwrap();
        for w in p.values.windows(2) {
            assert!(w[1] < w[0]);
        }
        assert!(*p.values.last().unwrap() < 1e-10);
    }

    #[test]
    fn required_width_examples() {
        let ln100 = 100f64.ln();
        let c = consts(0.5, 0.5, 0.25, 0.0);
        let q = required_width(WidthRule::Quartic, &c, 10, 0.1).unwrap();
        assert!(close(q, 16.0 * 1e4 * ln100.powi(3), 1e-13));
        assert!(close(q, 1.563e7, 1e-3));

        let c1 = consts(1.0, 1.0, 0.0, 0.0);
        let w = required_width(WidthRule::Quadratic, &c1, 10, 0.1).unwrap();
        assert!(close(w, 100.0 * ln100.powi(3), 1e-13));
        assert!((w - 9766.0).abs() < 1.0);

        let w = required_width(WidthRule::Concentration, &c, 10, 0.1).unwrap();
        assert!(close(w, 2.0 * ln100, 1e-13));
        assert!((w - 9.21).abs() < 0.01);

        let cubic = required_width(WidthRule::Cubic, &c, 10, 0.1).unwrap();
        assert!(close(q / cubic, 10.0 / 0.5, 1e-13));

        assert!(required_width(WidthRule::Quartic, &c, 10, 1.0).is_err());
    }

    #[test]
    fn generalization_examples() {
        let h = SymMatrix::scaled_identity(5, 0.5);
        assert!(close(generalization_bound(&h, &[1.0; 5]).unwrap(), 2.0, 1e-14));
        assert_eq!(generalization_bound(&h, &[0.0; 5]).unwrap(), 0.0);

        // y along the top eigenvector (1,1)/√2 of [[1,0.5],[0.5,1]], λ_max = 1.5
        let h = SymMatrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let v = std::f64::consts::FRAC_1_SQRT_2;
        let g = generalization_bound(&h, &[v, v]).unwrap();
        assert!(close(g, (2.0 / (2.0 * 1.5f64)).sqrt(), 1e-14));

        let singular = SymMatrix::from_diagonal(&[1.0, 0.0]).unwrap();
        assert!(matches!(
            generalization_bound(&singular, &[1.0, 1.0]),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn additive_term_and_kappa() {
        let t = generalization_additive_term(10, 0.5, 0.1).unwrap();
        assert!(close(t, (200f64.ln() / 10.0).sqrt(), 1e-15));
        let k = kappa_guidance(0.1, 4, 100, 0.1).unwrap();
        let expect = 0.1 / ((8.0 * 8000f64.ln()).sqrt() * 160f64.ln());
        assert!(close(k, expect, 1e-14));
    }

    #[test]
    fn variant_parsing() {
        for v in TheoremVariant::ALL {
            assert_eq!(v.to_string().parse::<TheoremVariant>().unwrap(), v);
        }
        assert!("quintic".parse::<TheoremVariant>().is_err());
        assert!(TheoremVariant::Cubic.needs_alpha());
    }
}
