//! Gram matrices of the first-layer tangent kernel and the data-dependent
//! constants λ, α, β, γ, θ.
//!
//! All sampled Gram matrices are computed from integer co-activation counts
//! `C_ij = #{r : w_rᵀx_i ≥ 0, w_rᵀx_j ≥ 0}` and then scaled by `x_iᵀx_j / m`.
//! Integer sums are associative, so the result does not depend on how the
//! rows are split across threads.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::data::{self, sign_vec, Dataset, LabelMode, RngSeed};
use crate::error::{Error, Result};
use crate::parallel::ordered_fold;
use crate::spectral::{self, SymMatrix};
use crate::weights::Weights;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GramKind {
    /// Expectation over `w ~ N(0, I)`.
    Cts,
    /// `H(w)` for a single weight vector.
    SingleW,
    /// Average of `H(w_r)` over a finite set of weights.
    Dis,
    /// `H^dis` evaluated at the weights of training step k.
    AtStep,
    /// Contribution of the at-risk neurons `S̄_i`.
    Perp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub kind: GramKind,
    pub mat: SymMatrix,
    /// Frobenius norm before symmetrization; only set for [`GramKind::Perp`],
    /// whose raw form is not symmetric.
    pub raw_frobenius: Option<f64>,
}

impl GramMatrix {
    fn new(kind: GramKind, mat: SymMatrix) -> Self {
        GramMatrix {
            kind,
            mat,
            raw_frobenius: None,
        }
    }

    pub fn order(&self) -> usize {
        self.mat.order()
    }
}

/// `x_iᵀx_j (π − arccos(x_iᵀx_j)) / (2π)` with the cosine clamped to [−1, 1].
pub fn relu_kernel(inner: f64) -> f64 {
    let c = inner.clamp(-1.0, 1.0);
    inner * (PI - c.acos()) / (2.0 * PI)
}

fn input_gram(ds: &Dataset) -> Vec<f64> {
    let n = ds.n();
    let mut g = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = ds.inner(i, j);
            g[i * n + j] = v;
            g[j * n + i] = v;
        }
    }
    g
}

/// Closed-form expected Gram matrix `H^cts`.
pub fn hcts(ds: &Dataset) -> GramMatrix {
    let n = ds.n();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        // angle between x_i and itself is exactly zero
        data[i * n + i] = 0.5 * ds.inner(i, i);
        for j in i + 1..n {
            let v = relu_kernel(ds.inner(i, j));
            data[i * n + j] = v;
            data[j * n + i] = v;
        }
    }
    let mat = SymMatrix::from_row_major(n, data).expect("finite unit-norm data");
    GramMatrix::new(GramKind::Cts, mat)
}

#[inline]
fn active(pre: f64) -> bool {
    pre >= 0.0
}

fn scaled_counts(gram: &[f64], counts: &[u64], n: usize, m: usize) -> SymMatrix {
    let inv = 1.0 / m as f64;
    let data = gram
        .iter()
        .zip(counts)
        .map(|(g, &c)| g * (c as f64 * inv))
        .collect();
    SymMatrix::from_row_major(n, data).expect("finite counts")
}

/// `H(w)_ij = x_iᵀx_j · 1[wᵀx_i ≥ 0, wᵀx_j ≥ 0]`.
pub fn h_of_w(ds: &Dataset, w: &[f64]) -> Result<GramMatrix> {
    let weights = Weights::new(1, w.len(), w.to_vec())?;
    let mut g = hdis(ds, &weights)?;
    g.kind = GramKind::SingleW;
    Ok(g)
}

fn coactivation_counts(pre: &[f64], m: usize, n: usize) -> Vec<u64> {
    ordered_fold(
        m,
        || vec![0u64; n * n],
        |counts, r| {
            let row = &pre[r * n..(r + 1) * n];
            for i in 0..n {
                if !active(row[i]) {
                    continue;
                }
                counts[i * n + i] += 1;
                for j in i + 1..n {
                    if active(row[j]) {
                        counts[i * n + j] += 1;
                        counts[j * n + i] += 1;
                    }
                }
            }
        },
        |acc, part| acc.iter_mut().zip(part).for_each(|(a, b)| *a += b),
    )
}

/// `H^dis = (1/m) Σ_r H(w_r)`.
pub fn hdis(ds: &Dataset, w: &Weights) -> Result<GramMatrix> {
    if w.m() == 0 {
        return Err(Error::input("need at least one weight vector"));
    }
    let n = ds.n();
    let pre = w.preactivations(ds)?;
    let counts = coactivation_counts(&pre, w.m(), n);
    Ok(GramMatrix::new(
        GramKind::Dis,
        scaled_counts(&input_gram(ds), &counts, n, w.m()),
    ))
}

/// `H^dis` at the current training weights.
pub fn h_at_step(ds: &Dataset, w: &Weights) -> Result<GramMatrix> {
    let mut g = hdis(ds, w)?;
    g.kind = GramKind::AtStep;
    Ok(g)
}

/// Contribution of the neurons that may flip on each sample:
/// `H⊥_ij = (1/m) Σ_{r ∈ S̄_i} x_iᵀx_j 1[w_r(k)ᵀx_i ≥ 0, w_r(k)ᵀx_j ≥ 0]` with
/// `S̄_i = {r : |w_r(0)ᵀx_i| < R}`.
///
/// The raw matrix is row-indexed by `S̄_i` and therefore not symmetric; the
/// returned matrix is its symmetrization and `raw_frobenius` keeps the norm of
/// the raw form.
pub fn h_perp(ds: &Dataset, wk: &Weights, w0: &Weights, radius: f64) -> Result<GramMatrix> {
    wk.check_shape(w0)?;
    if wk.m() == 0 {
        return Err(Error::input("need at least one weight vector"));
    }
    if !(radius >= 0.0) {
        return Err(Error::input(format!("radius must be non-negative, got {radius}")));
    }
    let (m, n) = (wk.m(), ds.n());
    let pre_k = wk.preactivations(ds)?;
    let pre_0 = w0.preactivations(ds)?;
    let counts = ordered_fold(
        m,
        || vec![0u64; n * n],
        |counts, r| {
            let now = &pre_k[r * n..(r + 1) * n];
            let init = &pre_0[r * n..(r + 1) * n];
            for i in 0..n {
                if init[i].abs() >= radius || !active(now[i]) {
                    continue;
                }
                for j in 0..n {
                    if active(now[j]) {
                        counts[i * n + j] += 1;
                    }
                }
            }
        },
        |acc, part| acc.iter_mut().zip(part).for_each(|(a, b)| *a += b),
    );
    let gram = input_gram(ds);
    let inv = 1.0 / m as f64;
    let raw: Vec<f64> = gram
        .iter()
        .zip(&counts)
        .map(|(g, &c)| g * (c as f64 * inv))
        .collect();
    let raw_frobenius = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(GramMatrix {
        kind: GramKind::Perp,
        mat: SymMatrix::from_row_major(n, raw)?,
        raw_frobenius: Some(raw_frobenius),
    })
}

/// Estimates of the data-dependent constants.
///
/// `alpha` is the sample maximum of `‖H(w) − H^cts‖₂` (so `gamma` is 0);
/// the 0.99 and 0.95 quantiles are diagnostics only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionConstants {
    pub lambda: f64,
    pub alpha: f64,
    pub beta_var: f64,
    pub gamma: f64,
    pub theta: f64,
    pub sample_count: usize,
    #[serde(default)]
    pub alpha_q99: f64,
    #[serde(default)]
    pub alpha_q95: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl AssumptionConstants {
    /// Constants that only carry λ (and θ when known), for rules that need
    /// nothing else.
    pub fn from_lambda(lambda: f64) -> Self {
        AssumptionConstants {
            lambda,
            alpha: f64::NAN,
            beta_var: f64::NAN,
            gamma: 0.0,
            theta: f64::NAN,
            sample_count: 0,
            alpha_q99: f64::NAN,
            alpha_q95: f64::NAN,
            warnings: Vec::new(),
        }
    }
}

/// Per-sample deviations `H(w) − H^cts` over i.i.d. Gaussian `w`.
#[derive(Debug, Clone)]
pub struct DeviationSamples {
    /// `‖H(w_s) − H^cts‖₂` per sample, in draw order.
    pub norms: Vec<f64>,
    /// `(1/M) Σ_s (H(w_s) − H^cts)²`.
    pub mean_square: SymMatrix,
}

impl DeviationSamples {
    /// `‖(H(w_s) − H^cts)(H(w_s) − H^cts)ᵀ‖₂ = ‖H(w_s) − H^cts‖₂²` per sample.
    pub fn product_norms(&self) -> Vec<f64> {
        self.norms.iter().map(|v| v * v).collect()
    }
}

pub fn sample_deviations(
    ds: &Dataset,
    cts: &GramMatrix,
    samples: usize,
    seed: RngSeed,
) -> Result<DeviationSamples> {
    if samples == 0 {
        return Err(Error::input("sample count must be at least 1"));
    }
    let n = ds.n();
    let mut rng = seed.rng();
    let draws = Weights::gaussian(samples, ds.d(), 1.0, &mut rng);
    let (norms, sum) = ordered_fold(
        samples,
        || (Vec::new(), SymMatrix::zeros(n)),
        |(norms, sum): &mut (Vec<Result<f64>>, SymMatrix), s| {
            let res = h_of_w(ds, draws.row(s)).and_then(|h| {
                let dev = h.mat.sub(&cts.mat)?;
                sum.add_assign(&dev.square());
                spectral::spectral_norm(&dev)
            });
            norms.push(res);
        },
        |acc, (norms, sum)| {
            acc.0.extend(norms);
            acc.1.add_assign(&sum);
        },
    );
    let norms = norms.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(DeviationSamples {
        norms,
        mean_square: sum.divided(samples as f64),
    })
}

/// Nearest-rank quantile of an unsorted sample.
pub(crate) fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

pub fn estimate_constants(ds: &Dataset, samples: usize, seed: RngSeed) -> Result<AssumptionConstants> {
    if samples == 0 {
        return Err(Error::input("sample count must be at least 1"));
    }
    let cts = hcts(ds);
    let lambda = spectral::min_eigenvalue(&cts.mat)?;
    let theta = if ds.n() >= 2 { data::theta(ds)? } else { 0.0 };
    let dev = sample_deviations(ds, &cts, samples, seed)?;
    let alpha = dev.norms.iter().fold(0.0_f64, |m, v| m.max(*v));
    let beta_var = spectral::spectral_norm(&dev.mean_square)?;

    let mut warnings = Vec::new();
    if lambda <= 0.0 {
        let msg = format!("lambda_min(H^cts) = {lambda:e} is not positive; data are degenerate");
        log::warn!("{msg}");
        warnings.push(msg);
    }
    Ok(AssumptionConstants {
        lambda,
        alpha,
        beta_var,
        gamma: 0.0,
        theta,
        sample_count: samples,
        alpha_q99: quantile(&dev.norms, 0.99),
        alpha_q95: quantile(&dev.norms, 0.95),
        warnings,
    })
}

/// Replaces the labels of `ds` according to `mode`.
pub fn apply_labels(ds: Dataset, mode: LabelMode, seed: RngSeed) -> Result<Dataset> {
    let n = ds.n();
    let y = match mode {
        LabelMode::Random => sign_vec(&mut seed.rng(), n),
        LabelMode::Ones => vec![1.0; n],
        LabelMode::Eigvec(j) => eigvec_labels(&ds, j)?,
    };
    ds.with_labels(y)
}

/// `√n · v` for the eigenvector `v` of H^cts with the `rank`-th largest
/// eigenvalue, signed so that its largest-magnitude entry is positive.
pub fn eigvec_labels(ds: &Dataset, rank: usize) -> Result<Vec<f64>> {
    let n = ds.n();
    if rank >= n {
        return Err(Error::input(format!(
            "eigenvector index {rank} out of range for n = {n}"
        )));
    }
    let eig = spectral::sym_eig(&hcts(ds).mat)?;
    let v = &eig.vectors[n - 1 - rank];
    let pivot = v
        .iter()
        .copied()
        .fold(0.0_f64, |best, x| if x.abs() > best.abs() { x } else { best });
    let s = (n as f64).sqrt() * pivot.signum();
    Ok(v.iter().map(|x| s * x).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_gaussian_sphere, gen_orthogonal};

    fn e1e2() -> Dataset {
        Dataset::new(2, vec![1.0, 0.0, 0.0, 1.0], vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn kernel_closed_form_values() {
        assert_eq!(relu_kernel(1.0), 0.5);
        assert_eq!(relu_kernel(0.0), 0.0);
        assert!((relu_kernel(0.5) - 1.0 / 6.0).abs() < 1e-15);
        // clamping keeps round-off above 1 finite
        assert!(relu_kernel(1.0 + 1e-15).is_finite());
    }

    #[test]
    fn hcts_diagonal_and_orthogonal() {
        let ds = gen_gaussian_sphere(6, 4, RngSeed::new(4)).unwrap();
        let h = hcts(&ds);
        assert_eq!(h.kind, GramKind::Cts);
        for v in h.mat.diagonal() {
            assert!((v - 0.5).abs() < 1e-15);
        }
        let ortho = gen_orthogonal(5, RngSeed::new(1)).unwrap();
        let h = hcts(&ortho);
        assert_eq!(h.mat, SymMatrix::scaled_identity(5, 0.5));
    }

    #[test]
    fn h_of_w_examples() {
        let ds = e1e2();
        let h = h_of_w(&ds, &[1.0, 1.0]).unwrap();
        assert_eq!(h.kind, GramKind::SingleW);
        assert_eq!(h.mat.as_slice(), &[1.0, 0.0, 0.0, 1.0]);
        let h = h_of_w(&ds, &[1.0, -1.0]).unwrap();
        assert_eq!(h.mat.as_slice(), &[1.0, 0.0, 0.0, 0.0]);
        let h = h_of_w(&ds, &[-1.0, -2.0]).unwrap();
        assert_eq!(h.mat, SymMatrix::zeros(2));
        // boundary counts as active
        let h = h_of_w(&ds, &[0.0, -1.0]).unwrap();
        assert_eq!(h.mat.get(0, 0), 1.0);
        assert!(h_of_w(&ds, &[1.0]).is_err());
    }

    #[test]
    fn hdis_examples() {
        let ds = e1e2();
        let w = Weights::from_rows(&[vec![1.0, 1.0], vec![1.0, -1.0]]).unwrap();
        let h = hdis(&ds, &w).unwrap();
        assert_eq!(h.mat.as_slice(), &[1.0, 0.0, 0.0, 0.5]);

        let single = Weights::from_rows(&[vec![0.3, -0.2]]).unwrap();
        assert_eq!(
            hdis(&ds, &single).unwrap().mat,
            h_of_w(&ds, &[0.3, -0.2]).unwrap().mat
        );
        assert!(hdis(&ds, &Weights::zeros(0, 2)).is_err());
    }

    #[test]
    fn hdis_is_average_of_h_of_w() {
        let ds = gen_gaussian_sphere(5, 3, RngSeed::new(11)).unwrap();
        let w = Weights::gaussian(300, 3, 1.0, &mut RngSeed::new(12).rng());
        let fast = hdis(&ds, &w).unwrap();
        let mut slow = SymMatrix::zeros(5);
        for r in 0..w.m() {
            slow.add_assign(&h_of_w(&ds, w.row(r)).unwrap().mat);
        }
        let slow = slow.scale(1.0 / 300.0);
        assert!(fast.mat.sub(&slow).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn hdis_concentrates_on_orthogonal_data() {
        let ds = gen_orthogonal(8, RngSeed::new(3)).unwrap();
        let w = Weights::gaussian(100_000, 8, 1.0, &mut RngSeed::new(5).rng());
        let h = hdis(&ds, &w).unwrap();
        let dev = h.mat.sub(&SymMatrix::scaled_identity(8, 0.5)).unwrap();
        assert!(dev.max_abs() <= 0.01, "max deviation {}", dev.max_abs());
    }

    #[test]
    fn orthogonal_samples_are_diagonal_zero_one() {
        let ds = gen_orthogonal(6, RngSeed::new(8)).unwrap();
        let mut rng = RngSeed::new(9).rng();
        for _ in 0..50 {
            let w = data::gaussian_vec(&mut rng, 6, 1.0);
            let h = h_of_w(&ds, &w).unwrap();
            for i in 0..6 {
                for j in 0..6 {
                    let v = h.mat.get(i, j);
                    if i == j {
                        assert!(v == 0.0 || v == 1.0);
                    } else {
                        assert_eq!(v, 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn h_perp_limits() {
        let ds = gen_gaussian_sphere(4, 3, RngSeed::new(1)).unwrap();
        let w0 = Weights::gaussian(20, 3, 1.0, &mut RngSeed::new(2).rng());
        let z = h_perp(&ds, &w0, &w0, 0.0).unwrap();
        assert_eq!(z.kind, GramKind::Perp);
        assert_eq!(z.mat, SymMatrix::zeros(4));
        assert_eq!(z.raw_frobenius, Some(0.0));

        let pre = w0.preactivations(&ds).unwrap();
        let big = pre.iter().fold(0.0_f64, |m, v| m.max(v.abs())) + 1e-9;
        let wk = w0.scaled(1.1);
        let full = h_perp(&ds, &wk, &w0, big).unwrap();
        let at_k = h_at_step(&ds, &wk).unwrap();
        assert_eq!(full.mat, at_k.mat);
        assert!((full.raw_frobenius.unwrap() - at_k.mat.frobenius_norm()).abs() < 1e-12);

        let other = Weights::zeros(3, 3);
        assert!(h_perp(&ds, &wk, &other, 1.0).is_err());
    }

    #[test]
    fn h_perp_hand_case() {
        // x1 = e1, x2 = (0.6, 0.8); neuron 1 sits near x1's boundary at init
        let ds = Dataset::new(2, vec![1.0, 0.0, 0.6, 0.8], vec![1.0, 1.0]).unwrap();
        let w0 = Weights::from_rows(&[vec![0.05, 1.0], vec![1.0, 1.0]]).unwrap();
        let wk = w0.clone();
        // |w0ᵀx| : neuron 1 -> (0.05, 0.83), neuron 2 -> (1.0, 1.4)
        let h = h_perp(&ds, &wk, &w0, 0.1).unwrap();
        // only row i = 1 gets neuron 1, which is active on both samples
        let g12 = 0.6;
        let raw = [0.5, 0.5 * g12, 0.0, 0.0];
        let expect_frob = raw.iter().map(|v: &f64| v * v).sum::<f64>().sqrt();
        assert!((h.raw_frobenius.unwrap() - expect_frob).abs() < 1e-15);
        assert!((h.mat.get(0, 0) - 0.5).abs() < 1e-15);
        assert!((h.mat.get(0, 1) - 0.15).abs() < 1e-15);
        assert!((h.mat.get(1, 0) - 0.15).abs() < 1e-15);
        assert_eq!(h.mat.get(1, 1), 0.0);
    }

    #[test]
    fn orthogonal_constants_are_exact() {
        let ds = gen_orthogonal(7, RngSeed::new(21)).unwrap();
        for samples in [1, 2, 50] {
            let c = estimate_constants(&ds, samples, RngSeed::new(samples as u64)).unwrap();
            assert_eq!(c.lambda, 0.5);
            assert_eq!(c.theta, 0.0);
            assert_eq!(c.alpha, 0.5);
            assert_eq!(c.beta_var, 0.25);
            assert_eq!(c.gamma, 0.0);
            assert_eq!(c.sample_count, samples);
            assert!(c.warnings.is_empty());
        }
        assert!(estimate_constants(&ds, 0, RngSeed::new(1)).is_err());
    }

    #[test]
    fn constants_respect_ranges() {
        let ds = gen_gaussian_sphere(12, 6, RngSeed::new(2)).unwrap();
        let c = estimate_constants(&ds, 200, RngSeed::new(3)).unwrap();
        let n = 12.0;
        assert!(c.lambda > 0.0 && c.lambda <= 1.0);
        assert!(c.alpha >= 0.0 && c.alpha <= n);
        assert!(c.beta_var >= 0.0 && c.beta_var <= n * n);
        assert!(c.theta >= 0.0 && c.theta <= n.sqrt());
        assert!(c.alpha_q95 <= c.alpha_q99 && c.alpha_q99 <= c.alpha);
    }

    #[test]
    fn duplicate_points_warn() {
        let ds = Dataset::new(2, vec![1.0, 0.0, 1.0, 0.0], vec![1.0, 1.0]).unwrap();
        let c = estimate_constants(&ds, 4, RngSeed::new(1)).unwrap();
        assert!(c.lambda.abs() < 1e-12);
        assert_eq!(c.warnings.len(), 1);
    }

    #[test]
    fn quantile_nearest_rank() {
        let v = [5.0, 1.0, 3.0, 2.0, 4.0];
        assert_eq!(quantile(&v, 0.2), 1.0);
        assert_eq!(quantile(&v, 0.99), 5.0);
        assert_eq!(quantile(&v, 0.5), 3.0);
    }

    #[test]
    fn eigvec_labels_are_scaled_top_vector() {
        let ds = gen_gaussian_sphere(6, 3, RngSeed::new(5)).unwrap();
        let y = eigvec_labels(&ds, 0).unwrap();
        assert!((spectral::norm2(&y) - 6f64.sqrt()).abs() < 1e-12);
        let h = hcts(&ds);
        let hy = h.mat.mul_vec(&y).unwrap();
        let top = spectral::max_eigenvalue(&h.mat).unwrap();
        for (a, b) in hy.iter().zip(&y) {
            assert!((a - top * b).abs() < 1e-10);
        }
        assert!(eigvec_labels(&ds, 6).is_err());
    }
}
