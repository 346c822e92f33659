//! Two-layer ReLU network `f(W, x, a) = m^{-1/2} Σ_r a_r max(w_rᵀx, 0)` with
//! fixed output signs `a` and full-batch gradient descent on `W`.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{sign_vec, Dataset, RngSeed};
use crate::error::{Error, Result};
use crate::gram;
use crate::spectral::{dot, norm2};
use crate::weights::Weights;

/// Training aborts once `‖y − u(k)‖²` exceeds this.
pub const DIVERGENCE_LOSS: f64 = 1e12;

pub const TRACE_HEADER: &str = "k,loss_sq,max_move,frob_move,z_move,flips,step_residual";

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    w: Weights,
    a: Vec<f64>,
    w0: Weights,
    kappa: f64,
}

/// Rows of `W(0)` i.i.d. `N(0, κ² I_d)`, signs `a_r` uniform on {−1, +1}.
pub fn init(m: usize, d: usize, kappa: f64, seed: RngSeed) -> Result<NetworkState> {
    if m == 0 {
        return Err(Error::input("width m must be at least 1"));
    }
    if d == 0 {
        return Err(Error::input("dimension d must be at least 1"));
    }
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::input(format!("kappa must be positive, got {kappa}")));
    }
    let mut rng = seed.rng();
    let w = Weights::gaussian(m, d, kappa, &mut rng);
    let a = sign_vec(&mut rng, m);
    Ok(NetworkState {
        w0: w.clone(),
        w,
        a,
        kappa,
    })
}

impl NetworkState {
    /// Starts a network at `w`, which also becomes the initialization snapshot.
    pub fn from_parts(w: Weights, a: Vec<f64>, kappa: f64) -> Result<Self> {
        if a.len() != w.m() {
            return Err(Error::input(format!(
                "{} output signs for width {}",
                a.len(),
                w.m()
            )));
        }
        if a.iter().any(|v| v.abs() != 1.0) {
            return Err(Error::input("output weights must be exactly +1 or -1"));
        }
        Ok(NetworkState {
            w0: w.clone(),
            w,
            a,
            kappa,
        })
    }

    /// Same signs and initialization, current weights replaced by `w`.
    pub fn with_weights(&self, w: Weights) -> Result<Self> {
        w.check_shape(&self.w0)?;
        Ok(NetworkState {
            w,
            a: self.a.clone(),
            w0: self.w0.clone(),
            kappa: self.kappa,
        })
    }

    pub fn m(&self) -> usize {
        self.w.m()
    }

    pub fn d(&self) -> usize {
        self.w.d()
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn weights(&self) -> &Weights {
        &self.w
    }

    pub fn initial_weights(&self) -> &Weights {
        &self.w0
    }

    pub fn signs(&self) -> &[f64] {
        &self.a
    }

    /// `u_i = m^{-1/2} Σ_r a_r max(w_rᵀx_i, 0)`.
    pub fn forward(&self, ds: &Dataset) -> Result<Vec<f64>> {
        let pre = self.w.preactivations(ds)?;
        Ok(self.outputs(&pre, ds.n()))
    }

    fn outputs(&self, pre: &[f64], n: usize) -> Vec<f64> {
        let m = self.m();
        let scale = 1.0 / (m as f64).sqrt();
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut s = 0.0;
                for r in 0..m {
                    s += self.a[r] * pre[r * n + i].max(0.0);
                }
                scale * s
            })
            .collect()
    }

    /// `1[w_rᵀx_i ≥ 0]` as an `m×n` row-major pattern.
    pub fn activation_pattern(&self, ds: &Dataset) -> Result<Vec<bool>> {
        Ok(self
            .w
            .preactivations(ds)?
            .into_iter()
            .map(|p| p >= 0.0)
            .collect())
    }

    /// `½‖y − u‖² + β/(2m)‖W − W(0)‖_F²`; the second term only when `reg_beta > 0`.
    pub fn loss(&self, ds: &Dataset, reg_beta: f64) -> Result<f64> {
        let u = self.forward(ds)?;
        let fit: f64 = 0.5
            * u.iter()
                .zip(ds.labels())
                .map(|(a, b)| (b - a) * (b - a))
                .sum::<f64>();
        if reg_beta > 0.0 {
            let drift = frob_distance(&self.w, &self.w0);
            Ok(fit + reg_beta / (2.0 * self.m() as f64) * drift * drift)
        } else {
            Ok(fit)
        }
    }

    /// Exact gradient of [`NetworkState::loss`] with the ReLU derivative at 0 taken as 1.
    pub fn gradient(&self, ds: &Dataset, reg_beta: f64) -> Result<Weights> {
        let pre = self.w.preactivations(ds)?;
        let u = self.outputs(&pre, ds.n());
        let residual: Vec<f64> = u.iter().zip(ds.labels()).map(|(a, b)| a - b).collect();
        Ok(self.gradient_from(&pre, &residual, ds, reg_beta))
    }

    fn gradient_from(&self, pre: &[f64], residual: &[f64], ds: &Dataset, reg_beta: f64) -> Weights {
        let (m, d, n) = (self.m(), self.d(), ds.n());
        let scale = 1.0 / (m as f64).sqrt();
        let reg = reg_beta / m as f64;
        let mut grad = Weights::zeros(m, d);
        grad.as_mut_slice()
            .par_chunks_mut(d)
            .enumerate()
            .for_each(|(r, g)| {
                let coef = scale * self.a[r];
                for i in 0..n {
                    if pre[r * n + i] >= 0.0 {
                        let c = coef * residual[i];
                        for (gk, xk) in g.iter_mut().zip(ds.row(i)) {
                            *gk += c * xk;
                        }
                    }
                }
                if reg_beta > 0.0 {
                    for ((gk, wk), w0k) in g.iter_mut().zip(self.w.row(r)).zip(self.w0.row(r)) {
                        *gk += reg * (wk - w0k);
                    }
                }
            });
        grad
    }

    fn apply_step(&mut self, grad: &Weights, eta: f64) {
        for (w, g) in self.w.as_mut_slice().iter_mut().zip(grad.as_slice()) {
            *w -= eta * g;
        }
    }

    /// One update `W ← W − η ∇L(W)`.
    pub fn gd_step(&mut self, ds: &Dataset, eta: f64, reg_beta: f64) -> Result<()> {
        let grad = self.gradient(ds, reg_beta)?;
        self.apply_step(&grad, eta);
        Ok(())
    }

    /// `|S̄_i| = #{r : |w_r(0)ᵀx_i| < R}` per sample.
    pub fn count_at_risk(&self, ds: &Dataset, radius: f64) -> Result<Vec<usize>> {
        if !(radius >= 0.0) {
            return Err(Error::input(format!("radius must be non-negative, got {radius}")));
        }
        let n = ds.n();
        let pre = self.w0.preactivations(ds)?;
        let mut counts = vec![0usize; n];
        for row in pre.chunks(n.max(1)) {
            for (c, p) in counts.iter_mut().zip(row) {
                if p.abs() < radius {
                    *c += 1;
                }
            }
        }
        Ok(counts)
    }

    pub fn train(&mut self, ds: &Dataset, cfg: &TrainConfig) -> Result<TrainingTrace> {
        self.train_with(ds, cfg, |_| Ok(()))
    }

    /// Runs `cfg.steps` gradient steps, calling `on_record` for every record
    /// as soon as it is complete.
    pub fn train_with(
        &mut self,
        ds: &Dataset,
        cfg: &TrainConfig,
        mut on_record: impl FnMut(&TraceRecord) -> Result<()>,
    ) -> Result<TrainingTrace> {
        cfg.validate()?;
        self.w.check_data(ds)?;
        let (m, n) = (self.m(), ds.n());
        let y = ds.labels();
        let init_pattern: Vec<bool> = self
            .w0
            .preactivations(ds)?
            .into_iter()
            .map(|p| p >= 0.0)
            .collect();
        let sq_norms: Vec<f64> = (0..n).map(|i| ds.inner(i, i)).collect();

        let mut records = Vec::new();
        // record of the previous step still waiting for u(k+1)
        let mut pending: Option<(TraceRecord, Vec<f64>)> = None;

        for k in 0..=cfg.steps {
            let pre = self.w.preactivations(ds)?;
            let u = self.outputs(&pre, n);
            let residual: Vec<f64> = u.iter().zip(y).map(|(a, b)| a - b).collect();
            let loss_sq = dot(&residual, &residual);

            if let Some((mut rec, predicted_delta)) = pending.take() {
                let prev = &rec.predictions;
                let diff: Vec<f64> = u
                    .iter()
                    .zip(prev)
                    .zip(&predicted_delta)
                    .map(|((next, cur), hd)| next - cur + hd)
                    .collect();
                rec.step_residual = Some(norm2(&diff));
                on_record(&rec)?;
                records.push(rec);
            }

            if !loss_sq.is_finite() || loss_sq > DIVERGENCE_LOSS {
                return Err(Error::Divergence { step: k, loss_sq });
            }

            let is_last = k == cfg.steps;
            if k % cfg.record_every == 0 || is_last {
                let mut flips = 0u64;
                let mut z_sq = 0.0;
                for r in 0..m {
                    for i in 0..n {
                        if (pre[r * n + i] >= 0.0) != init_pattern[r * n + i] {
                            flips += 1;
                            z_sq += sq_norms[i];
                        }
                    }
                }
                let rec = TraceRecord {
                    k,
                    loss_sq,
                    max_move: max_row_distance(&self.w, &self.w0),
                    frob_move: frob_distance(&self.w, &self.w0),
                    z_move: (z_sq / m as f64).sqrt(),
                    flips,
                    step_residual: None,
                    predictions: u.clone(),
                };
                if cfg.record_step_residual && !is_last {
                    // η H(k) (u(k) − y), completed once u(k+1) is known
                    let h = gram::h_at_step(ds, &self.w)?;
                    let hd = h.mat.mul_vec(&residual)?;
                    let delta = hd.into_iter().map(|v| cfg.eta * v).collect();
                    pending = Some((rec, delta));
                } else {
                    on_record(&rec)?;
                    records.push(rec);
                }
            }

            if is_last {
                break;
            }
            let grad = self.gradient_from(&pre, &residual, ds, cfg.reg_beta);
            self.apply_step(&grad, cfg.eta);
        }

        Ok(TrainingTrace {
            eta: cfg.eta,
            reg_beta: cfg.reg_beta,
            m,
            records,
        })
    }
}

fn frob_distance(a: &Weights, b: &Weights) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn max_row_distance(a: &Weights, b: &Weights) -> f64 {
    (0..a.m())
        .map(|r| {
            a.row(r)
                .iter()
                .zip(b.row(r))
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub eta: f64,
    pub steps: usize,
    /// Regularization factor β; 0 trains the plain squared loss.
    pub reg_beta: f64,
    pub record_every: usize,
    /// Record `‖u(k+1) − u(k) + η H(k)(u(k) − y)‖₂`; costs an `O(mn²)` Gram
    /// matrix per record.
    pub record_step_residual: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            eta: 1e-3,
            steps: 100,
            reg_beta: 0.0,
            record_every: 1,
            record_step_residual: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::input(format!("step size must be finite and >= 0, got {}", self.eta)));
        }
        if !(self.reg_beta >= 0.0 && self.reg_beta.is_finite()) {
            return Err(Error::input(format!(
                "regularization factor must be finite and >= 0, got {}",
                self.reg_beta
            )));
        }
        if self.record_every == 0 {
            return Err(Error::input("record stride must be at least 1"));
        }
        Ok(())
    }
}

/// Diagnostics at step k. Movements are measured against `W(0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    /// `‖y − u(k)‖₂²`
    pub loss_sq: f64,
    /// `max_r ‖w_r(k) − w_r(0)‖₂`
    pub max_move: f64,
    /// `‖W(k) − W(0)‖_F`
    pub frob_move: f64,
    /// `‖Z(k) − Z(0)‖_F`
    pub z_move: f64,
    /// Number of `(r, i)` whose activation differs from initialization.
    pub flips: u64,
    pub step_residual: Option<f64>,
    /// `u(k)`
    pub predictions: Vec<f64>,
}

impl TraceRecord {
    pub fn csv_line(&self) -> String {
        let mut s = format!(
            "{},{},{},{},{},{},",
            self.k, self.loss_sq, self.max_move, self.frob_move, self.z_move, self.flips
        );
        if let Some(r) = self.step_residual {
            let _ = write!(s, "{r}");
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub eta: f64,
    pub reg_beta: f64,
    pub m: usize,
    pub records: Vec<TraceRecord>,
}

impl TrainingTrace {
    pub fn initial_loss_sq(&self) -> f64 {
        self.records.first().map_or(f64::NAN, |r| r.loss_sq)
    }

    pub fn final_loss_sq(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.loss_sq)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRACE_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&r.csv_line());
            out.push('\n');
        }
        out
    }
}
