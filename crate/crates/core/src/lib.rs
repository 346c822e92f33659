//! Over-parametrized two-layer ReLU networks trained by gradient descent.
//!
//! The crate covers the full empirical loop around the neural tangent kernel
//! of the first layer:
//!
//! - [`spectral`]: dense symmetric eigendecomposition, norms and SPD solves.
//! - [`data`]: unit-norm datasets, synthetic generators, CSV I/O and the
//!   separation constant θ.
//! - [`gram`]: the closed-form (H^cts), sampled (H^dis), single-weight H(w)
//!   and at-risk (H^⊥) Gram matrices, plus estimation of the data-dependent
//!   constants λ, α, β, γ, θ.
//! - [`network`]: the network `f(W, x, a) = m^{-1/2} Σ a_r relu(w_rᵀx)`, its
//!   exact gradient and full-batch gradient descent with per-step diagnostics.
//! - [`theory`]: step-size rules, radii, movement bounds, rate bounds, the
//!   eigen-decomposition loss predictor, width calculators and the
//!   generalization bound.
//! - [`concentration`]: Monte-Carlo harnesses for the probability lemmas.
//! - [`experiments`]: reproducible presets that tie everything together and
//!   emit CSV/JSON artifacts with pass/fail verdicts.
//!
//! All randomness flows from [`RngSeed`], a `(seed, stream)` pair keying a
//! counter-based ChaCha generator, so parallel and serial runs agree bit for
//! bit.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod concentration;
pub mod data;
pub mod error;
pub mod experiments;
pub mod gram;
pub mod network;
mod parallel;
pub mod spectral;
pub mod theory;
pub mod weights;

pub use data::{Dataset, LabelMode, RngSeed};
pub use error::{Error, Result};
pub use gram::{AssumptionConstants, GramKind, GramMatrix};
pub use network::{NetworkState, TraceRecord, TrainConfig, TrainingTrace};
pub use spectral::{EigenSystem, SymMatrix};
pub use theory::{PredictionCurve, TheoremVariant, WidthRule};
pub use weights::Weights;
