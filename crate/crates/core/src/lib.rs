//! Numerical laboratory for the stochastic heat equation
//!
//! ```text
//!     ∂_t u = ½ ∂²_x u + σ(t, x, u) Ẇ      on [0, T] × 𝕋,  𝕋 = ℝ/ℤ
//! ```
//!
//! driven by space-time white noise. The crate simulates solution paths,
//! evaluates spatial / temporal / space-time Hölder semi-norms, computes the
//! heat-kernel and increment-covariance integrals by deterministic quadrature,
//! and estimates small-ball probabilities of the semi-norms with plain Monte
//! Carlo, fixed-effort multilevel splitting and Girsanov importance sampling.
//!
//! The deterministic numerics (quadrature, kernels, semi-norms, solvers) are
//! generic over the scalar through [`Real`]; the Monte Carlo estimators work
//! on `f64` paths. Concrete aliases for the common instantiations live at the
//! crate root.

pub mod error;
pub mod gaussian;
pub mod grid;
pub mod heat_kernel;
pub mod holder;
pub mod localization;
pub mod quadrature;
pub mod real;
pub mod smallball;
pub mod solver;
pub mod stats;

pub use error::{Error, Result};
pub use real::Real;

pub use grid::{FieldPath, Grid, NoiseField, SeedRecord};
pub use heat_kernel::KernelConfig;
pub use holder::{HolderFunction, Metric, SeminormKind, SeminormResult};
pub use solver::{DriftSpec, SigmaKind, SigmaSpec};

/// Double-precision solution path.
pub type FieldPath64 = FieldPath<f64>;
/// Single-precision solution path.
pub type FieldPath32 = FieldPath<f32>;
/// Double-precision kernel configuration.
pub type KernelConfig64 = KernelConfig<f64>;
/// Double-precision noise coefficient.
pub type SigmaSpec64 = SigmaSpec<f64>;
/// Double-precision drift.
pub type DriftSpec64 = DriftSpec<f64>;
/// Double-precision semi-norm report.
pub type SeminormResult64 = SeminormResult<f64>;
/// Double-precision Hölder test function.
pub type HolderFunction64 = HolderFunction<f64>;
