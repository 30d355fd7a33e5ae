//! Fused lasso additive models (FLAM).
//!
//! Each additive component is fit as a piecewise-constant function whose
//! knots are chosen adaptively by a fused lasso penalty on adjacent
//! differences of the sorted fitted values, combined with a group lasso
//! penalty that drops whole features. Squared-error models are fit by
//! block coordinate descent; logistic models by generalized gradient
//! descent. The crate also provides the unbiased degrees-of-freedom
//! estimator, complete-sparsity thresholds, cross-validation, and a
//! seeded simulation harness.
//!
//! Typical flow:
//!
//! ```
//! use flam_core::{Dataset, PenaltySpec, fit::{flam_bcd, FitConfig}};
//!
//! let y = vec![1.0, 2.0, 8.0, 9.0];
//! let x = vec![vec![0.1, 0.4, 0.6, 0.9]];
//! let data = Dataset::new(y, x).unwrap();
//! let penalty = PenaltySpec::new(0.5, 1.0).unwrap();
//! let fit = flam_bcd(&data, &penalty, &FitConfig::default(), None).unwrap();
//! assert!(fit.converged);
//! ```

pub mod dataset;
pub mod diffs;
pub mod error;
pub mod fit;
pub mod glm;
pub mod inference;
pub mod modelsel;
pub mod prox;
pub mod sim;
pub mod solver;
pub mod stepfn;

pub use dataset::{order_feature, Dataset, PenaltySpec};
pub use error::FlamError;
pub use fit::{FitConfig, FitPath, FlamFit};
pub use stepfn::StepFunction;

/// Absolute magnitude below which a coefficient is treated as exactly zero
/// when forming active sets and counting knots.
pub const ZERO_TOL: f64 = 1e-10;
