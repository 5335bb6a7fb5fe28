//! Data-driven spectral regularization for the linear model `Y = Aθ + σξ`.
//!
//! The crate works in spectral coordinates of `AᵀA`: an estimator damps the
//! coefficients `y(k)` with weights `h_α(k)` drawn from an ordered smoother
//! family, and the regularization parameter is chosen by minimizing a
//! penalized empirical risk whose penalty balances excess risks uniformly
//! over the family.
//!
//! Module map:
//!
//! - [`spectra`]: eigenvalue spectra of `AᵀA` (generators, validation,
//!   Jacobi eigendecomposition of small dense matrices, CSV I/O).
//! - [`smoothers`]: ordered smoother families evaluated on finite α-grids.
//! - [`penalty`]: the variance scale `D(α)`, the root `μ_α`, the balancing
//!   penalty `Q°(α)` and the full penalty `Pen(α)`.
//! - [`selection`]: empirical risk and the argmin rule for `α̂`.
//! - [`evaluation`]: exact risks, the excess-risk identity, penalized oracle
//!   risk and the Monte Carlo engine.
//! - [`verify`]: invariant suites run by the `verify` subcommand.
//! - [`cli`]: experiment configuration, presets and subcommands.

// `!(x > 0.0)` deliberately rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod evaluation;
pub mod numeric;
pub mod penalty;
pub mod selection;
pub mod smoothers;
pub mod spectra;
pub mod verify;

pub use evaluation::{ExperimentReport, RiskCurve, SignalSpec};
pub use penalty::PenaltyTable;
pub use selection::{SelectionResult, SpectralObservation};
pub use smoothers::{GridSpec, SmootherFamily, SmootherGrid};
pub use spectra::{DenseMatrix, Spectrum};
