//! Covariance estimation via Kronecker-product expansions.
//!
//! The crate implements a family of covariance estimators built around a
//! block-vectorizing rearrangement of the covariance matrix — in that domain
//! Kronecker structure becomes low algebraic rank, so nuclear-norm shrinkage
//! and rank truncation yield structured estimates — together with baseline
//! estimators, synthetic ground-truth generators, empirical checks of the
//! supporting error bounds, a Monte Carlo experiment harness, and a
//! spatio-temporal wind-prediction pipeline.

pub mod bounds;
pub mod estimators;
pub mod matcore;
pub mod synthgen;

pub use matcore::{DenseMatrix, MatError};
