//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// `k * alpha_i` landed inside the guard band around an integer, so the
    /// floor used for dyadic side lengths is not reproducible.
    #[error("floor ambiguity: k*alpha = {value} is within {band:e} of an integer (k = {k}, alpha = {alpha})")]
    FloorAmbiguity { k: i64, alpha: f64, value: f64, band: f64 },

    /// The domain of a grid function is too small for the requested operator:
    /// part of the output support would be clipped. `required` lists, per
    /// axis, how far the box must grow on the low and high side.
    #[error("insufficient padding: domain must grow by {required:?} per axis (low, high)")]
    InsufficientPadding { required: Vec<(f64, f64)> },

    /// A localized average produced mass outside its cube.
    #[error("support violation at cell {cell:?} (center {center:?}): |value| = {value:.3e} outside the target cube")]
    SupportViolation { cell: Vec<usize>, center: Vec<f64>, value: f64 },

    #[error("sparsity violation for cube #{index}: {reason}")]
    SparsityViolation { index: usize, reason: String },

    #[error("quadrature did not converge: {0}")]
    NonConvergence(String),

    #[error("node budget exceeded: visited {visited} nodes (budget {budget})")]
    BudgetExceeded { visited: usize, budget: usize },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
