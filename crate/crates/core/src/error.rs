//! Error type shared by every module.

use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every rejection carries enough context to be reported verbatim by the CLI.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("series centers differ: {left} vs {right}")]
    MismatchedCenters { left: Complex64, right: Complex64 },

    #[error("{op}: precondition violated: {detail}")]
    Precondition { op: &'static str, detail: String },

    #[error("series is not invertible at its center (linear coefficient {c1} vanishes)")]
    NotInvertible { c1: Complex64 },

    #[error("{op}: fractional power requested at a branch point (constant term vanishes)")]
    BranchPoint { op: &'static str },

    #[error("{op}: point lies outside the domain: {detail}")]
    OutsideDomain { op: &'static str, detail: String },

    #[error("{op}: invalid shape: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("matrix is not unitary (max |UU* - I| = {residual:e})")]
    NotUnitary { residual: f64 },

    #[error("linear system at order {order} is singular")]
    Singular { order: usize },

    #[error("f1 is identically zero: the lower block of U is singular")]
    F1IdenticallyZero,

    #[error("not an isometry-induced rational map: {0}")]
    NotIsometryInduced(String),

    #[error("rational map is already linear (totally geodesic direction)")]
    AlreadyLinear,

    #[error("{op}: parameter out of range: {detail}")]
    OutOfRange { op: &'static str, detail: String },

    #[error("unknown catalog form `{0}`")]
    UnknownForm(String),

    #[error("catalog form `{form}` expects {expected} parameter(s), got {got}")]
    ParamCount { form: String, expected: usize, got: usize },

    #[error("{op}: unsupported input: {detail}")]
    Unsupported { op: &'static str, detail: String },

    #[error("path segment {from} -> {to} passes within {distance:e} of branch point {branch}")]
    StepGating { from: Complex64, to: Complex64, branch: Complex64, distance: f64 },

    #[error("monodromy orbit did not close within {limit} germs")]
    OrbitOverflow { limit: usize },

    #[error("{op}: numerical failure: {detail}")]
    Numerical { op: &'static str, detail: String },
}

impl Error {
    /// Name of the operation that rejected its input, for machine-readable envelopes.
    pub fn operation(&self) -> &'static str {
        match self {
            Error::MismatchedCenters { .. } => "series_arithmetic",
            Error::Precondition { op, .. }
            | Error::BranchPoint { op }
            | Error::OutsideDomain { op, .. }
            | Error::Shape { op, .. }
            | Error::OutOfRange { op, .. }
            | Error::Unsupported { op, .. }
            | Error::Numerical { op, .. } => op,
            Error::NotInvertible { .. } => "series_reversion",
            Error::NotUnitary { .. } => "unitary_matrix",
            Error::Singular { .. } => "solve_isometry",
            Error::F1IdenticallyZero => "rational_r",
            Error::NotIsometryInduced(_) => "blaschke_factorize",
            Error::AlreadyLinear => "peel_factor",
            Error::UnknownForm(_) | Error::ParamCount { .. } => "catalog_construct",
            Error::StepGating { .. } => "continue_germ",
            Error::OrbitOverflow { .. } => "sheeting_report",
        }
    }

    /// True for rejections caused by malformed or out-of-range requests rather than numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Shape { .. }
                | Error::NotUnitary { .. }
                | Error::OutOfRange { .. }
                | Error::UnknownForm(_)
                | Error::ParamCount { .. }
                | Error::Unsupported { .. }
                | Error::Precondition { .. }
                | Error::OutsideDomain { .. }
        )
    }
}
