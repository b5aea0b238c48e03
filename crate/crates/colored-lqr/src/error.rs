//! Crate-wide error type and process exit-code mapping.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{field}: expected {expected_rows}x{expected_cols}, found {found_rows}x{found_cols}")]
    DimensionMismatch {
        field: String,
        expected_rows: usize,
        expected_cols: usize,
        found_rows: usize,
        found_cols: usize,
    },

    #[error("{matrix} is not symmetric (max asymmetry {asymmetry:.3e})")]
    NotSymmetric { matrix: String, asymmetry: f64 },

    #[error("{matrix} is not positive semi-definite (min eigenvalue {min_eigenvalue:.6e})")]
    NotPsd { matrix: String, min_eigenvalue: f64 },

    #[error("horizon must be a nonnegative integer, got {given}")]
    BadHorizon { given: i64 },

    #[error("delay must be 0 or 1, got {given}")]
    BadDelay { given: i64 },

    #[error("{what}: got {value}, expected {expected} within {tolerance:.1e}")]
    BadMoments {
        what: String,
        value: f64,
        expected: f64,
        tolerance: f64,
    },

    #[error("bad noise support: {reason}")]
    BadProbabilities { reason: String },

    #[error("parse error at {context}")]
    Parse { context: String },

    #[error("unknown key `{key}`")]
    UnknownKey { key: String },

    #[error("missing key `{key}`")]
    MissingKey { key: String },

    #[error("{op} requires a finite-support noise law; got gaussian")]
    RequiresFiniteSupport { op: &'static str },

    #[error("white-noise recursion requires B2 = 0")]
    RequiresB2Zero,

    #[error("{op} requires delay = {expected}, model has delay = {found}")]
    DelayMismatch {
        op: &'static str,
        expected: usize,
        found: usize,
    },

    /// Backward recursion failed the definiteness test at a step.
    /// `condition` is the violated requirement ("Upsilon_k > 0" or "R_k > 0").
    #[error("not solvable at step {k}{}: condition {condition} violated (min eigenvalue {min_eigenvalue:.6e})", w.map(|v| format!(" (w = {v})")).unwrap_or_default())]
    NotSolvable {
        k: usize,
        w: Option<f64>,
        min_eigenvalue: f64,
        condition: &'static str,
    },

    #[error("stationarity system is singular: pivot {pivot:.3e} below {rel_tol:.1e} of max pivot {max_pivot:.3e} (non-unique optimum)")]
    SingularHessian {
        pivot: f64,
        max_pivot: f64,
        rel_tol: f64,
    },

    #[error("w = {value} is not a support value (support: {support:?})")]
    UnknownSupportValue { value: f64, support: Vec<f64> },

    #[error("{what}: index {index} out of range (limit {limit})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("exact enumeration over {paths} paths exceeds the cap of {cap}")]
    TooManyPaths { paths: u128, cap: u64 },

    #[error("tree with {nodes} nodes exceeds the cap of {cap}")]
    TooManyNodes { nodes: u128, cap: u64 },

    #[error("trajectory is inconsistent with the model: {detail}")]
    InconsistentTrajectory { detail: String },

    #[error("{op} does not accept a {kind} schedule")]
    UnsupportedSchedule {
        op: &'static str,
        kind: &'static str,
    },

    #[error("{policy} policy cannot be evaluated from (k, x, w_prev) alone: {reason}")]
    UnsupportedPolicy {
        policy: &'static str,
        reason: &'static str,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code the CLI maps this error to. Solvability failures
    /// (definiteness lost mid-recursion, singular stationarity system) are 1;
    /// everything else is a usage or configuration error, 2.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NotSolvable { .. } | Error::SingularHessian { .. } => 1,
            _ => 2,
        }
    }
}
