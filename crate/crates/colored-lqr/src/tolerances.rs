//! Numeric thresholds used across the crate.
//!
//! Everything that decides "equal enough", "positive enough", or "too big"
//! lives here so the knobs are visible in one place and tests can reference
//! the same values the library enforces.

/// Max allowed |X - X'| entry before a weight matrix is rejected as asymmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Weight matrices pass the semidefiniteness gate when their smallest
/// eigenvalue is at least this (slightly negative to absorb round-off).
pub const PSD_MIN_EIG: f64 = -1e-10;

/// A Cholesky pivot at or below this declares the matrix not positive
/// definite. Absolute, applied to the pre-sqrt diagonal value.
pub const SPD_PIVOT_FLOOR: f64 = 1e-12;

/// The path-enumeration optimizer's symmetric factorization declares the
/// stationarity system singular when a pivot falls below this fraction of
/// the largest pivot seen.
pub const KKT_REL_PIVOT: f64 = 1e-10;

/// Finite-support probabilities must sum to one within this.
pub const PROB_SUM_TOL: f64 = 1e-12;

/// Finite-support mean must vanish within this.
pub const MEAN_TOL: f64 = 1e-12;

/// Finite-support second moment must match the model's sigma2 within this.
pub const SECOND_MOMENT_TOL: f64 = 1e-10;

/// Recorded trajectories must satisfy the transition map within this
/// per-entry tolerance to be accepted for costing or replay.
pub const REPLAY_TOL: f64 = 1e-12;

/// Exact path enumeration refuses above this many paths.
pub const PATH_CAP: u64 = 10_000_000;

/// Tree-shaped oracle structures refuse above this many nodes.
pub const NODE_CAP: u64 = 1_000_000;
