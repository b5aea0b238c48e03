//! Finite-horizon linear-quadratic control of discrete-time systems whose
//! input matrix is disturbed by a scalar multiplicative noise with one step
//! of memory: B_k = B0 + B1 w_k + B2 w_{k-1}. The lag term makes the
//! one-step-ahead input channel partially predictable, so the classical
//! white-noise recursion is no longer optimal and the information pattern
//! (who sees w_{k-1} when choosing u_k) starts to matter.
//!
//! What's here:
//!
//! - [`riccati_free`]: backward recursions when the controller sees the
//!   full noise history before acting: the closed-form recursion with its
//!   averaged continuation value, the exact noise-by-noise recursion, and
//!   the classical white-noise recursion for B2 = 0.
//! - [`riccati_delay`]: the five-matrix backward recursion and feedback law
//!   when the input is computed one step ahead of being applied.
//! - [`oracle`]: independent ground truth, stochastic-tree path
//!   enumeration, exact dynamic programming over the noise support,
//!   costate recursions with a stationarity test, and the classical
//!   solvers (deterministic Riccati, augmented delay reformulation) the
//!   recursions must reduce to.
//! - [`simulate`]: closed-loop rollouts, exact expected cost by
//!   enumeration, and seeded Monte Carlo.
//! - [`diagnostics`]: cross-method comparison, a reduction suite, the
//!   per-step optimality identity, and reproducible random instances.
//! - [`cli`]: the `colored-lqr` binary (solve / simulate / oracle /
//!   compare / verify).
//!
//! Runnable walkthroughs live in `examples/`:
//!
//! - `backward_recursions`: the three delay-free solvers on one instance.
//! - `delayed_control`: solving and driving the one-step-delay loop.
//! - `monte_carlo`: seeded simulation against the exact expected cost.
//! - `exact_oracle`: path enumeration and exact DP agreeing on a tree.
//! - `method_comparison`: optimality gaps of every applicable method.
//! - `verification`: the reduction suite plus closed-loop identities.
//! - `config_roundtrip`: YAML in, YAML out, bit-for-bit.

#![forbid(unsafe_code)]

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod policy;
pub mod riccati_delay;
pub mod riccati_free;
pub mod schedule;
pub mod simulate;
pub mod tolerances;

pub use error::{Error, Result};
pub use model::{
    load_config, load_config_file, InitialCondition, LoadedConfig, ModelDescription, NoiseSpec,
    SystemModel,
};
pub use policy::Policy;
pub use schedule::Schedule;
