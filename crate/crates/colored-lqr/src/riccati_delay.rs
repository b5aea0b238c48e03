//! Backward recursion for the one-step input delay case.
//!
//! Plant and cost:
//!
//! ```text
//! x_{k+1} = (A0 + A1 w_k) x_k + (B0 + B1 w_k + B2 w_{k-1}) u_{k-1}
//! J = E[ sum_{k=0}^{N} x_k' Q x_k + sum_{k=1}^{N} u_{k-1}' R u_{k-1}
//!        + x_{N+1}' P_terminal x_{N+1} ]
//! ```
//!
//! Decisions are u_0..u_{N-1}; u_{-1} is part of the initial data. Five
//! coupled sequences run backwards, each stage k computed from stage k+1
//! (writing c for the noise weight, P1 for P_{k+1}, and R1, T01, T11, F1
//! for the stage k+1 quantities):
//!
//! ```text
//! R_k  = R + B0' P1 B0 + c B1' P1 B1
//!        + c B2' (P1 - F1' R1^-1 F1) B2 - T11' R1^-1 T11
//! T0_k = B0' P1 A0 A0 + c B1' P1 A1 A0
//!        + c B2' (P1 A0 - F1' R1^-1 T01) A1 - T11' R1^-1 T01 A0
//! T1_k = B0' P1 A0 B0 + c B1' P1 A1 B0
//!        + c B2' (P1 A0 - F1' R1^-1 T01) B1 - T11' R1^-1 T01 B0
//! F_k  = B0' P1 A0 + c B1' P1 A1 - T11' R1^-1 T01
//! P_k  = A0' P1 A0 + c A1' P1 A1 + Q - T01' R1^-1 T01
//! ```
//!
//! seeded at stage N+1 by P = P_terminal, R = I, T0 = T1 = F = 0. The
//! identity seed is inert: every use of stage N+1's R is multiplied by a
//! zero T or F, so the first backstep reduces to plain conditional
//! expectations against P_terminal.
//!
//! The noise weight c is sigma2 by default. The recursion is also
//! available with c = sqrt(sigma2) (model flag `sigma_first_power`) for
//! comparison against sources that print the weight that way; only the
//! default reproduces the exact dynamic-programming solution.
//!
//! The optimal decision is
//!
//! ```text
//! u_k = -R_{k+1}^-1 [ T0_{k+1} x_k + (T1_{k+1} + F_{k+1} B2 w_{k-1}) u_{k-1} ]
//! ```
//!
//! Solvability is positive definiteness of each R that gets inverted
//! (R_1..R_N plus the inert seed); a failure is reported as a structured
//! error naming the step.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{min_symmetric_eigenvalue, sym_part, SpdFactor};
use crate::model::SystemModel;

/// One stage of the delayed recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayedStage {
    pub k: usize,
    pub p: DMatrix<f64>,
    pub r: DMatrix<f64>,
    /// State coefficient in the control law (m x n).
    pub t0: DMatrix<f64>,
    /// Previous-input coefficient in the control law (m x m).
    pub t1: DMatrix<f64>,
    /// Weight on the noise-dependent part of the control law (m x n).
    pub f: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayedSchedule {
    pub horizon: usize,
    pub sigma2: f64,
    /// Stages indexed by k, 0..=horizon. The decision at step k reads
    /// stage k+1; stage 0 carries the value matrix P_0.
    pub stages: Vec<DelayedStage>,
    pub p_terminal: DMatrix<f64>,
    /// Copy of the input lag matrix; the control law needs it alongside
    /// the stages.
    pub b2: DMatrix<f64>,
}

impl DelayedSchedule {
    pub fn n(&self) -> usize {
        self.p_terminal.nrows()
    }
    pub fn m_dim(&self) -> usize {
        self.stages[0].r.nrows()
    }
}

/// Inert seed at stage N+1.
pub fn terminal_stage(model: &SystemModel) -> DelayedStage {
    DelayedStage {
        k: model.horizon + 1,
        p: model.p_terminal.clone(),
        r: DMatrix::identity(model.m, model.m),
        t0: DMatrix::zeros(model.m, model.n),
        t1: DMatrix::zeros(model.m, model.m),
        f: DMatrix::zeros(model.m, model.n),
    }
}

/// One backstep: stage k from stage k+1. Fails when the stage k+1 control
/// Hessian it must invert is not positive definite.
pub fn backstep_delayed(model: &SystemModel, next: &DelayedStage) -> Result<DelayedStage> {
    debug_assert!(next.k >= 1);
    let c = model.delayed_noise_factor();
    let rf = SpdFactor::new(&next.r).ok_or_else(|| Error::NotSolvable {
        k: next.k,
        w: None,
        min_eigenvalue: min_symmetric_eigenvalue(&next.r),
        condition: "R_k > 0",
    })?;
    let p1 = &next.p;
    let rinv_t0 = rf.solve(&next.t0);
    let rinv_t1 = rf.solve(&next.t1);
    let rinv_f = rf.solve(&next.f);
    // P1 - F1' R1^-1 F1 and P1 A0 - F1' R1^-1 T01 recur in three places.
    let pmod = p1 - next.f.transpose() * &rinv_f;
    let core = p1 * &model.a0 - next.f.transpose() * &rinv_t0;
    let t1r_t0 = next.t1.transpose() * &rinv_t0;

    let b0p = model.b0.transpose() * p1;
    let b1p = model.b1.transpose() * p1;

    let r_k = sym_part(
        &(&model.r
            + &b0p * &model.b0
            + (&b1p * &model.b1) * c
            + (model.b2.transpose() * &pmod * &model.b2) * c
            - next.t1.transpose() * &rinv_t1),
    );
    let t0_k = &b0p * &model.a0 * &model.a0
        + (&b1p * &model.a1 * &model.a0) * c
        + (model.b2.transpose() * &core * &model.a1) * c
        - &t1r_t0 * &model.a0;
    let t1_k = &b0p * &model.a0 * &model.b0
        + (&b1p * &model.a1 * &model.b0) * c
        + (model.b2.transpose() * &core * &model.b1) * c
        - &t1r_t0 * &model.b0;
    let f_k = &b0p * &model.a0 + (&b1p * &model.a1) * c - &t1r_t0;
    let p_k = sym_part(
        &(model.a0.transpose() * p1 * &model.a0
            + (model.a1.transpose() * p1 * &model.a1) * c
            + &model.q
            - next.t0.transpose() * &rinv_t0),
    );
    Ok(DelayedStage {
        k: next.k - 1,
        p: p_k,
        r: r_k,
        t0: t0_k,
        t1: t1_k,
        f: f_k,
    })
}

/// Run the delayed recursion from the inert terminal seed down to stage 0.
/// Only the model's variance enters, so this works for continuous noise
/// laws too.
pub fn solve_delayed(model: &SystemModel) -> Result<DelayedSchedule> {
    if model.delay != 1 {
        return Err(Error::DelayMismatch {
            op: "solve_delayed",
            expected: 1,
            found: usize::from(model.delay),
        });
    }
    let mut stages: Vec<DelayedStage> = Vec::with_capacity(model.horizon + 1);
    let mut next = terminal_stage(model);
    for _ in 0..=model.horizon {
        let stage = backstep_delayed(model, &next)?;
        stages.push(stage.clone());
        next = stage;
    }
    stages.reverse();
    Ok(DelayedSchedule {
        horizon: model.horizon,
        sigma2: model.sigma2,
        stages,
        p_terminal: model.p_terminal.clone(),
        b2: model.b2.clone(),
    })
}

/// Optimal decision at step k (0 <= k < horizon) given the current state,
/// the previous input, and the previous noise value.
pub fn control_delayed(
    sched: &DelayedSchedule,
    k: usize,
    x: &DVector<f64>,
    u_prev: &DVector<f64>,
    w_prev: f64,
) -> Result<DVector<f64>> {
    if k >= sched.horizon {
        return Err(Error::IndexOutOfRange {
            what: "delayed decision step",
            index: k,
            limit: sched.horizon,
        });
    }
    let n = sched.n();
    let m = sched.m_dim();
    if x.len() != n {
        return Err(Error::DimensionMismatch {
            field: "x".into(),
            expected_rows: n,
            expected_cols: 1,
            found_rows: x.len(),
            found_cols: 1,
        });
    }
    if u_prev.len() != m {
        return Err(Error::DimensionMismatch {
            field: "u_prev".into(),
            expected_rows: m,
            expected_cols: 1,
            found_rows: u_prev.len(),
            found_cols: 1,
        });
    }
    let stage = &sched.stages[k + 1];
    let rf = SpdFactor::new(&stage.r).ok_or_else(|| Error::NotSolvable {
        k: k + 1,
        w: None,
        min_eigenvalue: min_symmetric_eigenvalue(&stage.r),
        condition: "R_k > 0",
    })?;
    let rhs = &stage.t0 * x + (&stage.t1 + &stage.f * &sched.b2 * w_prev) * u_prev;
    Ok(-rf.solve_vec(&rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate, ModelDescription};

    fn scalar_delayed(
        a: [f64; 2],
        b: [f64; 3],
        sigma2: f64,
        horizon: usize,
        literal: bool,
    ) -> SystemModel {
        let one = |v: f64| DMatrix::from_row_slice(1, 1, &[v]);
        validate(ModelDescription {
            horizon,
            delay: 1,
            sigma2,
            a0: one(a[0]),
            a1: one(a[1]),
            b0: one(b[0]),
            b1: one(b[1]),
            b2: one(b[2]),
            q: one(1.0),
            r: one(1.0),
            p_terminal: one(1.0),
            allow_indefinite: false,
            sigma_first_power: literal,
        })
        .unwrap()
    }

    fn at(m: &DMatrix<f64>) -> f64 {
        m[(0, 0)]
    }

    #[test]
    fn first_backstep_is_plain_conditional_expectation() {
        let model = scalar_delayed([1.0, 1.0], [1.0, 1.0, 1.0], 1.0, 3, false);
        let st = backstep_delayed(&model, &terminal_stage(&model)).unwrap();
        assert_eq!(st.k, 3);
        assert_eq!(at(&st.r), 4.0);
        assert_eq!(at(&st.t0), 3.0);
        assert_eq!(at(&st.t1), 3.0);
        assert_eq!(at(&st.f), 2.0);
        assert_eq!(at(&st.p), 3.0);
    }

    #[test]
    fn noise_weight_is_variance_by_default_and_sigma_when_asked() {
        let model = scalar_delayed([1.0, 0.0], [1.0, 1.0, 1.0], 0.25, 1, false);
        let st = backstep_delayed(&model, &terminal_stage(&model)).unwrap();
        assert_eq!(at(&st.r), 1.0 + 1.0 + 0.25 + 0.25);

        let lit = scalar_delayed([1.0, 0.0], [1.0, 1.0, 1.0], 0.25, 1, true);
        let st = backstep_delayed(&lit, &terminal_stage(&lit)).unwrap();
        assert_eq!(at(&st.r), 1.0 + 1.0 + 0.5 + 0.5);
    }

    #[test]
    fn deterministic_stages_match_the_augmented_reformulation() {
        // With no noise the delayed problem is an ordinary LQR over the
        // stacked state (x, u_prev); crate::oracle::augmented_delay_lqr
        // solves that reformulation directly and independently.
        let model = scalar_delayed([1.0, 0.0], [1.0, 0.0, 0.0], 1.0, 6, false);
        let sched = solve_delayed(&model).unwrap();

        let st_n = &sched.stages[6];
        assert_eq!(at(&st_n.r), 2.0);
        assert_eq!(at(&st_n.t0), 1.0);
        assert_eq!(at(&st_n.t1), 1.0);
        assert_eq!(at(&st_n.f), 1.0);
        assert_eq!(at(&st_n.p), 2.0);
        let st = &sched.stages[5];
        assert_eq!(at(&st.r), 2.5);
        assert_eq!(at(&st.p), 2.5);
        assert_eq!(at(&st.f), 1.5);

        let aug = crate::oracle::augmented_delay_lqr(&model).unwrap();
        for k in 1..=model.horizon {
            assert!((at(&sched.stages[k].p) - at(&aug.stages[k].p)).abs() < 1e-12);
            assert!((at(&sched.stages[k].r) - at(&aug.stages[k].r)).abs() < 1e-12);
            assert!((at(&sched.stages[k].f) - at(&aug.stages[k].f)).abs() < 1e-12);
            assert!((at(&sched.stages[k].t0) - at(&aug.stages[k].t0)).abs() < 1e-12);
            assert!((at(&sched.stages[k].t1) - at(&aug.stages[k].t1)).abs() < 1e-12);
        }
        assert!((at(&sched.stages[0].p) - at(&aug.stages[0].p)).abs() < 1e-12);
    }

    #[test]
    fn shortest_nontrivial_horizon_control() {
        let model = scalar_delayed([1.0, 0.0], [1.0, 0.0, 0.0], 1.0, 1, false);
        let sched = solve_delayed(&model).unwrap();
        let x = DVector::from_column_slice(&[1.0]);
        let u0 = control_delayed(&sched, 0, &x, &DVector::zeros(1), 0.0).unwrap();
        assert!((u0[0] + 0.5).abs() < 1e-15, "u0 = {:?}", u0[0]);
        let u0 = control_delayed(&sched, 0, &x, &DVector::from_column_slice(&[2.0]), 0.0).unwrap();
        assert!((u0[0] + 1.5).abs() < 2e-15, "u0 = {:?}", u0[0]);
    }

    #[test]
    fn without_input_lag_the_control_ignores_the_previous_noise() {
        let model = scalar_delayed([0.9, 0.4], [1.0, 0.3, 0.0], 1.0, 4, false);
        let sched = solve_delayed(&model).unwrap();
        let x = DVector::from_column_slice(&[1.375]);
        let u_prev = DVector::from_column_slice(&[-0.625]);
        let a = control_delayed(&sched, 1, &x, &u_prev, -1.0).unwrap();
        let b = control_delayed(&sched, 1, &x, &u_prev, 1.0).unwrap();
        assert_eq!(a[0].to_bits(), b[0].to_bits());
    }

    #[test]
    fn decision_steps_stop_one_short_of_the_horizon() {
        let model = scalar_delayed([1.0, 0.0], [1.0, 0.5, 0.5], 1.0, 2, false);
        let sched = solve_delayed(&model).unwrap();
        let x = DVector::from_column_slice(&[1.0]);
        assert!(control_delayed(&sched, 1, &x, &DVector::zeros(1), 1.0).is_ok());
        assert!(matches!(
            control_delayed(&sched, 2, &x, &DVector::zeros(1), 1.0),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn losing_definiteness_names_the_failing_stage() {
        let one = |v: f64| DMatrix::from_row_slice(1, 1, &[v]);
        let model = validate(ModelDescription {
            horizon: 1,
            delay: 1,
            sigma2: 1.0,
            a0: one(1.0),
            a1: one(0.0),
            b0: one(1.0),
            b1: one(0.0),
            b2: one(0.0),
            q: one(0.0),
            r: one(-1.0),
            p_terminal: one(0.0),
            allow_indefinite: true,
            sigma_first_power: false,
        })
        .unwrap();
        match solve_delayed(&model) {
            Err(Error::NotSolvable { k, condition, .. }) => {
                assert_eq!(k, 1);
                assert_eq!(condition, "R_k > 0");
            }
            other => panic!("expected NotSolvable, got {other:?}"),
        }
    }

    #[test]
    fn delayed_solver_rejects_delay_free_models() {
        let mut model = scalar_delayed([1.0, 0.0], [1.0, 0.0, 0.0], 1.0, 2, false);
        model.delay = 0;
        assert!(matches!(
            solve_delayed(&model),
            Err(Error::DelayMismatch { .. })
        ));
    }

    #[test]
    fn stage_count_covers_zero_through_horizon() {
        let model = scalar_delayed([0.8, 0.2], [1.0, 0.2, 0.4], 0.49, 3, false);
        let sched = solve_delayed(&model).unwrap();
        assert_eq!(sched.stages.len(), 4);
        assert_eq!(sched.stages[0].k, 0);
    }
}
