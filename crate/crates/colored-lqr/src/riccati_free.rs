//! Delay-free backward recursions and value schedules.
//!
//! Cost over steps 0..=N with terminal weight P_terminal:
//!
//! ```text
//! J = E[ sum_k x_k' Q x_k + u_k' R u_k + x_{N+1}' P_terminal x_{N+1} ]
//! ```
//!
//! where u_k may use information up to w_{k-1} only. Three schedules:
//!
//! * **Literal** tables, one per previous-noise value w:
//!
//!   ```text
//!   Upsilon_k(w) = R + s2 B1' P_{k+1} B1 + (B0 + B2 w)' P_{k+1} (B0 + B2 w)
//!   M_k(w)       = B0' P_{k+1} A0 + s2 B1' P_{k+1} A1 + w B2' P_{k+1} A0
//!   P_k(w)       = A0' P_{k+1} A0 + s2 A1' P_{k+1} A1 + Q
//!                  - M_k(w)' Upsilon_k(w)^-1 M_k(w)
//!   ```
//!
//!   with s2 = sigma2. The matrix fed forward as P_{k+1} is the
//!   probability-weighted average of the current P table, so this recursion
//!   treats the w-dependence of the value as if it could be averaged out.
//!   Cheap, and exact when B2 = 0; its optimality gap when B2 != 0 is what
//!   the comparison harness measures.
//!
//! * **Measurable** tables carry the w-dependence honestly. The value of
//!   being at x with previous noise w is x' S_k(w) x, and each backstep
//!   takes the expectation over the current noise v against the table
//!   S_{k+1}(v):
//!
//!   ```text
//!   H_k(w) = R + sum_j p_j B(v_j, w)' S_{k+1}(v_j) B(v_j, w)
//!   L_k(w) = sum_j p_j B(v_j, w)' S_{k+1}(v_j) A(v_j)
//!   G_k(w) = H_k(w)^-1 L_k(w)
//!   S_k(w) = Q + sum_j p_j A(v_j)' S_{k+1}(v_j) A(v_j) - L_k(w)' G_k(w)
//!   ```
//!
//!   with A(v) = A0 + A1 v and B(v, w) = B0 + B1 v + B2 w. This is exact
//!   dynamic programming on the information state (x, w); the
//!   path-enumeration oracle ties it node for node.
//!
//! * **White** drops B2 entirely (requires B2 = 0), where both recursions
//!   collapse to a single matrix sequence.
//!
//! All three agree elementwise when B2 = 0. Solvability at each step is
//! positive definiteness of the control Hessian; losing it is reported as a
//! structured error naming the step.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{min_symmetric_eigenvalue, sym_part, SpdFactor};
use crate::model::{check_noise, InitialCondition, NoiseSpec, SystemModel};
use crate::schedule::Schedule;

/// Exact-match index of w in a support slice.
pub(crate) fn support_index(support: &[f64], w: f64) -> Result<usize> {
    support
        .iter()
        .position(|&v| v == w)
        .ok_or_else(|| Error::UnknownSupportValue {
            value: w,
            support: support.to_vec(),
        })
}

fn spd_or_not_solvable(
    mat: &DMatrix<f64>,
    k: usize,
    w: Option<f64>,
    condition: &'static str,
) -> Result<SpdFactor> {
    SpdFactor::new(mat).ok_or_else(|| Error::NotSolvable {
        k,
        w,
        min_eigenvalue: min_symmetric_eigenvalue(mat),
        condition,
    })
}

/// One step of the literal recursion: tables over the support of the
/// previous noise value.
#[derive(Debug, Clone, PartialEq)]
pub struct StageLiteral {
    pub k: usize,
    /// Control Hessian per support value.
    pub upsilon: Vec<DMatrix<f64>>,
    /// Gain numerator per support value (m x n).
    pub m: Vec<DMatrix<f64>>,
    /// Value matrix per support value.
    pub p: Vec<DMatrix<f64>>,
}

impl StageLiteral {
    /// Feedback gain Upsilon^-1 M at support index `iw`; u = -gain * x.
    pub fn gain(&self, iw: usize) -> Result<DMatrix<f64>> {
        let f = spd_or_not_solvable(&self.upsilon[iw], self.k, None, "Upsilon_k > 0")?;
        Ok(f.solve(&self.m[iw]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiteralSchedule {
    pub horizon: usize,
    pub sigma2: f64,
    pub support: Vec<f64>,
    pub probs: Vec<f64>,
    /// Stages indexed by k, 0..=horizon.
    pub stages: Vec<StageLiteral>,
    pub p_terminal: DMatrix<f64>,
}

impl LiteralSchedule {
    pub fn n(&self) -> usize {
        self.p_terminal.nrows()
    }
    pub fn m_dim(&self) -> usize {
        self.stages[0].upsilon[0].nrows()
    }
}

/// One literal backstep from the averaged next value matrix.
pub fn backstep_literal(
    model: &SystemModel,
    p_next: &DMatrix<f64>,
    support: &[f64],
    k: usize,
) -> Result<StageLiteral> {
    let s2 = model.sigma2;
    let b1_term = sym_part(&(model.b1.transpose() * p_next * &model.b1)) * s2;
    let a_core =
        sym_part(&(model.a0.transpose() * p_next * &model.a0)) + sym_part(&(model.a1.transpose() * p_next * &model.a1)) * s2;
    let m_core = model.b0.transpose() * p_next * &model.a0
        + (model.b1.transpose() * p_next * &model.a1) * s2;

    let mut upsilon = Vec::with_capacity(support.len());
    let mut m_tab = Vec::with_capacity(support.len());
    let mut p_tab = Vec::with_capacity(support.len());
    for &w in support {
        let bw = &model.b0 + &model.b2 * w;
        let ups = sym_part(&(&model.r + &b1_term + bw.transpose() * p_next * &bw));
        let f = spd_or_not_solvable(&ups, k, Some(w), "Upsilon_k > 0")?;
        let m_k = &m_core + (model.b2.transpose() * p_next * &model.a0) * w;
        let p_k = sym_part(&(&a_core + &model.q - m_k.transpose() * f.solve(&m_k)));
        upsilon.push(ups);
        m_tab.push(m_k);
        p_tab.push(p_k);
    }
    Ok(StageLiteral {
        k,
        upsilon,
        m: m_tab,
        p: p_tab,
    })
}

/// Run the literal recursion from P_terminal down to step 0. Each backstep
/// sees the probability-weighted average of the previous stage's P table.
pub fn solve_literal(model: &SystemModel, noise: &NoiseSpec) -> Result<LiteralSchedule> {
    if model.delay != 0 {
        return Err(Error::DelayMismatch {
            op: "solve_literal",
            expected: 0,
            found: usize::from(model.delay),
        });
    }
    check_noise(model, noise)?;
    let (support, probs) = noise.finite_support("solve_literal")?;

    let mut stages: Vec<StageLiteral> = Vec::with_capacity(model.horizon + 1);
    let mut p_next = model.p_terminal.clone();
    for k in (0..=model.horizon).rev() {
        let stage = backstep_literal(model, &p_next, support, k)?;
        let mut avg = DMatrix::zeros(model.n, model.n);
        for (j, p) in stage.p.iter().enumerate() {
            avg += p * probs[j];
        }
        p_next = avg;
        stages.push(stage);
    }
    stages.reverse();
    Ok(LiteralSchedule {
        horizon: model.horizon,
        sigma2: model.sigma2,
        support: support.to_vec(),
        probs: probs.to_vec(),
        stages,
        p_terminal: model.p_terminal.clone(),
    })
}

/// One step of the measurable recursion: value, gain, and Hessian tables
/// over the previous-noise support.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub k: usize,
    /// Value matrix per support value.
    pub s: Vec<DMatrix<f64>>,
    /// Feedback gain per support value; u = -G x.
    pub g: Vec<DMatrix<f64>>,
    /// Control Hessian per support value.
    pub h: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurableSchedule {
    pub horizon: usize,
    pub sigma2: f64,
    pub support: Vec<f64>,
    pub probs: Vec<f64>,
    pub stages: Vec<ValueTable>,
    pub p_terminal: DMatrix<f64>,
}

impl MeasurableSchedule {
    pub fn n(&self) -> usize {
        self.p_terminal.nrows()
    }
    pub fn m_dim(&self) -> usize {
        self.stages[0].h[0].nrows()
    }
}

/// One measurable backstep. `s_next[j]` is the next step's value matrix
/// conditioned on the current noise landing on support value j.
pub fn backstep_measurable(
    model: &SystemModel,
    s_next: &[DMatrix<f64>],
    support: &[f64],
    probs: &[f64],
    k: usize,
) -> Result<ValueTable> {
    let n = model.n;
    let m = model.m;
    let a_parts: Vec<DMatrix<f64>> = support.iter().map(|&v| model.a_of(v)).collect();

    // The state part of the expectation does not depend on w.
    let mut s_core = model.q.clone();
    for j in 0..support.len() {
        s_core += sym_part(&(a_parts[j].transpose() * &s_next[j] * &a_parts[j])) * probs[j];
    }

    let mut s_tab = Vec::with_capacity(support.len());
    let mut g_tab = Vec::with_capacity(support.len());
    let mut h_tab = Vec::with_capacity(support.len());
    for &w in support {
        let mut h = model.r.clone();
        let mut l = DMatrix::<f64>::zeros(m, n);
        for (j, &v) in support.iter().enumerate() {
            let b = model.b_of(v, w);
            h += (b.transpose() * &s_next[j] * &b) * probs[j];
            l += (b.transpose() * &s_next[j] * &a_parts[j]) * probs[j];
        }
        let h = sym_part(&h);
        let f = spd_or_not_solvable(&h, k, Some(w), "Upsilon_k > 0")?;
        let g = f.solve(&l);
        let s = sym_part(&(&s_core - l.transpose() * &g));
        s_tab.push(s);
        g_tab.push(g);
        h_tab.push(h);
    }
    Ok(ValueTable {
        k,
        s: s_tab,
        g: g_tab,
        h: h_tab,
    })
}

/// Exact dynamic programming over the information state (x, previous
/// noise), for finite-support laws.
pub fn solve_measurable(model: &SystemModel, noise: &NoiseSpec) -> Result<MeasurableSchedule> {
    if model.delay != 0 {
        return Err(Error::DelayMismatch {
            op: "solve_measurable",
            expected: 0,
            found: usize::from(model.delay),
        });
    }
    check_noise(model, noise)?;
    let (support, probs) = noise.finite_support("solve_measurable")?;

    let mut stages: Vec<ValueTable> = Vec::with_capacity(model.horizon + 1);
    let mut s_next: Vec<DMatrix<f64>> = vec![model.p_terminal.clone(); support.len()];
    for k in (0..=model.horizon).rev() {
        let stage = backstep_measurable(model, &s_next, support, probs, k)?;
        s_next = stage.s.clone();
        stages.push(stage);
    }
    stages.reverse();
    Ok(MeasurableSchedule {
        horizon: model.horizon,
        sigma2: model.sigma2,
        support: support.to_vec(),
        probs: probs.to_vec(),
        stages,
        p_terminal: model.p_terminal.clone(),
    })
}

/// One step of the white-noise specialization (B2 = 0): a single matrix
/// sequence, no tables.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteStage {
    pub k: usize,
    pub p: DMatrix<f64>,
    /// Gain numerator (m x n).
    pub m_bar: DMatrix<f64>,
    /// Effective control Hessian R + B0' P B0 + sigma2 B1' P B1.
    pub r: DMatrix<f64>,
}

impl WhiteStage {
    /// Feedback gain R_k^-1 M_bar_k; u = -gain * x.
    pub fn gain(&self) -> Result<DMatrix<f64>> {
        let f = spd_or_not_solvable(&self.r, self.k, None, "Upsilon_k > 0")?;
        Ok(f.solve(&self.m_bar))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WhiteSchedule {
    pub horizon: usize,
    pub sigma2: f64,
    pub stages: Vec<WhiteStage>,
    pub p_terminal: DMatrix<f64>,
}

impl WhiteSchedule {
    pub fn n(&self) -> usize {
        self.p_terminal.nrows()
    }
    pub fn m_dim(&self) -> usize {
        self.stages[0].r.nrows()
    }
}

/// White-noise recursion; requires B2 = 0 and ignores the noise law beyond
/// sigma2.
pub fn solve_white(model: &SystemModel) -> Result<WhiteSchedule> {
    if model.delay != 0 {
        return Err(Error::DelayMismatch {
            op: "solve_white",
            expected: 0,
            found: usize::from(model.delay),
        });
    }
    if !model.b2_is_zero() {
        return Err(Error::RequiresB2Zero);
    }
    let s2 = model.sigma2;
    let mut stages: Vec<WhiteStage> = Vec::with_capacity(model.horizon + 1);
    let mut p_next = model.p_terminal.clone();
    for k in (0..=model.horizon).rev() {
        let r_k = sym_part(
            &(&model.r
                + model.b0.transpose() * &p_next * &model.b0
                + (model.b1.transpose() * &p_next * &model.b1) * s2),
        );
        let f = spd_or_not_solvable(&r_k, k, None, "Upsilon_k > 0")?;
        let m_bar = model.b0.transpose() * &p_next * &model.a0
            + (model.b1.transpose() * &p_next * &model.a1) * s2;
        let p = sym_part(
            &(model.a0.transpose() * &p_next * &model.a0
                + (model.a1.transpose() * &p_next * &model.a1) * s2
                + &model.q
                - m_bar.transpose() * f.solve(&m_bar)),
        );
        stages.push(WhiteStage {
            k,
            p: p.clone(),
            m_bar,
            r: r_k,
        });
        p_next = p;
    }
    stages.reverse();
    Ok(WhiteSchedule {
        horizon: model.horizon,
        sigma2: model.sigma2,
        stages,
        p_terminal: model.p_terminal.clone(),
    })
}

/// Predicted optimal cost x0' P_0(w_prev) x0 of a delay-free schedule.
/// Table-based schedules index the step-0 table at w_prev exactly.
pub fn optimal_value(schedule: &Schedule, init: &InitialCondition) -> Result<f64> {
    let p0 = match schedule {
        Schedule::Literal(s) => {
            let iw = support_index(&s.support, init.w_prev)?;
            s.stages[0].p[iw].clone()
        }
        Schedule::Measurable(s) => {
            let iw = support_index(&s.support, init.w_prev)?;
            s.stages[0].s[iw].clone()
        }
        Schedule::White(s) => s.stages[0].p.clone(),
        Schedule::Delayed(_) => {
            return Err(Error::UnsupportedSchedule {
                op: "optimal_value",
                kind: "delayed",
            })
        }
    };
    if p0.nrows() != init.x0.len() {
        return Err(Error::DimensionMismatch {
            field: "init.x0".into(),
            expected_rows: p0.nrows(),
            expected_cols: 1,
            found_rows: init.x0.len(),
            found_cols: 1,
        });
    }
    Ok(crate::linalg::quad_form(&p0, &init.x0, &init.x0))
}
