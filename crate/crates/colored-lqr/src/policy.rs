//! Feedback policies: uniform evaluation interface over the schedule
//! kinds, explicit linear gain sequences, and oracle policy trees.
//!
//! Every policy is a deterministic function of (k, x, u_prev, noise
//! history); all kinds are positively homogeneous of degree one in x (and
//! in (x, u_prev) for the delayed kind).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::oracle::PolicyTree;
use crate::riccati_delay::{control_delayed, DelayedSchedule};
use crate::riccati_free::{
    support_index, LiteralSchedule, MeasurableSchedule, WhiteSchedule,
};
use crate::schedule::Schedule;

#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    RiccatiLiteral(LiteralSchedule),
    RiccatiMeasurable(MeasurableSchedule),
    RiccatiDelayed(DelayedSchedule),
    /// Optimal adapted controls on the noise tree, one vector per history.
    OracleTree(PolicyTree),
    Zero { m: usize, delay: usize },
    /// `u_k = -gains[k] x_k`.
    Linear { gains: Vec<DMatrix<f64>>, delay: usize },
}

impl Policy {
    pub fn delay(&self) -> usize {
        match self {
            Policy::RiccatiLiteral(_) | Policy::RiccatiMeasurable(_) => 0,
            Policy::RiccatiDelayed(_) => 1,
            Policy::OracleTree(t) => t.delay,
            Policy::Zero { delay, .. } | Policy::Linear { delay, .. } => *delay,
        }
    }

    pub fn m_dim(&self) -> usize {
        match self {
            Policy::RiccatiLiteral(s) => s.m_dim(),
            Policy::RiccatiMeasurable(s) => s.m_dim(),
            Policy::RiccatiDelayed(s) => s.m_dim(),
            Policy::OracleTree(t) => t.m,
            Policy::Zero { m, .. } => *m,
            Policy::Linear { gains, .. } => gains[0].nrows(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Policy::RiccatiLiteral(_) => "literal",
            Policy::RiccatiMeasurable(_) => "measurable",
            Policy::RiccatiDelayed(_) => "delayed",
            Policy::OracleTree(_) => "oracle",
            Policy::Zero { .. } => "zero",
            Policy::Linear { .. } => "linear",
        }
    }

    /// White schedules act through their explicit gain sequence.
    pub fn from_white(sched: &WhiteSchedule) -> Result<Policy> {
        let gains = sched
            .stages
            .iter()
            .map(|st| st.gain())
            .collect::<Result<Vec<_>>>()?;
        Ok(Policy::Linear { gains, delay: 0 })
    }

    pub fn from_schedule(sched: Schedule) -> Result<Policy> {
        Ok(match sched {
            Schedule::Literal(s) => Policy::RiccatiLiteral(s),
            Schedule::Measurable(s) => Policy::RiccatiMeasurable(s),
            Schedule::White(s) => Policy::from_white(&s)?,
            Schedule::Delayed(s) => Policy::RiccatiDelayed(s),
        })
    }

    /// Control at step k given the full noise history
    /// `past` = (w_{-1}, w_0, ..., w_{k-1}), length k+1.
    pub fn control_at(
        &self,
        k: usize,
        x: &DVector<f64>,
        u_prev: &DVector<f64>,
        past: &[f64],
    ) -> Result<DVector<f64>> {
        if past.len() != k + 1 {
            return Err(Error::DimensionMismatch {
                field: "past noises".into(),
                expected_rows: k + 1,
                expected_cols: 1,
                found_rows: past.len(),
                found_cols: 1,
            });
        }
        let w_prev = past[k];
        match self {
            Policy::RiccatiLiteral(_) | Policy::RiccatiMeasurable(_) => {
                self.control_free(k, x, w_prev)
            }
            Policy::RiccatiDelayed(s) => control_delayed(s, k, x, u_prev, w_prev),
            Policy::OracleTree(t) => t.control(k, &past[1..]).cloned(),
            Policy::Zero { m, .. } => Ok(DVector::zeros(*m)),
            Policy::Linear { gains, .. } => self.linear_control(gains, k, x),
        }
    }

    /// Delay-free control from the previous noise value alone.
    pub fn control_free(&self, k: usize, x: &DVector<f64>, w_prev: f64) -> Result<DVector<f64>> {
        if self.delay() != 0 {
            return Err(Error::DelayMismatch {
                op: "control_free",
                expected: 0,
                found: self.delay(),
            });
        }
        match self {
            Policy::RiccatiLiteral(s) => {
                let stage = s.stages.get(k).ok_or(Error::IndexOutOfRange {
                    what: "decision step",
                    index: k,
                    limit: s.horizon + 1,
                })?;
                let iw = support_index(&s.support, w_prev)?;
                let gain = stage.gain(iw)?;
                Ok(-(gain * x))
            }
            Policy::RiccatiMeasurable(s) => {
                let stage = s.stages.get(k).ok_or(Error::IndexOutOfRange {
                    what: "decision step",
                    index: k,
                    limit: s.horizon + 1,
                })?;
                let iw = support_index(&s.support, w_prev)?;
                Ok(-(&stage.g[iw] * x))
            }
            Policy::OracleTree(_) => Err(Error::UnsupportedPolicy {
                policy: "oracle tree",
                reason: "controls are indexed by the full noise history, not just w_prev",
            }),
            Policy::Zero { m, .. } => Ok(DVector::zeros(*m)),
            Policy::Linear { gains, .. } => self.linear_control(gains, k, x),
            Policy::RiccatiDelayed(_) => unreachable!("delay checked above"),
        }
    }

    fn linear_control(
        &self,
        gains: &[DMatrix<f64>],
        k: usize,
        x: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let g = gains.get(k).ok_or(Error::IndexOutOfRange {
            what: "decision step",
            index: k,
            limit: gains.len(),
        })?;
        if g.ncols() != x.len() {
            return Err(Error::DimensionMismatch {
                field: "x".into(),
                expected_rows: g.ncols(),
                expected_cols: 1,
                found_rows: x.len(),
                found_cols: 1,
            });
        }
        Ok(-(g * x))
    }
}

/// The delay-free costate relation: lambda_{k-1} = P_k(w_prev) x_k for
/// 0 <= k <= N+1, with P_{N+1} the terminal weight.
pub fn costate_relation_free(
    schedule: &Schedule,
    k: usize,
    x: &DVector<f64>,
    w_prev: f64,
) -> Result<DVector<f64>> {
    let p = value_matrix_free(schedule, k, w_prev)?;
    if p.ncols() != x.len() {
        return Err(Error::DimensionMismatch {
            field: "x".into(),
            expected_rows: p.ncols(),
            expected_cols: 1,
            found_rows: x.len(),
            found_cols: 1,
        });
    }
    Ok(p * x)
}

/// Value matrix P_k(w_prev) of a delay-free schedule, with k = N+1 mapping
/// to the terminal weight.
pub fn value_matrix_free(schedule: &Schedule, k: usize, w_prev: f64) -> Result<DMatrix<f64>> {
    let horizon = schedule.horizon();
    if k > horizon + 1 {
        return Err(Error::IndexOutOfRange {
            what: "value step",
            index: k,
            limit: horizon + 2,
        });
    }
    match schedule {
        Schedule::Literal(s) => {
            if k == horizon + 1 {
                return Ok(s.p_terminal.clone());
            }
            let iw = support_index(&s.support, w_prev)?;
            Ok(s.stages[k].p[iw].clone())
        }
        Schedule::Measurable(s) => {
            if k == horizon + 1 {
                return Ok(s.p_terminal.clone());
            }
            let iw = support_index(&s.support, w_prev)?;
            Ok(s.stages[k].s[iw].clone())
        }
        Schedule::White(s) => {
            if k == horizon + 1 {
                return Ok(s.p_terminal.clone());
            }
            Ok(s.stages[k].p.clone())
        }
        Schedule::Delayed(_) => Err(Error::UnsupportedSchedule {
            op: "value_matrix_free",
            kind: "delayed",
        }),
    }
}
