//! Serializable wrapper around the four schedule kinds.
//!
//! Schedules round-trip through YAML bit for bit: floats are written in
//! shortest form that parses back to the identical value, so solving,
//! saving, loading, and simulating gives the same numbers as solving and
//! simulating in one process.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::riccati_delay::{DelayedSchedule, DelayedStage};
use crate::riccati_free::{
    LiteralSchedule, MeasurableSchedule, StageLiteral, ValueTable, WhiteSchedule, WhiteStage,
};

#[derive(Debug, Clone, PartialEq)]
pub enum Schedule {
    Literal(LiteralSchedule),
    Measurable(MeasurableSchedule),
    White(WhiteSchedule),
    Delayed(DelayedSchedule),
}

impl Schedule {
    pub fn kind(&self) -> &'static str {
        match self {
            Schedule::Literal(_) => "literal",
            Schedule::Measurable(_) => "measurable",
            Schedule::White(_) => "white",
            Schedule::Delayed(_) => "delayed",
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            Schedule::Literal(s) => s.horizon,
            Schedule::Measurable(s) => s.horizon,
            Schedule::White(s) => s.horizon,
            Schedule::Delayed(s) => s.horizon,
        }
    }

    pub fn delay(&self) -> usize {
        match self {
            Schedule::Delayed(_) => 1,
            _ => 0,
        }
    }

    pub fn n(&self) -> usize {
        match self {
            Schedule::Literal(s) => s.n(),
            Schedule::Measurable(s) => s.n(),
            Schedule::White(s) => s.n(),
            Schedule::Delayed(s) => s.n(),
        }
    }

    pub fn m_dim(&self) -> usize {
        match self {
            Schedule::Literal(s) => s.m_dim(),
            Schedule::Measurable(s) => s.m_dim(),
            Schedule::White(s) => s.m_dim(),
            Schedule::Delayed(s) => s.m_dim(),
        }
    }

    pub fn to_yaml(&self) -> Result<String> {
        serde_yaml::to_string(&ScheduleDto::from(self)).map_err(|e| Error::Parse {
            context: format!("serializing schedule: {e}"),
        })
    }

    pub fn from_yaml(text: &str) -> Result<Schedule> {
        let dto: ScheduleDto = serde_yaml::from_str(text).map_err(|e| Error::Parse {
            context: format!("schedule document: {e}"),
        })?;
        dto.into_schedule()
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_yaml()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Schedule> {
        Schedule::from_yaml(&std::fs::read_to_string(path)?)
    }
}

type Rows = Vec<Vec<f64>>;

fn mat_to_rows(m: &DMatrix<f64>) -> Rows {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn rows_to_mat(rows: &Rows, what: &str) -> Result<DMatrix<f64>> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::Parse {
            context: format!("{what}: matrix must have at least one row and column"),
        });
    }
    let cols = rows[0].len();
    let mut flat = Vec::with_capacity(rows.len() * cols);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != cols {
            return Err(Error::Parse {
                context: format!("{what}: row {i} has {} entries, expected {cols}", row.len()),
            });
        }
        for &v in row {
            if !v.is_finite() {
                return Err(Error::Parse {
                    context: format!("{what}: non-finite entry"),
                });
            }
            flat.push(v);
        }
    }
    Ok(DMatrix::from_row_slice(rows.len(), cols, &flat))
}

fn mats_to_rows(ms: &[DMatrix<f64>]) -> Vec<Rows> {
    ms.iter().map(mat_to_rows).collect()
}

fn rows_to_mats(rs: &[Rows], count: usize, what: &str) -> Result<Vec<DMatrix<f64>>> {
    if rs.len() != count {
        return Err(Error::Parse {
            context: format!("{what}: expected {count} tables, found {}", rs.len()),
        });
    }
    rs.iter().map(|r| rows_to_mat(r, what)).collect()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LiteralStageDto {
    k: usize,
    upsilon: Vec<Rows>,
    m: Vec<Rows>,
    p: Vec<Rows>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ValueTableDto {
    k: usize,
    s: Vec<Rows>,
    g: Vec<Rows>,
    h: Vec<Rows>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WhiteStageDto {
    k: usize,
    p: Rows,
    m_bar: Rows,
    r: Rows,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DelayedStageDto {
    k: usize,
    p: Rows,
    r: Rows,
    t0: Rows,
    t1: Rows,
    f: Rows,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum ScheduleDto {
    Literal {
        horizon: usize,
        sigma2: f64,
        support: Vec<f64>,
        probs: Vec<f64>,
        p_terminal: Rows,
        stages: Vec<LiteralStageDto>,
    },
    Measurable {
        horizon: usize,
        sigma2: f64,
        support: Vec<f64>,
        probs: Vec<f64>,
        p_terminal: Rows,
        stages: Vec<ValueTableDto>,
    },
    White {
        horizon: usize,
        sigma2: f64,
        p_terminal: Rows,
        stages: Vec<WhiteStageDto>,
    },
    Delayed {
        horizon: usize,
        sigma2: f64,
        p_terminal: Rows,
        b2: Rows,
        stages: Vec<DelayedStageDto>,
    },
}

impl From<&Schedule> for ScheduleDto {
    fn from(s: &Schedule) -> Self {
        match s {
            Schedule::Literal(s) => ScheduleDto::Literal {
                horizon: s.horizon,
                sigma2: s.sigma2,
                support: s.support.clone(),
                probs: s.probs.clone(),
                p_terminal: mat_to_rows(&s.p_terminal),
                stages: s
                    .stages
                    .iter()
                    .map(|st| LiteralStageDto {
                        k: st.k,
                        upsilon: mats_to_rows(&st.upsilon),
                        m: mats_to_rows(&st.m),
                        p: mats_to_rows(&st.p),
                    })
                    .collect(),
            },
            Schedule::Measurable(s) => ScheduleDto::Measurable {
                horizon: s.horizon,
                sigma2: s.sigma2,
                support: s.support.clone(),
                probs: s.probs.clone(),
                p_terminal: mat_to_rows(&s.p_terminal),
                stages: s
                    .stages
                    .iter()
                    .map(|st| ValueTableDto {
                        k: st.k,
                        s: mats_to_rows(&st.s),
                        g: mats_to_rows(&st.g),
                        h: mats_to_rows(&st.h),
                    })
                    .collect(),
            },
            Schedule::White(s) => ScheduleDto::White {
                horizon: s.horizon,
                sigma2: s.sigma2,
                p_terminal: mat_to_rows(&s.p_terminal),
                stages: s
                    .stages
                    .iter()
                    .map(|st| WhiteStageDto {
                        k: st.k,
                        p: mat_to_rows(&st.p),
                        m_bar: mat_to_rows(&st.m_bar),
                        r: mat_to_rows(&st.r),
                    })
                    .collect(),
            },
            Schedule::Delayed(s) => ScheduleDto::Delayed {
                horizon: s.horizon,
                sigma2: s.sigma2,
                p_terminal: mat_to_rows(&s.p_terminal),
                b2: mat_to_rows(&s.b2),
                stages: s
                    .stages
                    .iter()
                    .map(|st| DelayedStageDto {
                        k: st.k,
                        p: mat_to_rows(&st.p),
                        r: mat_to_rows(&st.r),
                        t0: mat_to_rows(&st.t0),
                        t1: mat_to_rows(&st.t1),
                        f: mat_to_rows(&st.f),
                    })
                    .collect(),
            },
        }
    }
}

fn check_stage_indices<T>(stages: &[T], horizon: usize, key: impl Fn(&T) -> usize) -> Result<()> {
    if stages.len() != horizon + 1 {
        return Err(Error::Parse {
            context: format!(
                "schedule: expected {} stages for horizon {horizon}, found {}",
                horizon + 1,
                stages.len()
            ),
        });
    }
    for (i, st) in stages.iter().enumerate() {
        if key(st) != i {
            return Err(Error::Parse {
                context: format!("schedule: stage {i} is labeled k = {}", key(st)),
            });
        }
    }
    Ok(())
}

fn check_support(support: &[f64], probs: &[f64]) -> Result<()> {
    if support.is_empty() || support.len() != probs.len() {
        return Err(Error::Parse {
            context: format!(
                "schedule: support has {} values but {} probabilities",
                support.len(),
                probs.len()
            ),
        });
    }
    for v in support.iter().chain(probs.iter()) {
        if !v.is_finite() {
            return Err(Error::Parse {
                context: "schedule: non-finite support or probability entry".into(),
            });
        }
    }
    Ok(())
}

impl ScheduleDto {
    fn into_schedule(self) -> Result<Schedule> {
        match self {
            ScheduleDto::Literal {
                horizon,
                sigma2,
                support,
                probs,
                p_terminal,
                stages,
            } => {
                check_support(&support, &probs)?;
                check_stage_indices(&stages, horizon, |st| st.k)?;
                let s = support.len();
                let stages = stages
                    .iter()
                    .map(|st| {
                        Ok(StageLiteral {
                            k: st.k,
                            upsilon: rows_to_mats(&st.upsilon, s, "stage upsilon")?,
                            m: rows_to_mats(&st.m, s, "stage m")?,
                            p: rows_to_mats(&st.p, s, "stage p")?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Schedule::Literal(LiteralSchedule {
                    horizon,
                    sigma2,
                    support,
                    probs,
                    stages,
                    p_terminal: rows_to_mat(&p_terminal, "p_terminal")?,
                }))
            }
            ScheduleDto::Measurable {
                horizon,
                sigma2,
                support,
                probs,
                p_terminal,
                stages,
            } => {
                check_support(&support, &probs)?;
                check_stage_indices(&stages, horizon, |st| st.k)?;
                let s = support.len();
                let stages = stages
                    .iter()
                    .map(|st| {
                        Ok(ValueTable {
                            k: st.k,
                            s: rows_to_mats(&st.s, s, "stage s")?,
                            g: rows_to_mats(&st.g, s, "stage g")?,
                            h: rows_to_mats(&st.h, s, "stage h")?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Schedule::Measurable(MeasurableSchedule {
                    horizon,
                    sigma2,
                    support,
                    probs,
                    stages,
                    p_terminal: rows_to_mat(&p_terminal, "p_terminal")?,
                }))
            }
            ScheduleDto::White {
                horizon,
                sigma2,
                p_terminal,
                stages,
            } => {
                check_stage_indices(&stages, horizon, |st| st.k)?;
                let stages = stages
                    .iter()
                    .map(|st| {
                        Ok(WhiteStage {
                            k: st.k,
                            p: rows_to_mat(&st.p, "stage p")?,
                            m_bar: rows_to_mat(&st.m_bar, "stage m_bar")?,
                            r: rows_to_mat(&st.r, "stage r")?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Schedule::White(WhiteSchedule {
                    horizon,
                    sigma2,
                    stages,
                    p_terminal: rows_to_mat(&p_terminal, "p_terminal")?,
                }))
            }
            ScheduleDto::Delayed {
                horizon,
                sigma2,
                p_terminal,
                b2,
                stages,
            } => {
                check_stage_indices(&stages, horizon, |st| st.k)?;
                let stages = stages
                    .iter()
                    .map(|st| {
                        Ok(DelayedStage {
                            k: st.k,
                            p: rows_to_mat(&st.p, "stage p")?,
                            r: rows_to_mat(&st.r, "stage r")?,
                            t0: rows_to_mat(&st.t0, "stage t0")?,
                            t1: rows_to_mat(&st.t1, "stage t1")?,
                            f: rows_to_mat(&st.f, "stage f")?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Schedule::Delayed(DelayedSchedule {
                    horizon,
                    sigma2,
                    stages,
                    p_terminal: rows_to_mat(&p_terminal, "p_terminal")?,
                    b2: rows_to_mat(&b2, "b2")?,
                }))
            }
        }
    }
}
