//! Small dense linear-algebra helpers: symmetry utilities, a Cholesky
//! factorization with an explicit pivot floor, an LDL' factorization with a
//! relative pivot test, and a compensated accumulator.
//!
//! The factorizations are deliberately local: the pivot thresholds double as
//! the definiteness tests the solvers report on, so their failure semantics
//! must be exact rather than whatever a general-purpose routine happens to do.

use nalgebra::{DMatrix, DVector};

use crate::tolerances::{KKT_REL_PIVOT, SPD_PIVOT_FLOOR};

/// Largest `|X[i,j] - X[j,i]|` over all pairs.
pub fn max_asymmetry(x: &DMatrix<f64>) -> f64 {
    let n = x.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((x[(i, j)] - x[(j, i)]).abs());
        }
    }
    worst
}

/// (X + X') / 2.
pub fn sym_part(x: &DMatrix<f64>) -> DMatrix<f64> {
    (x + x.transpose()) * 0.5
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_symmetric_eigenvalue(x: &DMatrix<f64>) -> f64 {
    if x.nrows() == 0 {
        return 0.0;
    }
    x.clone()
        .symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
///
/// Fails (returns `None`) as soon as a pivot drops to `SPD_PIVOT_FLOOR` or
/// below; success is the crate's working definition of "positive definite".
#[derive(Debug, Clone)]
pub struct SpdFactor {
    l: DMatrix<f64>,
}

impl SpdFactor {
    pub fn new(a: &DMatrix<f64>) -> Option<Self> {
        let n = a.nrows();
        debug_assert_eq!(n, a.ncols());
        let mut l = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if d <= SPD_PIVOT_FLOOR {
                return None;
            }
            let dj = d.sqrt();
            l[(j, j)] = dj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / dj;
            }
        }
        Some(SpdFactor { l })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// Solve A x = b for one right-hand side.
    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let mut y = b.clone();
        for i in 0..n {
            for k in 0..i {
                let v = y[k];
                y[i] -= self.l[(i, k)] * v;
            }
            y[i] /= self.l[(i, i)];
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                let v = y[k];
                y[i] -= self.l[(k, i)] * v;
            }
            y[i] /= self.l[(i, i)];
        }
        y
    }

    /// Solve A X = B column by column.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::<f64>::zeros(b.nrows(), b.ncols());
        for j in 0..b.ncols() {
            let col = DVector::from_column_slice(b.column(j).as_slice());
            out.set_column(j, &self.solve_vec(&col));
        }
        out
    }
}

/// LDL' factorization without pivoting, for the stationarity system of the
/// path-enumeration optimizer. A pivot below `KKT_REL_PIVOT` times the
/// largest pivot seen so far (or a nonpositive pivot) reports the offending
/// values so the caller can raise a singularity error.
#[derive(Debug, Clone)]
pub struct LdlFactor {
    l: DMatrix<f64>,
    d: DVector<f64>,
}

/// Pivot failure: (index, pivot value, largest pivot seen).
pub type PivotFailure = (usize, f64, f64);

impl LdlFactor {
    pub fn new(a: &DMatrix<f64>) -> std::result::Result<Self, PivotFailure> {
        let n = a.nrows();
        debug_assert_eq!(n, a.ncols());
        let mut l = DMatrix::<f64>::identity(n, n);
        let mut d = DVector::<f64>::zeros(n);
        let mut max_pivot = 0.0f64;
        for j in 0..n {
            let mut dj = a[(j, j)];
            for k in 0..j {
                dj -= l[(j, k)] * l[(j, k)] * d[k];
            }
            max_pivot = max_pivot.max(dj.abs());
            if dj <= KKT_REL_PIVOT * max_pivot || !dj.is_finite() {
                return Err((j, dj, max_pivot));
            }
            d[j] = dj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)] * d[k];
                }
                l[(i, j)] = s / dj;
            }
        }
        Ok(LdlFactor { l, d })
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.d.len();
        let mut y = b.clone();
        for i in 0..n {
            for k in 0..i {
                let v = y[k];
                y[i] -= self.l[(i, k)] * v;
            }
        }
        for i in 0..n {
            y[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                let v = y[k];
                y[i] -= self.l[(k, i)] * v;
            }
        }
        y
    }
}

/// Neumaier-compensated running sum; insertion order fixes the result bits.
#[derive(Debug, Clone, Default)]
pub struct Accumulator {
    sum: f64,
    comp: f64,
}

impl Accumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// x' S y as a scalar.
pub fn quad_form(s: &DMatrix<f64>, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    (x.transpose() * s * y)[(0, 0)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_factors_and_solves() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let f = SpdFactor::new(&a).expect("spd");
        let b = DVector::from_column_slice(&[1.0, 2.0]);
        let x = f.solve_vec(&b);
        let r = &a * &x - &b;
        assert!(r.amax() < 1e-14);
    }

    #[test]
    fn cholesky_rejects_indefinite_and_near_singular() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(SpdFactor::new(&a).is_none());
        // Pivot exactly at the floor must fail, just above must pass.
        let tiny = DMatrix::from_row_slice(1, 1, &[SPD_PIVOT_FLOOR]);
        assert!(SpdFactor::new(&tiny).is_none());
        let ok = DMatrix::from_row_slice(1, 1, &[SPD_PIVOT_FLOOR * 10.0]);
        assert!(SpdFactor::new(&ok).is_some());
    }

    #[test]
    fn ldl_matches_direct_solve() {
        let a = DMatrix::from_row_slice(3, 3, &[5.0, 1.0, 0.5, 1.0, 4.0, 0.25, 0.5, 0.25, 3.0]);
        let f = LdlFactor::new(&a).expect("pd");
        let b = DVector::from_column_slice(&[1.0, -2.0, 0.5]);
        let x = f.solve_vec(&b);
        assert!((&a * &x - &b).amax() < 1e-13);
    }

    #[test]
    fn ldl_flags_relative_pivot_collapse() {
        // Second column is nearly a multiple of the first.
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0 + 1e-13]);
        let err = LdlFactor::new(&a).unwrap_err();
        assert_eq!(err.0, 1);
    }

    #[test]
    fn compensated_sum_beats_naive() {
        let mut acc = Accumulator::new();
        let vals = [1.0e16, 1.0, -1.0e16, 1.0];
        let mut naive = 0.0;
        for v in vals {
            acc.add(v);
            naive += v;
        }
        assert_eq!(acc.value(), 2.0);
        assert_ne!(naive, 2.0);
    }
}
