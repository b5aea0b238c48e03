//! Problem data: system matrices, noise law, initial condition.
//!
//! The plant is
//!
//! ```text
//! x_{k+1} = (A0 + A1 w_k) x_k + (B0 + B1 w_k + B2 w_{k-1}) u_k        (delay 0)
//! x_{k+1} = (A0 + A1 w_k) x_k + (B0 + B1 w_k + B2 w_{k-1}) u_{k-1}    (delay 1)
//! ```
//!
//! with scalar white noise w_k (mean zero, variance sigma2) and quadratic
//! stage weights Q, R plus a terminal weight. The input channel is "colored"
//! by the one-step-old noise through B2, which is what makes the control at
//! time k interact with information the controller already has.
//!
//! `validate` turns an unchecked description into a [`SystemModel`] or a
//! structured error; `make_noise` does the same for noise laws. Config
//! documents are handled in the `config` submodule.

mod config;

pub use config::{emit_config, load_config, load_config_file, LoadedConfig};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{max_asymmetry, min_symmetric_eigenvalue, sym_part};
use crate::tolerances::{
    MEAN_TOL, PROB_SUM_TOL, PSD_MIN_EIG, SECOND_MOMENT_TOL, SYMMETRY_TOL,
};

/// Unchecked model description. Field meanings match [`SystemModel`];
/// `validate` is the only way to obtain the checked form.
#[derive(Debug, Clone)]
pub struct ModelDescription {
    pub horizon: usize,
    pub delay: u8,
    pub sigma2: f64,
    pub a0: DMatrix<f64>,
    pub a1: DMatrix<f64>,
    pub b0: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    pub b2: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub p_terminal: DMatrix<f64>,
    /// Skip the semidefiniteness gate on Q, R, P_terminal (symmetry and
    /// dimension checks still apply). Lets deliberately indefinite weights
    /// reach the recursions so the definiteness test can report them.
    pub allow_indefinite: bool,
    /// Historical convention toggle: scale the delayed recursion's noise
    /// terms by sigma instead of sigma2.
    pub sigma_first_power: bool,
}

/// Checked problem data. `n` is the state dimension, `m` the input
/// dimension, `horizon` the last controlled step N (time runs 0..=N with a
/// terminal cost on x_{N+1}).
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    pub n: usize,
    pub m: usize,
    pub horizon: usize,
    pub delay: u8,
    pub sigma2: f64,
    pub a0: DMatrix<f64>,
    pub a1: DMatrix<f64>,
    pub b0: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    pub b2: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub p_terminal: DMatrix<f64>,
    pub allow_indefinite: bool,
    pub sigma_first_power: bool,
}

impl SystemModel {
    /// A0 + A1 v.
    pub fn a_of(&self, v: f64) -> DMatrix<f64> {
        &self.a0 + &self.a1 * v
    }

    /// B0 + B1 v + B2 w, where v is the current noise and w the previous one.
    pub fn b_of(&self, v: f64, w: f64) -> DMatrix<f64> {
        &self.b0 + &self.b1 * v + &self.b2 * w
    }

    pub fn b2_is_zero(&self) -> bool {
        self.b2.iter().all(|&v| v == 0.0)
    }

    pub fn is_deterministic(&self) -> bool {
        let zero = |m: &DMatrix<f64>| m.iter().all(|&v| v == 0.0);
        zero(&self.a1) && zero(&self.b1) && zero(&self.b2)
    }

    /// Variance factor used by the delayed recursion; sigma2 unless the
    /// first-power convention toggle is set.
    pub fn delayed_noise_factor(&self) -> f64 {
        if self.sigma_first_power {
            self.sigma2.sqrt()
        } else {
            self.sigma2
        }
    }
}

fn check_dims(
    field: &str,
    m: &DMatrix<f64>,
    rows: usize,
    cols: usize,
) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::DimensionMismatch {
            field: field.to_string(),
            expected_rows: rows,
            expected_cols: cols,
            found_rows: m.nrows(),
            found_cols: m.ncols(),
        });
    }
    Ok(())
}

fn check_finite(field: &str, m: &DMatrix<f64>) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parse {
            context: format!("{field}: entries must be finite"),
        });
    }
    Ok(())
}

/// Check a weight matrix: symmetric within tolerance (then symmetrized
/// exactly), and positive semi-definite unless `allow_indefinite`.
fn check_weight(field: &str, m: &DMatrix<f64>, allow_indefinite: bool) -> Result<DMatrix<f64>> {
    check_finite(field, m)?;
    let asym = max_asymmetry(m);
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric {
            matrix: field.to_string(),
            asymmetry: asym,
        });
    }
    let s = sym_part(m);
    if !allow_indefinite {
        let min_eig = min_symmetric_eigenvalue(&s);
        if min_eig < PSD_MIN_EIG {
            return Err(Error::NotPsd {
                matrix: field.to_string(),
                min_eigenvalue: min_eig,
            });
        }
    }
    Ok(s)
}

/// Check a model description and return the usable form.
///
/// Dimension checks size everything off A0 (n x n) and B0 (n x m). The
/// weights Q, R, P_terminal must be symmetric within 1e-12 (they are then
/// symmetrized exactly) and, unless `allow_indefinite` is set, positive
/// semi-definite with min eigenvalue >= -1e-10.
pub fn validate(desc: ModelDescription) -> Result<SystemModel> {
    let n = desc.a0.nrows();
    let m = desc.b0.ncols();
    if n == 0 {
        return Err(Error::Parse {
            context: "A0: state dimension must be at least 1".into(),
        });
    }
    if m == 0 {
        return Err(Error::Parse {
            context: "B0: input dimension must be at least 1".into(),
        });
    }
    check_dims("A0", &desc.a0, n, n)?;
    check_dims("A1", &desc.a1, n, n)?;
    check_dims("B0", &desc.b0, n, m)?;
    check_dims("B1", &desc.b1, n, m)?;
    check_dims("B2", &desc.b2, n, m)?;
    check_dims("Q", &desc.q, n, n)?;
    check_dims("R", &desc.r, m, m)?;
    check_dims("P_terminal", &desc.p_terminal, n, n)?;
    for (name, mat) in [
        ("A0", &desc.a0),
        ("A1", &desc.a1),
        ("B0", &desc.b0),
        ("B1", &desc.b1),
        ("B2", &desc.b2),
    ] {
        check_finite(name, mat)?;
    }
    if desc.delay > 1 {
        return Err(Error::BadDelay {
            given: desc.delay as i64,
        });
    }
    if !desc.sigma2.is_finite() || desc.sigma2 < 0.0 {
        return Err(Error::BadMoments {
            what: "sigma2".into(),
            value: desc.sigma2,
            expected: 0.0,
            tolerance: 0.0,
        });
    }
    let q = check_weight("Q", &desc.q, desc.allow_indefinite)?;
    let r = check_weight("R", &desc.r, desc.allow_indefinite)?;
    let p_terminal = check_weight("P_terminal", &desc.p_terminal, desc.allow_indefinite)?;
    Ok(SystemModel {
        n,
        m,
        horizon: desc.horizon,
        delay: desc.delay,
        sigma2: desc.sigma2,
        a0: desc.a0,
        a1: desc.a1,
        b0: desc.b0,
        b1: desc.b1,
        b2: desc.b2,
        q,
        r,
        p_terminal,
        allow_indefinite: desc.allow_indefinite,
        sigma_first_power: desc.sigma_first_power,
    })
}

/// Unchecked noise description, as it appears in config documents.
#[derive(Debug, Clone)]
pub enum NoiseDescription {
    /// Symmetric two-point law at +-sigma with probability 1/2 each.
    Rademacher { sigma: f64 },
    Gaussian { sigma2: f64 },
    /// Explicit (value, probability) pairs.
    Finite { support: Vec<(f64, f64)> },
}

/// Validated noise law. Finite supports keep their given order; it fixes
/// table layouts and enumeration order everywhere downstream.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSpec {
    Gaussian { sigma2: f64 },
    Finite { values: Vec<f64>, probs: Vec<f64> },
}

impl NoiseSpec {
    pub fn rademacher(sigma: f64) -> NoiseSpec {
        if sigma == 0.0 {
            NoiseSpec::Finite {
                values: vec![0.0],
                probs: vec![1.0],
            }
        } else {
            NoiseSpec::Finite {
                values: vec![-sigma, sigma],
                probs: vec![0.5, 0.5],
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, NoiseSpec::Finite { .. })
    }

    /// Support values, or an error for the gaussian law. `op` names the
    /// caller for the error message.
    pub fn finite_support(&self, op: &'static str) -> Result<(&[f64], &[f64])> {
        match self {
            NoiseSpec::Finite { values, probs } => Ok((values, probs)),
            NoiseSpec::Gaussian { .. } => Err(Error::RequiresFiniteSupport { op }),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            NoiseSpec::Gaussian { .. } => 0.0,
            NoiseSpec::Finite { values, probs } => {
                values.iter().zip(probs).map(|(v, p)| v * p).sum()
            }
        }
    }

    pub fn second_moment(&self) -> f64 {
        match self {
            NoiseSpec::Gaussian { sigma2 } => *sigma2,
            NoiseSpec::Finite { values, probs } => {
                values.iter().zip(probs).map(|(v, p)| v * v * p).sum()
            }
        }
    }

    /// Index of `w` in the support under exact equality. Nearest-key lookup
    /// is deliberately not offered.
    pub fn support_index(&self, w: f64) -> Result<usize> {
        let (values, _) = self.finite_support("support lookup")?;
        values
            .iter()
            .position(|&v| v == w)
            .ok_or_else(|| Error::UnknownSupportValue {
                value: w,
                support: values.to_vec(),
            })
    }
}

/// Check a noise description: probabilities positive and summing to one
/// within 1e-12, mean zero within 1e-12, distinct finite support values.
pub fn make_noise(desc: &NoiseDescription) -> Result<NoiseSpec> {
    match desc {
        NoiseDescription::Rademacher { sigma } => {
            if !sigma.is_finite() || *sigma < 0.0 {
                return Err(Error::BadMoments {
                    what: "noise.sigma".into(),
                    value: *sigma,
                    expected: 0.0,
                    tolerance: 0.0,
                });
            }
            Ok(NoiseSpec::rademacher(*sigma))
        }
        NoiseDescription::Gaussian { sigma2 } => {
            if !sigma2.is_finite() || *sigma2 < 0.0 {
                return Err(Error::BadMoments {
                    what: "noise.sigma2".into(),
                    value: *sigma2,
                    expected: 0.0,
                    tolerance: 0.0,
                });
            }
            Ok(NoiseSpec::Gaussian { sigma2: *sigma2 })
        }
        NoiseDescription::Finite { support } => {
            if support.is_empty() {
                return Err(Error::BadProbabilities {
                    reason: "support is empty".into(),
                });
            }
            let mut values = Vec::with_capacity(support.len());
            let mut probs = Vec::with_capacity(support.len());
            for (i, &(v, p)) in support.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::BadProbabilities {
                        reason: format!("support value {i} is not finite"),
                    });
                }
                if !p.is_finite() || p <= 0.0 {
                    return Err(Error::BadProbabilities {
                        reason: format!("probability of support value {v} is {p}, must be positive"),
                    });
                }
                if values.contains(&v) {
                    return Err(Error::BadProbabilities {
                        reason: format!("duplicate support value {v}"),
                    });
                }
                values.push(v);
                probs.push(p);
            }
            let total: f64 = probs.iter().sum();
            if (total - 1.0).abs() > PROB_SUM_TOL {
                return Err(Error::BadProbabilities {
                    reason: format!("probabilities sum to {total}, expected 1"),
                });
            }
            let spec = NoiseSpec::Finite { values, probs };
            let mean = spec.mean();
            if mean.abs() > MEAN_TOL {
                return Err(Error::BadMoments {
                    what: "noise mean".into(),
                    value: mean,
                    expected: 0.0,
                    tolerance: MEAN_TOL,
                });
            }
            Ok(spec)
        }
    }
}

/// Pairing a noise law with a model requires the second moment to match the
/// model's sigma2. Entry points that consume both call this first.
pub fn check_noise(model: &SystemModel, noise: &NoiseSpec) -> Result<()> {
    let m2 = noise.second_moment();
    if (m2 - model.sigma2).abs() > SECOND_MOMENT_TOL {
        return Err(Error::BadMoments {
            what: "noise second moment".into(),
            value: m2,
            expected: model.sigma2,
            tolerance: SECOND_MOMENT_TOL,
        });
    }
    Ok(())
}

/// Where a run starts: x0, the already-applied input u_{-1} (delay 1 only),
/// and the already-realized previous noise w_{-1}.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialCondition {
    pub x0: DVector<f64>,
    pub u_prev: DVector<f64>,
    pub w_prev: f64,
}

impl InitialCondition {
    pub fn origin(model: &SystemModel) -> Self {
        InitialCondition {
            x0: DVector::zeros(model.n),
            u_prev: DVector::zeros(model.m),
            w_prev: 0.0,
        }
    }

    /// Origin with every state component moved to `scale`.
    pub fn origin_shifted(model: &SystemModel, scale: f64) -> Self {
        InitialCondition {
            x0: DVector::from_element(model.n, scale),
            u_prev: DVector::zeros(model.m),
            w_prev: 0.0,
        }
    }

    pub fn check_dims(&self, model: &SystemModel) -> Result<()> {
        if self.x0.len() != model.n {
            return Err(Error::DimensionMismatch {
                field: "init.x0".into(),
                expected_rows: model.n,
                expected_cols: 1,
                found_rows: self.x0.len(),
                found_cols: 1,
            });
        }
        if self.u_prev.len() != model.m {
            return Err(Error::DimensionMismatch {
                field: "init.u_prev".into(),
                expected_rows: model.m,
                expected_cols: 1,
                found_rows: self.u_prev.len(),
                found_cols: 1,
            });
        }
        if !self.w_prev.is_finite() || self.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse {
                context: "init: entries must be finite".into(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones_desc() -> ModelDescription {
        let one = DMatrix::from_row_slice(1, 1, &[1.0]);
        ModelDescription {
            horizon: 2,
            delay: 0,
            sigma2: 1.0,
            a0: one.clone(),
            a1: one.clone(),
            b0: one.clone(),
            b1: one.clone(),
            b2: one.clone(),
            q: one.clone(),
            r: one.clone(),
            p_terminal: one,
            allow_indefinite: false,
            sigma_first_power: false,
        }
    }

    #[test]
    fn scalar_colored_model_is_valid() {
        let m = validate(ones_desc()).expect("valid");
        assert_eq!((m.n, m.m, m.horizon), (1, 1, 2));
        assert!(!m.b2_is_zero());
    }

    #[test]
    fn asymmetric_weight_is_rejected() {
        let mut d = ones_desc();
        d.a0 = DMatrix::identity(2, 2);
        d.a1 = DMatrix::zeros(2, 2);
        d.b0 = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        d.b1 = DMatrix::zeros(2, 1);
        d.b2 = DMatrix::zeros(2, 1);
        d.q = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        d.r = DMatrix::from_row_slice(1, 1, &[1.0]);
        d.p_terminal = DMatrix::identity(2, 2);
        match validate(d) {
            Err(Error::NotSymmetric { matrix, asymmetry }) => {
                assert_eq!(matrix, "Q");
                assert!((asymmetry - 0.1).abs() < 1e-15);
            }
            other => panic!("expected NotSymmetric, got {other:?}"),
        }
    }

    #[test]
    fn negative_definite_weight_is_rejected_with_eigenvalue() {
        let mut d = ones_desc();
        d.r = DMatrix::from_row_slice(1, 1, &[-1.0]);
        match validate(d) {
            Err(Error::NotPsd {
                matrix,
                min_eigenvalue,
            }) => {
                assert_eq!(matrix, "R");
                assert!((min_eigenvalue + 1.0).abs() < 1e-12);
            }
            other => panic!("expected NotPsd, got {other:?}"),
        }
    }

    #[test]
    fn allow_indefinite_admits_negative_weights() {
        let mut d = ones_desc();
        d.r = DMatrix::from_row_slice(1, 1, &[-1.0]);
        d.allow_indefinite = true;
        assert!(validate(d).is_ok());
    }

    #[test]
    fn dimension_mismatch_names_the_field() {
        let mut d = ones_desc();
        d.b1 = DMatrix::zeros(2, 1);
        match validate(d) {
            Err(Error::DimensionMismatch { field, .. }) => assert_eq!(field, "B1"),
            other => panic!("expected DimensionMismatch, got {other:?}"),
        }
    }

    #[test]
    fn rademacher_shorthand_expands_to_two_points() {
        let spec = make_noise(&NoiseDescription::Rademacher { sigma: 2.0 }).unwrap();
        match &spec {
            NoiseSpec::Finite { values, probs } => {
                assert_eq!(values, &vec![-2.0, 2.0]);
                assert_eq!(probs, &vec![0.5, 0.5]);
            }
            _ => panic!("expected finite"),
        }
        assert_eq!(spec.mean(), 0.0);
        assert_eq!(spec.second_moment(), 4.0);
    }

    #[test]
    fn asymmetric_two_point_law_with_zero_mean_is_accepted() {
        let spec = make_noise(&NoiseDescription::Finite {
            support: vec![(-2.0, 0.2), (0.5, 0.8)],
        })
        .unwrap();
        assert!(spec.mean().abs() <= 1e-12);
        assert!((spec.second_moment() - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn nonzero_mean_is_rejected() {
        let err = make_noise(&NoiseDescription::Finite {
            support: vec![(-1.0, 0.25), (1.0, 0.75)],
        })
        .unwrap_err();
        assert!(matches!(err, Error::BadMoments { .. }));
    }

    #[test]
    fn bad_probability_mass_is_rejected() {
        let err = make_noise(&NoiseDescription::Finite {
            support: vec![(-1.0, 0.5), (1.0, 0.4)],
        })
        .unwrap_err();
        assert!(matches!(err, Error::BadProbabilities { .. }));
        let err = make_noise(&NoiseDescription::Finite {
            support: vec![(-1.0, 1.5), (1.0, -0.5)],
        })
        .unwrap_err();
        assert!(matches!(err, Error::BadProbabilities { .. }));
    }

    #[test]
    fn second_moment_must_match_model_sigma2() {
        let model = validate(ones_desc()).unwrap();
        let good = NoiseSpec::rademacher(1.0);
        assert!(check_noise(&model, &good).is_ok());
        let bad = NoiseSpec::rademacher(2.0);
        assert!(matches!(
            check_noise(&model, &bad),
            Err(Error::BadMoments { .. })
        ));
    }

    #[test]
    fn support_lookup_is_exact_match_only() {
        let spec = NoiseSpec::rademacher(1.0);
        assert_eq!(spec.support_index(1.0).unwrap(), 1);
        match spec.support_index(0.3) {
            Err(Error::UnknownSupportValue { value, .. }) => assert_eq!(value, 0.3),
            other => panic!("expected UnknownSupportValue, got {other:?}"),
        }
    }

    #[test]
    fn zero_variance_collapses_to_a_single_point()
    {
        let spec = NoiseSpec::rademacher(0.0);
        match &spec {
            NoiseSpec::Finite { values, probs } => {
                assert_eq!(values, &vec![0.0]);
                assert_eq!(probs, &vec![1.0]);
            }
            _ => panic!("expected finite"),
        }
    }
}
