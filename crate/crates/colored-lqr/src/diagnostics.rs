//! Self-verification machinery: cross-method comparison against the
//! oracles, a reduction suite that checks the solvers against their
//! classical special cases, the per-step optimality identity of the
//! white-noise recursion, and seeded random instance generators.

use nalgebra::DMatrix;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::linalg::{quad_form, Accumulator};
use crate::model::{
    check_noise, validate, InitialCondition, ModelDescription, NoiseSpec, SystemModel,
};
use crate::oracle::{
    augmented_delay_lqr, backward_costate, deterministic_riccati, path_qp, stationarity_residual,
};
use crate::policy::Policy;
use crate::riccati_delay::solve_delayed;
use crate::riccati_free::{
    optimal_value, solve_literal, solve_measurable, solve_white, WhiteSchedule,
};
use crate::schedule::Schedule;
use crate::simulate::{enumerate_closed_loop, exact_expected_cost, uniform_open, Ensemble};

// ---------------------------------------------------------------------------
// Telescoping identity of the white-noise recursion.
// ---------------------------------------------------------------------------

/// Per-step decomposition of the white-noise value identity over an
/// enumerated closed loop: for each k, the expected one-step cost surplus
/// E[x'Qx + u'Ru + x_+'P_{k+1}x_+ - x'P_k x] (lhs) equals the expected
/// completed square E[(u + K_k x)' Rbar_k (u + K_k x)] (rhs), for any
/// adapted policy, as long as B2 = 0.
pub fn telescoping_terms(
    model: &SystemModel,
    sched: &WhiteSchedule,
    ensemble: &Ensemble,
    noise: &NoiseSpec,
) -> Result<Vec<(f64, f64)>> {
    if !model.b2_is_zero() {
        return Err(Error::RequiresB2Zero);
    }
    check_noise(model, noise)?;
    if sched.horizon != model.horizon {
        return Err(Error::InconsistentTrajectory {
            detail: format!(
                "schedule horizon {} differs from model horizon {}",
                sched.horizon, model.horizon
            ),
        });
    }
    let steps = model.horizon + 1;
    for traj in &ensemble.trajectories {
        if traj.stage_costs.len() != steps || traj.states.len() != steps + 1 {
            return Err(Error::InconsistentTrajectory {
                detail: "ensemble trajectory length differs from the model horizon".into(),
            });
        }
    }
    let gains: Vec<DMatrix<f64>> = sched
        .stages
        .iter()
        .map(|st| st.gain())
        .collect::<Result<Vec<_>>>()?;

    let mut terms = Vec::with_capacity(steps);
    #[allow(clippy::needless_range_loop)]
    for k in 0..steps {
        let p_k = &sched.stages[k].p;
        let p_next = if k == model.horizon {
            &sched.p_terminal
        } else {
            &sched.stages[k + 1].p
        };
        let rbar = &sched.stages[k].r;
        let mut lhs = Accumulator::new();
        let mut rhs = Accumulator::new();
        for (traj, &prob) in ensemble.trajectories.iter().zip(&ensemble.probs) {
            let x = &traj.states[k];
            let u = &traj.controls[k];
            let x_next = &traj.states[k + 1];
            lhs.add(
                prob * (quad_form(&model.q, x, x) + quad_form(&model.r, u, u)
                    + quad_form(p_next, x_next, x_next)
                    - quad_form(p_k, x, x)),
            );
            let d = u + &gains[k] * x;
            rhs.add(prob * quad_form(rbar, &d, &d));
        }
        terms.push((lhs.value(), rhs.value()));
    }
    Ok(terms)
}

/// Largest per-step violation of the telescoping identity.
pub fn telescoping_residual(
    model: &SystemModel,
    sched: &WhiteSchedule,
    ensemble: &Ensemble,
    noise: &NoiseSpec,
) -> Result<f64> {
    let terms = telescoping_terms(model, sched, ensemble, noise)?;
    Ok(terms
        .iter()
        .map(|(lhs, rhs)| (lhs - rhs).abs())
        .fold(0.0, f64::max))
}

// ---------------------------------------------------------------------------
// Cross-method comparison.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodKind {
    Literal,
    Measurable,
    White,
    Delayed,
    Oracle,
}

impl MethodKind {
    pub fn name(&self) -> &'static str {
        match self {
            MethodKind::Literal => "literal",
            MethodKind::Measurable => "measurable",
            MethodKind::White => "white",
            MethodKind::Delayed => "delayed",
            MethodKind::Oracle => "oracle",
        }
    }
}

impl std::fmt::Display for MethodKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(self.name())
    }
}

/// One comparison row. `cost` is the exact closed-loop expected cost of
/// the method's policy, `gap` its excess over the path-enumeration
/// optimum, `stationarity` the first-order-condition residual along its
/// own closed loop. Methods whose solve step fails a definiteness or
/// applicability gate are reported with `solvable: false`.
#[derive(Debug, Clone)]
pub struct MethodResult {
    pub method: MethodKind,
    pub solvable: bool,
    pub cost: Option<f64>,
    pub gap: Option<f64>,
    pub stationarity: Option<f64>,
    /// Why the method has no numbers, when it doesn't.
    pub note: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    /// Exact optimum from path enumeration.
    pub baseline_cost: f64,
    pub results: Vec<MethodResult>,
}

impl ComparisonReport {
    /// `instance_id,method,cost,gap,solvable,max_residual` rows; empty
    /// cells where a method produced no numbers.
    pub fn to_csv(&self, instance_id: &str) -> String {
        let mut out = String::from("instance_id,method,cost,gap,solvable,max_residual\n");
        let cell = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
        for row in &self.results {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                instance_id,
                row.method,
                cell(row.cost),
                cell(row.gap),
                row.solvable,
                cell(row.stationarity),
            ));
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("oracle optimum: {:.12e}\n", self.baseline_cost);
        for row in &self.results {
            match (row.solvable, row.cost) {
                (true, Some(cost)) => {
                    out.push_str(&format!(
                        "{:<11} cost {:.12e}  gap {:+.3e}  stationarity {:.3e}\n",
                        row.method,
                        cost,
                        row.gap.unwrap_or(f64::NAN),
                        row.stationarity.unwrap_or(f64::NAN),
                    ));
                }
                _ => {
                    out.push_str(&format!(
                        "{:<11} {}\n",
                        row.method,
                        row.note.as_deref().unwrap_or("not solvable"),
                    ));
                }
            }
        }
        out
    }
}

/// Methods that apply to a model's delay setting and structure.
pub fn default_methods(model: &SystemModel) -> Vec<MethodKind> {
    if model.delay == 1 {
        vec![MethodKind::Delayed, MethodKind::Oracle]
    } else if model.b2_is_zero() {
        vec![
            MethodKind::Literal,
            MethodKind::Measurable,
            MethodKind::White,
            MethodKind::Oracle,
        ]
    } else {
        vec![MethodKind::Literal, MethodKind::Measurable, MethodKind::Oracle]
    }
}

fn method_policy(
    model: &SystemModel,
    noise: &NoiseSpec,
    oracle_policy: &Policy,
    method: MethodKind,
) -> Result<Policy> {
    Ok(match method {
        MethodKind::Literal => Policy::RiccatiLiteral(solve_literal(model, noise)?),
        MethodKind::Measurable => Policy::RiccatiMeasurable(solve_measurable(model, noise)?),
        MethodKind::White => Policy::from_white(&solve_white(model)?)?,
        MethodKind::Delayed => Policy::RiccatiDelayed(solve_delayed(model)?),
        MethodKind::Oracle => oracle_policy.clone(),
    })
}

/// Solve the problem with each requested method, evaluate every resulting
/// policy exactly by path enumeration, and measure each policy's
/// optimality gap against the path-enumeration optimum.
pub fn compare_policies(
    model: &SystemModel,
    noise: &NoiseSpec,
    init: &InitialCondition,
    methods: &[MethodKind],
) -> Result<ComparisonReport> {
    let qp = path_qp(model, noise, init)?;
    let oracle_policy = Policy::OracleTree(qp.policy);
    let mut results = Vec::with_capacity(methods.len());
    for &method in methods {
        let policy = match method_policy(model, noise, &oracle_policy, method) {
            Ok(p) => p,
            Err(
                err @ (Error::NotSolvable { .. }
                | Error::SingularHessian { .. }
                | Error::RequiresB2Zero),
            ) => {
                results.push(MethodResult {
                    method,
                    solvable: false,
                    cost: None,
                    gap: None,
                    stationarity: None,
                    note: Some(err.to_string()),
                });
                continue;
            }
            Err(err) => return Err(err),
        };
        let cost = exact_expected_cost(model, &policy, noise, init)?;
        let costates = backward_costate(model, &policy, noise, init)?;
        let residual = stationarity_residual(model, &policy, &costates, noise)?;
        results.push(MethodResult {
            method,
            solvable: true,
            cost: Some(cost),
            gap: Some(cost - qp.cost),
            stationarity: Some(residual),
            note: None,
        });
    }
    Ok(ComparisonReport {
        baseline_cost: qp.cost,
        results,
    })
}

// ---------------------------------------------------------------------------
// Reduction suite.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Error text when the check could not even run.
    pub note: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ReductionReport {
    pub checks: Vec<CheckOutcome>,
}

impl ReductionReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            match &c.note {
                Some(note) => out.push_str(&format!("[FAIL] {}: {}\n", c.name, note)),
                None => out.push_str(&format!(
                    "[{}] {}: deviation {:.3e} (tolerance {:.1e})\n",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.name,
                    c.deviation,
                    c.tolerance,
                )),
            }
        }
        out
    }
}

fn run_check(
    name: &'static str,
    tolerance: f64,
    body: impl FnOnce() -> Result<f64>,
) -> CheckOutcome {
    match body() {
        Ok(deviation) => CheckOutcome {
            name,
            deviation,
            tolerance,
            pass: deviation.is_finite() && deviation <= tolerance,
            note: None,
        },
        Err(err) => CheckOutcome {
            name,
            deviation: f64::INFINITY,
            tolerance,
            pass: false,
            note: Some(err.to_string()),
        },
    }
}

/// Rebuild the model with some channels overridden. The rebuilt model goes
/// back through validation, so the variants inherit every invariant.
fn variant(
    model: &SystemModel,
    delay: u8,
    horizon: usize,
    strip_state_noise: bool,
    strip_input_noise: bool,
    strip_lag: bool,
    sigma2: f64,
) -> Result<SystemModel> {
    validate(ModelDescription {
        horizon,
        delay,
        sigma2,
        a0: model.a0.clone(),
        a1: if strip_state_noise {
            DMatrix::zeros(model.n, model.n)
        } else {
            model.a1.clone()
        },
        b0: model.b0.clone(),
        b1: if strip_input_noise {
            DMatrix::zeros(model.n, model.m)
        } else {
            model.b1.clone()
        },
        b2: if strip_lag {
            DMatrix::zeros(model.n, model.m)
        } else {
            model.b2.clone()
        },
        q: model.q.clone(),
        r: model.r.clone(),
        p_terminal: model.p_terminal.clone(),
        allow_indefinite: model.allow_indefinite,
        sigma_first_power: false,
    })
}

/// Check the solvers against their classical reductions, built from this
/// model's own data: the noiseless case against the textbook Riccati
/// recursion, the lag-free case against the white recursion three ways,
/// the delayed recursion against augmented-state dynamic programming and
/// against directly enumerated last-stage conditional expectations, a
/// single-step problem against the path oracle, and a canned scalar whose
/// long-horizon value must hit the golden ratio. Never fails outright:
/// a check that cannot run is reported as a failed check.
pub fn reduction_suite(model: &SystemModel) -> ReductionReport {
    let horizon = model.horizon.min(10);
    let sigma = model.sigma2.sqrt();
    let mut checks = Vec::new();

    checks.push(run_check("noiseless matches textbook riccati", 1e-10, || {
        let det = deterministic_riccati(
            &model.a0,
            &model.b0,
            &model.q,
            &model.r,
            &model.p_terminal,
            horizon,
        )?;
        let stripped = variant(model, 0, horizon, true, true, true, model.sigma2)?;
        let white = solve_white(&stripped)?;
        let mut dev = 0.0f64;
        for k in 0..=horizon {
            dev = dev.max((&white.stages[k].p - &det.ps[k]).amax());
            dev = dev.max((white.stages[k].gain()? - &det.gains[k]).amax());
        }
        Ok(dev)
    }));

    checks.push(run_check("lag-free recursions coincide three ways", 1e-10, || {
        let stripped = variant(model, 0, horizon, false, false, true, model.sigma2)?;
        let noise = NoiseSpec::rademacher(sigma);
        let white = solve_white(&stripped)?;
        let lit = solve_literal(&stripped, &noise)?;
        let meas = solve_measurable(&stripped, &noise)?;
        let mut dev = 0.0f64;
        for k in 0..=horizon {
            for iw in 0..lit.support.len() {
                dev = dev.max((&lit.stages[k].p[iw] - &white.stages[k].p).amax());
                dev = dev.max((&meas.stages[k].s[iw] - &white.stages[k].p).amax());
            }
        }
        Ok(dev)
    }));

    checks.push(run_check("noiseless delayed matches augmented lqr", 1e-10, || {
        let stripped = variant(model, 1, horizon, true, true, false, 0.0)?;
        let sched = solve_delayed(&stripped)?;
        let aug = augmented_delay_lqr(&stripped)?;
        let mut dev = 0.0f64;
        for k in 0..=horizon {
            let (a, b) = (&sched.stages[k], &aug.stages[k]);
            for (x, y) in [
                (&a.p, &b.p),
                (&a.r, &b.r),
                (&a.t0, &b.t0),
                (&a.t1, &b.t1),
                (&a.f, &b.f),
            ] {
                dev = dev.max((x - y).amax());
            }
        }
        Ok(dev)
    }));

    checks.push(run_check(
        "delayed last stage matches enumerated expectations",
        1e-10,
        || {
            let delayed = variant(model, 1, horizon, false, false, false, model.sigma2)?;
            let sched = solve_delayed(&delayed)?;
            let st = &sched.stages[horizon];
            let noise = NoiseSpec::rademacher(sigma);
            let (support, probs) = noise.finite_support("reduction_suite")?;
            let p = &delayed.p_terminal;
            let mut r_sum = delayed.r.clone();
            let mut f_sum = DMatrix::zeros(delayed.m, delayed.n);
            let mut t0_sum = DMatrix::zeros(delayed.m, delayed.n);
            let mut t1_sum = DMatrix::zeros(delayed.m, delayed.m);
            for (j, &vj) in support.iter().enumerate() {
                for (l, &vl) in support.iter().enumerate() {
                    let w = probs[j] * probs[l];
                    let bt = delayed.b_of(vl, vj).transpose();
                    let pa = p * delayed.a_of(vl);
                    r_sum += &bt * p * delayed.b_of(vl, vj) * w;
                    f_sum += &bt * &pa * w;
                    t0_sum += &bt * &pa * delayed.a_of(vj) * w;
                    for (i, &vi) in support.iter().enumerate() {
                        t1_sum += &bt * &pa * delayed.b_of(vj, vi) * (w * probs[i]);
                    }
                }
            }
            let dev = [
                (&st.r - r_sum).amax(),
                (&st.f - f_sum).amax(),
                (&st.t0 - t0_sum).amax(),
                (&st.t1 - t1_sum).amax(),
            ]
            .into_iter()
            .fold(0.0, f64::max);
            Ok(dev)
        },
    ));

    checks.push(run_check("single step ties the path oracle", 1e-12, || {
        let single = variant(model, 0, 0, false, false, false, model.sigma2)?;
        let noise = NoiseSpec::rademacher(sigma);
        let init = InitialCondition {
            x0: nalgebra::DVector::from_element(single.n, 1.0),
            u_prev: nalgebra::DVector::zeros(single.m),
            w_prev: sigma,
        };
        let lit = solve_literal(&single, &noise)?;
        let v = optimal_value(&Schedule::Literal(lit), &init)?;
        let qp = path_qp(&single, &noise, &init)?;
        Ok((v - qp.cost).abs() / (1.0 + v.abs()))
    }));

    checks.push(run_check("long-horizon scalar value hits the golden ratio", 1e-4, || {
        let one = DMatrix::from_element(1, 1, 1.0);
        let det = deterministic_riccati(&one, &one, &one, &one, &one, 25)?;
        let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
        Ok((det.ps[0][(0, 0)] - phi).abs())
    }));

    ReductionReport { checks }
}

/// Identity checks on the configured instance's own closed loop:
/// stationarity of the path-enumeration optimum, and the per-step value
/// identity at the white optimum. Each check runs only where it applies
/// (finite noise support and a small enough tree for the first; a dead lag
/// channel, no delay, and finite support for the second), so the returned
/// list may be empty.
pub fn closed_loop_checks(
    model: &SystemModel,
    noise: &NoiseSpec,
    init: &InitialCondition,
) -> Vec<CheckOutcome> {
    let mut checks = Vec::new();
    let small_tree = noise
        .is_finite()
        .then(|| (noise.finite_support("verify").map(|(v, _)| v.len())).unwrap_or(usize::MAX))
        .map(|s| (s as u64).checked_pow(model.horizon as u32 + 1).is_some_and(|p| p <= 4096))
        .unwrap_or(false);

    if small_tree {
        checks.push(run_check("configured optimum is stationary", 1e-8, || {
            let qp = path_qp(model, noise, init)?;
            let policy = Policy::OracleTree(qp.policy);
            let costates = backward_costate(model, &policy, noise, init)?;
            stationarity_residual(model, &policy, &costates, noise)
        }));
    }

    if small_tree && model.delay == 0 && model.b2_is_zero() {
        checks.push(run_check(
            "white optimum zeroes the per-step surplus",
            1e-10,
            || {
                let sched = solve_white(model)?;
                let policy = Policy::from_white(&sched)?;
                let ens = enumerate_closed_loop(
                    model,
                    &policy,
                    noise,
                    init,
                    crate::tolerances::PATH_CAP,
                )?;
                telescoping_residual(model, &sched, &ens, noise)
            },
        ));
    }
    checks
}

// ---------------------------------------------------------------------------
// Seeded instance generation.
// ---------------------------------------------------------------------------

/// Shape of a generated instance. The seed fixes everything bit for bit.
#[derive(Debug, Clone, Copy)]
pub struct InstanceParams {
    pub seed: u64,
    pub n: usize,
    pub m: usize,
    pub horizon: usize,
    pub delay: u8,
    /// Give the lag channel B2 nonzero entries.
    pub colored: bool,
    /// Two-point noise with unequal probabilities instead of symmetric.
    pub asymmetric: bool,
}

fn unit(rng: &mut ChaCha12Rng) -> f64 {
    uniform_open(rng.next_u64())
}

fn signed(rng: &mut ChaCha12Rng) -> f64 {
    2.0 * unit(rng) - 1.0
}

fn random_matrix(rng: &mut ChaCha12Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| scale * signed(rng))
}

/// Random PSD weight: a Gram matrix plus a positive diagonal shift.
fn random_weight(rng: &mut ChaCha12Rng, dim: usize, shift: f64) -> DMatrix<f64> {
    let g = random_matrix(rng, dim, dim, 1.0);
    let mut w = g.transpose() * g / dim as f64;
    for i in 0..dim {
        w[(i, i)] += shift;
    }
    // Symmetrize bit-exactly.
    crate::linalg::sym_part(&w)
}

/// Seeded random instance, kept comfortably solvable: the mean dynamics
/// are scaled below unit row sums, weights are positive definite where
/// they must be, and the model's sigma2 is set to the generated noise
/// law's exact second moment so the two always agree.
pub fn random_instance(params: &InstanceParams) -> Result<(SystemModel, NoiseSpec)> {
    let mut rng = ChaCha12Rng::seed_from_u64(params.seed);
    let n = params.n;
    let m = params.m;
    let mut a0 = random_matrix(&mut rng, n, n, 1.0);
    let worst_row = (0..n)
        .map(|i| (0..n).map(|j| a0[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    if worst_row > 0.95 {
        a0 *= 0.95 / worst_row;
    }
    let a1 = random_matrix(&mut rng, n, n, 0.3);
    let b0 = random_matrix(&mut rng, n, m, 1.0);
    let b1 = random_matrix(&mut rng, n, m, 0.3);
    let b2 = if params.colored {
        random_matrix(&mut rng, n, m, 0.3)
    } else {
        DMatrix::zeros(n, m)
    };
    let q = random_weight(&mut rng, n, 0.1);
    let r = random_weight(&mut rng, m, 0.2);
    let p_terminal = random_weight(&mut rng, n, 0.1);

    let sigma = 0.5 + 0.7 * unit(&mut rng);
    let noise = if params.asymmetric {
        let p_low = 0.2 + 0.6 * unit(&mut rng);
        let p_high = 1.0 - p_low;
        let sigma2 = sigma * sigma;
        NoiseSpec::Finite {
            values: vec![
                -(sigma2 * p_high / p_low).sqrt(),
                (sigma2 * p_low / p_high).sqrt(),
            ],
            probs: vec![p_low, p_high],
        }
    } else {
        NoiseSpec::rademacher(sigma)
    };
    let sigma2 = noise.second_moment();

    let model = validate(ModelDescription {
        horizon: params.horizon,
        delay: params.delay,
        sigma2,
        a0,
        a1,
        b0,
        b1,
        b2,
        q,
        r,
        p_terminal,
        allow_indefinite: false,
        sigma_first_power: false,
    })?;
    Ok((model, noise))
}

/// Arbitrary (generally suboptimal) linear policy u_k = -G_k x_k with
/// small seeded gains, one per decision step.
pub fn random_linear_policy(model: &SystemModel, seed: u64) -> Policy {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let steps = if model.delay == 1 {
        model.horizon
    } else {
        model.horizon + 1
    };
    let gains = (0..steps.max(1))
        .map(|_| random_matrix(&mut rng, model.m, model.n, 0.4))
        .collect();
    Policy::Linear {
        gains,
        delay: usize::from(model.delay),
    }
}
