//! Independent ground truth for the backward recursions: a
//! path-enumeration optimizer over adapted controls, exact dynamic
//! programming on the (state, previous-noise) pair, exact backward
//! costates with a stationarity residual, and textbook solvers for the
//! reduced cases. Everything here is built directly from the problem
//! statement and never calls into the recursion modules, so agreement
//! between the two sides is evidence, not circularity.
//!
//! All oracles work on finitely supported noise and share one history
//! indexing scheme: a depth-d node is the noise history (w_0, ..,
//! w_{d-1}) and its rank is the base-s numeral whose most significant
//! digit is the step-0 support index. The child h.j of a history h has
//! rank(h) * s + j; dropping the last digit is an integer division by s.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{min_symmetric_eigenvalue, quad_form, sym_part, Accumulator, LdlFactor, SpdFactor};
use crate::model::{check_noise, InitialCondition, NoiseSpec, SystemModel};
use crate::policy::Policy;
use crate::riccati_free::support_index;
use crate::simulate::count_paths;
use crate::tolerances::{KKT_REL_PIVOT, NODE_CAP, PATH_CAP};

/// Rank of a history given as support indices, most significant first.
pub fn history_rank(indices: &[usize], s: usize) -> usize {
    indices.iter().fold(0, |acc, &d| acc * s + d)
}

/// Finite-support noise law arranged for history-tree traversal, with the
/// total node count capped up front.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTree {
    pub support: Vec<f64>,
    pub probs: Vec<f64>,
    /// Last controlled step N; histories run to depth N+1.
    pub horizon: usize,
}

impl NoiseTree {
    pub fn new(noise: &NoiseSpec, horizon: usize, op: &'static str) -> Result<Self> {
        let (support, probs) = noise.finite_support(op)?;
        let s = support.len() as u128;
        let mut nodes: u128 = 0;
        let mut level: u128 = 1;
        for _ in 0..=(horizon + 1) {
            nodes = nodes.saturating_add(level);
            if nodes > NODE_CAP as u128 {
                return Err(Error::TooManyNodes {
                    nodes,
                    cap: NODE_CAP,
                });
            }
            level = level.saturating_mul(s);
        }
        Ok(NoiseTree {
            support: support.to_vec(),
            probs: probs.to_vec(),
            horizon,
        })
    }

    pub fn s(&self) -> usize {
        self.support.len()
    }

    /// Number of depth-d histories; safe after the cap check in `new`.
    pub fn count_at(&self, depth: usize) -> usize {
        self.s().pow(depth as u32)
    }

    /// Noise values (w_0, .., w_{depth-1}) of the depth-`depth` node `rank`.
    pub fn values_of(&self, rank: usize, depth: usize) -> Vec<f64> {
        let s = self.s();
        let mut out = vec![0.0; depth];
        let mut r = rank;
        for i in (0..depth).rev() {
            out[i] = self.support[r % s];
            r /= s;
        }
        out
    }

    /// Probability of the depth-`depth` node `rank`.
    pub fn prob_of(&self, rank: usize, depth: usize) -> f64 {
        let s = self.s();
        let mut p = 1.0;
        let mut r = rank;
        for _ in 0..depth {
            p *= self.probs[r % s];
            r /= s;
        }
        p
    }
}

fn spd_or_not_solvable(
    m: &DMatrix<f64>,
    k: usize,
    w: Option<f64>,
    condition: &'static str,
) -> Result<SpdFactor> {
    SpdFactor::new(m).ok_or_else(|| Error::NotSolvable {
        k,
        w,
        min_eigenvalue: min_symmetric_eigenvalue(m),
        condition,
    })
}

// ---------------------------------------------------------------------------
// Policy trees: one control vector per history node.
// ---------------------------------------------------------------------------

/// Adapted control process on the noise tree: `controls[k][rank]` is the
/// decision u_k at the depth-k history node `rank`. Delay-free problems
/// decide at k = 0..=N, delayed ones at k = 0..N.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTree {
    pub support: Vec<f64>,
    pub delay: usize,
    pub horizon: usize,
    pub m: usize,
    pub controls: Vec<Vec<DVector<f64>>>,
}

impl PolicyTree {
    /// Decision for step k given the realized noises (w_0, .., w_{k-1}).
    pub fn control(&self, k: usize, history: &[f64]) -> Result<&DVector<f64>> {
        if k >= self.controls.len() {
            return Err(Error::IndexOutOfRange {
                what: "decision step",
                index: k,
                limit: self.controls.len(),
            });
        }
        if history.len() != k {
            return Err(Error::DimensionMismatch {
                field: "noise history".into(),
                expected_rows: k,
                expected_cols: 1,
                found_rows: history.len(),
                found_cols: 1,
            });
        }
        let s = self.support.len();
        let mut rank = 0usize;
        for &w in history {
            rank = rank * s + support_index(&self.support, w)?;
        }
        Ok(&self.controls[k][rank])
    }

    /// One row per node: `history,k,u0,..`, histories as semicolon-joined
    /// noise values, steps ascending and ranks ascending within a step.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("history,k");
        for i in 0..self.m {
            out.push_str(&format!(",u{i}"));
        }
        out.push('\n');
        let s = self.support.len();
        for (k, level) in self.controls.iter().enumerate() {
            for (rank, u) in level.iter().enumerate() {
                let mut digits = vec![0usize; k];
                let mut r = rank;
                for i in (0..k).rev() {
                    digits[i] = r % s;
                    r /= s;
                }
                let hist = digits
                    .iter()
                    .map(|&d| format!("{:?}", self.support[d]))
                    .collect::<Vec<_>>()
                    .join(";");
                out.push_str(&hist);
                out.push_str(&format!(",{k}"));
                for i in 0..u.len() {
                    out.push_str(&format!(",{:?}", u[i]));
                }
                out.push('\n');
            }
        }
        out
    }
}

/// States and policy decisions on every history node: `states[d][rank]`
/// is x_d, `controls[k][rank]` the decision u_k.
struct ForwardWalk {
    states: Vec<Vec<DVector<f64>>>,
    controls: Vec<Vec<DVector<f64>>>,
}

fn forward_walk(
    model: &SystemModel,
    policy: &Policy,
    tree: &NoiseTree,
    init: &InitialCondition,
) -> Result<ForwardWalk> {
    if policy.delay() != usize::from(model.delay) {
        return Err(Error::DelayMismatch {
            op: "tree rollout",
            expected: usize::from(model.delay),
            found: policy.delay(),
        });
    }
    init.check_dims(model)?;
    let s = tree.s();
    let horizon = model.horizon;
    let delayed = model.delay == 1;
    let decision_steps = if delayed { horizon } else { horizon + 1 };

    let mut states: Vec<Vec<DVector<f64>>> = Vec::with_capacity(horizon + 2);
    states.push(vec![init.x0.clone()]);
    let mut controls: Vec<Vec<DVector<f64>>> = Vec::with_capacity(decision_steps);
    let zero_u = DVector::zeros(model.m);

    for d in 0..=horizon {
        let count = tree.count_at(d);
        let decide = d < decision_steps;
        let mut level_controls = if decide {
            Vec::with_capacity(count)
        } else {
            Vec::new()
        };
        let mut next_states = Vec::with_capacity(count * s);
        for rank in 0..count {
            let x = &states[d][rank];
            let mut past = Vec::with_capacity(d + 1);
            past.push(init.w_prev);
            past.extend(tree.values_of(rank, d));
            // The input applied during step d: the fresh decision when
            // delay-free, the previous step's decision when delayed.
            let u_prev: &DVector<f64> = if !delayed {
                &zero_u
            } else if d == 0 {
                &init.u_prev
            } else {
                &controls[d - 1][rank / s]
            };
            if decide {
                let u = policy.control_at(d, x, u_prev, &past)?;
                if u.len() != model.m {
                    return Err(Error::DimensionMismatch {
                        field: format!("policy output at step {d}"),
                        expected_rows: model.m,
                        expected_cols: 1,
                        found_rows: u.len(),
                        found_cols: 1,
                    });
                }
                level_controls.push(u);
            }
            let applied: &DVector<f64> = if delayed {
                u_prev
            } else {
                &level_controls[rank]
            };
            let w_last = past[d];
            for j in 0..s {
                let v = tree.support[j];
                next_states.push(model.a_of(v) * x + model.b_of(v, w_last) * applied);
            }
        }
        if decide {
            controls.push(level_controls);
        }
        states.push(next_states);
    }
    Ok(ForwardWalk { states, controls })
}

/// Tabulate a feedback policy as explicit controls on the noise tree.
pub fn policy_tree_from_policy(
    model: &SystemModel,
    policy: &Policy,
    noise: &NoiseSpec,
    init: &InitialCondition,
) -> Result<PolicyTree> {
    check_noise(model, noise)?;
    let tree = NoiseTree::new(noise, model.horizon, "policy_tree_from_policy")?;
    let walk = forward_walk(model, policy, &tree, init)?;
    Ok(PolicyTree {
        support: tree.support,
        delay: usize::from(model.delay),
        horizon: model.horizon,
        m: model.m,
        controls: walk.controls,
    })
}

// ---------------------------------------------------------------------------
// Path enumeration: the control problem as one finite quadratic program.
// ---------------------------------------------------------------------------

/// Optimal adapted controls and optimal cost from solving the stationarity
/// system of the path-enumeration quadratic program.
#[derive(Debug, Clone)]
pub struct PathQpSolution {
    pub policy: PolicyTree,
    pub cost: f64,
    /// Number of scalar decision variables in the assembled program.
    pub hessian_dim: usize,
}

/// Solve the whole problem as a quadratic program in the stacked adapted
/// controls: one m-vector per history node at each decision step, exact
/// expectation by enumerating all noise paths. J(U) = U'HU + 2c'U + e.
pub fn path_qp(
    model: &SystemModel,
    noise: &NoiseSpec,
    init: &InitialCondition,
) -> Result<PathQpSolution> {
    check_noise(model, noise)?;
    init.check_dims(model)?;
    let tree = NoiseTree::new(noise, model.horizon, "path_qp")?;
    let s = tree.s();
    let steps = model.horizon + 1;
    count_paths(s, steps, PATH_CAP)?;

    let n = model.n;
    let m = model.m;
    let delayed = model.delay == 1;
    let decision_steps = if delayed { model.horizon } else { steps };
    let mut offsets = Vec::with_capacity(decision_steps);
    let mut dim = 0usize;
    for k in 0..decision_steps {
        offsets.push(dim);
        dim += m * tree.count_at(k);
    }

    let mut h = DMatrix::<f64>::zeros(dim, dim);
    let mut c = DVector::<f64>::zeros(dim);
    let mut e = Accumulator::new();

    // x_k = C U + d along the current path; quadratic cost terms fold into
    // (h, c, e) with the path probability as weight.
    let add_state_cost = |h: &mut DMatrix<f64>,
                              c: &mut DVector<f64>,
                              e: &mut Accumulator,
                              prob: f64,
                              cmat: &DMatrix<f64>,
                              dvec: &DVector<f64>,
                              weight: &DMatrix<f64>| {
        let wc = weight * cmat;
        *h += cmat.transpose() * &wc * prob;
        *c += wc.transpose() * dvec * prob;
        e.add(prob * quad_form(weight, dvec, dvec));
    };

    let mut digits = vec![0usize; steps];
    'paths: loop {
        let mut prob = 1.0;
        for &d in &digits {
            prob *= tree.probs[d];
        }
        let mut cmat = DMatrix::<f64>::zeros(n, dim);
        let mut dvec = init.x0.clone();
        for k in 0..steps {
            add_state_cost(&mut h, &mut c, &mut e, prob, &cmat, &dvec, &model.q);
            // Control penalty: the step-k decision in the delay-free
            // problem, the step-(k-1) decision (applied at step k) in the
            // delayed one; the committed u_{-1} carries no penalty.
            let penalized = if delayed {
                k.checked_sub(1)
            } else {
                Some(k)
            };
            if let Some(kd) = penalized {
                let off = offsets[kd] + m * history_rank(&digits[..kd], s);
                for i in 0..m {
                    for j in 0..m {
                        h[(off + i, off + j)] += prob * model.r[(i, j)];
                    }
                }
            }
            let v = tree.support[digits[k]];
            let w_last = if k == 0 {
                init.w_prev
            } else {
                tree.support[digits[k - 1]]
            };
            let a = model.a_of(v);
            let b = model.b_of(v, w_last);
            cmat = &a * cmat;
            dvec = a * dvec;
            // The input applied during step k.
            let applied = if delayed { k.checked_sub(1) } else { Some(k) };
            match applied {
                Some(ka) => {
                    let off = offsets[ka] + m * history_rank(&digits[..ka], s);
                    for col in 0..m {
                        for row in 0..n {
                            cmat[(row, off + col)] += b[(row, col)];
                        }
                    }
                }
                None => dvec += &b * &init.u_prev,
            }
        }
        add_state_cost(&mut h, &mut c, &mut e, prob, &cmat, &dvec, &model.p_terminal);

        let mut pos = steps;
        loop {
            if pos == 0 {
                break 'paths;
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < s {
                break;
            }
            digits[pos] = 0;
        }
    }

    let (u_star, cost) = if dim == 0 {
        (DVector::zeros(0), e.value())
    } else {
        let factor = LdlFactor::new(&sym_part(&h)).map_err(|(_, pivot, max_pivot)| {
            Error::SingularHessian {
                pivot,
                max_pivot,
                rel_tol: KKT_REL_PIVOT,
            }
        })?;
        let u = factor.solve_vec(&(-&c));
        let cost = e.value() + c.dot(&u);
        (u, cost)
    };

    let mut controls = Vec::with_capacity(decision_steps);
    for (k, &off) in offsets.iter().enumerate() {
        let count = tree.count_at(k);
        let mut level = Vec::with_capacity(count);
        for rank in 0..count {
            level.push(u_star.rows(off + m * rank, m).into_owned());
        }
        controls.push(level);
    }
    Ok(PathQpSolution {
        policy: PolicyTree {
            support: tree.support,
            delay: usize::from(model.delay),
            horizon: model.horizon,
            m,
            controls,
        },
        cost,
        hessian_dim: dim,
    })
}

// ---------------------------------------------------------------------------
// Exact dynamic programming on (x, previous noise).
// ---------------------------------------------------------------------------

/// Exact cost-to-go tables for the delay-free problem: everything is
/// conditioned on the previous step's noise value.
#[derive(Debug, Clone)]
pub struct DpFree {
    pub horizon: usize,
    pub support: Vec<f64>,
    pub probs: Vec<f64>,
    /// `values[k][iw]`: weight on x_k given w_{k-1} = support\[iw\], k = 0..=N.
    pub values: Vec<Vec<DMatrix<f64>>>,
    /// `gains[k][iw]`: `u_k = -gains[k][iw] x_k`.
    pub gains: Vec<Vec<DMatrix<f64>>>,
    /// `hessians[k][iw]`: curvature of the stage problem in u_k.
    pub hessians: Vec<Vec<DMatrix<f64>>>,
    pub p_terminal: DMatrix<f64>,
}

/// Exact cost-to-go tables for the delayed problem on the augmented pair
/// (x_k, u_{k-1}), conditioned on the previous step's noise value.
#[derive(Debug, Clone)]
pub struct DpDelayed {
    pub horizon: usize,
    pub support: Vec<f64>,
    pub probs: Vec<f64>,
    pub n: usize,
    pub m: usize,
    /// `values[k][iw]`: weight on (x_k, u_{k-1}) given w_{k-1}, k = 0..=N.
    pub values: Vec<Vec<DMatrix<f64>>>,
    /// `u_k = -(gain_x[k][iw] x_k + gain_u[k][iw] u_{k-1})`, k = 0..N.
    pub gain_x: Vec<Vec<DMatrix<f64>>>,
    pub gain_u: Vec<Vec<DMatrix<f64>>>,
    /// `hessians[k][iw]`: curvature of the stage problem in u_k, k = 0..N.
    pub hessians: Vec<Vec<DMatrix<f64>>>,
}

#[derive(Debug, Clone)]
pub enum DpSolution {
    Free(DpFree),
    Delayed(DpDelayed),
}

impl DpSolution {
    pub fn delay(&self) -> usize {
        match self {
            DpSolution::Free(_) => 0,
            DpSolution::Delayed(_) => 1,
        }
    }

    /// Exact optimal expected cost from the initial data.
    pub fn optimal_cost(&self, init: &InitialCondition) -> Result<f64> {
        match self {
            DpSolution::Free(dp) => {
                let iw = support_index(&dp.support, init.w_prev)?;
                let s0 = &dp.values[0][iw];
                if init.x0.len() != s0.nrows() {
                    return Err(Error::DimensionMismatch {
                        field: "init.x0".into(),
                        expected_rows: s0.nrows(),
                        expected_cols: 1,
                        found_rows: init.x0.len(),
                        found_cols: 1,
                    });
                }
                Ok(quad_form(s0, &init.x0, &init.x0))
            }
            DpSolution::Delayed(dp) => {
                let iw = support_index(&dp.support, init.w_prev)?;
                if init.x0.len() != dp.n || init.u_prev.len() != dp.m {
                    return Err(Error::DimensionMismatch {
                        field: "init (x0, u_prev)".into(),
                        expected_rows: dp.n + dp.m,
                        expected_cols: 1,
                        found_rows: init.x0.len() + init.u_prev.len(),
                        found_cols: 1,
                    });
                }
                let mut z = DVector::zeros(dp.n + dp.m);
                z.rows_mut(0, dp.n).copy_from(&init.x0);
                z.rows_mut(dp.n, dp.m).copy_from(&init.u_prev);
                Ok(quad_form(&dp.values[0][iw], &z, &z))
            }
        }
    }
}

/// Exact dynamic programming over the finite noise law. The delay-free
/// tables condition on w_{k-1} and decide u_k; the delayed tables live on
/// (x_k, u_{k-1}) and decide u_k one step ahead of its effect.
pub fn dp_exact(model: &SystemModel, noise: &NoiseSpec) -> Result<DpSolution> {
    check_noise(model, noise)?;
    let (support, probs) = noise.finite_support("dp_exact")?;
    match model.delay {
        0 => dp_free(model, support, probs).map(DpSolution::Free),
        _ => dp_delayed(model, support, probs).map(DpSolution::Delayed),
    }
}

fn dp_free(model: &SystemModel, support: &[f64], probs: &[f64]) -> Result<DpFree> {
    let n = model.n;
    let m = model.m;
    let s = support.len();
    let a_parts: Vec<DMatrix<f64>> = support.iter().map(|&v| model.a_of(v)).collect();

    let mut values = vec![Vec::new(); model.horizon + 1];
    let mut gains = vec![Vec::new(); model.horizon + 1];
    let mut hessians = vec![Vec::new(); model.horizon + 1];

    let mut next: Vec<DMatrix<f64>> = vec![model.p_terminal.clone(); s];
    for k in (0..=model.horizon).rev() {
        let mut level_v = Vec::with_capacity(s);
        let mut level_g = Vec::with_capacity(s);
        let mut level_h = Vec::with_capacity(s);
        for &w in support {
            let mut theta = DMatrix::<f64>::zeros(n + m, n + m);
            theta.view_mut((0, 0), (n, n)).copy_from(&model.q);
            theta.view_mut((n, n), (m, m)).copy_from(&model.r);
            for j in 0..s {
                let mut t = DMatrix::<f64>::zeros(n, n + m);
                t.view_mut((0, 0), (n, n)).copy_from(&a_parts[j]);
                t.view_mut((0, n), (n, m))
                    .copy_from(&model.b_of(support[j], w));
                theta += t.transpose() * &next[j] * t * probs[j];
            }
            let txx = theta.view((0, 0), (n, n)).into_owned();
            let txu = theta.view((0, n), (n, m)).into_owned();
            let tuu = sym_part(&theta.view((n, n), (m, m)).into_owned());
            let factor = spd_or_not_solvable(&tuu, k, Some(w), "Upsilon_k > 0")?;
            let g = factor.solve(&txu.transpose());
            level_v.push(sym_part(&(txx - &txu * &g)));
            level_g.push(g);
            level_h.push(tuu);
        }
        values[k] = level_v.clone();
        gains[k] = level_g;
        hessians[k] = level_h;
        next = level_v;
    }
    Ok(DpFree {
        horizon: model.horizon,
        support: support.to_vec(),
        probs: probs.to_vec(),
        values,
        gains,
        hessians,
        p_terminal: model.p_terminal.clone(),
    })
}

fn dp_delayed(model: &SystemModel, support: &[f64], probs: &[f64]) -> Result<DpDelayed> {
    let n = model.n;
    let m = model.m;
    let s = support.len();
    let z = n + m;
    let a_parts: Vec<DMatrix<f64>> = support.iter().map(|&v| model.a_of(v)).collect();

    let mut values = vec![Vec::new(); model.horizon + 1];
    let mut gain_x = vec![Vec::new(); model.horizon];
    let mut gain_u = vec![Vec::new(); model.horizon];
    let mut hessians = vec![Vec::new(); model.horizon];

    // Epoch N: no decision left, (x_N, u_{N-1}) maps straight to x_{N+1}.
    let mut level_v = Vec::with_capacity(s);
    for &w in support {
        let mut zn = DMatrix::<f64>::zeros(z, z);
        zn.view_mut((0, 0), (n, n)).copy_from(&model.q);
        for j in 0..s {
            let mut t = DMatrix::<f64>::zeros(n, z);
            t.view_mut((0, 0), (n, n)).copy_from(&a_parts[j]);
            t.view_mut((0, n), (n, m))
                .copy_from(&model.b_of(support[j], w));
            zn += t.transpose() * &model.p_terminal * t * probs[j];
        }
        level_v.push(sym_part(&zn));
    }
    values[model.horizon] = level_v.clone();
    let mut next = level_v;

    for k in (0..model.horizon).rev() {
        let mut level_v = Vec::with_capacity(s);
        let mut level_gx = Vec::with_capacity(s);
        let mut level_gu = Vec::with_capacity(s);
        let mut level_h = Vec::with_capacity(s);
        for &w in support {
            // Decision variables ordered (x_k, u_{k-1}, u_k); the next
            // epoch's pair is (x_{k+1}, u_k).
            let mut xi = DMatrix::<f64>::zeros(z + m, z + m);
            xi.view_mut((0, 0), (n, n)).copy_from(&model.q);
            xi.view_mut((z, z), (m, m)).copy_from(&model.r);
            for j in 0..s {
                let mut wmap = DMatrix::<f64>::zeros(z, z + m);
                wmap.view_mut((0, 0), (n, n)).copy_from(&a_parts[j]);
                wmap.view_mut((0, n), (n, m))
                    .copy_from(&model.b_of(support[j], w));
                wmap.view_mut((n, z), (m, m))
                    .copy_from(&DMatrix::identity(m, m));
                xi += wmap.transpose() * &next[j] * wmap * probs[j];
            }
            let xzz = xi.view((0, 0), (z, z)).into_owned();
            let xzu = xi.view((0, z), (z, m)).into_owned();
            let xuu = sym_part(&xi.view((z, z), (m, m)).into_owned());
            // The curvature in u_k is what the delayed recursion calls
            // R_{k+1}, hence the reported step index.
            let factor = spd_or_not_solvable(&xuu, k + 1, Some(w), "R_k > 0")?;
            let gz = factor.solve(&xzu.transpose());
            level_v.push(sym_part(&(xzz - &xzu * &gz)));
            level_gx.push(gz.view((0, 0), (m, n)).into_owned());
            level_gu.push(gz.view((0, n), (m, m)).into_owned());
            level_h.push(xuu);
        }
        values[k] = level_v.clone();
        gain_x[k] = level_gx;
        gain_u[k] = level_gu;
        hessians[k] = level_h;
        next = level_v;
    }
    Ok(DpDelayed {
        horizon: model.horizon,
        support: support.to_vec(),
        probs: probs.to_vec(),
        n,
        m,
        values,
        gain_x,
        gain_u,
        hessians,
    })
}

// ---------------------------------------------------------------------------
// Backward costates and the stationarity residual.
// ---------------------------------------------------------------------------

/// Closed-loop states, policy decisions, and exact backward costates on
/// the noise tree. `lambdas[d][rank]` holds lambda_{d-1} at the depth-d
/// node, so `lambdas[N+1]` is the terminal gradient P_{N+1} x_{N+1} and
/// `lambdas[0][0]` is lambda_{-1}.
#[derive(Debug, Clone)]
pub struct CostateTree {
    pub support: Vec<f64>,
    pub probs: Vec<f64>,
    pub horizon: usize,
    pub init: InitialCondition,
    /// `states[d][rank] = x_d`, d = 0..=N+1.
    pub states: Vec<Vec<DVector<f64>>>,
    /// Policy decisions u_k per node, k over the decision steps.
    pub controls: Vec<Vec<DVector<f64>>>,
    pub lambdas: Vec<Vec<DVector<f64>>>,
}

/// Exact adjoint recursion along the closed loop of `policy`:
/// lambda_N = P_{N+1} x_{N+1} on the leaves, then
/// lambda_{k-1} = E[(A0 + A1 w_k)' lambda_k | F_{k-1}] + Q x_k.
pub fn backward_costate(
    model: &SystemModel,
    policy: &Policy,
    noise: &NoiseSpec,
    init: &InitialCondition,
) -> Result<CostateTree> {
    check_noise(model, noise)?;
    let tree = NoiseTree::new(noise, model.horizon, "backward_costate")?;
    let walk = forward_walk(model, policy, &tree, init)?;
    let s = tree.s();
    let a_t: Vec<DMatrix<f64>> = tree
        .support
        .iter()
        .map(|&v| model.a_of(v).transpose())
        .collect();

    let mut lambdas: Vec<Vec<DVector<f64>>> = vec![Vec::new(); model.horizon + 2];
    lambdas[model.horizon + 1] = walk.states[model.horizon + 1]
        .iter()
        .map(|x| &model.p_terminal * x)
        .collect();
    for d in (0..=model.horizon).rev() {
        let count = tree.count_at(d);
        let mut level = Vec::with_capacity(count);
        for rank in 0..count {
            let mut lam = &model.q * &walk.states[d][rank];
            for j in 0..s {
                lam += &a_t[j] * &lambdas[d + 1][rank * s + j] * tree.probs[j];
            }
            level.push(lam);
        }
        lambdas[d] = level;
    }
    Ok(CostateTree {
        support: tree.support,
        probs: tree.probs,
        horizon: model.horizon,
        init: init.clone(),
        states: walk.states,
        controls: walk.controls,
        lambdas,
    })
}

/// Largest first-order-condition violation of `policy` along the closed
/// loop recorded in `costates` (which must come from `backward_costate`
/// on the same policy, model, and noise law).
///
/// Delay-free, decision u_k on the depth-k node h with last noise w:
/// r = R u_k + sum_j p_j B(v_j, w)' lambda_k(h.j).
/// Delayed, decision u_k applied one step later:
/// r = R u_k + sum_{j,l} p_j p_l B(v_l, v_j)' lambda_{k+1}(h.j.l).
pub fn stationarity_residual(
    model: &SystemModel,
    policy: &Policy,
    costates: &CostateTree,
    noise: &NoiseSpec,
) -> Result<f64> {
    check_noise(model, noise)?;
    let (support, probs) = noise.finite_support("stationarity_residual")?;
    if costates.horizon != model.horizon || costates.support != support {
        return Err(Error::InconsistentTrajectory {
            detail: "costate tree was built for a different horizon or noise law".into(),
        });
    }
    if policy.delay() != usize::from(model.delay) {
        return Err(Error::DelayMismatch {
            op: "stationarity_residual",
            expected: usize::from(model.delay),
            found: policy.delay(),
        });
    }
    let s = support.len();
    let tree = NoiseTree::new(noise, model.horizon, "stationarity_residual")?;
    let delayed = model.delay == 1;
    let decision_steps = if delayed {
        model.horizon
    } else {
        model.horizon + 1
    };
    let zero_u = DVector::zeros(model.m);
    let mut worst = 0.0f64;
    for k in 0..decision_steps {
        for rank in 0..tree.count_at(k) {
            let x = &costates.states[k][rank];
            let mut past = Vec::with_capacity(k + 1);
            past.push(costates.init.w_prev);
            past.extend(tree.values_of(rank, k));
            let u_prev: &DVector<f64> = if !delayed {
                &zero_u
            } else if k == 0 {
                &costates.init.u_prev
            } else {
                &costates.controls[k - 1][rank / s]
            };
            let u = policy.control_at(k, x, u_prev, &past)?;
            let mut r = &model.r * u;
            if delayed {
                for j in 0..s {
                    for l in 0..s {
                        let b_t = model.b_of(support[l], support[j]).transpose();
                        let leaf = (rank * s + j) * s + l;
                        r += b_t * &costates.lambdas[k + 2][leaf] * (probs[j] * probs[l]);
                    }
                }
            } else {
                let w_last = past[k];
                for j in 0..s {
                    let b_t = model.b_of(support[j], w_last).transpose();
                    r += b_t * &costates.lambdas[k + 1][rank * s + j] * probs[j];
                }
            }
            worst = worst.max(r.amax());
        }
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Reduced-case oracles.
// ---------------------------------------------------------------------------

/// Textbook finite-horizon discrete Riccati solution for the noiseless
/// system x_{k+1} = A x_k + B u_k.
#[derive(Debug, Clone)]
pub struct DeterministicLqr {
    /// Value matrices, k = 0..=N+1.
    pub ps: Vec<DMatrix<f64>>,
    /// `u_k = -gains[k] x_k`, k = 0..=N.
    pub gains: Vec<DMatrix<f64>>,
}

pub fn deterministic_riccati(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p_terminal: &DMatrix<f64>,
    horizon: usize,
) -> Result<DeterministicLqr> {
    let mut ps = vec![DMatrix::zeros(0, 0); horizon + 2];
    let mut gains = vec![DMatrix::zeros(0, 0); horizon + 1];
    ps[horizon + 1] = p_terminal.clone();
    for k in (0..=horizon).rev() {
        let p_next = &ps[k + 1];
        let hess = sym_part(&(r + b.transpose() * p_next * b));
        let factor = spd_or_not_solvable(&hess, k, None, "Upsilon_k > 0")?;
        let gain = factor.solve(&(b.transpose() * p_next * a));
        ps[k] = sym_part(&(q + a.transpose() * p_next * a
            - (a.transpose() * p_next * b) * &gain));
        gains[k] = gain;
    }
    Ok(DeterministicLqr { ps, gains })
}

/// Delayed-input problem for the noiseless system, solved by plain LQR on
/// the augmented pair (x_k, u_{k-1}), then re-expressed in the same stage
/// quantities the delayed recursion produces. Exact only when A1, B1 and
/// the noise are absent; B2 never enters because the noise is identically
/// zero there.
#[derive(Debug, Clone)]
pub struct AugmentedDelayLqr {
    /// Stage quantities matching the delayed recursion, k = 0..=N.
    pub stages: Vec<crate::riccati_delay::DelayedStage>,
    /// Augmented value matrices on (x_k, u_{k-1}), k = 0..=N. The
    /// committed u_{k-1} penalty is charged at its decision epoch, so it
    /// does not reappear here.
    pub zs: Vec<DMatrix<f64>>,
}

pub fn augmented_delay_lqr(model: &SystemModel) -> Result<AugmentedDelayLqr> {
    let n = model.n;
    let m = model.m;
    let z = n + m;
    let horizon = model.horizon;

    let mut atil = DMatrix::<f64>::zeros(z, z);
    atil.view_mut((0, 0), (n, n)).copy_from(&model.a0);
    atil.view_mut((0, n), (n, m)).copy_from(&model.b0);
    let mut edge = DMatrix::<f64>::zeros(n, z);
    edge.view_mut((0, 0), (n, n)).copy_from(&model.a0);
    edge.view_mut((0, n), (n, m)).copy_from(&model.b0);

    let mut zs = vec![DMatrix::zeros(0, 0); horizon + 1];
    zs[horizon] = {
        let mut zn = edge.transpose() * &model.p_terminal * &edge;
        let topleft = zn.view((0, 0), (n, n)) + &model.q;
        zn.view_mut((0, 0), (n, n)).copy_from(&topleft);
        sym_part(&zn)
    };
    for k in (0..horizon).rev() {
        let z_next = &zs[k + 1];
        let zuu = z_next.view((n, n), (m, m)).into_owned();
        let zux = z_next.view((n, 0), (m, z)).into_owned();
        let hess = sym_part(&(&model.r + zuu));
        let factor = spd_or_not_solvable(&hess, k + 1, None, "R_k > 0")?;
        // The input row block of atil vanishes, so the cross term in the
        // stage problem is just zux * atil.
        let lin = &zux * &atil;
        let gain = factor.solve(&lin);
        let mut zk = atil.transpose() * z_next * &atil - lin.transpose() * &gain;
        let topleft = zk.view((0, 0), (n, n)) + &model.q;
        zk.view_mut((0, 0), (n, n)).copy_from(&topleft);
        zs[k] = sym_part(&zk);
    }

    let stages = zs
        .iter()
        .enumerate()
        .map(|(k, zk)| {
            let zxx = zk.view((0, 0), (n, n)).into_owned();
            let zux = zk.view((n, 0), (m, n)).into_owned();
            let zuu = zk.view((n, n), (m, m)).into_owned();
            crate::riccati_delay::DelayedStage {
                k,
                p: sym_part(&zxx),
                r: sym_part(&(&model.r + zuu)),
                t0: &zux * &model.a0,
                t1: &zux * &model.b0,
                f: zux,
            }
        })
        .collect();
    Ok(AugmentedDelayLqr { stages, zs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate, ModelDescription};
    use crate::riccati_delay::solve_delayed;
    use crate::riccati_free::{solve_literal, solve_measurable, solve_white};
    use crate::schedule::Schedule;
    use nalgebra::{DMatrix, DVector};

    fn one(v: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, 1, &[v])
    }

    fn scalar_model(delay: u8, horizon: usize, sigma2: f64, colored: bool) -> SystemModel {
        validate(ModelDescription {
            horizon,
            delay,
            sigma2,
            a0: one(0.8),
            a1: one(0.3),
            b0: one(1.0),
            b1: one(0.4),
            b2: one(if colored { 0.5 } else { 0.0 }),
            q: one(1.0),
            r: one(1.0),
            p_terminal: one(1.0),
            allow_indefinite: false,
            sigma_first_power: false,
        })
        .unwrap()
    }

    fn planar_model(delay: u8, horizon: usize) -> SystemModel {
        validate(ModelDescription {
            horizon,
            delay,
            sigma2: 0.3,
            a0: DMatrix::from_row_slice(2, 2, &[0.9, 0.1, -0.2, 0.7]),
            a1: DMatrix::from_row_slice(2, 2, &[0.2, 0.0, 0.1, -0.1]),
            b0: DMatrix::from_row_slice(2, 1, &[1.0, 1.0 / 3.0]),
            b1: DMatrix::from_row_slice(2, 1, &[0.3, 0.0]),
            b2: DMatrix::from_row_slice(2, 1, &[0.4, 0.1]),
            q: DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.1, 2.0]),
            r: one(0.7),
            p_terminal: DMatrix::from_row_slice(2, 2, &[1.5, 0.0, 0.0, 0.5]),
            allow_indefinite: false,
            sigma_first_power: false,
        })
        .unwrap()
    }

    fn two_point(sigma2: f64, p_low: f64) -> NoiseSpec {
        let q = 1.0 - p_low;
        NoiseSpec::Finite {
            values: vec![-(sigma2 * q / p_low).sqrt(), (sigma2 * p_low / q).sqrt()],
            probs: vec![p_low, q],
        }
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn single_step_qp_matches_the_literal_solution() {
        let model = scalar_model(0, 0, 1.0, true);
        let noise = NoiseSpec::rademacher(1.0);
        let init = InitialCondition {
            x0: DVector::from_element(1, 2.0),
            u_prev: DVector::zeros(1),
            w_prev: 1.0,
        };
        let qp = path_qp(&model, &noise, &init).unwrap();
        let lit = solve_literal(&model, &noise).unwrap();
        let v = crate::riccati_free::optimal_value(&Schedule::Literal(lit.clone()), &init).unwrap();
        assert!(close(qp.cost, v, 1e-12), "{} vs {v}", qp.cost);

        let policy = Policy::RiccatiLiteral(lit);
        let u = policy.control_free(0, &init.x0, init.w_prev).unwrap();
        assert!((qp.policy.controls[0][0][0] - u[0]).abs() <= 1e-12);
        assert_eq!(qp.hessian_dim, 1);
    }

    #[test]
    fn qp_ties_the_white_value_when_the_lag_channel_is_off() {
        let model = scalar_model(0, 3, 1.0, false);
        let noise = NoiseSpec::rademacher(1.0);
        let init = InitialCondition {
            x0: DVector::from_element(1, 1.0),
            u_prev: DVector::zeros(1),
            w_prev: -1.0,
        };
        let qp = path_qp(&model, &noise, &init).unwrap();
        let white = solve_white(&model).unwrap();
        let v = white.stages[0].p[(0, 0)];
        assert!(close(qp.cost, v, 1e-10), "{} vs {v}", qp.cost);
        let meas = solve_measurable(&model, &noise).unwrap();
        let vm =
            crate::riccati_free::optimal_value(&Schedule::Measurable(meas), &init).unwrap();
        assert!(close(qp.cost, vm, 1e-10));
    }

    #[test]
    fn dp_tables_match_the_measurable_recursion() {
        let model = planar_model(0, 3);
        let noise = two_point(0.3, 0.25);
        let dp = match dp_exact(&model, &noise).unwrap() {
            DpSolution::Free(dp) => dp,
            DpSolution::Delayed(_) => unreachable!(),
        };
        let meas = solve_measurable(&model, &noise).unwrap();
        for k in 0..=model.horizon {
            for iw in 0..2 {
                assert!((&dp.values[k][iw] - &meas.stages[k].s[iw]).amax() <= 1e-10);
                assert!((&dp.gains[k][iw] - &meas.stages[k].g[iw]).amax() <= 1e-10);
                assert!((&dp.hessians[k][iw] - &meas.stages[k].h[iw]).amax() <= 1e-10);
            }
        }
    }

    #[test]
    fn delayed_dp_last_stage_matches_the_delayed_recursion() {
        let model = planar_model(1, 2);
        let noise = two_point(0.3, 0.5);
        let sched = solve_delayed(&model).unwrap();
        let dp = match dp_exact(&model, &noise).unwrap() {
            DpSolution::Delayed(dp) => dp,
            DpSolution::Free(_) => unreachable!(),
        };
        let last = model.horizon - 1;
        let st = &sched.stages[model.horizon];
        let (support, _) = noise.finite_support("test").unwrap();
        let rinv = SpdFactor::new(&st.r).unwrap();
        for (iw, &w) in support.iter().enumerate() {
            assert!((&dp.hessians[last][iw] - &st.r).amax() <= 1e-12);
            let gx = rinv.solve(&st.t0);
            assert!((&dp.gain_x[last][iw] - &gx).amax() <= 1e-12);
            let gu = rinv.solve(&(&st.t1 + &st.f * &model.b2 * w));
            assert!((&dp.gain_u[last][iw] - &gu).amax() <= 1e-12);
        }
    }

    #[test]
    fn dp_and_path_enumeration_agree_on_the_optimum() {
        for delay in [0u8, 1u8] {
            let model = planar_model(delay, 2);
            let noise = two_point(0.3, 0.25);
            let init = InitialCondition {
                x0: DVector::from_row_slice(&[1.0, -0.5]),
                u_prev: DVector::from_element(1, 0.25),
                w_prev: noise.finite_support("test").unwrap().0[1],
            };
            let qp = path_qp(&model, &noise, &init).unwrap();
            let dp = dp_exact(&model, &noise).unwrap();
            let v = dp.optimal_cost(&init).unwrap();
            assert!(close(qp.cost, v, 1e-9), "delay {delay}: {} vs {v}", qp.cost);
        }
    }

    #[test]
    fn delayed_dp_with_noiseless_dynamics_matches_the_augmented_form() {
        let model = validate(ModelDescription {
            horizon: 4,
            delay: 1,
            sigma2: 0.0,
            a0: DMatrix::from_row_slice(2, 2, &[0.9, 0.1, -0.2, 0.7]),
            a1: DMatrix::zeros(2, 2),
            b0: DMatrix::from_row_slice(2, 1, &[1.0, 0.5]),
            b1: DMatrix::zeros(2, 1),
            b2: DMatrix::from_row_slice(2, 1, &[0.3, 0.0]),
            q: DMatrix::identity(2, 2),
            r: one(1.0),
            p_terminal: DMatrix::identity(2, 2),
            allow_indefinite: false,
            sigma_first_power: false,
        })
        .unwrap();
        let aug = augmented_delay_lqr(&model).unwrap();
        let dp = match dp_exact(&model, &NoiseSpec::rademacher(0.0)).unwrap() {
            DpSolution::Delayed(dp) => dp,
            DpSolution::Free(_) => unreachable!(),
        };
        for k in 0..=model.horizon {
            assert!((&dp.values[k][0] - &aug.zs[k]).amax() <= 1e-10);
        }
    }

    #[test]
    fn augmented_stage_values_freeze_on_the_unit_example() {
        let model = validate(ModelDescription {
            horizon: 3,
            delay: 1,
            sigma2: 0.0,
            a0: one(1.0),
            a1: one(0.0),
            b0: one(1.0),
            b1: one(0.0),
            b2: one(0.0),
            q: one(1.0),
            r: one(1.0),
            p_terminal: one(1.0),
            allow_indefinite: false,
            sigma_first_power: false,
        })
        .unwrap();
        let aug = augmented_delay_lqr(&model).unwrap();
        let zn = &aug.zs[model.horizon];
        assert!((zn - DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0])).amax() <= 1e-12);
        let zm = &aug.zs[model.horizon - 1];
        assert!((zm - DMatrix::from_row_slice(2, 2, &[2.5, 1.5, 1.5, 1.5])).amax() <= 1e-12);
        let st = &aug.stages[model.horizon];
        assert!((st.p[(0, 0)] - 2.0).abs() <= 1e-12);
        assert!((st.r[(0, 0)] - 2.0).abs() <= 1e-12);
        for m in [&st.t0, &st.t1, &st.f] {
            assert!((m[(0, 0)] - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn costates_reproduce_the_value_gradient_at_the_white_optimum() {
        let model = scalar_model(0, 3, 0.3, false);
        let noise = two_point(0.3, 0.25);
        let white = solve_white(&model).unwrap();
        let policy = Policy::from_white(&white).unwrap();
        let init = InitialCondition {
            x0: DVector::from_element(1, 1.5),
            u_prev: DVector::zeros(1),
            w_prev: 0.0,
        };
        let tree = backward_costate(&model, &policy, &noise, &init).unwrap();
        for d in 0..=model.horizon {
            let p = &white.stages[d].p;
            for (rank, x) in tree.states[d].iter().enumerate() {
                let expect = p * x;
                assert!(
                    (&tree.lambdas[d][rank] - &expect).amax() <= 1e-9 * (1.0 + expect.amax()),
                    "depth {d} rank {rank}"
                );
            }
        }
        let res = stationarity_residual(&model, &policy, &tree, &noise).unwrap();
        assert!(res <= 1e-9, "residual {res}");
    }

    #[test]
    fn stationarity_vanishes_at_the_path_optimum_and_not_off_it() {
        let model = planar_model(0, 2);
        let noise = two_point(0.3, 0.25);
        let init = InitialCondition {
            x0: DVector::from_row_slice(&[1.0, 1.0]),
            u_prev: DVector::zeros(1),
            w_prev: noise.finite_support("test").unwrap().0[0],
        };
        let qp = path_qp(&model, &noise, &init).unwrap();
        let policy = Policy::OracleTree(qp.policy);
        let tree = backward_costate(&model, &policy, &noise, &init).unwrap();
        let res = stationarity_residual(&model, &policy, &tree, &noise).unwrap();
        assert!(res <= 1e-8, "residual {res}");

        let zero = Policy::Zero { m: 1, delay: 0 };
        let zero_tree = backward_costate(&model, &zero, &noise, &init).unwrap();
        let zero_res = stationarity_residual(&model, &zero, &zero_tree, &noise).unwrap();
        assert!(zero_res > 1e-3, "zero policy residual {zero_res}");
    }

    #[test]
    fn stationarity_holds_for_the_delayed_path_optimum() {
        let model = planar_model(1, 2);
        let noise = two_point(0.3, 0.5);
        let init = InitialCondition {
            x0: DVector::from_row_slice(&[1.0, -1.0]),
            u_prev: DVector::from_element(1, 0.5),
            w_prev: noise.finite_support("test").unwrap().0[1],
        };
        let qp = path_qp(&model, &noise, &init).unwrap();
        let policy = Policy::OracleTree(qp.policy);
        let tree = backward_costate(&model, &policy, &noise, &init).unwrap();
        let res = stationarity_residual(&model, &policy, &tree, &noise).unwrap();
        assert!(res <= 1e-8, "residual {res}");
    }

    #[test]
    fn undecidable_horizon_has_exact_cost_and_zero_residual() {
        // Delayed with N = 0: the only applied input is the committed one.
        let model = validate(ModelDescription {
            horizon: 0,
            delay: 1,
            sigma2: 1.0,
            a0: one(1.0),
            a1: one(0.0),
            b0: one(1.0),
            b1: one(0.0),
            b2: one(1.0),
            q: one(1.0),
            r: one(1.0),
            p_terminal: one(1.0),
            allow_indefinite: false,
            sigma_first_power: false,
        })
        .unwrap();
        let noise = NoiseSpec::rademacher(1.0);
        let init = InitialCondition {
            x0: DVector::from_element(1, 1.0),
            u_prev: DVector::from_element(1, 0.5),
            w_prev: 1.0,
        };
        // x_1 = x_0 + (1 + w_prev) u_prev = 2 on both branches, so the
        // cost is 1 + 4 regardless of the noise sign.
        let qp = path_qp(&model, &noise, &init).unwrap();
        assert!((qp.cost - 5.0).abs() <= 1e-12);
        assert_eq!(qp.hessian_dim, 0);
        let dp = dp_exact(&model, &noise).unwrap();
        assert!((dp.optimal_cost(&init).unwrap() - 5.0).abs() <= 1e-12);

        let policy = Policy::OracleTree(qp.policy);
        let tree = backward_costate(&model, &policy, &noise, &init).unwrap();
        let res = stationarity_residual(&model, &policy, &tree, &noise).unwrap();
        assert_eq!(res, 0.0);
    }

    #[test]
    fn deterministic_scalar_stationarity_is_exact() {
        let model = validate(ModelDescription {
            horizon: 0,
            delay: 0,
            sigma2: 0.0,
            a0: one(1.0),
            a1: one(0.0),
            b0: one(1.0),
            b1: one(0.0),
            b2: one(0.0),
            q: one(1.0),
            r: one(1.0),
            p_terminal: one(1.0),
            allow_indefinite: false,
            sigma_first_power: false,
        })
        .unwrap();
        let noise = NoiseSpec::rademacher(0.0);
        let init = InitialCondition::origin_shifted(&model, 1.0);
        // u = -x/2 zeroes R u + B' P (x + u) exactly in floating point.
        let policy = Policy::Linear {
            gains: vec![one(0.5)],
            delay: 0,
        };
        let tree = backward_costate(&model, &policy, &noise, &init).unwrap();
        let res = stationarity_residual(&model, &policy, &tree, &noise).unwrap();
        assert_eq!(res, 0.0);
    }

    #[test]
    fn path_enumeration_recovers_the_deterministic_gains() {
        let a = one(1.0);
        let b = one(1.0);
        let q = one(1.0);
        let r = one(1.0);
        let p = one(1.0);
        let det = deterministic_riccati(&a, &b, &q, &r, &p, 4).unwrap();
        let model = validate(ModelDescription {
            horizon: 4,
            delay: 0,
            sigma2: 0.0,
            a0: a,
            a1: one(0.0),
            b0: b,
            b1: one(0.0),
            b2: one(0.0),
            q,
            r,
            p_terminal: p,
            allow_indefinite: false,
            sigma_first_power: false,
        })
        .unwrap();
        let init = InitialCondition::origin_shifted(&model, 1.0);
        let qp = path_qp(&model, &NoiseSpec::rademacher(0.0), &init).unwrap();
        let mut x = 1.0f64;
        for k in 0..=4usize {
            let gain = det.gains[k][(0, 0)];
            assert!(
                (qp.policy.controls[k][0][0] + gain * x).abs() <= 1e-10,
                "step {k}"
            );
            x *= 1.0 - gain;
        }
    }

    #[test]
    fn long_horizon_value_reaches_the_golden_ratio() {
        let det = deterministic_riccati(&one(1.0), &one(1.0), &one(1.0), &one(1.0), &one(1.0), 40)
            .unwrap();
        let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
        assert!((det.ps[0][(0, 0)] - phi).abs() <= 1e-12);
    }

    #[test]
    fn tree_csv_lists_histories_in_rank_order() {
        let model = scalar_model(0, 1, 1.0, true);
        let noise = NoiseSpec::rademacher(1.0);
        let init = InitialCondition {
            x0: DVector::from_element(1, 1.0),
            u_prev: DVector::zeros(1),
            w_prev: 1.0,
        };
        let qp = path_qp(&model, &noise, &init).unwrap();
        let csv = qp.policy.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "history,k,u0");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with(",0,"));
        assert!(lines[2].starts_with("-1.0,1,"));
        assert!(lines[3].starts_with("1.0,1,"));
    }

    #[test]
    fn node_budget_rejects_oversized_trees() {
        let err = NoiseTree::new(&NoiseSpec::rademacher(1.0), 20, "test").unwrap_err();
        match err {
            Error::TooManyNodes { nodes, cap } => {
                assert!(nodes > cap as u128);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn gaussian_noise_is_rejected_by_tree_oracles() {
        let model = scalar_model(0, 2, 1.0, true);
        let err = dp_exact(&model, &NoiseSpec::Gaussian { sigma2: 1.0 }).unwrap_err();
        match err {
            Error::RequiresFiniteSupport { op } => assert_eq!(op, "dp_exact"),
            other => panic!("unexpected error {other:?}"),
        }
    }
}
