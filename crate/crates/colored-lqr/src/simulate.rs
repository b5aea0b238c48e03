//! Forward simulation, exact cost accumulation, Monte Carlo estimation,
//! and exact expected cost by path enumeration.
//!
//! Determinism contract: every function here is a pure function of its
//! arguments. Monte Carlo derives one counter-based stream per sample from
//! (seed, sample index), so the estimate does not depend on evaluation
//! order and reruns are byte-identical.

use nalgebra::DVector;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg::{quad_form, Accumulator};
use crate::model::{check_noise, InitialCondition, NoiseSpec, SystemModel};
use crate::policy::Policy;
use crate::tolerances::{PATH_CAP, REPLAY_TOL};

/// One closed-loop path with everything needed to replay it.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// w_{-1}..w_N.
    pub noises: Vec<f64>,
    /// x_0..x_{N+1}.
    pub states: Vec<DVector<f64>>,
    /// Delay-free: u_0..u_N. Delayed: u_{-1}..u_{N-1}.
    pub controls: Vec<DVector<f64>>,
    /// Stage costs for k = 0..=N. Delay-free: x_k'Qx_k + u_k'Ru_k.
    /// Delayed: x_k'Qx_k plus, for k >= 1, u_{k-1}'Ru_{k-1}.
    pub stage_costs: Vec<f64>,
    pub terminal_cost: f64,
    /// Compensated sum of stage costs plus terminal cost.
    pub total_cost: f64,
}

/// Drive the closed loop along one noise path w_0..w_N.
pub fn rollout(
    model: &SystemModel,
    policy: &Policy,
    noise_path: &[f64],
    init: &InitialCondition,
) -> Result<Trajectory> {
    if noise_path.len() != model.horizon + 1 {
        return Err(Error::DimensionMismatch {
            field: "noise_path".into(),
            expected_rows: model.horizon + 1,
            expected_cols: 1,
            found_rows: noise_path.len(),
            found_cols: 1,
        });
    }
    if policy.delay() != usize::from(model.delay) {
        return Err(Error::DelayMismatch {
            op: "rollout",
            expected: usize::from(model.delay),
            found: policy.delay(),
        });
    }
    init.check_dims(model)?;

    let horizon = model.horizon;
    let mut noises = Vec::with_capacity(horizon + 2);
    noises.push(init.w_prev);
    noises.extend_from_slice(noise_path);

    let mut states = Vec::with_capacity(horizon + 2);
    states.push(init.x0.clone());
    let mut controls: Vec<DVector<f64>> = Vec::with_capacity(horizon + 1);
    let mut stage_costs = Vec::with_capacity(horizon + 1);
    let mut total = Accumulator::new();

    if model.delay == 0 {
        let mut u_prev = init.u_prev.clone();
        for k in 0..=horizon {
            let x = states[k].clone();
            // past = (w_{-1}, .., w_{k-1}).
            let u = policy.control_at(k, &x, &u_prev, &noises[0..=k])?;
            if u.len() != model.m {
                return Err(Error::DimensionMismatch {
                    field: "control".into(),
                    expected_rows: model.m,
                    expected_cols: 1,
                    found_rows: u.len(),
                    found_cols: 1,
                });
            }
            let w_k = noises[k + 1];
            let w_prev = noises[k];
            let sc = quad_form(&model.q, &x, &x) + quad_form(&model.r, &u, &u);
            stage_costs.push(sc);
            total.add(sc);
            let x_next = model.a_of(w_k) * &x + model.b_of(w_k, w_prev) * &u;
            states.push(x_next);
            controls.push(u.clone());
            u_prev = u;
        }
    } else {
        // Delayed: the input applied during step k is u_{k-1}; the decision
        // u_k (for k < N) is made from (x_k, u_{k-1}, w_{k-1}).
        controls.push(init.u_prev.clone());
        for k in 0..=horizon {
            let x = states[k].clone();
            let u_applied = controls[k].clone();
            if k < horizon {
                let u = policy.control_at(k, &x, &u_applied, &noises[0..=k])?;
                if u.len() != model.m {
                    return Err(Error::DimensionMismatch {
                        field: "control".into(),
                        expected_rows: model.m,
                        expected_cols: 1,
                        found_rows: u.len(),
                        found_cols: 1,
                    });
                }
                controls.push(u);
            }
            let w_k = noises[k + 1];
            let w_prev = noises[k];
            let mut sc = quad_form(&model.q, &x, &x);
            if k >= 1 {
                sc += quad_form(&model.r, &u_applied, &u_applied);
            }
            stage_costs.push(sc);
            total.add(sc);
            let x_next = model.a_of(w_k) * &x + model.b_of(w_k, w_prev) * &u_applied;
            states.push(x_next);
        }
    }

    let x_last = states.last().expect("states nonempty");
    let terminal_cost = quad_form(&model.p_terminal, x_last, x_last);
    total.add(terminal_cost);
    Ok(Trajectory {
        noises,
        states,
        controls,
        stage_costs,
        terminal_cost,
        total_cost: total.value(),
    })
}

/// Recompute the cost of a recorded trajectory, replaying the dynamics as
/// a consistency check.
pub fn cost(model: &SystemModel, traj: &Trajectory) -> Result<f64> {
    let horizon = model.horizon;
    if traj.noises.len() != horizon + 2
        || traj.states.len() != horizon + 2
        || traj.controls.len() != horizon + 1
        || traj.stage_costs.len() != horizon + 1
    {
        return Err(Error::InconsistentTrajectory {
            detail: format!(
                "lengths (noises {}, states {}, controls {}, stage costs {}) do not fit horizon {}",
                traj.noises.len(),
                traj.states.len(),
                traj.controls.len(),
                traj.stage_costs.len(),
                horizon
            ),
        });
    }
    let mut total = Accumulator::new();
    for k in 0..=horizon {
        let x = &traj.states[k];
        let w_k = traj.noises[k + 1];
        let w_prev = traj.noises[k];
        // Applied input at step k: u_k when delay-free, u_{k-1} when
        // delayed; both live at controls[k].
        let u_applied = &traj.controls[k];
        let predicted = model.a_of(w_k) * x + model.b_of(w_k, w_prev) * u_applied;
        let actual = &traj.states[k + 1];
        for i in 0..predicted.len() {
            let dev = (predicted[i] - actual[i]).abs();
            if dev.is_nan() || dev > REPLAY_TOL * (1.0 + actual[i].abs()) {
                return Err(Error::InconsistentTrajectory {
                    detail: format!(
                        "state {} does not replay at step {k}: component {i} deviates by {dev:.3e}",
                        k + 1
                    ),
                });
            }
        }
        let sc = match model.delay {
            0 => quad_form(&model.q, x, x) + quad_form(&model.r, u_applied, u_applied),
            _ => {
                let mut sc = quad_form(&model.q, x, x);
                if k >= 1 {
                    sc += quad_form(&model.r, u_applied, u_applied);
                }
                sc
            }
        };
        total.add(sc);
    }
    let x_last = &traj.states[horizon + 1];
    total.add(quad_form(&model.p_terminal, x_last, x_last));
    Ok(total.value())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_samples: u64,
    pub seed: u64,
}

const UNIT: f64 = 1.0 / 9007199254740992.0; // 2^-53

/// Uniform draw in the open interval (0, 1) from one 64-bit word.
pub(crate) fn uniform_open(word: u64) -> f64 {
    ((word >> 11) as f64 + 0.5) * UNIT
}

fn draw_noise(spec: &NoiseSpec, normal: &Normal, u: f64) -> f64 {
    match spec {
        NoiseSpec::Gaussian { sigma2 } => sigma2.sqrt() * normal.inverse_cdf(u),
        NoiseSpec::Finite { values, probs } => {
            let mut cum = 0.0;
            for (v, p) in values.iter().zip(probs) {
                cum += p;
                if u < cum {
                    return *v;
                }
            }
            *values.last().expect("finite support nonempty")
        }
    }
}

/// The noise path sample `stream` would see under `seed`: stream i of a
/// counter-based generator seeded once, so any sample can be reproduced
/// in isolation and in any order.
pub fn sample_noise_path(noise: &NoiseSpec, steps: usize, seed: u64, stream: u64) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..steps)
        .map(|_| draw_noise(noise, &normal, uniform_open(rng.next_u64())))
        .collect()
}

/// Monte Carlo estimate of the expected closed-loop cost. Sample i uses
/// stream i of a counter-based generator seeded once, so the result is
/// independent of evaluation order and identical across reruns.
pub fn monte_carlo(
    model: &SystemModel,
    policy: &Policy,
    noise: &NoiseSpec,
    init: &InitialCondition,
    n_samples: u64,
    seed: u64,
) -> Result<Estimate> {
    if n_samples == 0 {
        return Err(Error::BadProbabilities {
            reason: "monte_carlo needs at least one sample".into(),
        });
    }
    check_noise(model, noise)?;
    init.check_dims(model)?;

    let mut costs = Vec::with_capacity(n_samples as usize);
    for i in 0..n_samples {
        let path = sample_noise_path(noise, model.horizon + 1, seed, i);
        let traj = rollout(model, policy, &path, init)?;
        costs.push(traj.total_cost);
    }

    let mut sum = Accumulator::new();
    for &c in &costs {
        sum.add(c);
    }
    let mean = sum.value() / n_samples as f64;
    let stderr = if n_samples < 2 {
        0.0
    } else {
        let mut ss = Accumulator::new();
        for &c in &costs {
            ss.add((c - mean) * (c - mean));
        }
        let var = ss.value() / (n_samples - 1) as f64;
        (var.max(0.0) / n_samples as f64).sqrt()
    };
    Ok(Estimate {
        mean,
        stderr,
        n_samples,
        seed,
    })
}

pub(crate) fn count_paths(support_len: usize, steps: usize, cap: u64) -> Result<u64> {
    let mut paths: u128 = 1;
    for _ in 0..steps {
        paths = paths.saturating_mul(support_len as u128);
        if paths > cap as u128 {
            return Err(Error::TooManyPaths { paths, cap });
        }
    }
    Ok(paths as u64)
}

/// Exact expected closed-loop cost by enumerating every noise path.
pub fn exact_expected_cost(
    model: &SystemModel,
    policy: &Policy,
    noise: &NoiseSpec,
    init: &InitialCondition,
) -> Result<f64> {
    exact_expected_cost_with_cap(model, policy, noise, init, PATH_CAP)
}

pub fn exact_expected_cost_with_cap(
    model: &SystemModel,
    policy: &Policy,
    noise: &NoiseSpec,
    init: &InitialCondition,
    cap: u64,
) -> Result<f64> {
    let ens = enumerate_closed_loop(model, policy, noise, init, cap)?;
    let mut acc = Accumulator::new();
    for (traj, prob) in ens.trajectories.iter().zip(&ens.probs) {
        acc.add(prob * traj.total_cost);
    }
    Ok(acc.value())
}

/// Every closed-loop path, in lexicographic support-index order with the
/// step-0 digit most significant, paired with its probability.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub trajectories: Vec<Trajectory>,
    pub probs: Vec<f64>,
}

pub fn enumerate_closed_loop(
    model: &SystemModel,
    policy: &Policy,
    noise: &NoiseSpec,
    init: &InitialCondition,
    cap: u64,
) -> Result<Ensemble> {
    check_noise(model, noise)?;
    let (support, probs) = noise.finite_support("enumerate_closed_loop")?;
    let steps = model.horizon + 1;
    let n_paths = count_paths(support.len(), steps, cap)?;

    let mut trajectories = Vec::with_capacity(n_paths as usize);
    let mut path_probs = Vec::with_capacity(n_paths as usize);
    let mut digits = vec![0usize; steps];
    let mut path = vec![0.0; steps];
    loop {
        let mut prob = 1.0;
        for (s, &d) in path.iter_mut().zip(&digits) {
            *s = support[d];
            prob *= probs[d];
        }
        trajectories.push(rollout(model, policy, &path, init)?);
        path_probs.push(prob);

        // Odometer increment, least significant digit last.
        let mut pos = steps;
        loop {
            if pos == 0 {
                return Ok(Ensemble {
                    trajectories,
                    probs: path_probs,
                });
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < support.len() {
                break;
            }
            digits[pos] = 0;
        }
    }
}

/// One row per step `k, w, x[0..n), u[0..m), stage_cost`, where w is the
/// noise realized during step k and u is the input applied during step k.
/// A final row carries the terminal state and terminal cost.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let n = traj.states[0].len();
    let m = traj.controls[0].len();
    let mut out = String::from("k,w");
    for i in 0..n {
        out.push_str(&format!(",x{i}"));
    }
    for i in 0..m {
        out.push_str(&format!(",u{i}"));
    }
    out.push_str(",stage_cost\n");
    let steps = traj.stage_costs.len();
    for k in 0..steps {
        out.push_str(&format!("{k},{:?}", traj.noises[k + 1]));
        for i in 0..n {
            out.push_str(&format!(",{:?}", traj.states[k][i]));
        }
        for i in 0..m {
            out.push_str(&format!(",{:?}", traj.controls[k][i]));
        }
        out.push_str(&format!(",{:?}\n", traj.stage_costs[k]));
    }
    out.push_str(&format!("{steps},"));
    for i in 0..n {
        out.push_str(&format!(",{:?}", traj.states[steps][i]));
    }
    for _ in 0..m {
        out.push(',');
    }
    out.push_str(&format!(",{:?}\n", traj.terminal_cost));
    out
}

pub fn estimate_csv(est: &Estimate) -> String {
    format!(
        "mean,stderr,n_samples,seed\n{:?},{:?},{},{}\n",
        est.mean, est.stderr, est.n_samples, est.seed
    )
}
