//! Solving and driving the loop when the input is committed one step
//! before it acts.
//!
//! With a one-step input delay, u_k is chosen at time k (knowing the
//! noise up to w_{k-1}) but only enters the dynamics at k+1, multiplied
//! by B0 + B1 w_{k+1} + B2 w_k. The backward pass carries five matrices
//! per stage instead of one, and the feedback law reads the previous
//! input and the previous noise alongside the state.
//!
//! Run with: cargo run --example delayed_control

use colored_lqr::model::{validate, ModelDescription};
use colored_lqr::oracle::dp_exact;
use colored_lqr::riccati_delay::{control_delayed, solve_delayed};
use colored_lqr::simulate::{exact_expected_cost, rollout};
use colored_lqr::{InitialCondition, NoiseSpec, Policy};
use nalgebra::{DMatrix, DVector};

fn main() -> Result<(), colored_lqr::Error> {
    let m = |r: usize, c: usize, v: &[f64]| DMatrix::from_row_slice(r, c, v);
    let model = validate(ModelDescription {
        horizon: 3,
        delay: 1,
        sigma2: 0.3,
        a0: m(2, 2, &[0.9, 0.1, -0.2, 0.7]),
        a1: m(2, 2, &[0.2, 0.0, 0.1, -0.1]),
        b0: m(2, 1, &[1.0, 1.0 / 3.0]),
        b1: m(2, 1, &[0.3, 0.0]),
        b2: m(2, 1, &[0.4, 0.1]),
        q: m(2, 2, &[1.0, 0.1, 0.1, 2.0]),
        r: m(1, 1, &[0.7]),
        p_terminal: m(2, 2, &[1.5, 0.0, 0.0, 0.5]),
        allow_indefinite: false,
        sigma_first_power: false,
    })?;
    let noise = NoiseSpec::rademacher(model.sigma2.sqrt());
    let init = InitialCondition {
        x0: DVector::from_column_slice(&[1.0, -0.5]),
        u_prev: DVector::from_column_slice(&[0.2]),
        w_prev: model.sigma2.sqrt(),
    };

    let sched = solve_delayed(&model)?;
    println!("stage matrices run k = 0..={}; the decision at k reads stage k+1", model.horizon);
    for st in &sched.stages {
        println!(
            "  k={}  R={:.6}  |T0|={:.6}  |T1|={:.6}  |F|={:.6}",
            st.k,
            st.r[(0, 0)],
            st.t0.amax(),
            st.t1.amax(),
            st.f.amax()
        );
    }

    // The law splits into state feedback, previous-input feedback, and a
    // correction proportional to the last noise the controller saw.
    let u_minus = control_delayed(&sched, 0, &init.x0, &init.u_prev, -noise_level(&noise))?;
    let u_plus = control_delayed(&sched, 0, &init.x0, &init.u_prev, noise_level(&noise))?;
    println!("\nfirst decision from x0 = (1, -0.5), u_prev = 0.2:");
    println!("  after w_prev = -0.548: u_0 = {:+.9}", u_minus[0]);
    println!("  after w_prev = +0.548: u_0 = {:+.9}", u_plus[0]);

    // One closed-loop path, noise alternating by hand.
    let policy = Policy::RiccatiDelayed(sched);
    let path = [0.5477225575051661, -0.5477225575051661, 0.5477225575051661, -0.5477225575051661];
    let traj = rollout(&model, &policy, &path, &init)?;
    println!("\none path under w = (+, -, +, -):");
    for (k, x) in traj.states.iter().enumerate() {
        let u = traj
            .controls
            .get(k)
            .map(|u| format!("{:+.6}", u[0]))
            .unwrap_or_else(|| "      (none)".into());
        println!("  x_{k} = ({:+.6}, {:+.6})   u_{k} = {u}", x[0], x[1]);
    }
    println!("  realized cost {:.9}", traj.total_cost);

    // Averaged over all noise paths, the recursion's policy matches the
    // exact dynamic program built independently on the noise tree.
    let cost = exact_expected_cost(&model, &policy, &noise, &init)?;
    let dp = dp_exact(&model, &noise)?;
    println!("\nexpected cost of the recursion's policy  {cost:.12}");
    println!("dynamic-programming optimum              {:.12}", dp.optimal_cost(&init)?);
    Ok(())
}

fn noise_level(noise: &NoiseSpec) -> f64 {
    match noise {
        NoiseSpec::Finite { values, .. } => values[values.len() - 1],
        NoiseSpec::Gaussian { sigma2 } => sigma2.sqrt(),
    }
}
