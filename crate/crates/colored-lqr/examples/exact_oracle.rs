//! Two independent routes to the exact optimum on the noise tree.
//!
//! For a finite noise law the whole problem is a finite quadratic
//! program: enumerate every noise history, give each decision step its
//! own variable per history, and minimize the expected cost in one shot.
//! Dynamic programming over the tree reaches the same optimum from the
//! other end, one backward step at a time. Neither route touches the
//! Riccati-style recursions, which is what makes their agreement with
//! those recursions evidence rather than tautology.
//!
//! Run with: cargo run --example exact_oracle

use colored_lqr::model::{validate, ModelDescription};
use colored_lqr::oracle::{backward_costate, dp_exact, path_qp, stationarity_residual};
use colored_lqr::riccati_free::solve_measurable;
use colored_lqr::{InitialCondition, NoiseSpec, Policy};
use nalgebra::DMatrix;

fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(1, 1, &[v])
}

fn main() -> Result<(), colored_lqr::Error> {
    let model = validate(ModelDescription {
        horizon: 3,
        delay: 0,
        sigma2: 0.36,
        a0: scalar(0.8),
        a1: scalar(0.3),
        b0: scalar(1.0),
        b1: scalar(0.4),
        b2: scalar(0.5),
        q: scalar(1.0),
        r: scalar(1.0),
        p_terminal: scalar(1.0),
        allow_indefinite: false,
        sigma_first_power: false,
    })?;
    let noise = NoiseSpec::rademacher(0.6);
    let init = InitialCondition {
        x0: nalgebra::DVector::from_column_slice(&[1.0]),
        u_prev: nalgebra::DVector::zeros(1),
        w_prev: 0.6,
    };

    let qp = path_qp(&model, &noise, &init)?;
    let dp = dp_exact(&model, &noise)?;
    println!("path enumeration: {} decision variables over {} noise paths", qp.hessian_dim, 1 << (model.horizon + 1));
    println!("  QP optimum  {:.15}", qp.cost);
    println!("  DP optimum  {:.15}", dp.optimal_cost(&init)?);

    // The optimal decisions branch on the observed history; k = 2 has
    // four histories (w_0, w_1) and four distinct controls.
    println!("\noptimal u_2 per history (w_0, w_1):");
    for (w0, w1) in [(-0.6, -0.6), (-0.6, 0.6), (0.6, -0.6), (0.6, 0.6)] {
        let u = qp.policy.control(2, &[w0, w1])?;
        println!("  ({w0:+.1}, {w1:+.1}) -> {:+.12}", u[0]);
    }

    // First-order certificate: along every history, R u + E[B' lambda]
    // vanishes at the optimum. Perturb one control and it doesn't.
    let policy = Policy::OracleTree(qp.policy.clone());
    let costates = backward_costate(&model, &policy, &noise, &init)?;
    let at_opt = stationarity_residual(&model, &policy, &costates, &noise)?;
    println!("\nstationarity residual at the optimum: {at_opt:.3e}");

    let measurable = Policy::RiccatiMeasurable(solve_measurable(&model, &noise)?);
    let costates2 = backward_costate(&model, &measurable, &noise, &init)?;
    let at_meas = stationarity_residual(&model, &measurable, &costates2, &noise)?;
    println!("same residual for the measurable recursion's policy: {at_meas:.3e}");

    let zero = Policy::Zero { m: 1, delay: 0 };
    let costates3 = backward_costate(&model, &zero, &noise, &init)?;
    let at_zero = stationarity_residual(&model, &zero, &costates3, &noise)?;
    println!("and for the do-nothing policy: {at_zero:.3e}  (not optimal)");
    Ok(())
}
