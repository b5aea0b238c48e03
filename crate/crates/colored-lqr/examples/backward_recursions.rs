//! The three delay-free backward recursions on one scalar instance.
//!
//! The input gain B0 + B1 w_k + B2 w_{k-1} carries last step's noise, so
//! a controller that reads the noise history before acting can do better
//! than any recursion that ignores the lag. This example solves the same
//! model three ways and shows where the value functions part company:
//!
//! - the closed-form recursion conditioned on w_{k-1} (cheap, slightly
//!   conservative because it averages the continuation value),
//! - the exact noise-by-noise recursion (optimal for finite noise laws),
//! - the classical white-noise recursion, valid only once B2 = 0.
//!
//! Run with: cargo run --example backward_recursions

use colored_lqr::model::{validate, ModelDescription};
use colored_lqr::riccati_free::{optimal_value, solve_literal, solve_measurable, solve_white};
use colored_lqr::simulate::exact_expected_cost;
use colored_lqr::{InitialCondition, NoiseSpec, Policy, Schedule};
use nalgebra::DMatrix;

fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(1, 1, &[v])
}

fn main() -> Result<(), colored_lqr::Error> {
    let model = validate(ModelDescription {
        horizon: 6,
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

    println!("colored input noise: B_k = 1.0 + 0.4 w_k + 0.5 w_(k-1), w = +-0.6\n");

    let literal = solve_literal(&model, &noise)?;
    let measurable = solve_measurable(&model, &noise)?;

    // Both recursions produce one value matrix per support point of the
    // previous noise; at w_prev = +0.6 they disagree because the literal
    // form averages tomorrow's value over w_k before minimizing.
    let v_lit = optimal_value(&Schedule::Literal(literal.clone()), &init)?;
    let v_meas = optimal_value(&Schedule::Measurable(measurable.clone()), &init)?;
    println!("value promised from x0 = 1, w_prev = +0.6");
    println!("  literal     {v_lit:.12}");
    println!("  measurable  {v_meas:.12}");

    // The promises are honest: rolling each policy through every noise
    // path reproduces its own value. The literal policy really does pay
    // more in closed loop.
    let cost_lit = exact_expected_cost(
        &model,
        &Policy::RiccatiLiteral(literal),
        &noise,
        &init,
    )?;
    let cost_meas = exact_expected_cost(
        &model,
        &Policy::RiccatiMeasurable(measurable),
        &noise,
        &init,
    )?;
    println!("\nrealized expected cost in closed loop");
    println!("  literal     {cost_lit:.12}");
    println!("  measurable  {cost_meas:.12}");
    println!("  lag premium {:+.3e}", cost_lit - cost_meas);

    // Kill the lag channel and all three recursions collapse onto the
    // classical white-noise solution.
    let mut flat = model.clone();
    flat.b2 = scalar(0.0);
    let white = solve_white(&flat)?;
    let lit0 = solve_literal(&flat, &noise)?;
    let v_white = white.stages[0].p[(0, 0)];
    let v_lit0 = lit0.stages[0].p[0][(0, 0)];
    println!("\nwith B2 = 0 the recursions coincide:");
    println!("  white   P_0 = {v_white:.15}");
    println!("  literal P_0 = {v_lit0:.15}  (difference {:.1e})", (v_white - v_lit0).abs());
    Ok(())
}
