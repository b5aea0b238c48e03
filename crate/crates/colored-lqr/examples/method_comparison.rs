//! Every applicable method on one instance, with optimality gaps.
//!
//! The comparison solves the instance with each recursion that applies
//! to it, rolls the resulting policies through every noise path for
//! their exact expected costs, and reports each cost as a gap against
//! the path-enumeration optimum. Inapplicable methods (the white-noise
//! recursion when B2 != 0) are reported as such instead of failing the
//! whole table.
//!
//! Run with: cargo run --example method_comparison

use colored_lqr::diagnostics::{compare_policies, default_methods, MethodKind};
use colored_lqr::model::{validate, ModelDescription};
use colored_lqr::{InitialCondition, NoiseSpec};
use nalgebra::DMatrix;

fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(1, 1, &[v])
}

fn colored(delay: u8, b2: f64) -> colored_lqr::SystemModel {
    validate(ModelDescription {
        horizon: 3,
        delay,
        sigma2: 0.36,
        a0: scalar(0.8),
        a1: scalar(0.3),
        b0: scalar(1.0),
        b1: scalar(0.4),
        b2: scalar(b2),
        q: scalar(1.0),
        r: scalar(1.0),
        p_terminal: scalar(1.0),
        allow_indefinite: false,
        sigma_first_power: false,
    })
    .expect("valid model")
}

fn main() -> Result<(), colored_lqr::Error> {
    let noise = NoiseSpec::rademacher(0.6);
    let init = InitialCondition {
        x0: nalgebra::DVector::from_column_slice(&[1.0]),
        u_prev: nalgebra::DVector::zeros(1),
        w_prev: 0.6,
    };

    let model = colored(0, 0.5);
    println!("== colored input noise, no delay ==");
    let report = compare_policies(&model, &noise, &init, &default_methods(&model))?;
    print!("{}", report.to_text());
    println!("\ncsv form:\n{}", report.to_csv("colored_demo"));

    // Force the white method onto the colored instance: it is reported
    // as inapplicable, with the reason, while the others still run.
    println!("== same instance, white method requested anyway ==");
    let forced = [MethodKind::White, MethodKind::Measurable];
    let report = compare_policies(&model, &noise, &init, &forced)?;
    print!("{}", report.to_text());

    println!("\n== one-step input delay ==");
    let model = colored(1, 0.5);
    let report = compare_policies(&model, &noise, &init, &default_methods(&model))?;
    print!("{}", report.to_text());

    println!("\n== lag channel off: every delay-free method ties the optimum ==");
    let model = colored(0, 0.0);
    let report = compare_policies(&model, &noise, &init, &default_methods(&model))?;
    print!("{}", report.to_text());
    Ok(())
}
