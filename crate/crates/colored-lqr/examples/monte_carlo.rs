//! Seeded Monte Carlo against the exact expected cost.
//!
//! The estimator streams one ChaCha-seeded noise path per sample, so the
//! same (seed, sample count) always reproduces the same estimate bit for
//! bit, and widening the run only appends samples. For finite noise laws
//! the exact expected cost is available by path enumeration, which turns
//! the estimator's standard error into a checkable claim.
//!
//! Run with: cargo run --example monte_carlo

use colored_lqr::model::{validate, ModelDescription};
use colored_lqr::riccati_free::solve_measurable;
use colored_lqr::simulate::{exact_expected_cost, monte_carlo};
use colored_lqr::{InitialCondition, NoiseSpec, Policy};
use nalgebra::DMatrix;

fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(1, 1, &[v])
}

fn main() -> Result<(), colored_lqr::Error> {
    let model = validate(ModelDescription {
        horizon: 4,
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
    let policy = Policy::RiccatiMeasurable(solve_measurable(&model, &noise)?);

    let exact = exact_expected_cost(&model, &policy, &noise, &init)?;
    println!("exact expected cost (all {} noise paths): {exact:.12}\n", 1 << (model.horizon + 1));

    println!("{:>8}  {:>16}  {:>12}  {:>8}", "samples", "estimate", "stderr", "z-score");
    for samples in [100u64, 1_000, 10_000, 100_000] {
        let est = monte_carlo(&model, &policy, &noise, &init, samples, 42)?;
        let z = (est.mean - exact) / est.stderr;
        println!(
            "{:>8}  {:>16.12}  {:>12.3e}  {:>+8.2}",
            est.n_samples, est.mean, est.stderr, z
        );
    }

    // Determinism: same seed, same estimate, down to the last bit.
    let a = monte_carlo(&model, &policy, &noise, &init, 5_000, 7)?;
    let b = monte_carlo(&model, &policy, &noise, &init, 5_000, 7)?;
    assert_eq!(a.mean.to_bits(), b.mean.to_bits());
    assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
    println!("\nseed 7 reruns reproduce mean {:.15} exactly", a.mean);

    // Different seeds give independent estimates that still bracket the
    // exact value.
    let c = monte_carlo(&model, &policy, &noise, &init, 5_000, 8)?;
    println!("seed 8 gives             {:.15}", c.mean);
    println!("exact                    {exact:.15}");
    Ok(())
}
