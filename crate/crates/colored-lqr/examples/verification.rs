//! The self-verification suite, plus a randomized agreement sweep.
//!
//! Two layers of checking. The reduction suite pins the solvers to their
//! classical special cases: no noise must reproduce the textbook Riccati
//! recursion, no lag must collapse the three delay-free recursions onto
//! each other, a deterministic delayed model must match the augmented
//! reformulation, and endpoint identities must hold exactly. The sweep
//! then draws seeded random instances and measures each recursion's
//! closed-loop cost against the independent path-enumeration optimum.
//!
//! Run with: cargo run --example verification

use colored_lqr::diagnostics::{
    closed_loop_checks, compare_policies, default_methods, random_instance, reduction_suite,
    InstanceParams,
};
use colored_lqr::InitialCondition;

fn main() -> Result<(), colored_lqr::Error> {
    // A representative colored instance for the reduction suite.
    let params = InstanceParams {
        seed: 11,
        n: 2,
        m: 1,
        horizon: 3,
        delay: 0,
        colored: true,
        asymmetric: true,
    };
    let (model, noise) = random_instance(&params)?;
    let report = reduction_suite(&model);
    print!("{}", report.to_text());

    // The recursion policies index their gain tables by the observed
    // previous noise, so the start must sit on the support.
    let mut init = InitialCondition::origin_shifted(&model, 1.0);
    init.w_prev = noise.finite_support("verification example")?.0[0];
    for check in closed_loop_checks(&model, &noise, &init) {
        println!(
            "[{}] {}: deviation {:.3e} (tolerance {:.1e})",
            if check.pass { "PASS" } else { "FAIL" },
            check.name,
            check.deviation,
            check.tolerance
        );
    }

    // Sweep: per seed, largest gap of any applicable method against the
    // enumeration optimum. Delay-free colored instances should show the
    // measurable method at machine precision and the literal method a
    // little above it; delayed instances pit the five-matrix recursion
    // against the exact dynamic program.
    println!("\nseeded sweep, worst relative gap per instance:");
    for delay in [0u8, 1] {
        for seed in 0..6u64 {
            let params = InstanceParams {
                seed: 100 + seed,
                n: 2,
                m: 1,
                horizon: 3,
                delay,
                colored: true,
                asymmetric: seed % 2 == 0,
            };
            let (model, noise) = random_instance(&params)?;
            let mut init = InitialCondition::origin_shifted(&model, 1.0);
            init.w_prev = noise.finite_support("verification example")?.0[0];
            let report = compare_policies(&model, &noise, &init, &default_methods(&model))?;
            let worst = report
                .results
                .iter()
                .filter(|r| r.method.name() != "literal")
                .filter_map(|r| r.gap)
                .fold(0.0f64, |a, g| a.max(g.abs() / report.baseline_cost.max(1.0)));
            println!(
                "  delay {}  seed {:>3}  optimum {:>12.6}  worst exact-method gap {:.2e}",
                delay,
                100 + seed,
                report.baseline_cost,
                worst
            );
        }
    }
    Ok(())
}
