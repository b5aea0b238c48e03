//! Config documents round-trip bit for bit.
//!
//! Problem descriptions are YAML with nested arrays for matrices. The
//! loader validates dimensions, definiteness, and the noise law's first
//! two moments, and rejects unknown keys outright; the emitter writes
//! floats in shortest round-trip form, so emit -> load -> emit is a
//! fixed point and two people exchanging configs can diff them bytewise.
//!
//! Run with: cargo run --example config_roundtrip

use colored_lqr::model::emit_config;
use colored_lqr::{load_config, Error};

const DOC: &str = "\
n: 2
m: 1
N: 3
delay: 1
sigma2: 0.3
A0: [[0.9, 0.1], [-0.2, 0.7]]
A1: [[0.2, 0.0], [0.1, -0.1]]
B0: [[1.0], [0.3333333333333333]]
B1: [[0.3], [0.0]]
B2: [[0.4], [0.1]]
Q: [[1.0, 0.1], [0.1, 2.0]]
R: [[0.7]]
P_terminal: [[1.5, 0.0], [0.0, 0.5]]
noise:
  kind: finite
  support:
    - [-0.7745966692414834, 0.3333333333333333]
    - [0.3872983346207417, 0.6666666666666666]
init:
  x0: [1.0, -0.5]
  u_prev: [0.2]
  w_prev: 0.3872983346207417
";

fn main() -> Result<(), Error> {
    let first = load_config(DOC)?;
    println!(
        "loaded: n={} m={} N={} delay={} sigma2={}",
        first.model.n, first.model.m, first.model.horizon, first.model.delay, first.model.sigma2
    );

    let emitted = emit_config(&first.model, &first.noise, &first.init);
    println!("\nemitted document:\n{emitted}");

    let second = load_config(&emitted)?;
    assert_eq!(first.model, second.model);
    assert_eq!(first.noise, second.noise);
    assert_eq!(first.init, second.init);
    let emitted_again = emit_config(&second.model, &second.noise, &second.init);
    assert_eq!(emitted, emitted_again);
    println!("emit -> load -> emit reproduced every byte");

    // The loader names exactly what it dislikes.
    for (label, broken) in [
        ("unknown key", format!("{DOC}S: [[1.0]]\n")),
        ("wrong shape", DOC.replace("R: [[0.7]]", "R: [[0.7, 0.0]]")),
        (
            "moment mismatch",
            DOC.replace("sigma2: 0.3", "sigma2: 0.4"),
        ),
    ] {
        match load_config(&broken) {
            Err(e) => println!("{label:>16}: {e}"),
            Ok(_) => println!("{label:>16}: unexpectedly accepted"),
        }
    }
    Ok(())
}
