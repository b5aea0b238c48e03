//! Config documents: YAML key/value text with nested arrays for matrices.
//!
//! ```yaml
//! n: 1
//! m: 1
//! N: 2
//! sigma2: 1.0
//! A0: [[1.0]]
//! B0: [[1.0]]
//! Q: [[1.0]]
//! R: [[1.0]]
//! P_terminal: [[1.0]]
//! noise: {kind: rademacher, sigma: 1.0}
//! init: {x0: [1.0], w_prev: 0.0}
//! ```
//!
//! Unknown keys are errors, not warnings; the emitter writes floats in
//! shortest round-trip form so emit -> load reproduces matrices bit for bit.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde_yaml::{Mapping, Value};

use crate::error::{Error, Result};
use crate::model::{
    make_noise, validate, InitialCondition, ModelDescription, NoiseDescription, NoiseSpec,
    SystemModel,
};

/// Everything a config document describes.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub model: SystemModel,
    pub noise: NoiseSpec,
    pub init: InitialCondition,
}

const TOP_KEYS: &[&str] = &[
    "n",
    "m",
    "N",
    "delay",
    "sigma2",
    "A0",
    "A1",
    "B0",
    "B1",
    "B2",
    "Q",
    "R",
    "P_terminal",
    "noise",
    "init",
    "allow_indefinite",
    "sigma_first_power",
];

fn parse_err(context: impl Into<String>) -> Error {
    Error::Parse {
        context: context.into(),
    }
}

fn as_mapping<'a>(v: &'a Value, what: &str) -> Result<&'a Mapping> {
    v.as_mapping()
        .ok_or_else(|| parse_err(format!("{what}: expected a key: value mapping")))
}

fn key_str(k: &Value) -> Result<&str> {
    k.as_str()
        .ok_or_else(|| parse_err(format!("non-string key {k:?}")))
}

fn check_keys(map: &Mapping, allowed: &[&str], prefix: &str) -> Result<()> {
    for k in map.keys() {
        let name = key_str(k)?;
        if !allowed.contains(&name) {
            let key = if prefix.is_empty() {
                name.to_string()
            } else {
                format!("{prefix}.{name}")
            };
            return Err(Error::UnknownKey { key });
        }
    }
    Ok(())
}

fn get<'a>(map: &'a Mapping, key: &str) -> Option<&'a Value> {
    map.get(Value::String(key.to_string()))
}

fn require<'a>(map: &'a Mapping, key: &str) -> Result<&'a Value> {
    get(map, key).ok_or_else(|| Error::MissingKey {
        key: key.to_string(),
    })
}

fn as_f64(v: &Value, what: &str) -> Result<f64> {
    v.as_f64()
        .ok_or_else(|| parse_err(format!("{what}: expected a number, found {v:?}")))
}

fn as_i64(v: &Value, what: &str) -> Result<i64> {
    v.as_i64()
        .ok_or_else(|| parse_err(format!("{what}: expected an integer, found {v:?}")))
}

fn as_bool(v: &Value, what: &str) -> Result<bool> {
    v.as_bool()
        .ok_or_else(|| parse_err(format!("{what}: expected a boolean, found {v:?}")))
}

fn parse_vector(v: &Value, what: &str, len: usize) -> Result<DVector<f64>> {
    let seq = v
        .as_sequence()
        .ok_or_else(|| parse_err(format!("{what}: expected an array of numbers")))?;
    if seq.len() != len {
        return Err(Error::DimensionMismatch {
            field: what.to_string(),
            expected_rows: len,
            expected_cols: 1,
            found_rows: seq.len(),
            found_cols: 1,
        });
    }
    let mut out = DVector::zeros(len);
    for (i, item) in seq.iter().enumerate() {
        out[i] = as_f64(item, &format!("{what}[{i}]"))?;
    }
    Ok(out)
}

fn parse_matrix(v: &Value, what: &str, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    let seq = v
        .as_sequence()
        .ok_or_else(|| parse_err(format!("{what}: expected an array of rows")))?;
    let found_rows = seq.len();
    let mut found_cols = 0usize;
    let mut data = Vec::with_capacity(rows * cols);
    for (i, row) in seq.iter().enumerate() {
        let row_seq = row
            .as_sequence()
            .ok_or_else(|| parse_err(format!("{what}[{i}]: expected an array of numbers")))?;
        if i == 0 {
            found_cols = row_seq.len();
        } else if row_seq.len() != found_cols {
            return Err(parse_err(format!(
                "{what}[{i}]: row length {} differs from row 0 length {found_cols}",
                row_seq.len()
            )));
        }
        for (j, item) in row_seq.iter().enumerate() {
            data.push(as_f64(item, &format!("{what}[{i}][{j}]"))?);
        }
    }
    if found_rows != rows || found_cols != cols {
        return Err(Error::DimensionMismatch {
            field: what.to_string(),
            expected_rows: rows,
            expected_cols: cols,
            found_rows,
            found_cols,
        });
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

fn parse_noise(v: &Value) -> Result<NoiseDescription> {
    let map = as_mapping(v, "noise")?;
    let kind = require(map, "kind").map_err(|_| Error::MissingKey {
        key: "noise.kind".into(),
    })?;
    let kind = kind
        .as_str()
        .ok_or_else(|| parse_err("noise.kind: expected a string"))?;
    match kind {
        "rademacher" => {
            check_keys(map, &["kind", "sigma"], "noise")?;
            let sigma = as_f64(
                require(map, "sigma").map_err(|_| Error::MissingKey {
                    key: "noise.sigma".into(),
                })?,
                "noise.sigma",
            )?;
            Ok(NoiseDescription::Rademacher { sigma })
        }
        "gaussian" => {
            check_keys(map, &["kind", "sigma2"], "noise")?;
            let sigma2 = as_f64(
                require(map, "sigma2").map_err(|_| Error::MissingKey {
                    key: "noise.sigma2".into(),
                })?,
                "noise.sigma2",
            )?;
            Ok(NoiseDescription::Gaussian { sigma2 })
        }
        "finite" => {
            check_keys(map, &["kind", "support"], "noise")?;
            let support_val = require(map, "support").map_err(|_| Error::MissingKey {
                key: "noise.support".into(),
            })?;
            let seq = support_val
                .as_sequence()
                .ok_or_else(|| parse_err("noise.support: expected an array of [value, probability] pairs"))?;
            let mut support = Vec::with_capacity(seq.len());
            for (i, pair) in seq.iter().enumerate() {
                let pair_seq = pair.as_sequence().ok_or_else(|| {
                    parse_err(format!("noise.support[{i}]: expected [value, probability]"))
                })?;
                if pair_seq.len() != 2 {
                    return Err(parse_err(format!(
                        "noise.support[{i}]: expected exactly two entries"
                    )));
                }
                let v = as_f64(&pair_seq[0], &format!("noise.support[{i}][0]"))?;
                let p = as_f64(&pair_seq[1], &format!("noise.support[{i}][1]"))?;
                support.push((v, p));
            }
            Ok(NoiseDescription::Finite { support })
        }
        other => Err(parse_err(format!(
            "noise.kind: expected rademacher | gaussian | finite, found `{other}`"
        ))),
    }
}

/// Parse and validate a config document.
pub fn load_config(text: &str) -> Result<LoadedConfig> {
    let doc: Value = serde_yaml::from_str(text)
        .map_err(|e| parse_err(format!("document: {e}")))?;
    let map = as_mapping(&doc, "document")?;
    check_keys(map, TOP_KEYS, "")?;

    let n = as_i64(require(map, "n")?, "n")?;
    if n < 1 {
        return Err(parse_err(format!("n: must be a positive integer, got {n}")));
    }
    let n = n as usize;
    let m = as_i64(require(map, "m")?, "m")?;
    if m < 1 {
        return Err(parse_err(format!("m: must be a positive integer, got {m}")));
    }
    let m = m as usize;

    let horizon_raw = as_i64(require(map, "N")?, "N")?;
    if horizon_raw < 0 {
        return Err(Error::BadHorizon { given: horizon_raw });
    }
    let horizon = horizon_raw as usize;

    let delay = match get(map, "delay") {
        None => 0u8,
        Some(v) => {
            let d = as_i64(v, "delay")?;
            if d != 0 && d != 1 {
                return Err(Error::BadDelay { given: d });
            }
            d as u8
        }
    };

    let sigma2 = as_f64(require(map, "sigma2")?, "sigma2")?;

    let required_matrix = |key: &str, rows: usize, cols: usize| -> Result<DMatrix<f64>> {
        parse_matrix(require(map, key)?, key, rows, cols)
    };
    let optional_matrix = |key: &str, rows: usize, cols: usize| -> Result<DMatrix<f64>> {
        match get(map, key) {
            None => Ok(DMatrix::zeros(rows, cols)),
            Some(v) => parse_matrix(v, key, rows, cols),
        }
    };

    let a0 = required_matrix("A0", n, n)?;
    let a1 = optional_matrix("A1", n, n)?;
    let b0 = required_matrix("B0", n, m)?;
    let b1 = optional_matrix("B1", n, m)?;
    let b2 = optional_matrix("B2", n, m)?;
    let q = required_matrix("Q", n, n)?;
    let r = required_matrix("R", m, m)?;
    let p_terminal = required_matrix("P_terminal", n, n)?;

    let allow_indefinite = match get(map, "allow_indefinite") {
        None => false,
        Some(v) => as_bool(v, "allow_indefinite")?,
    };
    let sigma_first_power = match get(map, "sigma_first_power") {
        None => false,
        Some(v) => as_bool(v, "sigma_first_power")?,
    };

    let model = validate(ModelDescription {
        horizon,
        delay,
        sigma2,
        a0,
        a1,
        b0,
        b1,
        b2,
        q,
        r,
        p_terminal,
        allow_indefinite,
        sigma_first_power,
    })?;

    let noise = match get(map, "noise") {
        None => NoiseSpec::rademacher(model.sigma2.sqrt()),
        Some(v) => make_noise(&parse_noise(v)?)?,
    };
    super::check_noise(&model, &noise)?;

    let init = match get(map, "init") {
        None => InitialCondition::origin(&model),
        Some(v) => {
            let imap = as_mapping(v, "init")?;
            check_keys(imap, &["x0", "u_prev", "w_prev"], "init")?;
            let x0 = match get(imap, "x0") {
                None => DVector::zeros(model.n),
                Some(x) => parse_vector(x, "init.x0", model.n)?,
            };
            let u_prev = match get(imap, "u_prev") {
                None => DVector::zeros(model.m),
                Some(u) => parse_vector(u, "init.u_prev", model.m)?,
            };
            let w_prev = match get(imap, "w_prev") {
                None => 0.0,
                Some(w) => as_f64(w, "init.w_prev")?,
            };
            InitialCondition { x0, u_prev, w_prev }
        }
    };
    init.check_dims(&model)?;

    Ok(LoadedConfig { model, noise, init })
}

pub fn load_config_file(path: &std::path::Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path)?;
    load_config(&text)
}

fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn fmt_matrix(m: &DMatrix<f64>) -> String {
    let rows: Vec<String> = (0..m.nrows())
        .map(|i| {
            let cells: Vec<String> = (0..m.ncols()).map(|j| fmt_f64(m[(i, j)])).collect();
            format!("[{}]", cells.join(", "))
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

fn fmt_vector(v: &DVector<f64>) -> String {
    let cells: Vec<String> = v.iter().map(|x| fmt_f64(*x)).collect();
    format!("[{}]", cells.join(", "))
}

/// Write a config document that `load_config` parses back to the same model,
/// noise, and initial condition, floats bit for bit.
pub fn emit_config(model: &SystemModel, noise: &NoiseSpec, init: &InitialCondition) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "n: {}", model.n);
    let _ = writeln!(out, "m: {}", model.m);
    let _ = writeln!(out, "N: {}", model.horizon);
    let _ = writeln!(out, "delay: {}", model.delay);
    let _ = writeln!(out, "sigma2: {}", fmt_f64(model.sigma2));
    let _ = writeln!(out, "A0: {}", fmt_matrix(&model.a0));
    let _ = writeln!(out, "A1: {}", fmt_matrix(&model.a1));
    let _ = writeln!(out, "B0: {}", fmt_matrix(&model.b0));
    let _ = writeln!(out, "B1: {}", fmt_matrix(&model.b1));
    let _ = writeln!(out, "B2: {}", fmt_matrix(&model.b2));
    let _ = writeln!(out, "Q: {}", fmt_matrix(&model.q));
    let _ = writeln!(out, "R: {}", fmt_matrix(&model.r));
    let _ = writeln!(out, "P_terminal: {}", fmt_matrix(&model.p_terminal));
    match noise {
        NoiseSpec::Gaussian { sigma2 } => {
            let _ = writeln!(out, "noise: {{kind: gaussian, sigma2: {}}}", fmt_f64(*sigma2));
        }
        NoiseSpec::Finite { values, probs } => {
            let pairs: Vec<String> = values
                .iter()
                .zip(probs)
                .map(|(v, p)| format!("[{}, {}]", fmt_f64(*v), fmt_f64(*p)))
                .collect();
            let _ = writeln!(out, "noise: {{kind: finite, support: [{}]}}", pairs.join(", "));
        }
    }
    let _ = writeln!(
        out,
        "init: {{x0: {}, u_prev: {}, w_prev: {}}}",
        fmt_vector(&init.x0),
        fmt_vector(&init.u_prev),
        fmt_f64(init.w_prev)
    );
    if model.allow_indefinite {
        let _ = writeln!(out, "allow_indefinite: true");
    }
    if model.sigma_first_power {
        let _ = writeln!(out, "sigma_first_power: true");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCALAR: &str = "\
n: 1
m: 1
N: 2
sigma2: 1.0
A0: [[1.0]]
B0: [[1.0]]
Q: [[1.0]]
R: [[1.0]]
P_terminal: [[1.0]]
";

    #[test]
    fn minimal_scalar_config_loads_with_defaults() {
        let cfg = load_config(SCALAR).expect("loads");
        assert_eq!(cfg.model.horizon, 2);
        assert_eq!(cfg.model.delay, 0);
        // Default noise is the symmetric two-point law at +-sigma.
        match &cfg.noise {
            NoiseSpec::Finite { values, .. } => assert_eq!(values, &vec![-1.0, 1.0]),
            _ => panic!("expected finite default"),
        }
        assert_eq!(cfg.init.x0.len(), 1);
        assert_eq!(cfg.init.w_prev, 0.0);
    }

    #[test]
    fn missing_required_key_is_named() {
        let text = SCALAR.replace("R: [[1.0]]\n", "");
        match load_config(&text) {
            Err(Error::MissingKey { key }) => assert_eq!(key, "R"),
            other => panic!("expected MissingKey, got {other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_an_error_not_a_warning() {
        let text = format!("{SCALAR}S: [[1.0]]\n");
        match load_config(&text) {
            Err(Error::UnknownKey { key }) => assert_eq!(key, "S"),
            other => panic!("expected UnknownKey, got {other:?}"),
        }
    }

    #[test]
    fn unknown_nested_key_is_qualified() {
        let text = format!("{SCALAR}noise: {{kind: rademacher, sigma: 1.0, skew: 0.1}}\n");
        match load_config(&text) {
            Err(Error::UnknownKey { key }) => assert_eq!(key, "noise.skew"),
            other => panic!("expected UnknownKey, got {other:?}"),
        }
    }

    #[test]
    fn negative_horizon_is_rejected() {
        let text = SCALAR.replace("N: 2", "N: -1");
        match load_config(&text) {
            Err(Error::BadHorizon { given }) => assert_eq!(given, -1),
            other => panic!("expected BadHorizon, got {other:?}"),
        }
    }

    #[test]
    fn matrix_size_must_match_declared_dims() {
        let text = SCALAR.replace("A0: [[1.0]]", "A0: [[1.0, 0.0]]");
        match load_config(&text) {
            Err(Error::DimensionMismatch { field, .. }) => assert_eq!(field, "A0"),
            other => panic!("expected DimensionMismatch, got {other:?}"),
        }
    }

    #[test]
    fn ragged_matrix_rows_are_a_parse_error() {
        let text = "n: 2\nm: 1\nN: 0\nsigma2: 0.0\nA0: [[1.0, 0.0], [0.0]]\nB0: [[1.0], [0.0]]\nQ: [[1.0, 0.0], [0.0, 1.0]]\nR: [[1.0]]\nP_terminal: [[1.0, 0.0], [0.0, 1.0]]\n";
        match load_config(text) {
            Err(Error::Parse { context }) => assert!(context.contains("A0[1]"), "{context}"),
            other => panic!("expected Parse, got {other:?}"),
        }
    }

    #[test]
    fn noise_second_moment_must_match_sigma2() {
        let text = format!("{SCALAR}noise: {{kind: rademacher, sigma: 2.0}}\n");
        assert!(matches!(
            load_config(&text),
            Err(Error::BadMoments { .. })
        ));
    }

    #[test]
    fn emit_then_load_reproduces_floats_bit_for_bit() {
        // Entries chosen to exercise non-terminating binary fractions.
        let text = "\
n: 2
m: 1
N: 3
delay: 0
sigma2: 0.3
A0: [[0.1, 0.2], [0.30000000000000004, 0.7]]
A1: [[0.05, 0.0], [1e-17, -0.25]]
B0: [[1.0], [0.3333333333333333]]
B1: [[0.1], [0.2]]
B2: [[0.7], [-0.9]]
Q: [[1.0, 0.125], [0.125, 2.0]]
R: [[0.1]]
P_terminal: [[0.2, 0.0], [0.0, 0.4]]
noise: {kind: finite, support: [[-0.5477225575051661, 0.5], [0.5477225575051661, 0.5]]}
init: {x0: [0.1, -0.2], u_prev: [0.0], w_prev: 0.5477225575051661}
";
        let first = load_config(text).expect("first load");
        let emitted = emit_config(&first.model, &first.noise, &first.init);
        let second = load_config(&emitted).expect("second load");
        assert_eq!(first.model, second.model);
        assert_eq!(first.noise, second.noise);
        assert_eq!(first.init, second.init);
        // And a second emit is byte-stable.
        assert_eq!(
            emitted,
            emit_config(&second.model, &second.noise, &second.init)
        );
    }
}
