//! Command-line front end: one YAML problem description in, solved
//! schedules, simulations, oracle queries, comparisons, and verification
//! reports out, each run summarized by a manifest written last.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::diagnostics::{
    closed_loop_checks, compare_policies, default_methods, reduction_suite,
};
use crate::error::{Error, Result};
use crate::model::{emit_config, load_config, LoadedConfig};
use crate::oracle::{dp_exact, path_qp};
use crate::policy::Policy;
use crate::riccati_delay::solve_delayed;
use crate::riccati_free::{optimal_value, solve_literal, solve_measurable, solve_white};
use crate::schedule::Schedule;
use crate::simulate::{
    estimate_csv, exact_expected_cost, monte_carlo, rollout, sample_noise_path, trajectory_csv,
};

#[derive(Parser)]
#[command(
    name = "colored-lqr",
    version,
    about = "Finite-horizon linear-quadratic control with multiplicative input noise that remembers its previous value",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Problem description file (YAML).
    #[arg(long, value_name = "FILE")]
    config: PathBuf,

    /// Override a config entry before parsing, e.g. `--set N=6`,
    /// `--set init.w_prev=0.5`, `--set "B2=[[0.0]]"`. Repeatable.
    /// The file itself is never modified.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Directory for output files (created if missing). Without it,
    /// results go to stdout only and no manifest is written.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a backward recursion and emit the schedule.
    Solve {
        #[command(flatten)]
        common: Common,
        /// literal | measurable | white | delayed | auto.
        #[arg(long, default_value = "auto")]
        mode: String,
    },
    /// Estimate the closed-loop cost by seeded Monte Carlo.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// auto | literal | measurable | white | delayed | zero, or the
        /// path of a schedule file written by `solve`.
        #[arg(long, default_value = "auto")]
        policy: String,
        #[arg(long, default_value_t = 1000)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also compute the exact expected cost by path enumeration.
        #[arg(long)]
        exact: bool,
    },
    /// Query the independent exact solvers.
    Oracle {
        #[command(flatten)]
        common: Common,
        /// dp | path-qp.
        #[arg(long, default_value = "dp")]
        method: String,
    },
    /// Solve with every applicable method and measure optimality gaps.
    Compare {
        #[command(flatten)]
        common: Common,
    },
    /// Run the self-verification suite; nonzero exit if any check fails.
    Verify {
        #[command(flatten)]
        common: Common,
    },
}

/// Parse arguments and execute. Returns the process exit code: 0 success,
/// 1 solvability failure or failed verification, 2 usage/config errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = err.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    let started = Instant::now();
    match cli.command {
        Command::Solve { common, mode } => cmd_solve(&common, &mode, started),
        Command::Simulate {
            common,
            policy,
            samples,
            seed,
            exact,
        } => cmd_simulate(&common, &policy, samples, seed, exact, started),
        Command::Oracle { common, method } => cmd_oracle(&common, &method, started),
        Command::Compare { common } => cmd_compare(&common, started),
        Command::Verify { common } => cmd_verify(&common, started),
    }
}

// ---------------------------------------------------------------------------
// Config loading with overrides.
// ---------------------------------------------------------------------------

fn parse_scalar(text: &str) -> serde_yaml::Value {
    serde_yaml::from_str(text).unwrap_or_else(|_| serde_yaml::Value::String(text.to_string()))
}

/// Apply `--set key=value` overrides to the YAML document in memory.
/// Dotted keys descend into (or create) nested mappings.
fn apply_overrides(text: &str, sets: &[String]) -> Result<String> {
    if sets.is_empty() {
        return Ok(text.to_string());
    }
    let mut doc: serde_yaml::Value = serde_yaml::from_str(text).map_err(|e| Error::Parse {
        context: format!("config document: {e}"),
    })?;
    if doc.is_null() {
        doc = serde_yaml::Value::Mapping(serde_yaml::Mapping::new());
    }
    for entry in sets {
        let (key, value) = entry.split_once('=').ok_or_else(|| Error::Parse {
            context: format!("--set `{entry}`: expected KEY=VALUE"),
        })?;
        let mut node = &mut doc;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let map = node.as_mapping_mut().ok_or_else(|| Error::Parse {
                context: format!("--set `{entry}`: `{part}` is not inside a mapping"),
            })?;
            let k = serde_yaml::Value::String((*part).to_string());
            if i + 1 == parts.len() {
                map.insert(k, parse_scalar(value));
                break;
            }
            node = map
                .entry(k)
                .or_insert_with(|| serde_yaml::Value::Mapping(serde_yaml::Mapping::new()));
        }
    }
    serde_yaml::to_string(&doc).map_err(|e| Error::Parse {
        context: format!("re-serializing overridden config: {e}"),
    })
}

fn load(common: &Common) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(&common.config).map_err(|e| Error::Parse {
        context: format!("reading {}: {e}", common.config.display()),
    })?;
    let text = apply_overrides(&text, &common.set)?;
    load_config(&text)
}

// ---------------------------------------------------------------------------
// Outputs and the run manifest.
// ---------------------------------------------------------------------------

struct OutputSink {
    dir: Option<PathBuf>,
    written: Vec<String>,
}

impl OutputSink {
    fn new(dir: &Option<PathBuf>) -> Result<OutputSink> {
        if let Some(d) = dir {
            std::fs::create_dir_all(d)?;
        }
        Ok(OutputSink {
            dir: dir.clone(),
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        if let Some(dir) = &self.dir {
            std::fs::write(dir.join(name), contents)?;
            self.written.push(name.to_string());
        }
        Ok(())
    }
}

/// Everything needed to reproduce and audit one run. Written after all
/// other outputs so its file list is complete.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub outputs: Vec<String>,
    pub results: BTreeMap<String, String>,
    pub duration_seconds: f64,
    /// The effective configuration after `--set` overrides, re-emitted
    /// from the validated model.
    pub resolved_config: String,
}

fn write_manifest(
    sink: &mut OutputSink,
    command: &str,
    cfg: &LoadedConfig,
    seed: Option<u64>,
    results: BTreeMap<String, String>,
    started: Instant,
) -> Result<()> {
    if sink.dir.is_none() {
        return Ok(());
    }
    let manifest = RunManifest {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        outputs: sink.written.clone(),
        results,
        duration_seconds: started.elapsed().as_secs_f64(),
        resolved_config: emit_config(&cfg.model, &cfg.noise, &cfg.init),
    };
    let text = serde_yaml::to_string(&manifest).map_err(|e| Error::Parse {
        context: format!("serializing manifest: {e}"),
    })?;
    sink.write("manifest.yaml", &text)
}

fn fmt(v: f64) -> String {
    format!("{v:?}")
}

// ---------------------------------------------------------------------------
// Subcommands.
// ---------------------------------------------------------------------------

fn resolve_mode(mode: &str, cfg: &LoadedConfig) -> Result<&'static str> {
    Ok(match mode {
        "literal" => "literal",
        "measurable" => "measurable",
        "white" => "white",
        "delayed" => "delayed",
        "auto" => {
            if cfg.model.delay == 1 {
                "delayed"
            } else if cfg.noise.is_finite() {
                "measurable"
            } else {
                "white"
            }
        }
        other => {
            return Err(Error::Parse {
                context: format!(
                    "--mode `{other}`: expected literal, measurable, white, delayed, or auto"
                ),
            })
        }
    })
}

fn solve_schedule(mode: &'static str, cfg: &LoadedConfig) -> Result<Schedule> {
    Ok(match mode {
        "literal" => Schedule::Literal(solve_literal(&cfg.model, &cfg.noise)?),
        "measurable" => Schedule::Measurable(solve_measurable(&cfg.model, &cfg.noise)?),
        "white" => Schedule::White(solve_white(&cfg.model)?),
        _ => Schedule::Delayed(solve_delayed(&cfg.model)?),
    })
}

fn cmd_solve(common: &Common, mode: &str, started: Instant) -> Result<i32> {
    let cfg = load(common)?;
    let mode = resolve_mode(mode, &cfg)?;
    let sched = solve_schedule(mode, &cfg)?;
    let mut sink = OutputSink::new(&common.out)?;
    let mut results = BTreeMap::new();
    results.insert("mode".into(), mode.to_string());

    println!(
        "solved: {} recursion, horizon {}, {} stage(s)",
        sched.kind(),
        sched.horizon(),
        sched.horizon() + 1
    );
    if sched.delay() == 0 {
        let value = optimal_value(&sched, &cfg.init)?;
        println!("optimal expected cost from the configured start: {value:?}");
        results.insert("optimal_value".into(), fmt(value));
    } else {
        println!("delayed schedule stored; evaluate it with `simulate` or `oracle`");
    }
    sink.write("schedule.yaml", &sched.to_yaml()?)?;
    write_manifest(&mut sink, "solve", &cfg, None, results, started)?;
    Ok(0)
}

fn resolve_policy(spec: &str, cfg: &LoadedConfig) -> Result<Policy> {
    match spec {
        "auto" => {
            let mode = resolve_mode("auto", cfg)?;
            Policy::from_schedule(solve_schedule(mode, cfg)?)
        }
        "literal" | "measurable" | "white" | "delayed" => {
            Policy::from_schedule(solve_schedule(resolve_mode(spec, cfg)?, cfg)?)
        }
        "zero" => Ok(Policy::Zero {
            m: cfg.model.m,
            delay: usize::from(cfg.model.delay),
        }),
        path => {
            let p = Path::new(path);
            if !p.exists() {
                return Err(Error::Parse {
                    context: format!(
                        "--policy `{path}`: not a known kind and no such schedule file"
                    ),
                });
            }
            Policy::from_schedule(Schedule::load(p)?)
        }
    }
}

fn cmd_simulate(
    common: &Common,
    policy_spec: &str,
    samples: u64,
    seed: u64,
    exact: bool,
    started: Instant,
) -> Result<i32> {
    let cfg = load(common)?;
    let policy = resolve_policy(policy_spec, &cfg)?;
    let est = monte_carlo(&cfg.model, &policy, &cfg.noise, &cfg.init, samples, seed)?;
    println!(
        "monte carlo over {} samples (seed {}): mean {:?}, stderr {:?}",
        est.n_samples, est.seed, est.mean, est.stderr
    );

    let mut sink = OutputSink::new(&common.out)?;
    let mut results = BTreeMap::new();
    results.insert("policy".into(), policy.kind().to_string());
    results.insert("mean".into(), fmt(est.mean));
    results.insert("stderr".into(), fmt(est.stderr));
    results.insert("samples".into(), est.n_samples.to_string());

    if exact {
        let value = exact_expected_cost(&cfg.model, &policy, &cfg.noise, &cfg.init)?;
        let sigmas = if est.stderr > 0.0 {
            (est.mean - value).abs() / est.stderr
        } else {
            0.0
        };
        println!("exact expected cost: {value:?} (estimate off by {sigmas:.2} stderr)");
        results.insert("exact_expected_cost".into(), fmt(value));
    }

    sink.write("estimate.csv", &estimate_csv(&est))?;
    let path0 = sample_noise_path(&cfg.noise, cfg.model.horizon + 1, seed, 0);
    let traj = rollout(&cfg.model, &policy, &path0, &cfg.init)?;
    sink.write("trajectory.csv", &trajectory_csv(&traj))?;
    write_manifest(&mut sink, "simulate", &cfg, Some(seed), results, started)?;
    Ok(0)
}

fn cmd_oracle(common: &Common, method: &str, started: Instant) -> Result<i32> {
    let cfg = load(common)?;
    let mut sink = OutputSink::new(&common.out)?;
    let mut results = BTreeMap::new();
    results.insert("method".into(), method.to_string());
    match method {
        "dp" => {
            let sol = dp_exact(&cfg.model, &cfg.noise)?;
            let value = sol.optimal_cost(&cfg.init)?;
            println!("exact dynamic programming optimum: {value:?}");
            results.insert("optimal_cost".into(), fmt(value));
        }
        "path-qp" => {
            let qp = path_qp(&cfg.model, &cfg.noise, &cfg.init)?;
            println!(
                "path-enumeration optimum: {:?} ({} decision variables)",
                qp.cost, qp.hessian_dim
            );
            results.insert("optimal_cost".into(), fmt(qp.cost));
            results.insert("decision_variables".into(), qp.hessian_dim.to_string());
            sink.write("policy.csv", &qp.policy.to_csv())?;
        }
        other => {
            return Err(Error::Parse {
                context: format!("--method `{other}`: expected dp or path-qp"),
            })
        }
    }
    write_manifest(&mut sink, "oracle", &cfg, None, results, started)?;
    Ok(0)
}

fn cmd_compare(common: &Common, started: Instant) -> Result<i32> {
    let cfg = load(common)?;
    let methods = default_methods(&cfg.model);
    let report = compare_policies(&cfg.model, &cfg.noise, &cfg.init, &methods)?;
    print!("{}", report.to_text());

    let instance_id = common
        .config
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "instance".into());
    let mut sink = OutputSink::new(&common.out)?;
    let mut results = BTreeMap::new();
    results.insert("oracle_cost".into(), fmt(report.baseline_cost));
    for row in &report.results {
        if let Some(gap) = row.gap {
            results.insert(format!("gap_{}", row.method), fmt(gap));
        }
    }
    sink.write("compare.csv", &report.to_csv(&instance_id))?;
    write_manifest(&mut sink, "compare", &cfg, None, results, started)?;
    Ok(0)
}

fn cmd_verify(common: &Common, started: Instant) -> Result<i32> {
    let cfg = load(common)?;
    let mut report = reduction_suite(&cfg.model);
    report
        .checks
        .extend(closed_loop_checks(&cfg.model, &cfg.noise, &cfg.init));
    let text = report.to_text();
    print!("{text}");
    let pass = report.all_pass();
    println!("verify: {}", if pass { "all checks passed" } else { "FAILED" });

    let mut sink = OutputSink::new(&common.out)?;
    let mut results = BTreeMap::new();
    results.insert("checks".into(), report.checks.len().to_string());
    results.insert("all_pass".into(), pass.to_string());
    sink.write("verify.txt", &text)?;
    write_manifest(&mut sink, "verify", &cfg, None, results, started)?;
    Ok(if pass { 0 } else { 1 })
}
