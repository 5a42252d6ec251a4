#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde_json::{json, Value};

mod commands;
mod run_config;

use commands::{Form, Outcome};
use run_config::{ConfigError, Defaults, RunArgs, RunConfig, DEFAULTS};

const SCHEMA: &str = "ksenergy-report/1";

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_STRICT: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "ksenergy",
    version,
    about = "Ball-average and directional energies of metric-space-valued maps"
)]
struct Cli {
    /// Seed for the randomized sphere rules in dimension > 3
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Exit with status 3 when the report carries warnings
    #[arg(long, global = true)]
    strict: bool,
    /// JSON run config, or a previous report whose `config` is reused
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for report.json and CSV tables
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Ball-average energy with extrapolation in h
    KsEnergy(RunArgs),
    /// Directional representation energy
    RepEnergy {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value = "sphere")]
        form: Form,
    },
    /// Both energies on the same map and their relative gap
    Compare {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value = "sphere")]
        form: Form,
    },
    /// Frame sum against sphere average for any map
    FrameVsSphere(RunArgs),
    /// Identity into the max-norm plane: frame sum against sphere average
    Counterexample(RunArgs),
    /// I(h), K, sphere order and finite-difference step sweeps
    Convergence {
        #[command(flatten)]
        run: RunArgs,
        /// Number of halvings of the finite-difference step
        #[arg(long, default_value_t = 5)]
        deltas: usize,
    },
    /// Reference values from the independent oracles
    Oracle {
        /// Linear map for the Euclidean density, rows separated by `;`
        #[arg(long, default_value = "1,0;0,2")]
        matrix: String,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
    },
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::KsEnergy(_) => "ks-energy",
        Command::RepEnergy { .. } => "rep-energy",
        Command::Compare { .. } => "compare",
        Command::FrameVsSphere(_) => "frame-vs-sphere",
        Command::Counterexample(_) => "counterexample",
        Command::Convergence { .. } => "convergence",
        Command::Oracle { .. } => "oracle",
    }
}

fn resolve(cli: &Cli, args: &RunArgs, defaults: &Defaults) -> Result<RunConfig> {
    let file = cli.config.as_deref().map(RunConfig::load).transpose()?;
    args.resolve(file.as_ref(), cli.seed, defaults)
}

fn dispatch(cli: &Cli) -> Result<(Option<RunConfig>, Outcome)> {
    let counter_defaults = Defaults {
        space: "max_norm_plane",
        map: "identity",
        resolution: 16,
    };
    Ok(match &cli.command {
        Command::KsEnergy(a) => {
            let run = resolve(cli, a, &DEFAULTS)?;
            let out = commands::ks(&run)?;
            (Some(run), out)
        }
        Command::RepEnergy { run: a, form } => {
            let run = resolve(cli, a, &DEFAULTS)?;
            let out = commands::rep(&run, *form)?;
            (Some(run), out)
        }
        Command::Compare { run: a, form } => {
            let run = resolve(cli, a, &DEFAULTS)?;
            let out = commands::compare(&run, *form)?;
            (Some(run), out)
        }
        Command::FrameVsSphere(a) => {
            let run = resolve(cli, a, &DEFAULTS)?;
            let out = commands::frame_vs_sphere(&run)?;
            (Some(run), out)
        }
        Command::Counterexample(a) => {
            let run = resolve(cli, a, &counter_defaults)?;
            let out = commands::counterexample(&run)?;
            (Some(run), out)
        }
        Command::Convergence { run: a, deltas } => {
            let run = resolve(cli, a, &DEFAULTS)?;
            let out = commands::convergence(&run, *deltas)?;
            (Some(run), out)
        }
        Command::Oracle { matrix, p } => (None, commands::oracle(matrix, *p)?),
    })
}

fn write_outputs(dir: &PathBuf, report: &str, csv: &[(String, String)]) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    std::fs::write(dir.join("report.json"), report)?;
    for (name, body) in csv {
        std::fs::write(dir.join(name), body).with_context(|| format!("writing {name}"))?;
    }
    Ok(())
}

fn error_kind(err: &anyhow::Error) -> (&'static str, u8, Option<String>) {
    if let Some(c) = err.downcast_ref::<ConfigError>() {
        return ("config", EXIT_CONFIG, Some(c.field.clone()));
    }
    if let Some(e) = err.downcast_ref::<ksenergy::Error>() {
        use ksenergy::Error as E;
        return match e {
            E::Config { field, .. } => ("config", EXIT_CONFIG, Some(field.clone())),
            E::UnknownSpec { kind, .. } => ("config", EXIT_CONFIG, Some(kind.to_string())),
            E::InvalidDomain(_) => ("config", EXIT_CONFIG, Some("domain".into())),
            E::UnsupportedDimension { .. } => ("config", EXIT_CONFIG, Some("n".into())),
            E::InvalidPoint { .. } => ("config", EXIT_CONFIG, None),
            _ => ("numerical", EXIT_FAILURE, None),
        };
    }
    ("runtime", EXIT_FAILURE, None)
}

fn run(cli: Cli) -> Result<u8> {
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(run_config::config_error("workers", "must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .context("starting the worker pool")?;
    }
    let started = Instant::now();
    let (config, outcome) = dispatch(&cli)?;
    let mut doc = json!({
        "schema": SCHEMA,
        "command": command_name(&cli.command),
    });
    if let Some(c) = &config {
        doc["config"] = serde_json::to_value(c)?;
    }
    doc["result"] = outcome.result;
    doc["warnings"] = Value::from(outcome.warnings.clone());
    doc["timing"] = json!({ "elapsed_seconds": started.elapsed().as_secs_f64() });
    let text = serde_json::to_string_pretty(&doc)?;
    if let Some(dir) = &cli.out {
        write_outputs(dir, &text, &outcome.csv)?;
    }
    println!("{text}");
    if cli.strict && !outcome.warnings.is_empty() {
        for w in &outcome.warnings {
            eprintln!("warning: {w}");
        }
        return Ok(EXIT_STRICT);
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            let (kind, code, field) = error_kind(&err);
            let body = json!({
                "error": {
                    "kind": kind,
                    "field": field,
                    "message": format!("{err:#}"),
                }
            });
            eprintln!(
                "{}",
                serde_json::to_string_pretty(&body).unwrap_or_else(|_| err.to_string())
            );
            ExitCode::from(code)
        }
    }
}
