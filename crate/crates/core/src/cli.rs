//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 configuration
//! or file error.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use thiserror::Error;

use crate::analysis::{s_of_n_table, sweep, ReservationRule, SweepAxis, SweepOptions};
use crate::firstbest::compare_first_second_best;
use crate::hjb::{solve_backward, SolveOptions};
use crate::incentives::{taker_cost_rule, IncentiveField, TakerCostKind, TakerCostMode};
use crate::io as csvout;
use crate::model::{validate, ModelParams, ValidatedParams};
use crate::simulator::{run_batch, simulate_path, SimConfig};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("configuration error: {0}")]
    Config(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Numeric(_) => EXIT_NUMERIC,
            CliError::Config(_) => EXIT_CONFIG,
        }
    }
}

fn numeric(e: impl std::fmt::Display) -> CliError {
    CliError::Numeric(e.to_string())
}

fn config(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "maketake", version, about = "Optimal make-take fees with competing market makers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// JSON parameter file; the single-agent baseline when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Time step of the backward solver.
    #[arg(long, default_value_t = 0.1)]
    pub dt: f64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the value-function system and dump (t, q, v).
    Solve {
        #[command(flatten)]
        common: Common,
        /// Write every n-th stored time.
        #[arg(long, default_value_t = 1)]
        stride: usize,
    },
    /// Simulate the market under the optimal contract.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1000)]
        paths: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Also write the time series of the first path next to the output.
        #[arg(long)]
        timeseries: bool,
    },
    /// Solve and simulate across a parameter axis.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// n, gamma-new-agent, varpi-rule or c-rule.
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, default_value_t = 1000)]
        paths: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Keep the configured reservation utilities instead of the no-contract rule.
        #[arg(long)]
        keep_reservation: bool,
    },
    /// Compare the first-best and second-best value functions.
    FirstBest {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        stride: usize,
    },
    /// Recommend a taker cost putting the best spread near one tick.
    CalibrateFee {
        #[command(flatten)]
        common: Common,
        /// static, small-ratio or dynamic.
        #[arg(long, default_value = "static")]
        mode: String,
    },
    /// Tabulate the large-market gain function over N.
    OptimalN {
        #[command(flatten)]
        common: Common,
        /// Comma-separated N values; 1..10 when omitted.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
}

fn load(common: &Common) -> Result<ValidatedParams, CliError> {
    let params = match &common.config {
        Some(path) => ModelParams::from_file(path).map_err(config)?,
        None => ModelParams::baseline(),
    };
    validate(&params).map_err(config)
}

fn solve_opts(common: &Common) -> Result<SolveOptions, CliError> {
    if common.dt.is_nan() || common.dt <= 0.0 || !common.dt.is_finite() {
        return Err(CliError::Usage(format!("--dt must be positive, got {}", common.dt)));
    }
    Ok(SolveOptions::with_dt(common.dt))
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, CliError> {
    match path {
        Some(p) => Ok(Box::new(BufWriter::new(
            File::create(p).map_err(|e| config(format!("{}: {e}", p.display())))?,
        ))),
        None => Ok(Box::new(std::io::stdout().lock())),
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let ext = path.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    path.with_file_name(format!("{stem}_{suffix}.{ext}"))
}

fn parse_mode(mode: &str) -> Result<TakerCostKind, CliError> {
    serde_json::from_value(json!(mode.to_ascii_lowercase()))
        .map_err(|_| CliError::Usage(format!("unknown mode {mode:?}; expected static, small-ratio or dynamic")))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve { common, stride } => {
            let vp = load(&common)?;
            let value = solve_backward(&vp, &solve_opts(&common)?).map_err(numeric)?;
            csvout::write_value_function(output(&common.out)?, &value, stride).map_err(config)
        }
        Command::Simulate {
            common,
            paths,
            seed,
            timeseries,
        } => {
            let vp = load(&common)?;
            let value = solve_backward(&vp, &solve_opts(&common)?).map_err(numeric)?;
            let field = IncentiveField::new(&vp, &value);
            let batch = run_batch(&field, paths, seed, &SimConfig::default()).map_err(numeric)?;
            csvout::write_summary(output(&common.out)?, &batch.summary).map_err(config)?;
            if let Some(out) = &common.out {
                csvout::write_path_stats(output(&Some(sibling(out, "paths")))?, &batch.paths).map_err(config)?;
                if timeseries {
                    let cfg = SimConfig {
                        record_timeseries: true,
                        ..SimConfig::default()
                    };
                    let path = simulate_path(&field, seed, &cfg).map_err(numeric)?;
                    csvout::write_timeseries(output(&Some(sibling(out, "timeseries")))?, &path.timeseries)
                        .map_err(config)?;
                }
            } else if timeseries {
                return Err(CliError::Usage("--timeseries requires --out".into()));
            }
            Ok(())
        }
        Command::Sweep {
            common,
            axis,
            values,
            paths,
            seed,
            keep_reservation,
        } => {
            let axis: SweepAxis = axis.parse().map_err(CliError::Usage)?;
            let template = load(&common)?.params().clone();
            let opts = SweepOptions {
                solve: solve_opts(&common)?,
                sim: SimConfig::default(),
                paths,
                seed,
                reservation: if keep_reservation {
                    ReservationRule::Template
                } else {
                    ReservationRule::NoContract
                },
            };
            let rows = sweep(&template, axis, &values, &opts);
            csvout::write_sweep(output(&common.out)?, &rows).map_err(config)?;
            match rows.iter().find_map(|r| r.error.as_ref()) {
                Some(e) => Err(CliError::Numeric(e.clone())),
                None => Ok(()),
            }
        }
        Command::FirstBest { common, stride } => {
            let vp = load(&common)?;
            let cmp = compare_first_second_best(&vp, &solve_opts(&common)?).map_err(numeric)?;
            log::info!(
                "C = {}, C_FB = {}, relative gap = {}",
                cmp.c_sb,
                cmp.c_fb,
                cmp.constant_gap()
            );
            csvout::write_comparison(output(&common.out)?, &cmp, stride).map_err(config)
        }
        Command::CalibrateFee { common, mode } => {
            let kind = parse_mode(&mode)?;
            let vp = load(&common)?;
            let c = match kind {
                TakerCostKind::Static => taker_cost_rule(&vp, TakerCostMode::Static),
                TakerCostKind::SmallRatio => taker_cost_rule(&vp, TakerCostMode::SmallRatio),
                TakerCostKind::Dynamic => {
                    let value = solve_backward(&vp, &solve_opts(&common)?).map_err(numeric)?;
                    let field = IncentiveField::new(&vp, &value);
                    let q = vec![0; vp.n()];
                    taker_cost_rule(&vp, TakerCostMode::Dynamic { t: 0.0, q: &q, field: &field })
                }
            }
            .map_err(numeric)?;
            let doc = json!({
                "mode": kind,
                "c_recommended": c,
                "inputs": vp.params(),
            });
            let mut out = output(&common.out)?;
            serde_json::to_writer_pretty(&mut out, &doc).map_err(config)?;
            writeln!(out).map_err(config)
        }
        Command::OptimalN { common, values } => {
            let vp = load(&common)?;
            if !vp.equal_gamma() {
                return Err(CliError::Config("optimal-n needs equal risk aversions".into()));
            }
            let ns = if values.is_empty() {
                (1..=10).map(f64::from).collect()
            } else {
                values
            };
            csvout::write_s_of_n(output(&common.out)?, &s_of_n_table(vp.params(), &ns)).map_err(config)
        }
    }
}

/// Caps the global rayon pool at MAKETAKE_THREADS when set.
pub fn init_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("MAKETAKE_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| config(format!("MAKETAKE_THREADS={v:?} is not a thread count")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(config)?;
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match init_threads().and_then(|_| run(cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
