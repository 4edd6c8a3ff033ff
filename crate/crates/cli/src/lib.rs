//! Command-line front end for the frogcert library.
//!
//! Standard output carries only the JSON report; progress goes to standard
//! error. Exit status is 0 when the verdict is pass, 1 when it is fail and
//! 2 for usage or configuration errors.

mod commands;
mod settings;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Serialize, Serializer};
use serde_json::Value;

pub use commands::{MAX_EXCLUSION_RATE, ORACLE_STEPS, SIGMAS};
pub use settings::FileConfig;

#[derive(Debug, Parser)]
#[command(name = "frogcert", version, about = "Certified bounds and simulations for the frog model on the 3,2-tree")]
pub struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Artifact file: the certificate for `certify`, CSV for `simulate --mode batch` and `eval`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Write the report here instead of standard output.
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
    /// TOML file with settings; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Add `wall_time` to the report. Reports are then no longer byte-stable.
    #[arg(long, global = true)]
    pub timing: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search the chain of exponential dominators and write the certificate.
    Certify(CertifyArgs),
    /// Re-check a certificate file (or a certify report embedding one).
    Verify { file: PathBuf },
    /// Region constants and envelope checks at the given rates.
    Bounds(BoundsArgs),
    /// Monte Carlo batches, walk statistics and the coupling check.
    Simulate(SimulateArgs),
    /// Exact box-model laws against the operators.
    Oracle(OracleArgs),
    /// Operator and bound values on a grid, for plotting.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[arg(long)]
    pub grid_size: Option<usize>,
    /// Comma-separated step sizes, largest first, e.g. `1/16,1/32,3/256`.
    #[arg(long, value_delimiter = ',')]
    pub step_menu: Vec<String>,
    #[arg(long)]
    pub max_passes: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    /// Rate; repeat for several.
    #[arg(long = "a", allow_negative_numbers = true)]
    pub a: Vec<f64>,
    #[arg(long)]
    pub grid_size: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Episodes of one model variant.
    Batch,
    /// Hitting probabilities p1 and p2.
    Hit,
    /// Transition frequencies of the erased walk.
    Phi,
    /// Coupled episodes of all three variants.
    Coupling,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Batch => "batch",
            Mode::Hit => "hit",
            Mode::Phi => "phi",
            Mode::Coupling => "coupling",
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value = "batch")]
    pub mode: Mode,
    /// original, nonbacktracking (nb) or selfsimilar (ss); batch mode only.
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub episodes: Option<u64>,
    #[arg(long)]
    pub depth_cap: Option<u16>,
    #[arg(long)]
    pub step_cap: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// A, L, H or all.
    #[arg(long, default_value = "all")]
    pub model: String,
    /// delta0, delta1, uniform1 (any deltaK or uniformK up to 3) or all.
    #[arg(long, default_value = "all")]
    pub dist: String,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Rate; repeat for several.
    #[arg(long = "a", allow_negative_numbers = true)]
    pub a: Vec<f64>,
    #[arg(long)]
    pub grid_size: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

fn finite_opt<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(x) if x.is_finite() => s.serialize_f64(*x),
        Some(x) => Err(serde::ser::Error::custom(format!("non-finite float {x} in report"))),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: String,
    pub config: Value,
    pub results: Value,
    /// Named sub-checks; the verdict is pass only if all are true.
    pub checks: BTreeMap<String, bool>,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "finite_opt")]
    pub wall_time: Option<f64>,
}

impl RunReport {
    pub fn new(command: &str, config: Value, results: Value, checks: BTreeMap<String, bool>) -> RunReport {
        let verdict = if checks.values().all(|&ok| ok) {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        RunReport {
            command: command.to_string(),
            config,
            results,
            checks,
            verdict,
            wall_time: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// Pretty JSON with sorted keys and a trailing newline.
pub fn canonical_json(report: &RunReport) -> Result<String> {
    let value = serde_json::to_value(report).context("report rejected")?;
    Ok(serde_json::to_string_pretty(&value)? + "\n")
}

/// Write the report to `path`, or to standard output. Nothing is written if
/// the report cannot be serialized.
pub fn emit_report(report: &RunReport, path: Option<&Path>) -> Result<()> {
    let text = canonical_json(report)?;
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing report {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).context("writing report to stdout")?;
            out.flush().context("writing report to stdout")
        }
    }
}

fn execute(cli: &Cli, file: &FileConfig) -> Result<(&'static str, commands::Outcome)> {
    let out = cli.out.as_deref();
    Ok(match &cli.command {
        Command::Certify(a) => ("certify", commands::certify(a, file, out)?),
        Command::Verify { file: path } => ("verify", commands::verify(path)?),
        Command::Bounds(a) => ("bounds", commands::bounds(a, file)?),
        Command::Simulate(a) => ("simulate", commands::simulate(a, file, out)?),
        Command::Oracle(a) => ("oracle", commands::oracle(a)?),
        Command::Eval(a) => ("eval", commands::eval(a, file, out)?),
    })
}

pub fn dispatch(cli: &Cli) -> Result<RunReport> {
    let start = Instant::now();
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let (name, outcome) = match cli.threads {
        Some(0) => bail!("invalid threads: must be at least 1"),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("building thread pool")?
            .install(|| execute(cli, &file))?,
        None => execute(cli, &file)?,
    };
    let mut report = RunReport::new(name, outcome.config, outcome.results, outcome.checks);
    if cli.timing {
        report.wall_time = Some(start.elapsed().as_secs_f64());
    }
    Ok(report)
}

/// Parse, run and emit; returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = dispatch(&cli).and_then(|r| emit_report(&r, cli.report.as_deref()).map(|()| r.passed()));
    match result {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}
