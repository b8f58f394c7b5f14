//! Front end for the `jcurve` analyses.
//!
//! Each subcommand reads an optional JSON config, runs one analysis and
//! writes `report.json`, CSV tables and (with `--svg`) SVG plots to the
//! output directory. Exit status: 0 success, 1 invalid configuration or
//! input, 2 numerical failure, 3 I/O failure.

// `!(x > 0.0)` deliberately rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub mod commands;
pub mod output;

pub use output::{emit_svg, render_svg, PlotSpec, Series, Table};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_IO: i32 = 3;

/// Default output directory when neither `--out` nor the config names one.
pub const DEFAULT_OUT: &str = "jcurve-out";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o failure: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl From<jcurve::Error> for CliError {
    fn from(e: jcurve::Error) -> Self {
        use jcurve::Error as E;
        match e {
            E::Io { .. } => CliError::Io(e.to_string()),
            E::HypothesisViolated(_) | E::Inconsistent(_) | E::NonFinite { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "jcurve", version, about = "Numerical analyses for pseudoholomorphic curves")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// JSON config with optional `seed`, `out`, `svg` and `params` keys
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Also write SVG plots
    #[arg(long, global = true)]
    pub svg: bool,

    /// Seed for randomized analyses
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Collar bounds and curvature over a range of geodesic lengths
    Collar,
    /// Plumbing family validation and degeneration trend
    Plumb,
    /// Cauchy transform accuracy and right-inverse residuals
    Cauchy,
    /// Neumann solver on a manufactured problem
    DbarSolve,
    /// Mode analysis, three-annuli ratios, envelope and removability
    Decay,
    /// Strip eigenvalues and decay constants over angle sweeps
    StripEigen,
    /// Three-strips ratio scan against its bound
    ThreeStrips,
    /// Bubbling analysis of a map family
    BubbleScan,
    /// Corner Sobolev exponents and boundary decay exponents
    Corner,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Collar => "collar",
            Command::Plumb => "plumb",
            Command::Cauchy => "cauchy",
            Command::DbarSolve => "dbar-solve",
            Command::Decay => "decay",
            Command::StripEigen => "strip-eigen",
            Command::ThreeStrips => "three-strips",
            Command::BubbleScan => "bubble-scan",
            Command::Corner => "corner",
        }
    }
}

/// Contents of a `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    out: Option<PathBuf>,
    svg: Option<bool>,
    #[serde(default)]
    params: Value,
}

/// Fully resolved run configuration. The output directory is not part of
/// the embedded config so that reports do not depend on where they land.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: &'static str,
    pub seed: u64,
    pub svg: bool,
    pub params: Value,
    #[serde(skip)]
    pub out: PathBuf,
}

/// Per-subcommand parameters. Missing keys take their defaults; unknown keys
/// are rejected.
pub trait Params: Serialize + DeserializeOwned + Default {
    fn validate(&self) -> Result<(), String> {
        Ok(())
    }

    /// Input paths that must exist before any computation starts.
    fn inputs(&self) -> Vec<PathBuf> {
        Vec::new()
    }
}

/// Products of one analysis.
#[derive(Debug, Default)]
pub struct Outcome {
    pub result: Value,
    pub tables: Vec<(&'static str, Table)>,
    pub plots: Vec<(&'static str, PlotSpec, Vec<Series>)>,
    /// Set when the analysis completed but did not converge; outputs are still written.
    pub failure: Option<String>,
}

pub struct Context {
    pub seed: u64,
}

/// Parses arguments, runs the subcommand and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(path) => {
            println!("{}", path.display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("jcurve: {e}");
            e.exit_code()
        }
    }
}

/// Runs `cli` and returns the path of the written report.
pub fn execute(cli: &Cli) -> Result<PathBuf, CliError> {
    let file = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            serde_json::from_str::<FileConfig>(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => FileConfig::default(),
    };
    let base = RunConfig {
        command: cli.command.name(),
        seed: cli.seed.or(file.seed).unwrap_or(0),
        svg: cli.svg || file.svg.unwrap_or(false),
        params: Value::Null,
        out: cli.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
    };
    use commands::*;
    match cli.command {
        Command::Collar => dispatch(base, file.params, collar),
        Command::Plumb => dispatch(base, file.params, plumb),
        Command::Cauchy => dispatch(base, file.params, cauchy),
        Command::DbarSolve => dispatch(base, file.params, dbar_solve),
        Command::Decay => dispatch(base, file.params, decay),
        Command::StripEigen => dispatch(base, file.params, strip_eigen),
        Command::ThreeStrips => dispatch(base, file.params, three_strips),
        Command::BubbleScan => dispatch(base, file.params, bubble_scan),
        Command::Corner => dispatch(base, file.params, corner),
    }
}

fn dispatch<P: Params>(
    mut cfg: RunConfig,
    raw: Value,
    f: fn(&P, &Context) -> Result<Outcome, CliError>,
) -> Result<PathBuf, CliError> {
    let params: P = if raw.is_null() {
        P::default()
    } else {
        serde_json::from_value(raw).map_err(|e| CliError::Config(format!("params: {e}")))?
    };
    params.validate().map_err(CliError::Config)?;
    for p in params.inputs() {
        if !p.exists() {
            return Err(CliError::Io(format!("input {} does not exist", p.display())));
        }
    }
    cfg.params = serde_json::to_value(&params).map_err(|e| CliError::Config(e.to_string()))?;
    fs::create_dir_all(&cfg.out).map_err(|e| CliError::Io(format!("{}: {e}", cfg.out.display())))?;

    let outcome = f(&params, &Context { seed: cfg.seed })?;
    let path = write_outputs(&cfg, &outcome)?;
    match outcome.failure {
        Some(msg) => Err(CliError::Numerical(msg)),
        None => Ok(path),
    }
}

fn write_outputs(cfg: &RunConfig, outcome: &Outcome) -> Result<PathBuf, CliError> {
    let dir = &cfg.out;
    let mut tables = Vec::new();
    for (name, t) in &outcome.tables {
        let file = format!("{name}.csv");
        output::write_atomic(&dir.join(&file), t.to_csv().as_bytes())?;
        tables.push(file);
    }
    let mut plots = Vec::new();
    if cfg.svg {
        for (name, spec, series) in &outcome.plots {
            let svg = match render_svg(series, spec) {
                Ok(s) => s,
                // Nothing finite to draw, e.g. log of an all-zero series.
                Err(CliError::Config(_)) => continue,
                Err(e) => return Err(e),
            };
            let file = format!("{name}.svg");
            output::write_atomic(&dir.join(&file), svg.as_bytes())?;
            plots.push(file);
        }
    }
    let report = json!({
        "command": cfg.command,
        "version": jcurve::VERSION,
        "config": cfg,
        "status": match &outcome.failure {
            Some(m) => format!("numerical failure: {m}"),
            None => "ok".to_string(),
        },
        "result": outcome.result,
        "tables": tables,
        "plots": plots,
    });
    let mut text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Config(e.to_string()))?;
    text.push('\n');
    let path = dir.join("report.json");
    output::write_atomic(&path, text.as_bytes())?;
    Ok(path)
}

/// Checks that `x` is finite and strictly positive.
pub(crate) fn positive(name: &str, x: f64) -> Result<(), String> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(format!("{name} must be positive and finite, got {x}"))
    }
}
