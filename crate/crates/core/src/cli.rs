//! Command-line front end: `ci` computes a region from a data file,
//! `simulate` runs a coverage experiment.
//!
//! Node indices are 1-based on the command line. Exit status is 0 on
//! success, 2 on argument or data errors, 3 when the grid scan overflows
//! and 1 on numerical failures.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graphs::Density;
use crate::hypothesis::{Method, TestConfig};
use crate::model::Dataset;
use crate::region::{confidence_region, ConfidenceRegion};
use crate::sim::{self, EffectMode, ExperimentSpec};

#[derive(Debug, Parser)]
#[command(name = "effect-ci", version, about = "Confidence regions for total causal effects in equal-variance linear SEMs")]
pub struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, env = "EFFECT_CI_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Confidence region for the effect of column i on column j.
    Ci(CiArgs),
    /// Coverage experiment on random DAGs.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TestMethod {
    Lrt,
    Slrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

#[derive(Debug, clap::Args)]
pub struct CiArgs {
    /// Delimited numeric table (comma, tab or semicolon), optional header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Cause column, 1-based.
    #[arg(long)]
    pub i: usize,
    /// Effect column, 1-based.
    #[arg(long)]
    pub j: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Grid step (default: 0.01 * max(1, largest start effect)).
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long, value_enum, default_value_t = TestMethod::Lrt)]
    pub method: TestMethod,
    #[arg(long, default_value_t = 0.5)]
    pub split_ratio: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file, or `stdout`.
    #[arg(long, default_value = "stdout")]
    pub out: String,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, clap::Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 6)]
    pub d: usize,
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    /// Mean edge weight.
    #[arg(long, default_value_t = 0.5)]
    pub beta: f64,
    #[arg(long, default_value_t = Density::Sparse)]
    pub density: Density,
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Comma-separated subset of lrt, slrt, bootstrap.
    #[arg(long, value_delimiter = ',', default_value = "lrt")]
    pub methods: Vec<Method>,
    /// Generate DAGs where node 1 has no effect on node 2.
    #[arg(long)]
    pub no_effect: bool,
    /// Error variances drawn from Uniform[1 - v/2, 1 + v/2].
    #[arg(long, default_value_t = 0.0)]
    pub variance_spread: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "sim-results")]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub bootstrap_reps: usize,
    #[arg(long, default_value_t = 0.5)]
    pub split_ratio: f64,
}

/// Exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidArgument(_) | Error::DegenerateData(_) | Error::Parse { .. } | Error::Io(_) => 2,
        Error::ScanOverflow { .. } => 3,
        Error::Conditioning { .. } | Error::Numerical(_) | Error::Solver { .. } => 1,
    }
}

fn detect_delimiter(first_line: &str) -> u8 {
    [b',', b'\t', b';']
        .into_iter()
        .max_by_key(|&c| (first_line.bytes().filter(|&b| b == c).count(), c == b','))
        .unwrap_or(b',')
}

/// Reads a delimited numeric table. The delimiter is the most frequent of
/// comma, tab and semicolon on the first line; that line is a header when
/// any of its fields is not a number.
pub fn read_table(path: &Path) -> Result<Dataset> {
    let shown = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
        path: shown.clone(),
        row: 0,
        column: 0,
        message: e.to_string(),
    })?;
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(detect_delimiter(first))
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let parse_error = |row: usize, column: usize, message: String| Error::Parse {
        path: shown.clone(),
        row,
        column,
        message,
    };
    let mut names: Option<Vec<String>> = None;
    let mut values: Vec<f64> = Vec::new();
    let mut width: Option<usize> = None;
    let mut rows = 0usize;
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            let row = e.position().map_or(k + 1, |p| p.line() as usize);
            parse_error(row, 0, e.to_string())
        })?;
        let row = record.position().map_or(k + 1, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        if width.is_none() && names.is_none() && record.iter().any(|f| f.parse::<f64>().is_err()) {
            names = Some(record.iter().map(str::to_string).collect());
            width = Some(record.len());
            continue;
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(parse_error(row, record.len().min(w) + 1, format!("expected {w} fields, found {}", record.len())));
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_error(row, c + 1, format!("not a number: {field:?}")))?;
            if !v.is_finite() {
                return Err(parse_error(row, c + 1, format!("non-finite value {field:?}")));
            }
            values.push(v);
        }
        rows += 1;
    }
    let d = width.unwrap_or(0);
    if rows == 0 || d == 0 {
        return Err(parse_error(1, 1, "no numeric rows".into()));
    }
    Dataset::new(DMatrix::from_row_slice(rows, d, &values), names)
}

fn column_index(one_based: usize, d: usize, flag: &str) -> Result<usize> {
    if one_based == 0 || one_based > d {
        return Err(Error::InvalidArgument(format!("--{flag} must lie in 1..={d}, got {one_based}")));
    }
    Ok(one_based - 1)
}

/// Plain-text rendering with the same numbers as the JSON output.
pub fn region_text(region: &ConfidenceRegion) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "method: {}", region.method);
    let _ = writeln!(out, "alpha: {}", region.alpha);
    let _ = writeln!(out, "includes_zero: {}", region.includes_zero);
    if region.intervals.is_empty() {
        let _ = writeln!(out, "intervals: none");
    } else {
        let parts: Vec<String> = region.intervals.iter().map(|[lo, hi]| format!("[{lo}, {hi}]")).collect();
        let _ = writeln!(out, "intervals: {}", parts.join(" "));
    }
    let _ = writeln!(out, "survivor_count: {}", region.diagnostics.survivor_count);
    let _ = writeln!(out, "evaluations: {}", region.diagnostics.evaluations);
    let _ = writeln!(out, "wall_ms: {}", region.diagnostics.wall_ms);
    out
}

fn emit(out: &str, body: &str) -> Result<()> {
    if out == "stdout" || out == "-" {
        let mut stdout = std::io::stdout().lock();
        stdout.write_all(body.as_bytes())?;
        stdout.flush()?;
    } else {
        std::fs::write(out, body)?;
    }
    Ok(())
}

pub fn cmd_ci(args: &CiArgs) -> Result<()> {
    let data = read_table(&args.data)?;
    let d = data.d();
    let i = column_index(args.i, d, "i")?;
    let j = column_index(args.j, d, "j")?;
    if i == j {
        return Err(Error::InvalidArgument("--i and --j must differ".into()));
    }
    if let Some(step) = args.step {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidArgument(format!("--step must be positive, got {step}")));
        }
    }
    let cfg = TestConfig {
        alpha: args.alpha,
        method: match args.method {
            TestMethod::Lrt => Method::Lrt,
            TestMethod::Slrt => Method::Slrt,
        },
        split_ratio: args.split_ratio,
        step: args.step,
        seed: args.seed,
        ..TestConfig::default()
    };
    cfg.validate()?;
    let region = confidence_region(&data, i, j, &cfg)?;
    let body = match args.format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&region).map_err(|e| Error::Numerical(e.to_string()))?;
            s.push('\n');
            s
        }
        Format::Text => region_text(&region),
    };
    emit(&args.out, &body)
}

pub fn experiment_spec(args: &SimulateArgs) -> ExperimentSpec {
    let mut methods = args.methods.clone();
    methods.dedup();
    ExperimentSpec {
        d: args.d,
        n: args.n,
        beta_mean: args.beta,
        density: args.density,
        reps: args.reps,
        alpha: args.alpha,
        methods,
        effect_mode: if args.no_effect {
            EffectMode::NoEffect
        } else {
            EffectMode::TrueEffect
        },
        variance_spread: args.variance_spread,
        seed: args.seed,
        bootstrap_reps: args.bootstrap_reps,
        split_ratio: args.split_ratio,
    }
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let spec = experiment_spec(args);
    spec.validate()?;
    let result = sim::run_experiment(&spec)?;
    let (aggregate, replicates) = sim::write_tables(&result, &args.out_dir)?;
    let mut stdout = std::io::stdout().lock();
    stdout.write_all(sim::summary_lines(&result).as_bytes())?;
    writeln!(stdout, "wrote {} and {}", aggregate.display(), replicates.display())?;
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::InvalidArgument("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Ci(args) => cmd_ci(args),
        Command::Simulate(args) => cmd_simulate(args),
    })
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
