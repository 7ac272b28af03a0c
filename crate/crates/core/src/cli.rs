//! Command-line front end: configuration, dispatch and report writing.
//!
//! A configuration comes from an optional TOML file of `key = value` lines
//! using the same names as the long flags (`n = "4..10"`, `sigma = 0.2`, ...),
//! overridden by any flags given.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::experiments::{
    asian_differences, black_scholes_call, european_mc, fit_rate, mc_l2_error_coupled,
    mc_sup_error_bm_coupled, mc_sup_error_gbm_coupled, successive_ratios, ConvergenceRow,
};
use crate::extremes::{centered_mean, exp_moment, expected_max_abs, solve_a};
use crate::gaussian::RandomStream;
use crate::io::format_real;
use crate::paths::{GbmParams, MAX_STORED_LEVEL};

/// Environment variable capping the worker count (`0` or unset: all cores).
pub const THREADS_ENV: &str = "LCPATHS_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// `--help` or `--version` output; not a failure.
    #[error("{0}")]
    Info(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Numeric(#[from] Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    /// Process exit code: 0 for help output, 2 for usage errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Info(_) => 0,
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    L2,
    SupBm,
    SupGbm,
    GumbelTable,
    Asian,
    European,
    RateReport,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::L2 => "l2",
            Experiment::SupBm => "sup-bm",
            Experiment::SupGbm => "sup-gbm",
            Experiment::GumbelTable => "gumbel-table",
            Experiment::Asian => "asian",
            Experiment::European => "european",
            Experiment::RateReport => "rate-report",
        }
    }

    fn default_levels(self) -> LevelRange {
        match self {
            Experiment::GumbelTable => LevelRange { start: 4, end: 20 },
            _ => LevelRange { start: 4, end: 10 },
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Inclusive level range written `A..B` (or a single `A`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LevelRange {
    pub start: u32,
    pub end: u32,
}

impl LevelRange {
    pub fn levels(&self) -> impl Iterator<Item = u32> {
        self.start..=self.end
    }
}

impl FromStr for LevelRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parse = |t: &str| {
            t.trim()
                .parse::<u32>()
                .map_err(|_| format!("bad level {t:?} in range {s:?}"))
        };
        let (start, end) = match s.split_once("..") {
            Some((a, b)) => (parse(a)?, parse(b.strip_prefix('=').unwrap_or(b))?),
            None => {
                let v = parse(s)?;
                (v, v)
            }
        };
        if start > end {
            return Err(format!("empty range {s:?}"));
        }
        Ok(LevelRange { start, end })
    }
}

impl TryFrom<String> for LevelRange {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<LevelRange> for String {
    fn from(r: LevelRange) -> String {
        r.to_string()
    }
}

impl fmt::Display for LevelRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

/// A validated experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    /// Levels `N`; defaults depend on the experiment.
    pub n: LevelRange,
    /// Reference offset `Δ = M − N`.
    pub delta: u32,
    pub samples: u64,
    pub oversample: u32,
    pub s0: f64,
    pub r: f64,
    pub sigma: f64,
    pub strike: f64,
    pub out: PathBuf,
    /// Also write a JSON mirror next to the CSV.
    pub json: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let experiment = Experiment::L2;
        ExperimentConfig {
            experiment,
            seed: 42,
            n: experiment.default_levels(),
            delta: 10,
            samples: 10_000,
            oversample: 64,
            s0: 100.0,
            r: 0.05,
            sigma: 0.2,
            strike: 100.0,
            out: default_out(experiment),
            json: false,
        }
    }
}

fn default_out(e: Experiment) -> PathBuf {
    PathBuf::from(format!("{}.csv", e.name()))
}

/// Keys accepted in a configuration file; every one is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    experiment: Option<Experiment>,
    seed: Option<u64>,
    n: Option<LevelRange>,
    delta: Option<u32>,
    samples: Option<u64>,
    oversample: Option<u32>,
    s0: Option<f64>,
    r: Option<f64>,
    sigma: Option<f64>,
    strike: Option<f64>,
    out: Option<PathBuf>,
    json: Option<bool>,
}

#[derive(Debug, Parser)]
#[command(
    name = "lcpaths",
    version,
    about = "Truncation-error experiments for Levy-Ciesielski Brownian paths"
)]
pub struct Args {
    /// TOML file of `key = value` settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub experiment: Option<Experiment>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Inclusive level range, e.g. `4..10`.
    #[arg(long)]
    pub n: Option<LevelRange>,
    /// Reference offset M − N.
    #[arg(long)]
    pub delta: Option<u32>,
    #[arg(long)]
    pub samples: Option<u64>,
    /// Points per fine cell for the GBM sup-norm.
    #[arg(long)]
    pub oversample: Option<u32>,
    #[arg(long, allow_negative_numbers = true)]
    pub s0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub r: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub sigma: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub strike: Option<f64>,
    /// Output CSV path (default `<experiment>.csv`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write `<out>.json`.
    #[arg(long)]
    pub json: bool,
}

/// Parses flags (and the file named by `--config`) into a validated config.
pub fn parse_config<I, T>(argv: I) -> Result<ExperimentConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = Args::try_parse_from(argv).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
            CliError::Info(e.to_string())
        }
        _ => CliError::usage(e.to_string()),
    })?;
    let file = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            })?;
            parse_file(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?
        }
        None => FileConfig::default(),
    };
    let experiment = args
        .experiment
        .or(file.experiment)
        .unwrap_or(Experiment::L2);
    let d = ExperimentConfig::default();
    let cfg = ExperimentConfig {
        experiment,
        seed: args.seed.or(file.seed).unwrap_or(d.seed),
        n: args.n.or(file.n).unwrap_or(experiment.default_levels()),
        delta: args.delta.or(file.delta).unwrap_or(d.delta),
        samples: args.samples.or(file.samples).unwrap_or(d.samples),
        oversample: args.oversample.or(file.oversample).unwrap_or(d.oversample),
        s0: args.s0.or(file.s0).unwrap_or(d.s0),
        r: args.r.or(file.r).unwrap_or(d.r),
        sigma: args.sigma.or(file.sigma).unwrap_or(d.sigma),
        strike: args.strike.or(file.strike).unwrap_or(d.strike),
        out: args
            .out
            .or(file.out)
            .unwrap_or_else(|| default_out(experiment)),
        json: args.json || file.json.unwrap_or(false),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn parse_file(text: &str) -> Result<FileConfig, String> {
    toml::from_str(text).map_err(|e| e.message().to_string())
}

impl ExperimentConfig {
    /// Parses a complete configuration file (all keys present).
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| CliError::usage(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config fields are all representable in TOML")
    }

    pub fn params(&self) -> Result<GbmParams, CliError> {
        GbmParams::new(self.s0, self.r, self.sigma).map_err(|e| match e {
            Error::Domain { what, reason } => CliError::usage(format!("{what}: {reason}")),
            Error::NonFinite { what, value } => {
                CliError::usage(format!("{what}: must be finite, got {value}"))
            }
            other => CliError::Numeric(other),
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.delta < 1 {
            return Err(CliError::usage("delta: must be >= 1"));
        }
        if self.samples < 2 {
            return Err(CliError::usage("samples: must be >= 2"));
        }
        if self.oversample < 1 {
            return Err(CliError::usage("oversample: must be >= 1"));
        }
        if !self.strike.is_finite() || self.strike < 0.0 {
            return Err(CliError::usage(format!(
                "strike: must be finite and >= 0, got {}",
                self.strike
            )));
        }
        self.params()?;
        match self.experiment {
            Experiment::GumbelTable => {
                if self.n.start < 2 || self.n.end > 62 {
                    return Err(CliError::usage(format!(
                        "n: gumbel-table needs levels in 2..62, got {}",
                        self.n
                    )));
                }
            }
            Experiment::European => {
                if self.n.end > MAX_STORED_LEVEL {
                    return Err(CliError::usage(format!(
                        "n: levels above {MAX_STORED_LEVEL} are not supported, got {}",
                        self.n
                    )));
                }
            }
            _ => {
                if self.n.end + self.delta > MAX_STORED_LEVEL {
                    return Err(CliError::usage(format!(
                        "n: N + delta must stay <= {MAX_STORED_LEVEL}, got {} + {}",
                        self.n.end, self.delta
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One table cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Real(f64),
    Text(String),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Real(v) => format_real(*v),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> serde_json::Value {
        match self {
            Cell::Int(v) => (*v).into(),
            Cell::Real(v) => serde_json::Number::from_f64(*v)
                .map(serde_json::Value::Number)
                .unwrap_or(serde_json::Value::Null),
            Cell::Text(s) => s.clone().into(),
        }
    }
}

/// The rows produced by one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    /// Lines printed after the rows (fits, ratio diagnostics).
    pub notes: Vec<String>,
}

pub const RATE_COLUMNS: [&str; 10] = [
    "experiment",
    "N",
    "d",
    "M",
    "samples",
    "estimate",
    "std_error",
    "reference",
    "ratio",
    "seed",
];

pub const GUMBEL_COLUMNS: [&str; 7] = [
    "ell",
    "a",
    "b",
    "expected_max",
    "centered_mean",
    "exp_moment",
    "sigma",
];

impl Report {
    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err =
            |e: csv::Error| CliError::Numeric(Error::InvalidArgument(format!("csv: {e}")));
        w.write_record(&self.columns).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::csv)).map_err(csv_err)?;
        }
        w.into_inner()
            .map_err(|e| CliError::Numeric(Error::InvalidArgument(format!("csv: {e}"))))
    }

    pub fn to_json(&self) -> Vec<u8> {
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|r| serde_json::Value::Array(r.iter().map(Cell::json).collect()))
            .collect();
        let doc = serde_json::json!({ "columns": self.columns, "rows": rows });
        let mut out = serde_json::to_vec_pretty(&doc).expect("json values serialize");
        out.push(b'\n');
        out
    }

    /// One summary line per row.
    pub fn summary_lines(&self) -> Vec<String> {
        self.rows
            .iter()
            .map(|row| {
                self.columns
                    .iter()
                    .zip(row)
                    .map(|(c, v)| format!("{c}={}", v.csv()))
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect()
    }
}

fn rate_row(experiment: &str, row: &ConvergenceRow, seed: u64) -> Vec<Cell> {
    vec![
        Cell::Text(experiment.to_string()),
        Cell::Int(row.n as u64),
        Cell::Int(row.d),
        Cell::Int(row.reference_level as u64),
        Cell::Int(row.samples),
        Cell::Real(row.estimate),
        Cell::Real(row.std_error),
        Cell::Real(row.reference),
        Cell::Real(row.ratio()),
        Cell::Int(seed),
    ]
}

fn pairs(cfg: &ExperimentConfig) -> Vec<(u32, u32)> {
    cfg.n.levels().map(|n| (n, n + cfg.delta)).collect()
}

fn l2_rows(cfg: &ExperimentConfig, stream: RandomStream) -> Result<Vec<ConvergenceRow>, Error> {
    let p = pairs(cfg);
    let stats = mc_l2_error_coupled(stream, &p, cfg.samples)?;
    Ok(p.iter()
        .zip(&stats)
        .map(|(&(n, m), s)| ConvergenceRow {
            n,
            d: 1 << n,
            estimate: s.mean(),
            std_error: s.std_error(),
            reference: crate::experiments::exact_l2_error(n),
            samples: s.count(),
            reference_level: m,
        })
        .collect())
}

fn gbm_rows(cfg: &ExperimentConfig, stream: RandomStream) -> Result<Vec<ConvergenceRow>, CliError> {
    let params = cfg.params()?;
    Ok(mc_sup_error_gbm_coupled(
        &params,
        stream,
        &pairs(cfg),
        cfg.oversample,
        cfg.samples,
    )?)
}

fn fit_note(name: &str, rows: &[ConvergenceRow]) -> Option<String> {
    fit_rate(rows).ok().map(|f| {
        format!(
            "{name}: fitted constant C={} max relative residual={}",
            format_real(f.constant),
            format_real(f.max_residual)
        )
    })
}

fn ratio_notes(rows: &[ConvergenceRow]) -> Vec<String> {
    successive_ratios(rows)
        .iter()
        .map(|r| {
            format!(
                "sup-gbm: N={} successive ratio={} model={}",
                r.n,
                format_real(r.observed),
                format_real(r.model)
            )
        })
        .collect()
}

/// Runs the configured experiment and returns its rows.
pub fn build_report(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    cfg.validate()?;
    let stream = RandomStream::new(cfg.seed);
    let seed = cfg.seed;
    let mut notes = Vec::new();
    let rows = match cfg.experiment {
        Experiment::L2 => {
            let rows = l2_rows(cfg, stream)?;
            rows.iter().map(|r| rate_row("l2", r, seed)).collect()
        }
        Experiment::SupBm => {
            let rows = mc_sup_error_bm_coupled(stream, &pairs(cfg), cfg.samples)?;
            rows.iter().map(|r| rate_row("sup-bm", r, seed)).collect()
        }
        Experiment::SupGbm => {
            let rows = gbm_rows(cfg, stream)?;
            notes.extend(ratio_notes(&rows));
            rows.iter().map(|r| rate_row("sup-gbm", r, seed)).collect()
        }
        Experiment::RateReport => {
            let l2 = l2_rows(cfg, stream)?;
            let bm = mc_sup_error_bm_coupled(stream, &pairs(cfg), cfg.samples)?;
            let gbm = gbm_rows(cfg, stream)?;
            notes.extend(fit_note("l2", &l2));
            notes.extend(fit_note("sup-bm", &bm));
            notes.extend(fit_note("sup-gbm", &gbm));
            notes.extend(ratio_notes(&gbm));
            let mut rows: Vec<Vec<Cell>> = l2.iter().map(|r| rate_row("l2", r, seed)).collect();
            rows.extend(bm.iter().map(|r| rate_row("sup-bm", r, seed)));
            rows.extend(gbm.iter().map(|r| rate_row("sup-gbm", r, seed)));
            rows
        }
        Experiment::Asian => {
            let params = cfg.params()?;
            let top = cfg.n.end + cfg.delta;
            let levels: Vec<u32> = cfg.n.levels().collect();
            let diffs = asian_differences(&params, cfg.strike, stream, &levels, top, cfg.samples)?;
            diffs
                .iter()
                .map(|d| {
                    let reference = d.price.mean() - d.difference.mean();
                    let row = ConvergenceRow {
                        n: d.n,
                        d: 1 << d.n,
                        estimate: d.price.mean(),
                        std_error: d.price.std_error(),
                        reference,
                        samples: d.price.count(),
                        reference_level: top,
                    };
                    rate_row("asian", &row, seed)
                })
                .collect()
        }
        Experiment::European => {
            let params = cfg.params()?;
            let closed = black_scholes_call(&params, cfg.strike)?;
            cfg.n
                .levels()
                .map(|n| {
                    let s = european_mc(&params, cfg.strike, stream, n, cfg.samples)?;
                    let row = ConvergenceRow {
                        n,
                        d: 1 << n,
                        estimate: s.mean(),
                        std_error: s.std_error(),
                        reference: closed,
                        samples: s.count(),
                        reference_level: n,
                    };
                    Ok(rate_row("european", &row, seed))
                })
                .collect::<Result<Vec<_>, Error>>()?
        }
        Experiment::GumbelTable => {
            let mut rows = Vec::new();
            for n in cfg.n.levels() {
                let ell = 1u64 << n;
                let norm = solve_a(ell)?;
                rows.push(vec![
                    Cell::Int(ell),
                    Cell::Real(norm.a()),
                    Cell::Real(norm.b()),
                    Cell::Real(expected_max_abs(ell)?),
                    Cell::Real(centered_mean(ell)?),
                    Cell::Real(exp_moment(ell, cfg.sigma)?),
                    Cell::Real(cfg.sigma),
                ]);
            }
            return Ok(Report {
                columns: GUMBEL_COLUMNS.to_vec(),
                rows,
                notes,
            });
        }
    };
    Ok(Report {
        columns: RATE_COLUMNS.to_vec(),
        rows,
        notes,
    })
}

fn json_path(out: &Path) -> PathBuf {
    out.with_extension("json")
}

/// Writes `bytes` to a sibling temporary file, then renames it into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    let name = path
        .file_name()
        .ok_or_else(|| CliError::usage(format!("out: {} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    let result = std::fs::File::create(&tmp)
        .and_then(|mut f| f.write_all(bytes).and_then(|_| f.sync_all()))
        .and_then(|_| std::fs::rename(&tmp, path));
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result.map_err(io)
}

/// Runs `cfg` and writes the CSV (and JSON mirror), without printing.
///
/// Nothing is written unless every row was produced.
pub fn execute(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let report = build_report(cfg)?;
    let csv = report.to_csv()?;
    write_atomic(&cfg.out, &csv)?;
    if cfg.json {
        if let Err(e) = write_atomic(&json_path(&cfg.out), &report.to_json()) {
            let _ = std::fs::remove_file(&cfg.out);
            return Err(e);
        }
    }
    Ok(report)
}

/// [`execute`], then prints one line per row and any notes.
pub fn run(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let report = execute(cfg)?;
    for line in report.summary_lines().iter().chain(&report.notes) {
        println!("{line}");
    }
    Ok(report)
}

/// Worker count from [`THREADS_ENV`]; `0` means let rayon decide.
pub fn threads_from_env() -> Result<usize, CliError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map_err(|_| CliError::usage(format!("{THREADS_ENV}: expected a count, got {v:?}"))),
        _ => Ok(0),
    }
}

/// Runs `f` inside a rayon pool of `threads` workers (`0`: default size).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::usage(format!("{THREADS_ENV}: {e}")))?;
    Ok(pool.install(f))
}
