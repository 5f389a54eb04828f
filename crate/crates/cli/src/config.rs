//! Experiment settings merged from flags, an optional key=value file and
//! benchmark defaults, in that order of precedence.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use copula_eda::benchmarks::{self, BenchmarkSpec};
use copula_eda::eda::{CopulaConfig, ReportMode};
use copula_eda::{Algorithm, CopulaFamily, EdaSpec, MarginKind, TerminationSpec, TruncCriterion, VineType};

use crate::error::{CliError, CliResult};

pub const DEFAULT_DIM: usize = 10;
pub const DEFAULT_POP_SIZE: usize = 100;
pub const DEFAULT_MAX_GEN: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_SEED: u64 = 12345;
pub const DEFAULT_RUNS: usize = 30;

/// Keys accepted in a config file.
pub const KNOWN_KEYS: [&str; 28] = [
    "algorithm",
    "function",
    "dim",
    "lower",
    "upper",
    "pop-size",
    "margin",
    "copula",
    "vine",
    "sig-level",
    "trunc-criterion",
    "mi-draws",
    "max-gen",
    "max-evals",
    "target",
    "tol",
    "stddev-floor",
    "seed",
    "jobs",
    "format",
    "out",
    "no-timing",
    "report",
    "runs",
    "success-runs",
    "lower-pop",
    "upper-pop",
    "stop-percent",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Csv,
    Json,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Flat key=value file; keys are the long flag names.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// umda, gceda, cveda, dveda or copulamimic.
    #[arg(long, short = 'a')]
    pub algorithm: Option<String>,
    /// Benchmark name, e.g. sphere or summation-cancellation.
    #[arg(long, short = 'f')]
    pub function: Option<String>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// One value for every variable or a comma-separated list.
    #[arg(long, allow_hyphen_values = true)]
    pub lower: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub upper: Option<String>,
    #[arg(long, short = 'p')]
    pub pop_size: Option<usize>,
    /// normal, kernel, truncnormal or beta.
    #[arg(long)]
    pub margin: Option<String>,
    /// Comma-separated candidate pair-copula families.
    #[arg(long)]
    pub copula: Option<String>,
    /// cvine or dvine; picks CVEDA or DVEDA.
    #[arg(long)]
    pub vine: Option<String>,
    #[arg(long)]
    pub sig_level: Option<f64>,
    /// aic, bic or none.
    #[arg(long)]
    pub trunc_criterion: Option<String>,
    /// Monte-Carlo draws per pair for Copula MIMIC's mutual information.
    #[arg(long)]
    pub mi_draws: Option<usize>,
    /// 0 removes the generation limit.
    #[arg(long)]
    pub max_gen: Option<usize>,
    #[arg(long)]
    pub max_evals: Option<usize>,
    /// Defaults to the benchmark's optimum.
    #[arg(long, allow_hyphen_values = true)]
    pub target: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub stddev_floor: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for independent runs.
    #[arg(long, short = 'j')]
    pub jobs: Option<usize>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Write the main output here instead of standard output.
    #[arg(long, short = 'o', value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Write zero instead of measured times so outputs are reproducible.
    #[arg(long)]
    pub no_timing: bool,
}

/// Parsed key=value file. Keys are case-insensitive and `_` equals `-`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

fn normalize_key(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('_', "-")
}

impl ConfigFile {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::usage(format!("config line {}: expected key=value, got '{line}'", n + 1)))?;
            let key = normalize_key(key);
            if key.is_empty() {
                return Err(CliError::usage(format!("config line {}: empty key", n + 1)));
            }
            entries.insert(key, value.trim().to_string());
        }
        Ok(ConfigFile { entries })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::io(format!("cannot read {}", path.display()), e))?;
        Self::parse(&text)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(&normalize_key(key)).map(String::as_str)
    }

    pub fn value<T>(&self, key: &str) -> CliResult<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::usage(format!("config key '{key}': cannot parse '{v}': {e}")))
            })
            .transpose()
    }

    pub fn flag(&self, key: &str) -> CliResult<bool> {
        match self.raw(key).map(str::to_ascii_lowercase).as_deref() {
            None | Some("false" | "no" | "0" | "off") => Ok(false),
            Some("true" | "yes" | "1" | "on" | "") => Ok(true),
            Some(v) => Err(CliError::usage(format!("config key '{key}': '{v}' is not a boolean"))),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

/// A flag value if given, otherwise the config entry.
pub fn pick<T>(flag: Option<T>, file: &ConfigFile, key: &str) -> CliResult<Option<T>>
where
    T: FromStr,
    T::Err: Display,
{
    match flag {
        Some(v) => Ok(Some(v)),
        None => file.value(key),
    }
}

fn pick_str(flag: &Option<String>, file: &ConfigFile, key: &str) -> Option<String> {
    flag.clone().or_else(|| file.raw(key).map(str::to_string))
}

pub fn parse_list(s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| CliError::usage(format!("'{v}' is not a number")))
        })
        .collect()
}

fn parse_families(s: &str) -> CliResult<Vec<CopulaFamily>> {
    s.split(',')
        .map(|v| CopulaFamily::parse(v.trim()).ok_or_else(|| CliError::usage(format!("unknown copula family '{v}'"))))
        .collect()
}

fn parse_format(s: &str) -> CliResult<Format> {
    Format::from_str(s, true).map_err(|_| CliError::usage(format!("unknown format '{s}' (table, csv, json)")))
}

pub fn lookup_function(name: &str) -> CliResult<&'static BenchmarkSpec> {
    benchmarks::lookup(name).ok_or_else(|| {
        CliError::usage(format!(
            "unknown function '{name}'; registered functions: {}",
            benchmarks::names().join(", ")
        ))
    })
}

fn resolve_bounds(given: Option<String>, default: f64, dim: usize, which: &str) -> CliResult<Vec<f64>> {
    let Some(s) = given else {
        return Ok(vec![default; dim]);
    };
    let values = parse_list(&s)?;
    match values.len() {
        1 => Ok(vec![values[0]; dim]),
        n if n == dim => Ok(values),
        n => Err(CliError::usage(format!("{which} bound has {n} values for dimension {dim}"))),
    }
}

/// Everything a command needs, fully resolved.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub spec: EdaSpec,
    pub benchmark: &'static BenchmarkSpec,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub seed: u64,
    pub jobs: Option<usize>,
    pub format: Format,
    pub out: Option<PathBuf>,
    pub timing: bool,
    pub file: ConfigFile,
}

impl Experiment {
    pub fn target(&self) -> (f64, f64) {
        self.spec
            .termination
            .target
            .unwrap_or((self.benchmark.target_eval, DEFAULT_TOL))
    }
}

pub fn resolve(args: &CommonArgs) -> CliResult<Experiment> {
    let file = match &args.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    resolve_with(args, file)
}

pub fn resolve_with(args: &CommonArgs, file: ConfigFile) -> CliResult<Experiment> {
    if let Some(key) = file.keys().find(|k| !KNOWN_KEYS.contains(k)) {
        return Err(CliError::usage(format!("unknown config key '{key}'")));
    }
    let function = pick_str(&args.function, &file, "function")
        .ok_or_else(|| CliError::usage("no function given (--function or 'function' in the config file)"))?;
    let benchmark = lookup_function(&function)?;

    let vine = pick_str(&args.vine, &file, "vine")
        .map(|v| VineType::parse(&v).ok_or_else(|| CliError::usage(format!("unknown vine type '{v}' (cvine, dvine)"))))
        .transpose()?;
    let algorithm = pick_str(&args.algorithm, &file, "algorithm")
        .map(|a| Algorithm::parse(&a).ok_or_else(|| CliError::usage(format!("unknown algorithm '{a}'"))))
        .transpose()?;
    let algorithm = match (algorithm, vine) {
        (Some(a), None) => a,
        (None | Some(Algorithm::Cveda | Algorithm::Dveda), Some(VineType::CVine)) => Algorithm::Cveda,
        (None | Some(Algorithm::Cveda | Algorithm::Dveda), Some(VineType::DVine)) => Algorithm::Dveda,
        (Some(a), Some(_)) => return Err(CliError::usage(format!("--vine does not apply to {a}"))),
        (None, None) => {
            return Err(CliError::usage(
                "no algorithm given (--algorithm or 'algorithm' in the config file)",
            ))
        }
    };

    let lower_s = pick_str(&args.lower, &file, "lower");
    let upper_s = pick_str(&args.upper, &file, "upper");
    let dim = match pick(args.dim, &file, "dim")? {
        Some(d) => d,
        None => [&lower_s, &upper_s]
            .iter()
            .filter_map(|s| s.as_deref())
            .map(|s| s.split(',').count())
            .find(|&n| n > 1)
            .unwrap_or(DEFAULT_DIM),
    };
    if dim == 0 {
        return Err(CliError::usage("dimension must be at least 1"));
    }
    let lower = resolve_bounds(lower_s, benchmark.default_lower, dim, "lower")?;
    let upper = resolve_bounds(upper_s, benchmark.default_upper, dim, "upper")?;

    let pop_size = pick(args.pop_size, &file, "pop-size")?.unwrap_or(DEFAULT_POP_SIZE);
    let mut spec = EdaSpec::new(algorithm, pop_size);
    spec.margin = match pick_str(&args.margin, &file, "margin") {
        Some(m) => MarginKind::parse(&m).ok_or_else(|| CliError::usage(format!("unknown margin '{m}'")))?,
        None => algorithm.default_margin(),
    };
    let mut copula = CopulaConfig::default();
    if let Some(c) = pick_str(&args.copula, &file, "copula") {
        copula.families = parse_families(&c)?;
    }
    if let Some(s) = pick(args.sig_level, &file, "sig-level")? {
        copula.sig_level = s;
    }
    if let Some(t) = pick_str(&args.trunc_criterion, &file, "trunc-criterion") {
        copula.trunc_criterion = TruncCriterion::parse(&t)
            .ok_or_else(|| CliError::usage(format!("unknown truncation criterion '{t}' (aic, bic, none)")))?;
    }
    if let Some(d) = pick(args.mi_draws, &file, "mi-draws")? {
        copula.mi_draws = d;
    }
    spec.copula = copula;

    let max_gen = pick(args.max_gen, &file, "max-gen")?.unwrap_or(DEFAULT_MAX_GEN);
    let target = pick(args.target, &file, "target")?.unwrap_or(benchmark.target_eval);
    let tol = pick(args.tol, &file, "tol")?.unwrap_or(DEFAULT_TOL);
    spec.termination = TerminationSpec {
        max_gen: (max_gen > 0).then_some(max_gen),
        max_evals: pick(args.max_evals, &file, "max-evals")?,
        target: Some((target, tol)),
        eval_stddev_floor: pick(args.stddev_floor, &file, "stddev-floor")?,
    };
    spec.report = ReportMode::None;
    spec.validate().map_err(|e| CliError::usage(e.to_string()))?;

    let format = match args.format {
        Some(f) => f,
        None => file.raw("format").map(parse_format).transpose()?.unwrap_or(Format::Table),
    };
    let jobs = pick(args.jobs, &file, "jobs")?;
    if jobs == Some(0) {
        return Err(CliError::usage("--jobs must be at least 1"));
    }
    Ok(Experiment {
        spec,
        benchmark,
        lower,
        upper,
        seed: pick(args.seed, &file, "seed")?.unwrap_or(DEFAULT_SEED),
        jobs,
        format,
        out: args.out.clone().or_else(|| file.raw("out").map(PathBuf::from)),
        timing: !(args.no_timing || file.flag("no-timing")?),
        file,
    })
}
