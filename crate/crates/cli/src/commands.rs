use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use copula_eda::eda::{
    bisect_pop_size, eda_run_with, run_rng, summarize_runs, GenerationInfo, ReportMode, RunHooks,
};
use copula_eda::{EdaError, RunResult, RunsSummary, SearchModel};
use rayon::prelude::*;

use crate::config::{pick, resolve, CommonArgs, Experiment, Format, DEFAULT_RUNS};
use crate::error::{CliError, CliResult};
use crate::output::{
    copula_trace_csv, critpop_header, final_block, probe_line, runs_csv, runs_table, to_json, CritPopDocument,
    RunRecord, RunsDocument, TraceRow,
};

#[derive(Debug, Clone, Default, Args)]
pub struct ExtrasArgs {
    /// Write the final model of each run as JSON.
    #[arg(long, value_name = "PATH")]
    pub dump_model: Option<PathBuf>,
    /// Write per-generation pair-copula family counts as CSV.
    #[arg(long, value_name = "PATH")]
    pub copula_trace: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub extras: ExtrasArgs,
    /// Print the per-generation progress table.
    #[arg(long)]
    pub report: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct IndepRunsArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub extras: ExtrasArgs,
    #[arg(long, short = 'r')]
    pub runs: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CritPopArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Independent runs per probed size.
    #[arg(long, short = 'r')]
    pub runs: Option<usize>,
    /// Successful runs needed; defaults to all of them.
    #[arg(long)]
    pub success_runs: Option<usize>,
    #[arg(long)]
    pub lower_pop: Option<usize>,
    #[arg(long)]
    pub upper_pop: Option<usize>,
    #[arg(long)]
    pub stop_percent: Option<f64>,
}

struct Outcome {
    result: RunResult,
    trace: Vec<TraceRow>,
    model: Option<SearchModel>,
}

#[derive(Clone, Copy, Default)]
struct Collect {
    trace: bool,
    model: bool,
}

impl Collect {
    fn of(extras: &ExtrasArgs) -> Self {
        Collect {
            trace: extras.copula_trace.is_some(),
            model: extras.dump_model.is_some(),
        }
    }
}

fn run_once(exp: &Experiment, index: usize, collect: Collect, report: Option<&mut dyn Write>) -> CliResult<Outcome> {
    let mut trace = Vec::new();
    let mut model = None;
    let mut observer = |info: &GenerationInfo<'_>| {
        if let Some(m) = info.model {
            if collect.trace {
                trace.push(TraceRow {
                    run: index + 1,
                    generation: info.gen,
                    counts: m.family_counts(),
                });
            }
            if collect.model {
                model = Some(m.clone());
            }
        }
    };
    let mut spec = exp.spec.clone();
    spec.report = if report.is_some() { ReportMode::Simple } else { ReportMode::None };
    let mut hooks = RunHooks {
        report: report.map(|w| w as &mut dyn Write),
        observer: Some(&mut observer),
        local_optimizer: None,
    };
    let f = exp.benchmark.objective;
    let mut rng = run_rng(exp.seed, index);
    let mut result = eda_run_with(&spec, &f, &exp.lower, &exp.upper, &mut rng, &mut hooks).map_err(|e| {
        EdaError::Run {
            run: index + 1,
            source: Box::new(e),
        }
    })?;
    if !exp.timing {
        result.cpu_time = 0.0;
    }
    Ok(Outcome { result, trace, model })
}

/// Runs `runs` independent runs in parallel; outcomes come back in run order.
fn run_many(exp: &Experiment, runs: usize, collect: Collect) -> CliResult<Vec<Outcome>> {
    if runs == 0 {
        return Err(CliError::usage("at least one run is required"));
    }
    (0..runs).into_par_iter().map(|i| run_once(exp, i, collect, None)).collect()
}

fn open_output(path: &Option<PathBuf>) -> CliResult<Box<dyn Write + Send>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::io(format!("cannot create {}", p.display()), e))?,
        )),
        None => Box::new(io::stdout()),
    })
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| CliError::io(format!("cannot write {}", path.display()), e))
}

fn emit(out: &mut dyn Write, text: &str) -> CliResult<()> {
    out.write_all(text.as_bytes()).map_err(|e| CliError::io("cannot write output", e))
}

fn write_extras(extras: &ExtrasArgs, outcomes: &[Outcome], single: bool) -> CliResult<()> {
    if let Some(path) = &extras.copula_trace {
        let rows: Vec<TraceRow> = outcomes.iter().flat_map(|o| o.trace.iter().cloned()).collect();
        write_file(path, &copula_trace_csv(&rows)?)?;
    }
    if let Some(path) = &extras.dump_model {
        let models: Vec<&SearchModel> = outcomes.iter().filter_map(|o| o.model.as_ref()).collect();
        let json = if single {
            match models.first() {
                Some(m) => to_json(m)?,
                None => "null\n".to_string(),
            }
        } else {
            to_json(&models)?
        };
        write_file(path, &json)?;
    }
    Ok(())
}

fn summarize(outcomes: &[Outcome]) -> CliResult<(Vec<RunResult>, RunsSummary)> {
    let results: Vec<RunResult> = outcomes.iter().map(|o| o.result.clone()).collect();
    let summary = summarize_runs(&results)?;
    Ok((results, summary))
}

fn in_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> CliResult<T> + Send) -> CliResult<T> {
    match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::usage(format!("cannot start {n} worker threads: {e}")))?
            .install(f),
        None => f(),
    }
}

/// One run with the stream of run 1 of `indep-runs` under the same seed.
pub fn cmd_run(args: &RunArgs) -> CliResult<()> {
    let mut exp = resolve(&args.common)?;
    let report = args.report || exp.file.flag("report")?;
    exp.spec.report = ReportMode::None;
    let mut out = open_output(&exp.out)?;
    let collect = Collect::of(&args.extras);
    // progress lines only make sense in the plain text output
    let stream_report = report && exp.format == Format::Table;
    let outcome = run_once(&exp, 0, collect, if stream_report { Some(&mut *out) } else { None })?;
    let r = &outcome.result;
    let text = match exp.format {
        Format::Table => final_block(r),
        Format::Csv => runs_csv(&RunsDocument::new(std::slice::from_ref(r), summarize_runs(std::slice::from_ref(r))?))?
            .lines()
            .take(2)
            .map(|l| format!("{l}\n"))
            .collect(),
        Format::Json => to_json(&RunRecord::new(1, r))?,
    };
    emit(&mut *out, &text)?;
    out.flush().map_err(|e| CliError::io("cannot write output", e))?;
    write_extras(&args.extras, std::slice::from_ref(&outcome), true)
}

pub fn cmd_indep_runs(args: &IndepRunsArgs) -> CliResult<()> {
    let exp = resolve(&args.common)?;
    let runs = pick(args.runs, &exp.file, "runs")?.unwrap_or(DEFAULT_RUNS);
    let collect = Collect::of(&args.extras);
    let outcomes = in_pool(exp.jobs, || run_many(&exp, runs, collect))?;
    let (results, summary) = summarize(&outcomes)?;
    let doc = RunsDocument::new(&results, summary);
    let text = match exp.format {
        Format::Table => runs_table(&doc),
        Format::Csv => runs_csv(&doc)?,
        Format::Json => to_json(&doc)?,
    };
    let mut out = open_output(&exp.out)?;
    emit(&mut *out, &text)?;
    out.flush().map_err(|e| CliError::io("cannot write output", e))?;
    write_extras(&args.extras, &outcomes, false)
}

pub fn cmd_critpop(args: &CritPopArgs) -> CliResult<()> {
    let exp = resolve(&args.common)?;
    let file = &exp.file;
    let total = pick(args.runs, file, "runs")?.unwrap_or(DEFAULT_RUNS);
    let needed = pick(args.success_runs, file, "success-runs")?.unwrap_or(total);
    let lower_pop = pick(args.lower_pop, file, "lower-pop")?.unwrap_or(50);
    let upper_pop = pick(args.upper_pop, file, "upper-pop")?.unwrap_or(2000);
    let stop_percent = pick(args.stop_percent, file, "stop-percent")?.unwrap_or(10.0);
    if total == 0 || needed == 0 || needed > total {
        return Err(CliError::usage(format!(
            "need 1 <= success runs ({needed}) <= runs ({total})"
        )));
    }
    if lower_pop < 2 || lower_pop >= upper_pop {
        return Err(CliError::usage(format!(
            "population interval [{lower_pop}, {upper_pop}] must satisfy 2 <= lower < upper"
        )));
    }
    let (target, tol) = exp.target();
    let mut out = open_output(&exp.out)?;
    let text_mode = exp.format == Format::Table;
    let mut trace = critpop_header(lower_pop, upper_pop, stop_percent, total, needed);
    if text_mode {
        emit(&mut *out, &trace)?;
        out.flush().map_err(|e| CliError::io("cannot write output", e))?;
    }

    let mut cache: HashMap<usize, Vec<RunResult>> = HashMap::new();
    let search = in_pool(exp.jobs, || {
        bisect_pop_size(lower_pop, upper_pop, stop_percent, |size| {
            let mut e = exp.clone();
            e.spec.pop_size = size;
            let outcomes = run_many(&e, total, Collect::default()).map_err(|err| match err {
                CliError::Eda(inner) => inner,
                other => EdaError::Config(other.to_string()),
            })?;
            let results: Vec<RunResult> = outcomes.into_iter().map(|o| o.result).collect();
            let successes = results.iter().filter(|r| (r.best_eval - target).abs() <= tol).count();
            let succeeded = successes >= needed;
            let line = probe_line(size, successes, total, succeeded);
            if text_mode {
                let _ = out.write_all(line.as_bytes()).and_then(|_| out.flush());
            }
            trace.push_str(&line);
            cache.insert(size, results);
            Ok((successes, succeeded))
        })
        .map_err(CliError::from)
    })?;

    let pop_size = search.critical.unwrap_or(upper_pop);
    let results = cache
        .remove(&pop_size)
        .ok_or_else(|| CliError::Eda(EdaError::Internal(format!("no runs recorded for size {pop_size}"))))?;
    let summary = summarize_runs(&results)?;
    let doc = RunsDocument::new(&results, summary);
    let verdict = match search.critical {
        Some(n) => format!("Critical population size: {n}\n"),
        None => format!(
            "Critical population size not found in [{lower_pop}, {upper_pop}]; results with population size {upper_pop}:\n"
        ),
    };
    let text = match exp.format {
        Format::Table => format!("{verdict}\n{}", runs_table(&doc)),
        Format::Csv => {
            eprint!("{trace}{verdict}");
            runs_csv(&doc)?
        }
        Format::Json => to_json(&CritPopDocument {
            lower_pop,
            upper_pop,
            stop_percent,
            total_runs: total,
            success_runs: needed,
            search,
            pop_size,
            runs: doc.runs,
            summary: doc.summary,
        })?,
    };
    emit(&mut *out, &text)?;
    out.flush().map_err(|e| CliError::io("cannot write output", e))
}
