//! Text, CSV and JSON renderings of run results.

use copula_eda::copula::CopulaFamily;
use copula_eda::eda::{format_sci, CritPopSearch, MetricSummary};
use copula_eda::{RunResult, RunsSummary};
use serde::{Deserialize, Serialize};

use crate::error::CliResult;

pub const RUNS_CSV_HEADER: [&str; 5] = ["run", "generations", "evaluations", "best_evaluation", "cpu_time_seconds"];

/// Labels of the summary rows, in output order.
pub const SUMMARY_ROWS: [&str; 5] = ["Minimum", "Median", "Maximum", "Mean", "Std. Dev."];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub generations: usize,
    pub evaluations: usize,
    pub best_evaluation: f64,
    pub cpu_time_seconds: f64,
    pub best_solution: Vec<f64>,
}

impl RunRecord {
    pub fn new(run: usize, r: &RunResult) -> Self {
        RunRecord {
            run,
            generations: r.num_gens,
            evaluations: r.f_evals,
            best_evaluation: r.best_eval,
            cpu_time_seconds: r.cpu_time,
            best_solution: r.best_sol.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunsDocument {
    pub runs: Vec<RunRecord>,
    pub summary: RunsSummary,
}

impl RunsDocument {
    pub fn new(results: &[RunResult], summary: RunsSummary) -> Self {
        RunsDocument {
            runs: results.iter().enumerate().map(|(i, r)| RunRecord::new(i + 1, r)).collect(),
            summary,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CritPopDocument {
    pub lower_pop: usize,
    pub upper_pop: usize,
    pub stop_percent: f64,
    pub total_runs: usize,
    pub success_runs: usize,
    pub search: CritPopSearch,
    /// Population size of the reported runs: the critical size, or the
    /// upper bound when none was found.
    pub pop_size: usize,
    pub runs: Vec<RunRecord>,
    pub summary: RunsSummary,
}

fn metric_column(m: &MetricSummary) -> [f64; 5] {
    [m.minimum, m.median, m.maximum, m.mean, m.std_dev]
}

/// The four-line block printed after a single run.
pub fn final_block(r: &RunResult) -> String {
    format!(
        "Best function evaluation    {}\nNo. of generations          {}\nNo. of function evaluations {}\nCPU time                    {:.3} seconds\n",
        format_sci(r.best_eval),
        r.num_gens,
        r.f_evals,
        r.cpu_time
    )
}

pub fn runs_table(doc: &RunsDocument) -> String {
    let mut out = String::new();
    for r in &doc.runs {
        out.push_str(&format!(
            "{:<10}{:>9}{:>12}{:>16}{:>10.3}\n",
            format!("Run {}", r.run),
            r.generations,
            r.evaluations,
            format_sci(r.best_evaluation),
            r.cpu_time_seconds
        ));
    }
    out.push('\n');
    out.push_str(&summary_table(&doc.summary));
    out
}

pub fn summary_table(s: &RunsSummary) -> String {
    let mut out = format!(
        "{:<10}{:>13}{:>13}{:>16}{:>12}\n",
        "", "Generations", "Evaluations", "Best Evaluation", "CPU Time"
    );
    let (g, e, b, t) = (
        metric_column(&s.generations),
        metric_column(&s.evaluations),
        metric_column(&s.best_evaluation),
        metric_column(&s.cpu_time),
    );
    for (i, label) in SUMMARY_ROWS.iter().enumerate() {
        out.push_str(&format!(
            "{label:<10}{:>13.6}{:>13.4}{:>16}{:>12.7}\n",
            g[i],
            e[i],
            format_sci(b[i]),
            t[i]
        ));
    }
    out
}

/// Per-run rows followed by the summary rows, labelled in the `run` column.
pub fn runs_csv(doc: &RunsDocument) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RUNS_CSV_HEADER)?;
    for r in &doc.runs {
        w.write_record([
            r.run.to_string(),
            format_sci(r.generations as f64),
            format_sci(r.evaluations as f64),
            format_sci(r.best_evaluation),
            format_sci(r.cpu_time_seconds),
        ])?;
    }
    let s = &doc.summary;
    let cols = [
        metric_column(&s.generations),
        metric_column(&s.evaluations),
        metric_column(&s.best_evaluation),
        metric_column(&s.cpu_time),
    ];
    for (i, label) in ["minimum", "median", "maximum", "mean", "std_dev"].iter().enumerate() {
        let mut row = vec![label.to_string()];
        row.extend(cols.iter().map(|c| format_sci(c[i])));
        w.write_record(&row)?;
    }
    finish_csv(w)
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> CliResult<String> {
    let bytes = w.into_inner().map_err(|e| crate::error::CliError::Serialize(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| crate::error::CliError::Serialize(e.to_string()))
}

pub fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Per-generation counts of each pair-copula family.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub run: usize,
    pub generation: usize,
    pub counts: Vec<(CopulaFamily, usize)>,
}

pub fn copula_trace_csv(rows: &[TraceRow]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["run".to_string(), "generation".to_string()];
    header.extend(CopulaFamily::ALL.iter().map(|f| f.name().to_string()));
    w.write_record(&header)?;
    for row in rows {
        let mut rec = vec![row.run.to_string(), row.generation.to_string()];
        rec.extend(CopulaFamily::ALL.iter().map(|f| {
            row.counts
                .iter()
                .find(|(g, _)| g == f)
                .map_or(0, |(_, n)| *n)
                .to_string()
        }));
        w.write_record(&rec)?;
    }
    finish_csv(w)
}

pub fn critpop_header(lower_pop: usize, upper_pop: usize, stop_percent: f64, total: usize, needed: usize) -> String {
    format!(
        "Critical population size search in [{lower_pop}, {upper_pop}], stop percent {stop_percent}, {needed}/{total} successful runs required\n"
    )
}

pub fn probe_line(pop_size: usize, successes: usize, total: usize, succeeded: bool) -> String {
    format!(
        "Population size {pop_size:>6}: {successes}/{total} successful runs ({})\n",
        if succeeded { "success" } else { "failure" }
    )
}
