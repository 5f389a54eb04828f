//! The generic EDA loop and the experiment harness built on it: independent
//! runs, run summaries and the critical population size search.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{learn, sample, SearchModel};
use crate::copula::CopulaFamily;
use crate::error::{EdaError, Result};
use crate::margins::MarginKind;
use crate::vines::{TruncCriterion, VineType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    Umda,
    Gceda,
    Cveda,
    Dveda,
    CopulaMimic,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Umda,
        Algorithm::Gceda,
        Algorithm::Cveda,
        Algorithm::Dveda,
        Algorithm::CopulaMimic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Umda => "UMDA",
            Algorithm::Gceda => "GCEDA",
            Algorithm::Cveda => "CVEDA",
            Algorithm::Dveda => "DVEDA",
            Algorithm::CopulaMimic => "CopulaMIMIC",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        let key: String = name
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        match key.as_str() {
            "umda" => Some(Algorithm::Umda),
            "gceda" | "emna" => Some(Algorithm::Gceda),
            "cveda" => Some(Algorithm::Cveda),
            "dveda" => Some(Algorithm::Dveda),
            "copulamimic" | "mimic" | "cmimic" => Some(Algorithm::CopulaMimic),
            _ => None,
        }
    }

    pub fn vine_type(self) -> Option<VineType> {
        match self {
            Algorithm::Cveda => Some(VineType::CVine),
            Algorithm::Dveda => Some(VineType::DVine),
            _ => None,
        }
    }

    pub fn default_margin(self) -> MarginKind {
        match self {
            Algorithm::CopulaMimic => MarginKind::BetaRescaled,
            _ => MarginKind::Normal,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Settings of the dependence model. Ignored by UMDA and GCEDA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopulaConfig {
    /// Candidate pair-copula families (vines) or the chain family (MIMIC).
    pub families: Vec<CopulaFamily>,
    /// Level of the per-edge independence test in vines.
    pub sig_level: f64,
    pub trunc_criterion: TruncCriterion,
    /// Monte-Carlo draws per pair for non-normal mutual information.
    pub mi_draws: usize,
}

impl Default for CopulaConfig {
    fn default() -> Self {
        CopulaConfig {
            families: vec![CopulaFamily::Normal],
            sig_level: 0.01,
            trunc_criterion: TruncCriterion::Aic,
            mi_draws: crate::dependence::MI_DRAWS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ReportMode {
    #[default]
    None,
    Simple,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TerminationSpec {
    pub max_gen: Option<usize>,
    pub max_evals: Option<usize>,
    /// Target evaluation and its tolerance.
    pub target: Option<(f64, f64)>,
    pub eval_stddev_floor: Option<f64>,
}

impl TerminationSpec {
    pub fn max_gen(n: usize) -> Self {
        TerminationSpec {
            max_gen: Some(n),
            ..Default::default()
        }
    }

    pub fn with_target(mut self, target: f64, tol: f64) -> Self {
        self.target = Some((target, tol));
        self
    }

    pub fn with_max_evals(mut self, n: usize) -> Self {
        self.max_evals = Some(n);
        self
    }

    pub fn with_stddev_floor(mut self, floor: f64) -> Self {
        self.eval_stddev_floor = Some(floor);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_gen.is_none() && self.max_evals.is_none() && self.target.is_none() && self.eval_stddev_floor.is_none()
        {
            return Err(EdaError::Config("no termination criterion set".into()));
        }
        if let Some((t, tol)) = self.target {
            if !t.is_finite() || !(tol >= 0.0) {
                return Err(EdaError::Config(format!("invalid target {t} with tolerance {tol}")));
            }
        }
        Ok(())
    }

    /// Whether the target was reached by `best`.
    pub fn hit(&self, best: f64) -> bool {
        self.target.is_some_and(|(t, tol)| (best - t).abs() <= tol)
    }
}

/// Snapshot fed to [`terminate_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunState {
    pub gen: usize,
    pub evals: usize,
    pub best_eval: f64,
    pub eval_stddev: f64,
}

pub fn terminate_check(spec: &TerminationSpec, state: &RunState) -> bool {
    spec.max_gen.is_some_and(|g| state.gen >= g)
        || spec.max_evals.is_some_and(|e| state.evals >= e)
        || spec.hit(state.best_eval)
        || spec.eval_stddev_floor.is_some_and(|f| state.eval_stddev < f)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdaSpec {
    pub algorithm: Algorithm,
    pub pop_size: usize,
    pub margin: MarginKind,
    pub copula: CopulaConfig,
    pub truncation_factor: f64,
    pub termination: TerminationSpec,
    pub report: ReportMode,
}

impl EdaSpec {
    /// Spec with the algorithm's default margin, truncation factor 0.3 and
    /// a 100-generation limit.
    pub fn new(algorithm: Algorithm, pop_size: usize) -> Self {
        EdaSpec {
            algorithm,
            pop_size,
            margin: algorithm.default_margin(),
            copula: CopulaConfig::default(),
            truncation_factor: 0.3,
            termination: TerminationSpec::max_gen(100),
            report: ReportMode::None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pop_size < 2 {
            return Err(EdaError::Config(format!("population size {} is below 2", self.pop_size)));
        }
        if !(self.truncation_factor > 0.0 && self.truncation_factor <= 1.0) {
            return Err(EdaError::Config(format!(
                "truncation factor {} outside (0, 1]",
                self.truncation_factor
            )));
        }
        if !(self.copula.sig_level > 0.0 && self.copula.sig_level < 1.0) {
            return Err(EdaError::Config(format!(
                "significance level {} outside (0, 1)",
                self.copula.sig_level
            )));
        }
        match self.algorithm {
            Algorithm::Cveda | Algorithm::Dveda if self.copula.families.is_empty() => {
                return Err(EdaError::Config("vine EDAs need at least one candidate copula".into()));
            }
            Algorithm::CopulaMimic => {
                if !matches!(self.copula.families.as_slice(), [CopulaFamily::Normal] | [CopulaFamily::Frank]) {
                    return Err(EdaError::Config(format!(
                        "Copula MIMIC takes exactly one of normal or frank, got {:?}",
                        self.copula.families
                    )));
                }
            }
            _ => {}
        }
        self.termination.validate()
    }
}

/// Solutions as rows, with their evaluations once computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub solutions: Vec<Vec<f64>>,
    /// Empty until [`Population::evaluate`] runs.
    pub evaluations: Vec<f64>,
}

impl Population {
    pub fn new(solutions: Vec<Vec<f64>>) -> Self {
        Population {
            solutions,
            evaluations: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.solutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.solutions.first().map_or(0, Vec::len)
    }

    pub fn is_evaluated(&self) -> bool {
        !self.is_empty() && self.evaluations.len() == self.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.solutions.iter().map(|r| r[j]).collect()
    }

    pub fn evaluate<F: Fn(&[f64]) -> f64 + ?Sized>(&mut self, f: &F) -> Result<()> {
        let mut evals = Vec::with_capacity(self.len());
        for x in &self.solutions {
            let v = f(x);
            if !v.is_finite() {
                return Err(EdaError::Objective {
                    point: x.clone(),
                    value: v,
                });
            }
            evals.push(v);
        }
        self.evaluations = evals;
        Ok(())
    }

    /// Minimum, mean and standard deviation (m - 1 denominator) of the
    /// evaluations.
    pub fn eval_stats(&self) -> (f64, f64, f64) {
        let e = &self.evaluations;
        let min = e.iter().copied().fold(f64::INFINITY, f64::min);
        let mean = e.iter().sum::<f64>() / e.len() as f64;
        let sd = if e.len() > 1 {
            (e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (e.len() - 1) as f64).sqrt()
        } else {
            0.0
        };
        (min, mean, sd)
    }
}

fn check_bounds(lower: &[f64], upper: &[f64]) -> Result<()> {
    if lower.len() != upper.len() {
        return Err(EdaError::DimensionMismatch {
            expected: lower.len(),
            found: upper.len(),
        });
    }
    if lower.is_empty() {
        return Err(EdaError::Empty("search space has no variables"));
    }
    for (j, (l, u)) in lower.iter().zip(upper).enumerate() {
        if !(l < u) || !l.is_finite() || !u.is_finite() {
            return Err(EdaError::Config(format!("bounds of variable {}: {l} >= {u}", j + 1)));
        }
    }
    Ok(())
}

pub fn seed_uniform<R: Rng + ?Sized>(lower: &[f64], upper: &[f64], pop_size: usize, rng: &mut R) -> Result<Population> {
    check_bounds(lower, upper)?;
    let solutions = (0..pop_size)
        .map(|_| {
            lower
                .iter()
                .zip(upper)
                .map(|(&l, &u)| l + (u - l) * rng.random::<f64>())
                .collect()
        })
        .collect();
    Ok(Population::new(solutions))
}

/// Number of rows kept by truncation selection.
pub fn selection_size(pop_size: usize, factor: f64) -> usize {
    ((factor * pop_size as f64).round() as usize).max(2).min(pop_size)
}

/// Keeps the best `selection_size` rows, ordered by evaluation and then by
/// original index.
pub fn select_truncation(pop: &Population, factor: f64) -> Population {
    let mut idx: Vec<usize> = (0..pop.len()).collect();
    idx.sort_by(|&a, &b| pop.evaluations[a].total_cmp(&pop.evaluations[b]).then(a.cmp(&b)));
    idx.truncate(selection_size(pop.len(), factor));
    Population {
        solutions: idx.iter().map(|&i| pop.solutions[i].clone()).collect(),
        evaluations: idx.iter().map(|&i| pop.evaluations[i]).collect(),
    }
}

pub fn replace_complete(old: Population, sampled: Population) -> Result<Population> {
    if old.dim() != sampled.dim() {
        return Err(EdaError::DimensionMismatch {
            expected: old.dim(),
            found: sampled.dim(),
        });
    }
    Ok(sampled)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub num_gens: usize,
    pub f_evals: usize,
    pub best_sol: Vec<f64>,
    pub best_eval: f64,
    /// Wall-clock seconds.
    pub cpu_time: f64,
}

/// What an observer sees after each generation.
pub struct GenerationInfo<'a> {
    pub gen: usize,
    pub population: &'a Population,
    /// Model that produced the population; `None` for the seeded one.
    pub model: Option<&'a SearchModel>,
    pub best_eval: f64,
    pub f_evals: usize,
}

/// Optional step applied to each freshly evaluated population. Returns the
/// number of extra objective evaluations it spent.
pub trait LocalOptimizer {
    fn optimize(&mut self, pop: &mut Population, f: &dyn Fn(&[f64]) -> f64, lower: &[f64], upper: &[f64])
        -> Result<usize>;
}

/// Hooks into a run. All are optional.
#[derive(Default)]
pub struct RunHooks<'a> {
    /// Receives the report lines when the spec asks for them.
    pub report: Option<&'a mut dyn Write>,
    pub observer: Option<&'a mut dyn FnMut(&GenerationInfo<'_>)>,
    pub local_optimizer: Option<&'a mut dyn LocalOptimizer>,
}

pub const REPORT_HEADER: &str = "  Generation      Minimum         Mean    Std. Dev.";

/// Scientific notation with 6 significant digits and a signed two-digit
/// exponent, e.g. `8.48383e-07`.
pub fn format_sci(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let s = format!("{x:.5e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

pub fn report_line(gen: usize, min: f64, mean: f64, sd: f64) -> String {
    format!(
        "{gen:>12} {:>12} {:>12} {:>12}",
        format_sci(min),
        format_sci(mean),
        format_sci(sd)
    )
}

/// Runs one EDA. Report lines, if enabled, go to standard output.
pub fn eda_run<F, R>(spec: &EdaSpec, f: &F, lower: &[f64], upper: &[f64], rng: &mut R) -> Result<RunResult>
where
    F: Fn(&[f64]) -> f64 + ?Sized,
    R: Rng + ?Sized,
{
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    let mut hooks = RunHooks {
        report: Some(&mut lock),
        ..Default::default()
    };
    eda_run_with(spec, f, lower, upper, rng, &mut hooks)
}

pub fn eda_run_with<F, R>(
    spec: &EdaSpec,
    f: &F,
    lower: &[f64],
    upper: &[f64],
    rng: &mut R,
    hooks: &mut RunHooks<'_>,
) -> Result<RunResult>
where
    F: Fn(&[f64]) -> f64 + ?Sized,
    R: Rng + ?Sized,
{
    spec.validate()?;
    check_bounds(lower, upper)?;
    let start = Instant::now();
    let report = spec.report == ReportMode::Simple;
    if report {
        if let Some(w) = hooks.report.as_mut() {
            writeln!(w, "{REPORT_HEADER}").map_err(|e| EdaError::Internal(e.to_string()))?;
        }
    }
    let objective = |x: &[f64]| f(x);
    let mut gen = 0;
    let mut f_evals = 0;
    let mut best_eval = f64::INFINITY;
    let mut best_sol = Vec::new();
    let mut pop: Option<Population> = None;
    loop {
        gen += 1;
        let (mut current, model) = match pop.take() {
            None => (seed_uniform(lower, upper, spec.pop_size, rng)?, None),
            Some(prev) => {
                let selected = select_truncation(&prev, spec.truncation_factor);
                let model = learn(spec, &selected, lower, upper, rng)?;
                let sampled = sample(&model, spec.pop_size, rng)?;
                (replace_complete(prev, sampled)?, Some(model))
            }
        };
        current.evaluate(f)?;
        f_evals += current.len();
        if let Some(opt) = hooks.local_optimizer.as_mut() {
            f_evals += opt.optimize(&mut current, &objective, lower, upper)?;
        }
        for (x, &v) in current.solutions.iter().zip(&current.evaluations) {
            if v < best_eval {
                best_eval = v;
                best_sol = x.clone();
            }
        }
        let (min, mean, sd) = current.eval_stats();
        if report {
            if let Some(w) = hooks.report.as_mut() {
                writeln!(w, "{}", report_line(gen, min, mean, sd)).map_err(|e| EdaError::Internal(e.to_string()))?;
            }
        }
        if let Some(obs) = hooks.observer.as_mut() {
            obs(&GenerationInfo {
                gen,
                population: &current,
                model: model.as_ref(),
                best_eval,
                f_evals,
            });
        }
        let state = RunState {
            gen,
            evals: f_evals,
            best_eval,
            eval_stddev: sd,
        };
        if terminate_check(&spec.termination, &state) {
            break;
        }
        pop = Some(current);
    }
    Ok(RunResult {
        num_gens: gen,
        f_evals,
        best_sol,
        best_eval,
        cpu_time: start.elapsed().as_secs_f64(),
    })
}

/// Seed of run `run` derived from `base` by a SplitMix64 step.
pub fn run_seed(base: u64, run: usize) -> u64 {
    let mut z = base.wrapping_add((run as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn run_rng(base: u64, run: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(run_seed(base, run))
}

/// Order statistics and moments of one metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub minimum: f64,
    pub median: f64,
    pub maximum: f64,
    pub mean: f64,
    pub std_dev: f64,
}

impl MetricSummary {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(EdaError::Empty("no values to summarize"));
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let m = v.len();
        let median = if m % 2 == 1 {
            v[m / 2]
        } else {
            0.5 * (v[m / 2 - 1] + v[m / 2])
        };
        let mean = v.iter().sum::<f64>() / m as f64;
        let std_dev = if m > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64).sqrt()
        } else {
            0.0
        };
        Ok(MetricSummary {
            minimum: v[0],
            median,
            maximum: v[m - 1],
            mean,
            std_dev,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunsSummary {
    pub generations: MetricSummary,
    pub evaluations: MetricSummary,
    pub best_evaluation: MetricSummary,
    pub cpu_time: MetricSummary,
}

pub fn summarize_runs(results: &[RunResult]) -> Result<RunsSummary> {
    if results.is_empty() {
        return Err(EdaError::Empty("no runs to summarize"));
    }
    let metric = |g: fn(&RunResult) -> f64| MetricSummary::of(&results.iter().map(g).collect::<Vec<_>>());
    Ok(RunsSummary {
        generations: metric(|r| r.num_gens as f64)?,
        evaluations: metric(|r| r.f_evals as f64)?,
        best_evaluation: metric(|r| r.best_eval)?,
        cpu_time: metric(|r| r.cpu_time)?,
    })
}

/// Runs `runs` independent executions in parallel on the current rayon
/// pool. Run `i` uses the stream `run_rng(base_seed, i)`; reporting is
/// suppressed.
pub fn eda_indep_runs<F>(
    spec: &EdaSpec,
    f: &F,
    lower: &[f64],
    upper: &[f64],
    runs: usize,
    base_seed: u64,
) -> Result<(Vec<RunResult>, RunsSummary)>
where
    F: Fn(&[f64]) -> f64 + Sync + ?Sized,
{
    if runs == 0 {
        return Err(EdaError::Config("at least one run is required".into()));
    }
    let mut quiet = spec.clone();
    quiet.report = ReportMode::None;
    quiet.validate()?;
    let results = (0..runs)
        .into_par_iter()
        .map(|i| {
            let mut rng = run_rng(base_seed, i);
            eda_run_with(&quiet, f, lower, upper, &mut rng, &mut RunHooks::default()).map_err(|e| EdaError::Run {
                run: i + 1,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize_runs(&results)?;
    Ok((results, summary))
}

/// One population size tried by the critical population size search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopProbe {
    pub pop_size: usize,
    pub successes: usize,
    pub succeeded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CritPopSearch {
    pub critical: Option<usize>,
    pub probes: Vec<PopProbe>,
}

/// Bisection over population sizes on a success predicate returning
/// `(successes, succeeded)`. `upper_pop` is tried first; the search stops
/// once `succ - fail <= stop_percent / 100 * succ`. Sizes are probed at most
/// once.
pub fn bisect_pop_size<P>(lower_pop: usize, upper_pop: usize, stop_percent: f64, mut probe: P) -> Result<CritPopSearch>
where
    P: FnMut(usize) -> Result<(usize, bool)>,
{
    if lower_pop >= upper_pop {
        return Err(EdaError::Config(format!(
            "population interval [{lower_pop}, {upper_pop}] is empty"
        )));
    }
    if !(stop_percent >= 0.0) {
        return Err(EdaError::Config(format!("stop percent {stop_percent} is negative")));
    }
    let mut cache: BTreeMap<usize, bool> = BTreeMap::new();
    let mut probes = Vec::new();
    let mut test = |size: usize, probes: &mut Vec<PopProbe>| -> Result<bool> {
        if let Some(&ok) = cache.get(&size) {
            return Ok(ok);
        }
        let (successes, ok) = probe(size)?;
        cache.insert(size, ok);
        probes.push(PopProbe {
            pop_size: size,
            successes,
            succeeded: ok,
        });
        Ok(ok)
    };
    if !test(upper_pop, &mut probes)? {
        return Ok(CritPopSearch { critical: None, probes });
    }
    let (mut fail, mut succ) = (lower_pop, upper_pop);
    while (succ - fail) as f64 > stop_percent / 100.0 * succ as f64 {
        let mid = fail + (succ - fail) / 2;
        if mid == fail {
            break;
        }
        if test(mid, &mut probes)? {
            succ = mid;
        } else {
            fail = mid;
        }
    }
    Ok(CritPopSearch {
        critical: Some(succ),
        probes,
    })
}

/// Settings of [`critical_pop_size`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CritPopConfig {
    pub target: f64,
    pub tol: f64,
    pub lower_pop: usize,
    pub upper_pop: usize,
    pub total_runs: usize,
    pub success_runs: usize,
    pub stop_percent: f64,
    pub base_seed: u64,
}

/// Smallest population size for which at least `success_runs` of
/// `total_runs` independent runs reach the target, searched by bisection.
pub fn critical_pop_size<F>(spec: &EdaSpec, f: &F, lower: &[f64], upper: &[f64], cfg: &CritPopConfig) -> Result<CritPopSearch>
where
    F: Fn(&[f64]) -> f64 + Sync + ?Sized,
{
    if cfg.success_runs > cfg.total_runs {
        return Err(EdaError::Config(format!(
            "{} required successes exceed {} runs",
            cfg.success_runs, cfg.total_runs
        )));
    }
    bisect_pop_size(cfg.lower_pop, cfg.upper_pop, cfg.stop_percent, |size| {
        let mut s = spec.clone();
        s.pop_size = size;
        let (results, _) = eda_indep_runs(&s, f, lower, upper, cfg.total_runs, cfg.base_seed)?;
        let successes = results.iter().filter(|r| (r.best_eval - cfg.target).abs() <= cfg.tol).count();
        Ok((successes, successes >= cfg.success_runs))
    })
}
