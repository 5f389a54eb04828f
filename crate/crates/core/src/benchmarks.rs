//! Benchmark objectives, all stated as minimization problems.

/// Objective signature shared by the harness.
pub type Objective = fn(&[f64]) -> f64;

pub fn f_sphere(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Summation Cancellation, negated so that the optimum `-1e5` at the
/// origin is a minimum.
pub fn f_summation_cancellation(x: &[f64]) -> f64 {
    let mut prefix = 0.0;
    let mut total = 0.0;
    for v in x {
        prefix += v;
        total += f64::abs(prefix);
    }
    -1.0 / (1e-5 + total)
}

#[derive(Debug, Clone, Copy)]
pub struct BenchmarkSpec {
    pub name: &'static str,
    pub objective: Objective,
    pub default_lower: f64,
    pub default_upper: f64,
    pub target_eval: f64,
}

impl BenchmarkSpec {
    pub fn lower(&self, dim: usize) -> Vec<f64> {
        vec![self.default_lower; dim]
    }

    pub fn upper(&self, dim: usize) -> Vec<f64> {
        vec![self.default_upper; dim]
    }
}

pub const REGISTRY: [BenchmarkSpec; 2] = [
    BenchmarkSpec {
        name: "sphere",
        objective: f_sphere,
        default_lower: -600.0,
        default_upper: 600.0,
        target_eval: 0.0,
    },
    BenchmarkSpec {
        name: "summation-cancellation",
        objective: f_summation_cancellation,
        default_lower: -0.16,
        default_upper: 0.16,
        target_eval: -1e5,
    },
];

/// Looks a benchmark up by name; `_` and `-` are interchangeable and case
/// is ignored.
pub fn lookup(name: &str) -> Option<&'static BenchmarkSpec> {
    let key = name.to_ascii_lowercase().replace('_', "-");
    let key = match key.as_str() {
        "summationcancellation" | "sumcan" => "summation-cancellation",
        k => k,
    };
    REGISTRY.iter().find(|b| b.name == key)
}

pub fn names() -> Vec<&'static str> {
    REGISTRY.iter().map(|b| b.name).collect()
}
