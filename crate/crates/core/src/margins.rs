//! Univariate margin models: fit, CDF and quantile.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{EdaError, Result};
use crate::numeric::{beta_cdf, beta_ln_pdf, beta_quantile, nelder_mead, normal_cdf, normal_pdf, normal_quantile};

/// Floor for every fitted scale parameter.
pub const SCALE_FLOOR: f64 = 1e-8;
/// Clamp applied to rescaled data before the beta likelihood.
pub const BETA_DATA_CLAMP: f64 = 1e-6;
/// Relative accuracy of kernel quantiles on the CDF scale.
const QUANTILE_CDF_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MarginKind {
    Normal,
    Kernel,
    TruncNormal,
    BetaRescaled,
}

impl MarginKind {
    pub const ALL: [MarginKind; 4] = [
        MarginKind::Normal,
        MarginKind::Kernel,
        MarginKind::TruncNormal,
        MarginKind::BetaRescaled,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MarginKind::Normal => "normal",
            MarginKind::Kernel => "kernel",
            MarginKind::TruncNormal => "truncnormal",
            MarginKind::BetaRescaled => "beta",
        }
    }

    /// Accepts the canonical names plus the short aliases used by the
    /// original package (`norm`, `truncnorm`, `betamargin`).
    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "normal" | "norm" => Some(MarginKind::Normal),
            "kernel" => Some(MarginKind::Kernel),
            "truncnormal" | "truncnorm" | "trunc-normal" => Some(MarginKind::TruncNormal),
            "beta" | "betamargin" | "beta-rescaled" => Some(MarginKind::BetaRescaled),
            _ => None,
        }
    }
}

impl fmt::Display for MarginKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A fitted univariate distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MarginModel {
    Normal { mu: f64, sigma: f64 },
    /// Gaussian-kernel smoothed empirical distribution; `sample` is sorted.
    Kernel { sample: Vec<f64>, bandwidth: f64 },
    TruncNormal { mu: f64, sigma: f64, lower: f64, upper: f64 },
    BetaRescaled { lower: f64, upper: f64, a: f64, b: f64 },
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sum of squared deviations from the mean.
fn sum_sq_dev(x: &[f64]) -> f64 {
    let mu = mean(x);
    x.iter().map(|v| (v - mu) * (v - mu)).sum()
}

/// Linear-interpolation sample quantile of sorted data.
fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Silverman's rule of thumb `0.9 min(sd, IQR/1.34) m^(-1/5)`. Falls back to
/// the standard deviation when the IQR vanishes, then to the floor.
pub fn silverman_bandwidth(sorted: &[f64]) -> f64 {
    let m = sorted.len();
    let sd = (sum_sq_dev(sorted) / (m - 1) as f64).sqrt();
    let iqr = sorted_quantile(sorted, 0.75) - sorted_quantile(sorted, 0.25);
    let mut spread = sd.min(iqr / 1.34);
    if !(spread > 0.0) {
        spread = sd;
    }
    floor_scale(0.9 * spread * (m as f64).powf(-0.2))
}

/// Replaces a vanishing scale by [`SCALE_FLOOR`]. Tiny positive scales are
/// kept: late generations legitimately shrink far below the floor.
fn floor_scale(s: f64) -> f64 {
    if s > 0.0 {
        s
    } else {
        SCALE_FLOOR
    }
}

fn fit_beta(x: &[f64]) -> (f64, f64) {
    let neg_loglik = |s: &[f64]| {
        if s[0] <= 0.0 || s[1] <= 0.0 {
            return f64::INFINITY;
        }
        -x.iter().map(|&xi| beta_ln_pdf(xi, s[0], s[1])).sum::<f64>()
    };
    let (best, value) = nelder_mead(neg_loglik, &[1.0, 1.0], 0.1, 1e-8, 1000);
    if value.is_finite() && best.iter().all(|p| p.is_finite() && *p > 0.0) {
        (best[0], best[1])
    } else {
        (1.0, 1.0)
    }
}

/// Fits a margin of the given kind. `lower` and `upper` are the problem
/// bounds of the variable; only the truncated-normal and beta models use them.
pub fn fit_margin(kind: MarginKind, sample: &[f64], lower: f64, upper: f64) -> Result<MarginModel> {
    if sample.len() < 2 {
        return Err(EdaError::Config(format!(
            "fitting a margin needs at least 2 points, got {}",
            sample.len()
        )));
    }
    if !(lower < upper) {
        return Err(EdaError::Config(format!("margin bounds {lower} >= {upper}")));
    }
    if let Some(bad) = sample.iter().find(|v| !v.is_finite()) {
        return Err(EdaError::Config(format!("non-finite sample value {bad}")));
    }
    let m = sample.len() as f64;
    let model = match kind {
        MarginKind::Normal => MarginModel::Normal {
            mu: mean(sample),
            sigma: floor_scale((sum_sq_dev(sample) / m).sqrt()),
        },
        MarginKind::Kernel => {
            let mut sorted = sample.to_vec();
            sorted.sort_by(f64::total_cmp);
            let bandwidth = silverman_bandwidth(&sorted);
            MarginModel::Kernel {
                sample: sorted,
                bandwidth,
            }
        }
        MarginKind::TruncNormal => MarginModel::TruncNormal {
            mu: mean(sample),
            sigma: floor_scale((sum_sq_dev(sample) / m).sqrt()),
            lower,
            upper,
        },
        MarginKind::BetaRescaled => {
            let width = upper - lower;
            let mapped: Vec<f64> = sample
                .iter()
                .map(|v| ((v - lower) / width).clamp(BETA_DATA_CLAMP, 1.0 - BETA_DATA_CLAMP))
                .collect();
            let (a, b) = fit_beta(&mapped);
            MarginModel::BetaRescaled { lower, upper, a, b }
        }
    };
    Ok(model)
}

/// Truncated normal CDF on standardized bounds `[za, zb]`. Works in the upper
/// tail when both bounds are above the mean to avoid cancellation.
fn trunc_normal_cdf_std(z: f64, za: f64, zb: f64) -> f64 {
    if z <= za {
        return 0.0;
    }
    if z >= zb {
        return 1.0;
    }
    let (num, den) = if za > 0.0 {
        let qa = normal_cdf(-za);
        (qa - normal_cdf(-z), qa - normal_cdf(-zb))
    } else {
        let pa = normal_cdf(za);
        (normal_cdf(z) - pa, normal_cdf(zb) - pa)
    };
    if den > 0.0 {
        (num / den).clamp(0.0, 1.0)
    } else {
        // mass is numerically zero on the interval: uniform fallback
        (z - za) / (zb - za)
    }
}

impl MarginModel {
    pub fn kind(&self) -> MarginKind {
        match self {
            MarginModel::Normal { .. } => MarginKind::Normal,
            MarginModel::Kernel { .. } => MarginKind::Kernel,
            MarginModel::TruncNormal { .. } => MarginKind::TruncNormal,
            MarginModel::BetaRescaled { .. } => MarginKind::BetaRescaled,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            MarginModel::Normal { mu, sigma } => normal_cdf((x - mu) / sigma),
            MarginModel::Kernel {
                ref sample,
                bandwidth,
            } => kernel_cdf(sample, bandwidth, x),
            MarginModel::TruncNormal {
                mu,
                sigma,
                lower,
                upper,
            } => trunc_normal_cdf_std((x - mu) / sigma, (lower - mu) / sigma, (upper - mu) / sigma),
            MarginModel::BetaRescaled { lower, upper, a, b } => {
                beta_cdf((x - lower) / (upper - lower), a, b)
            }
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        match *self {
            MarginModel::Normal { mu, sigma } => mu + sigma * normal_quantile(p),
            MarginModel::Kernel {
                ref sample,
                bandwidth,
            } => kernel_quantile(sample, bandwidth, p),
            MarginModel::TruncNormal { lower, upper, .. } => {
                if p <= 0.0 {
                    return lower;
                }
                if p >= 1.0 {
                    return upper;
                }
                let x_tol = (upper - lower) * 1e-15;
                crate::numeric::bisect(|x| self.cdf(x), p, lower, upper, x_tol, 200)
            }
            MarginModel::BetaRescaled { lower, upper, a, b } => {
                lower + beta_quantile(p, a, b) * (upper - lower)
            }
        }
    }
}

/// `(1/m) Σ Φ((x - x_i)/h)`.
pub fn kernel_cdf(sample: &[f64], h: f64, x: f64) -> f64 {
    let s: f64 = sample.iter().map(|xi| normal_cdf((x - xi) / h)).sum();
    (s / sample.len() as f64).clamp(0.0, 1.0)
}

fn kernel_pdf(sample: &[f64], h: f64, x: f64) -> f64 {
    let s: f64 = sample.iter().map(|xi| normal_pdf((x - xi) / h)).sum();
    s / (sample.len() as f64 * h)
}

/// Inverts the smoothed kernel CDF. The bracket starts at
/// `[min - 4h, max + 4h]` and widens when `p` lies in the tails beyond it;
/// Newton steps are taken when they stay inside the current bracket and
/// bisection otherwise.
pub fn kernel_quantile(sample: &[f64], h: f64, p: f64) -> f64 {
    let (first, last) = (sample[0], sample[sample.len() - 1]);
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let mut lo = first - 4.0 * h;
    let mut hi = last + 4.0 * h;
    let mut step = 4.0 * h;
    while kernel_cdf(sample, h, lo) > p {
        step *= 2.0;
        lo = first - step;
    }
    step = 4.0 * h;
    while kernel_cdf(sample, h, hi) < p {
        step *= 2.0;
        hi = last + step;
    }
    let tol = QUANTILE_CDF_TOL * p.min(1.0 - p);
    let mut x = normal_quantile(p).mul_add(h, mean(sample)).clamp(lo, hi);
    for _ in 0..200 {
        let f = kernel_cdf(sample, h, x) - p;
        if f.abs() <= tol {
            return x;
        }
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let d = kernel_pdf(sample, h, x);
        let newton = x - f / d;
        let next = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if next == x || hi - lo <= f64::EPSILON * hi.abs().max(lo.abs()) {
            return next;
        }
        x = next;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::rng;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn normal_fit_is_ml() {
        let m = fit_margin(MarginKind::Normal, &[-1.0, 0.0, 1.0], -5.0, 5.0).unwrap();
        let MarginModel::Normal { mu, sigma } = m else { panic!() };
        assert_eq!(mu, 0.0);
        assert!((sigma - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        // the ML sigma maximizes the log-likelihood on a fine grid
        let ll = |s: f64| -> f64 {
            [-1.0f64, 0.0, 1.0]
                .iter()
                .map(|x| -(s.ln()) - x * x / (2.0 * s * s))
                .sum()
        };
        let grid_best = (1..2000)
            .map(|i| i as f64 / 1000.0)
            .max_by(|a, b| ll(*a).total_cmp(&ll(*b)))
            .unwrap();
        assert!((grid_best - sigma).abs() < 1e-3);
    }

    #[test]
    fn beta_fit_on_uniform_sample() {
        let mut r = rng(11);
        let xs: Vec<f64> = (0..5000).map(|_| r.random::<f64>()).collect();
        let MarginModel::BetaRescaled { a, b, .. } =
            fit_margin(MarginKind::BetaRescaled, &xs, 0.0, 1.0).unwrap()
        else {
            panic!()
        };
        assert!((0.9..=1.1).contains(&a), "a={a}");
        assert!((0.9..=1.1).contains(&b), "b={b}");
    }

    #[test]
    fn beta_fit_recovers_shape() {
        let mut r = rng(12);
        let xs: Vec<f64> = (0..3000)
            .map(|_| -2.0 + 4.0 * beta_quantile(r.random::<f64>(), 2.0, 5.0))
            .collect();
        let MarginModel::BetaRescaled { a, b, .. } =
            fit_margin(MarginKind::BetaRescaled, &xs, -2.0, 2.0).unwrap()
        else {
            panic!()
        };
        assert!((a - 2.0).abs() < 0.2 && (b - 5.0).abs() < 0.5, "a={a} b={b}");
    }

    #[test]
    fn constant_kernel_sample() {
        let m = fit_margin(MarginKind::Kernel, &[5.0, 5.0, 5.0], 0.0, 10.0).unwrap();
        let MarginModel::Kernel { bandwidth, .. } = &m else { panic!() };
        assert_eq!(*bandwidth, SCALE_FLOOR);
        assert!((m.quantile(0.5) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn constant_normal_sample_is_floored() {
        let m = fit_margin(MarginKind::Normal, &[2.0, 2.0], 0.0, 10.0).unwrap();
        assert_eq!(m, MarginModel::Normal { mu: 2.0, sigma: SCALE_FLOOR });
        assert!((m.quantile(0.9) - 2.0).abs() < 1e-7);
    }

    #[test]
    fn silverman_matches_hand_computation() {
        // sd = sqrt(2.5), IQR = 2 (type-7 quartiles 2 and 4)
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let expected = 0.9 * (2.0f64 / 1.34).min(2.5f64.sqrt()) * 5f64.powf(-0.2);
        assert!((silverman_bandwidth(&xs) - expected).abs() < 1e-15);
    }

    #[test]
    fn cdf_examples() {
        let n = MarginModel::Normal { mu: 0.0, sigma: 1.0 };
        assert_eq!(n.cdf(0.0), 0.5);
        assert_eq!(n.quantile(0.5), 0.0);
        let b = MarginModel::BetaRescaled { lower: 0.0, upper: 1.0, a: 1.0, b: 1.0 };
        assert!((b.cdf(0.3) - 0.3).abs() < 1e-15);
        let t = MarginModel::TruncNormal { mu: 0.0, sigma: 1.0, lower: -1.0, upper: 1.0 };
        assert_eq!(t.cdf(1.0), 1.0);
        assert_eq!(t.cdf(-1.0), 0.0);
        assert!((t.cdf(0.0) - 0.5).abs() < 1e-15);
        let b2 = MarginModel::BetaRescaled { lower: -2.0, upper: 2.0, a: 1.0, b: 1.0 };
        assert!((b2.quantile(0.75) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_cdf_against_direct_sum() {
        let sample = vec![-1.0, 0.5, 2.0];
        let h = 0.7;
        let x = 0.3;
        // independent evaluation through erf
        let expected: f64 = sample
            .iter()
            .map(|xi| 0.5 * (1.0 + libm::erf((x - xi) / (h * std::f64::consts::SQRT_2))))
            .sum::<f64>()
            / 3.0;
        assert!((kernel_cdf(&sample, h, x) - expected).abs() < 1e-15);
    }

    #[test]
    fn kernel_tails_vanish() {
        let mut r = rng(21);
        let xs: Vec<f64> = (0..50).map(|_| r.random::<f64>() * 10.0).collect();
        let m = fit_margin(MarginKind::Kernel, &xs, 0.0, 10.0).unwrap();
        let MarginModel::Kernel { sample, bandwidth } = &m else { panic!() };
        let (lo, hi) = (sample[0] - 8.0 * bandwidth, sample[49] + 8.0 * bandwidth);
        assert!(m.cdf(lo) < 1e-6);
        assert!(m.cdf(hi) > 1.0 - 1e-6);
        // extreme probabilities need the widened bracket
        assert!((m.cdf(m.quantile(1e-12)) - 1e-12).abs() < 1e-14);
    }

    #[test]
    fn truncnormal_far_outside_mean() {
        // the whole interval sits deep in the upper tail
        let t = MarginModel::TruncNormal { mu: 0.0, sigma: 1.0, lower: 9.0, upper: 10.0 };
        let mid = t.cdf(9.5);
        assert!(mid > 0.9 && mid < 1.0, "{mid}");
        let q = t.quantile(0.5);
        assert!((t.cdf(q) - 0.5).abs() < 1e-8);
    }

    fn sample_models() -> Vec<MarginModel> {
        let mut r = rng(5);
        let xs: Vec<f64> = (0..60).map(|_| r.random::<f64>() * 4.0 - 1.0).collect();
        MarginKind::ALL
            .iter()
            .map(|&k| fit_margin(k, &xs, -2.0, 4.0).unwrap())
            .collect()
    }

    #[test]
    fn quantile_round_trip_on_grid() {
        for model in sample_models() {
            for i in 1..100 {
                let p = i as f64 / 100.0;
                let x = model.quantile(p);
                assert!((model.cdf(x) - p).abs() < 1e-8, "{:?} p={p}", model.kind());
            }
        }
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(fit_margin(MarginKind::Normal, &[1.0], 0.0, 1.0).is_err());
        assert!(fit_margin(MarginKind::Normal, &[1.0, 2.0], 1.0, 1.0).is_err());
        assert!(fit_margin(MarginKind::Kernel, &[1.0, f64::NAN], 0.0, 3.0).is_err());
    }

    #[test]
    fn kind_names_round_trip() {
        for k in MarginKind::ALL {
            assert_eq!(MarginKind::parse(k.name()), Some(k));
        }
        assert_eq!(MarginKind::parse("norm"), Some(MarginKind::Normal));
        assert_eq!(MarginKind::parse("nope"), None);
    }

    proptest! {
        #[test]
        fn cdf_is_monotone(kind in 0usize..4, seed in 0u64..1000, a in -3.0f64..5.0, d in 0.0f64..3.0) {
            let mut r = rng(seed);
            let xs: Vec<f64> = (0..20).map(|_| r.random::<f64>() * 4.0 - 1.0).collect();
            let m = fit_margin(MarginKind::ALL[kind], &xs, -2.0, 4.0).unwrap();
            let (c1, c2) = (m.cdf(a), m.cdf(a + d));
            prop_assert!(c1 <= c2);
            prop_assert!((0.0..=1.0).contains(&c1) && (0.0..=1.0).contains(&c2));
        }

        #[test]
        fn quantile_round_trip(kind in 0usize..4, seed in 0u64..1000, p in 0.001f64..0.999) {
            let mut r = rng(seed);
            let xs: Vec<f64> = (0..20).map(|_| r.random::<f64>() * 4.0 - 1.0).collect();
            let m = fit_margin(MarginKind::ALL[kind], &xs, -2.0, 4.0).unwrap();
            prop_assert!((m.cdf(m.quantile(p)) - p).abs() < 1e-6);
        }

        #[test]
        fn truncnormal_quantile_in_bounds(mu in -5.0f64..5.0, sigma in 0.01f64..10.0, p in 0.0f64..=1.0) {
            let t = MarginModel::TruncNormal { mu, sigma, lower: -1.0, upper: 2.0 };
            let q = t.quantile(p);
            prop_assert!((-1.0..=2.0).contains(&q));
        }
    }
}
