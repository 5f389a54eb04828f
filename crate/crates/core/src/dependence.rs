//! Rank-based dependence statistics, the Cramér–von Mises independence test
//! and goodness-of-fit selection, copula entropy and correlation repair.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::copula::{fit_student_dof, tau_to_parameter, BivariateCopula, CopulaFamily, CorrelationMatrix};
use crate::error::{EdaError, Result};

/// Largest |tau| handed to moment inversion when selecting pair copulas.
/// Beyond it the Archimedean parameters grow past what the density formulas
/// evaluate reliably.
pub const MAX_FIT_TAU: f64 = 0.999;

/// Eigenvalue floor used by [`make_positive_definite`].
pub const EIGEN_FLOOR: f64 = 1e-8;

/// Default number of Monte-Carlo draws for copula entropy.
pub const MI_DRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KendallTau {
    pub tau: f64,
    /// Set when either input is constant, in which case `tau` is 0.
    pub degenerate: bool,
}

/// Kendall's tau-b. Quadratic in the sample size, which is small for the
/// selected populations this crate works with.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<KendallTau> {
    if x.len() != y.len() {
        return Err(EdaError::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(EdaError::Empty("kendall_tau needs at least 2 observations"));
    }
    let m = x.len();
    let (mut s, mut tx, mut ty) = (0i64, 0i64, 0i64);
    for i in 0..m {
        for j in (i + 1)..m {
            let dx = x[i].total_cmp(&x[j]) as i64;
            let dy = y[i].total_cmp(&y[j]) as i64;
            s += dx * dy;
            tx += (dx == 0) as i64;
            ty += (dy == 0) as i64;
        }
    }
    let n0 = (m * (m - 1) / 2) as i64;
    if tx == n0 || ty == n0 {
        return Ok(KendallTau {
            tau: 0.0,
            degenerate: true,
        });
    }
    let denom = (((n0 - tx) as f64) * ((n0 - ty) as f64)).sqrt();
    Ok(KendallTau {
        tau: (s as f64 / denom).clamp(-1.0, 1.0),
        degenerate: false,
    })
}

/// Ranks starting at 1, ties receiving their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && x[idx[end]] == x[idx[start]] {
            end += 1;
        }
        let r = (start + end + 1) as f64 / 2.0;
        for &k in &idx[start..end] {
            ranks[k] = r;
        }
        start = end;
    }
    ranks
}

/// Column-major sample of pseudo-observations `rank/(m+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoSample {
    columns: Vec<Vec<f64>>,
}

impl PseudoSample {
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let m = columns.first().map_or(0, Vec::len);
        if let Some(bad) = columns.iter().find(|c| c.len() != m) {
            return Err(EdaError::DimensionMismatch {
                expected: m,
                found: bad.len(),
            });
        }
        Ok(PseudoSample { columns })
    }

    pub fn n(&self) -> usize {
        self.columns.len()
    }

    pub fn m(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn into_columns(self) -> Vec<Vec<f64>> {
        self.columns
    }
}

/// Rank transform of each column of `data` (given column by column).
pub fn pseudo_observations(columns: &[Vec<f64>]) -> Result<PseudoSample> {
    let ranked = columns
        .iter()
        .map(|c| {
            let scale = (c.len() + 1) as f64;
            average_ranks(c).into_iter().map(|r| r / scale).collect()
        })
        .collect();
    PseudoSample::from_columns(ranked)
}

/// `(1/m) #{i : u_i <= a, v_i <= b}`.
pub fn empirical_copula_at(u: &[f64], v: &[f64], a: f64, b: f64) -> f64 {
    let count = u.iter().zip(v).filter(|(&ui, &vi)| ui <= a && vi <= b).count();
    count as f64 / u.len() as f64
}

/// Empirical copula evaluated at every sample point, i.e.
/// `C_n(u_i, v_i)` for all `i`, in `O(m log m)`.
pub fn empirical_copula_at_sample(u: &[f64], v: &[f64]) -> Vec<f64> {
    let m = u.len();
    // dense ranks of v so ties share a Fenwick slot
    let mut vs: Vec<f64> = v.to_vec();
    vs.sort_by(f64::total_cmp);
    vs.dedup();
    let vrank: Vec<usize> = v
        .iter()
        .map(|x| vs.partition_point(|y| y.total_cmp(x).is_lt()) + 1)
        .collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| u[a].total_cmp(&u[b]));
    let mut tree = vec![0u32; vs.len() + 1];
    let mut out = vec![0.0; m];
    let mut start = 0;
    while start < m {
        let mut end = start + 1;
        while end < m && u[order[end]] == u[order[start]] {
            end += 1;
        }
        for &i in &order[start..end] {
            let mut k = vrank[i];
            while k < tree.len() {
                tree[k] += 1;
                k += k & k.wrapping_neg();
            }
        }
        for &i in &order[start..end] {
            let (mut k, mut c) = (vrank[i], 0u32);
            while k > 0 {
                c += tree[k];
                k -= k & k.wrapping_neg();
            }
            out[i] = c as f64 / m as f64;
        }
        start = end;
    }
    out
}

fn cvm_independence_statistic(u: &[f64], v: &[f64]) -> f64 {
    empirical_copula_at_sample(u, v)
        .iter()
        .zip(u.iter().zip(v))
        .map(|(c, (ui, vi))| (c - ui * vi).powi(2))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndepTestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub independent: bool,
}

/// Cramér–von Mises test of independence with a permutation p-value
/// `(r + 1)/(B + 1)`, `r` counting replicate statistics at least as large
/// as the observed one. `u` and `v` should be pseudo-observations.
pub fn indep_test_cvm<R: Rng + ?Sized>(
    u: &[f64],
    v: &[f64],
    replicates: usize,
    level: f64,
    rng: &mut R,
) -> Result<IndepTestResult> {
    if u.len() != v.len() {
        return Err(EdaError::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    if u.is_empty() {
        return Err(EdaError::Empty("independence test on an empty sample"));
    }
    let statistic = cvm_independence_statistic(u, v);
    let mut shuffled = v.to_vec();
    let mut exceed = 0usize;
    for _ in 0..replicates {
        shuffled.shuffle(rng);
        if cvm_independence_statistic(u, &shuffled) >= statistic {
            exceed += 1;
        }
    }
    let p_value = (exceed + 1) as f64 / (replicates + 1) as f64;
    Ok(IndepTestResult {
        statistic,
        p_value,
        independent: p_value >= level,
    })
}

/// Moment fit of one family to pseudo-observations with the given tau.
/// `Ok(None)` marks a family that cannot represent the observed sign.
pub fn fit_family(family: CopulaFamily, tau: f64, pairs: &[[f64; 2]]) -> Result<Option<BivariateCopula>> {
    let tau = tau.clamp(-MAX_FIT_TAU, MAX_FIT_TAU);
    match tau_to_parameter(family, tau) {
        Ok(BivariateCopula::Student { rho, .. }) => fit_student_dof(pairs, rho).map(Some),
        Ok(c) => Ok(Some(c)),
        Err(EdaError::UnsupportedTau { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Cramér–von Mises distance between the empirical copula and `c`, both
/// evaluated at the sample points.
pub fn cvm_gof_statistic(c: &BivariateCopula, u: &[f64], v: &[f64], empirical: &[f64]) -> Result<f64> {
    let mut s = 0.0;
    for ((&ui, &vi), &e) in u.iter().zip(v).zip(empirical) {
        s += (e - c.cdf(ui, vi)?).powi(2);
    }
    Ok(s)
}

/// Fits every feasible candidate by moments and returns the one with the
/// smallest CvM distance to the empirical copula (first wins ties). Falls
/// back to the product copula when no candidate is feasible.
pub fn gof_select_copula(u: &[f64], v: &[f64], candidates: &[CopulaFamily]) -> Result<BivariateCopula> {
    let tau = kendall_tau(u, v)?;
    if tau.degenerate {
        return Ok(BivariateCopula::Product);
    }
    let pairs: Vec<[f64; 2]> = u.iter().zip(v).map(|(&a, &b)| [a, b]).collect();
    let empirical = empirical_copula_at_sample(u, v);
    let mut best: Option<(f64, BivariateCopula)> = None;
    for &family in candidates {
        let Some(c) = fit_family(family, tau.tau, &pairs)? else {
            continue;
        };
        let s = cvm_gof_statistic(&c, u, v, &empirical)?;
        if best.as_ref().is_none_or(|(b, _)| s < *b) {
            best = Some((s, c));
        }
    }
    Ok(best.map_or(BivariateCopula::Product, |(_, c)| c))
}

/// Mutual information of the pair coupled by `c`, i.e. the negative copula
/// entropy. Closed form for the normal copula, otherwise the average
/// log-density over `draws` samples from `c`. Monte-Carlo noise can push the
/// raw average below zero; the result is floored at 0.
pub fn copula_mutual_information<R: Rng + ?Sized>(
    c: &BivariateCopula,
    draws: usize,
    rng: &mut R,
) -> Result<f64> {
    match *c {
        BivariateCopula::Product => Ok(0.0),
        BivariateCopula::Normal { rho } => Ok(-0.5 * (-rho * rho).ln_1p()),
        _ => {
            let sample = c.sample(draws, rng);
            Ok((c.loglik(&sample)? / draws as f64).max(0.0))
        }
    }
}

/// Returns `r` unchanged when it admits a Cholesky factorization. Otherwise
/// clips its eigenvalues at [`EIGEN_FLOOR`], rebuilds and rescales to unit
/// diagonal, repeating in the rare case rounding still defeats Cholesky.
pub fn make_positive_definite(r: &CorrelationMatrix) -> CorrelationMatrix {
    if r.is_positive_definite() {
        return r.clone();
    }
    let n = r.dim();
    let mut a = r.matrix().clone();
    for _ in 0..10 {
        let eig = SymmetricEigen::new(a.clone());
        let clipped = eig.eigenvalues.map(|l| l.max(EIGEN_FLOOR));
        let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
        let d: Vec<f64> = (0..n).map(|i| rebuilt[(i, i)].sqrt()).collect();
        a = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                1.0
            } else {
                let (p, q) = if i < j { (i, j) } else { (j, i) };
                (rebuilt[(p, q)] / (d[p] * d[q])).clamp(-1.0, 1.0)
            }
        });
        if a.clone().cholesky().is_some() {
            break;
        }
    }
    CorrelationMatrix::new(a).expect("rescaled matrix is a valid correlation matrix")
}
