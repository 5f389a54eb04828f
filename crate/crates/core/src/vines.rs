//! C-vine and D-vine pair-copula constructions: structure selection, tree by
//! tree fitting with independence pre-tests, information-criterion
//! truncation, simulation and log-likelihood.
//!
//! Index conventions, with variables relabelled `0..n` along `order`:
//!
//! * C-vine tree `j` couples root `j` with every later variable `k`, stored
//!   at `copulas[j][k - j - 1]`. Each copula is fitted on the pairs
//!   `(F(x_k | x_0..x_{j-1}), F(x_j | x_0..x_{j-1}))`.
//! * D-vine tree `j` couples `i` and `i + j + 1`, stored at `copulas[j][i]`
//!   and fitted on `(F(x_i | x_{i+1}..x_{i+j}), F(x_{i+j+1} | x_{i+1}..x_{i+j}))`.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::copula::{BivariateCopula, CopulaFamily};
use crate::dependence::{gof_select_copula, indep_test_cvm, kendall_tau, PseudoSample};
use crate::error::{EdaError, Result};

/// Permutation replicates used by the per-edge independence test.
pub const INDEP_TEST_REPLICATES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VineType {
    CVine,
    DVine,
}

impl VineType {
    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "cvine" | "c-vine" | "c" => Some(VineType::CVine),
            "dvine" | "d-vine" | "d" => Some(VineType::DVine),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            VineType::CVine => "C-vine",
            VineType::DVine => "D-vine",
        }
    }
}

impl fmt::Display for VineType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TruncCriterion {
    Aic,
    Bic,
    None,
}

impl TruncCriterion {
    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "aic" => Some(TruncCriterion::Aic),
            "bic" => Some(TruncCriterion::Bic),
            "none" => Some(TruncCriterion::None),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TruncCriterion::Aic => "aic",
            TruncCriterion::Bic => "bic",
            TruncCriterion::None => "none",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RVineModel {
    pub vine_type: VineType,
    /// C-vine: roots in tree order. D-vine: the path.
    pub order: Vec<usize>,
    /// Tree `j` (0-based) holds `n - 1 - j` copulas.
    pub copulas: Vec<Vec<BivariateCopula>>,
    /// Number of leading trees that may hold non-product copulas.
    pub trunc_level: usize,
}

impl RVineModel {
    /// Vine in which every pair copula is the product copula.
    pub fn independent(vine_type: VineType, n: usize) -> Self {
        RVineModel {
            vine_type,
            order: (0..n).collect(),
            copulas: (0..n.saturating_sub(1))
                .map(|j| vec![BivariateCopula::Product; n - 1 - j])
                .collect(),
            trunc_level: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.order.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        let mut seen = vec![false; n];
        for &v in &self.order {
            if v >= n || std::mem::replace(&mut seen[v], true) {
                return Err(EdaError::Config(format!("vine order {:?} is not a permutation", self.order)));
            }
        }
        if self.copulas.len() != n.saturating_sub(1) {
            return Err(EdaError::DimensionMismatch {
                expected: n.saturating_sub(1),
                found: self.copulas.len(),
            });
        }
        for (j, tree) in self.copulas.iter().enumerate() {
            if tree.len() != n - 1 - j {
                return Err(EdaError::DimensionMismatch {
                    expected: n - 1 - j,
                    found: tree.len(),
                });
            }
            for c in tree {
                c.validate()?;
                if j >= self.trunc_level && *c != BivariateCopula::Product {
                    return Err(EdaError::Config(format!(
                        "tree {} lies past truncation level {} but holds {c}",
                        j + 1,
                        self.trunc_level
                    )));
                }
            }
        }
        Ok(())
    }

    /// Counts of each family over all pair copulas.
    pub fn family_counts(&self) -> Vec<(CopulaFamily, usize)> {
        CopulaFamily::ALL
            .iter()
            .map(|&f| {
                let count = self.copulas.iter().flatten().filter(|c| c.family() == f).count();
                (f, count)
            })
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.copulas.iter().flatten().map(|c| c.num_params()).sum()
    }
}

impl fmt::Display for RVineModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} order:", self.vine_type)?;
        for v in &self.order {
            write!(f, " {}", v + 1)?;
        }
        writeln!(f)?;
        writeln!(f, "truncation level: {}", self.trunc_level)?;
        for (j, tree) in self.copulas.iter().enumerate() {
            write!(f, "tree {}:", j + 1)?;
            for c in tree {
                write!(f, " {c}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

fn abs_tau(x: &[f64], y: &[f64]) -> Result<f64> {
    Ok(kendall_tau(x, y)?.tau.abs())
}

fn check_sample(u: &PseudoSample) -> Result<()> {
    if u.n() < 2 {
        return Err(EdaError::Config(format!("a vine needs at least 2 variables, got {}", u.n())));
    }
    if u.m() < 2 {
        return Err(EdaError::Empty("a vine needs at least 2 observations"));
    }
    Ok(())
}

/// Index among `candidates` maximizing the summed |tau| to the others.
fn greedy_root(columns: &[Vec<f64>], candidates: &[usize]) -> Result<usize> {
    let k = candidates.len();
    let mut sums = vec![0.0; k];
    for a in 0..k {
        for b in (a + 1)..k {
            let t = abs_tau(&columns[candidates[a]], &columns[candidates[b]])?;
            sums[a] += t;
            sums[b] += t;
        }
    }
    let mut best = 0;
    for i in 1..k {
        if sums[i] > sums[best] {
            best = i;
        }
    }
    Ok(best)
}

/// C-vine order on the untransformed data: roots are taken greedily, each
/// maximizing the summed |tau| with the variables still remaining.
/// [`fit_vine`] repeats this choice on the conditioned data of each tree.
pub fn select_cvine_order(u: &PseudoSample) -> Result<Vec<usize>> {
    check_sample(u)?;
    let mut remaining: Vec<usize> = (0..u.n()).collect();
    let mut order = Vec::with_capacity(u.n());
    while remaining.len() > 1 {
        let root = greedy_root(u.columns(), &remaining)?;
        order.push(remaining.remove(root));
    }
    order.extend(remaining);
    Ok(order)
}

/// D-vine order: cheapest-insertion path on edge costs `1 - |tau|`,
/// started from the pair with the largest |tau|.
pub fn select_dvine_order(u: &PseudoSample) -> Result<Vec<usize>> {
    check_sample(u)?;
    let n = u.n();
    let mut cost = vec![vec![0.0; n]; n];
    let mut start = (0, 1);
    let mut best = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            let c = 1.0 - abs_tau(u.column(i), u.column(j))?;
            cost[i][j] = c;
            cost[j][i] = c;
            if c < best {
                best = c;
                start = (i, j);
            }
        }
    }
    let mut path = vec![start.0, start.1];
    let mut used = vec![false; n];
    used[start.0] = true;
    used[start.1] = true;
    while path.len() < n {
        // (increase, node, position)
        let mut pick: Option<(f64, usize, usize)> = None;
        for k in (0..n).filter(|&k| !used[k]) {
            let mut consider = |inc: f64, pos: usize| {
                if pick.is_none_or(|(b, _, _)| inc < b) {
                    pick = Some((inc, k, pos));
                }
            };
            consider(cost[k][path[0]], 0);
            for p in 1..path.len() {
                consider(cost[path[p - 1]][k] + cost[k][path[p]] - cost[path[p - 1]][path[p]], p);
            }
            consider(cost[path[path.len() - 1]][k], path.len());
        }
        let (_, k, pos) = pick.expect("an unused node remains");
        path.insert(pos, k);
        used[k] = true;
    }
    Ok(path)
}

fn pairs_of(a: &[f64], b: &[f64]) -> Vec<[f64; 2]> {
    a.iter().zip(b).map(|(&x, &y)| [x, y]).collect()
}

/// Product copula when the pair passes the independence test, otherwise
/// the goodness-of-fit winner among `candidates`.
fn fit_edge<R: Rng + ?Sized>(
    a: &[f64],
    b: &[f64],
    candidates: &[CopulaFamily],
    sig_level: f64,
    rng: &mut R,
) -> Result<BivariateCopula> {
    if indep_test_cvm(a, b, INDEP_TEST_REPLICATES, sig_level, rng)?.independent {
        return Ok(BivariateCopula::Product);
    }
    gof_select_copula(a, b, candidates)
}

fn h_column(c: &BivariateCopula, a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    a.iter().zip(b).map(|(&x, &y)| c.h(x, y)).collect()
}

/// Tracks the cumulative information criterion across trees.
struct Truncation {
    criterion: TruncCriterion,
    penalty: f64,
    loglik: f64,
    params: usize,
    previous: f64,
}

impl Truncation {
    fn new(criterion: TruncCriterion, m: usize) -> Self {
        let penalty = match criterion {
            TruncCriterion::Bic => (m as f64).ln(),
            _ => 2.0,
        };
        Truncation {
            criterion,
            penalty,
            loglik: 0.0,
            params: 0,
            previous: 0.0,
        }
    }

    /// Adds a fitted tree; returns false when the tree must be discarded.
    fn accept(&mut self, tree_loglik: f64, tree_params: usize) -> bool {
        if self.criterion == TruncCriterion::None {
            return true;
        }
        let ll = self.loglik + tree_loglik;
        let k = self.params + tree_params;
        let ic = -2.0 * ll + self.penalty * k as f64;
        if ic < self.previous {
            self.loglik = ll;
            self.params = k;
            self.previous = ic;
            true
        } else {
            false
        }
    }
}

fn tree_stats(copulas: &[BivariateCopula], data: &[Vec<[f64; 2]>]) -> Result<(f64, usize)> {
    let mut ll = 0.0;
    let mut k = 0;
    for (c, d) in copulas.iter().zip(data) {
        ll += c.loglik(d)?;
        k += c.num_params();
    }
    Ok((ll, k))
}

/// Fits a C- or D-vine to pseudo-observations.
pub fn fit_vine<R: Rng + ?Sized>(
    u: &PseudoSample,
    vine_type: VineType,
    candidates: &[CopulaFamily],
    sig_level: f64,
    criterion: TruncCriterion,
    rng: &mut R,
) -> Result<RVineModel> {
    check_sample(u)?;
    match vine_type {
        VineType::CVine => fit_cvine(u, candidates, sig_level, criterion, rng),
        VineType::DVine => fit_dvine(u, candidates, sig_level, criterion, rng),
    }
}

fn fit_cvine<R: Rng + ?Sized>(
    u: &PseudoSample,
    candidates: &[CopulaFamily],
    sig_level: f64,
    criterion: TruncCriterion,
    rng: &mut R,
) -> Result<RVineModel> {
    let n = u.n();
    // current conditional data, indexed by original variable
    let mut data: Vec<Vec<f64>> = u.columns().to_vec();
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut order = Vec::with_capacity(n);
    // fitted trees keyed by original variable of the non-root member
    let mut trees: Vec<Vec<(usize, BivariateCopula)>> = Vec::new();
    let mut trunc = Truncation::new(criterion, u.m());
    while remaining.len() > 1 {
        let root = remaining.remove(greedy_root(&data, &remaining)?);
        order.push(root);
        let mut tree = Vec::with_capacity(remaining.len());
        let mut tree_data = Vec::with_capacity(remaining.len());
        for &k in &remaining {
            let c = fit_edge(&data[k], &data[root], candidates, sig_level, rng)?;
            tree_data.push(pairs_of(&data[k], &data[root]));
            tree.push((k, c));
        }
        let copulas: Vec<BivariateCopula> = tree.iter().map(|t| t.1).collect();
        let (ll, k) = tree_stats(&copulas, &tree_data)?;
        if !trunc.accept(ll, k) {
            break;
        }
        for (k, c) in &tree {
            data[*k] = h_column(c, &data[*k], &data[root])?;
        }
        trees.push(tree);
    }
    order.extend(remaining);
    let trunc_level = trees.len();
    let mut position = vec![0; n];
    for (p, &v) in order.iter().enumerate() {
        position[v] = p;
    }
    let mut copulas: Vec<Vec<BivariateCopula>> = (0..n - 1)
        .map(|j| vec![BivariateCopula::Product; n - 1 - j])
        .collect();
    for (j, tree) in trees.into_iter().enumerate() {
        for (k, c) in tree {
            copulas[j][position[k] - j - 1] = c;
        }
    }
    Ok(RVineModel {
        vine_type: VineType::CVine,
        order,
        copulas,
        trunc_level,
    })
}

fn fit_dvine<R: Rng + ?Sized>(
    u: &PseudoSample,
    candidates: &[CopulaFamily],
    sig_level: f64,
    criterion: TruncCriterion,
    rng: &mut R,
) -> Result<RVineModel> {
    let n = u.n();
    let order = select_dvine_order(u)?;
    // forward[i] = F(x_i | x_{i+1}..x_{i+j}), backward[k] = F(x_k | x_{k-j}..x_{k-1})
    let mut forward: Vec<Vec<f64>> = order.iter().map(|&v| u.column(v).to_vec()).collect();
    let mut backward = forward.clone();
    let mut copulas: Vec<Vec<BivariateCopula>> = (0..n - 1)
        .map(|j| vec![BivariateCopula::Product; n - 1 - j])
        .collect();
    let mut trunc = Truncation::new(criterion, u.m());
    let mut trunc_level = 0;
    for j in 0..n - 1 {
        let edges = n - 1 - j;
        let mut tree = Vec::with_capacity(edges);
        let mut tree_data = Vec::with_capacity(edges);
        for i in 0..edges {
            let (a, b) = (&forward[i], &backward[i + j + 1]);
            tree.push(fit_edge(a, b, candidates, sig_level, rng)?);
            tree_data.push(pairs_of(a, b));
        }
        let (ll, k) = tree_stats(&tree, &tree_data)?;
        if !trunc.accept(ll, k) {
            break;
        }
        let mut next_forward = forward.clone();
        let mut next_backward = backward.clone();
        for (i, c) in tree.iter().enumerate() {
            let (a, b) = (&forward[i], &backward[i + j + 1]);
            next_forward[i] = h_column(c, a, b)?;
            next_backward[i + j + 1] = h_column(c, b, a)?;
        }
        forward = next_forward;
        backward = next_backward;
        copulas[j] = tree;
        trunc_level = j + 1;
    }
    Ok(RVineModel {
        vine_type: VineType::DVine,
        order,
        copulas,
        trunc_level,
    })
}

/// Simulates `m` rows (in original variable order) by the conditional
/// distribution method.
pub fn vine_sample<R: Rng + ?Sized>(model: &RVineModel, m: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    model.validate()?;
    let n = model.dim();
    let mut rows = Vec::with_capacity(m);
    let mut w = vec![0.0; n];
    // D-vine work arrays, [tree][position]
    let mut fw = vec![vec![0.0; n]; n];
    let mut bw = vec![vec![0.0; n]; n];
    for _ in 0..m {
        for wi in w.iter_mut() {
            *wi = rng.random();
        }
        let mut x = vec![0.0; n];
        match model.vine_type {
            VineType::CVine => {
                for i in 0..n {
                    let mut t = w[i];
                    for k in (0..i.min(model.trunc_level)).rev() {
                        t = model.copulas[k][i - k - 1].hinv(t, w[k])?;
                    }
                    x[i] = t;
                }
            }
            VineType::DVine => {
                for k in 0..n {
                    let depth = k.min(model.trunc_level);
                    let mut t = w[k];
                    for j in (0..depth).rev() {
                        t = model.copulas[j][k - j - 1].hinv(t, fw[j][k - j - 1])?;
                        bw[j][k] = t;
                    }
                    bw[0][k] = t;
                    fw[0][k] = t;
                    x[k] = t;
                    for j in 0..depth {
                        let i = k - j - 1;
                        let c = &model.copulas[j][i];
                        fw[j + 1][i] = c.h(fw[j][i], bw[j][k])?;
                    }
                }
            }
        }
        let mut row = vec![0.0; n];
        for (p, &v) in model.order.iter().enumerate() {
            row[v] = x[p];
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Log-likelihood of the vine on pseudo-observations.
pub fn vine_loglik(model: &RVineModel, u: &PseudoSample) -> Result<f64> {
    model.validate()?;
    let n = model.dim();
    if u.n() != n {
        return Err(EdaError::DimensionMismatch {
            expected: n,
            found: u.n(),
        });
    }
    let mut total = 0.0;
    match model.vine_type {
        VineType::CVine => {
            let mut data: Vec<Vec<f64>> = model.order.iter().map(|&v| u.column(v).to_vec()).collect();
            for j in 0..model.trunc_level {
                for k in (j + 1)..n {
                    let c = &model.copulas[j][k - j - 1];
                    total += c.loglik(&pairs_of(&data[k], &data[j]))?;
                }
                for k in (j + 1)..n {
                    let c = &model.copulas[j][k - j - 1];
                    data[k] = h_column(c, &data[k], &data[j])?;
                }
            }
        }
        VineType::DVine => {
            let mut forward: Vec<Vec<f64>> = model.order.iter().map(|&v| u.column(v).to_vec()).collect();
            let mut backward = forward.clone();
            for j in 0..model.trunc_level {
                let mut next_forward = forward.clone();
                let mut next_backward = backward.clone();
                for i in 0..(n - 1 - j) {
                    let c = &model.copulas[j][i];
                    let (a, b) = (&forward[i], &backward[i + j + 1]);
                    total += c.loglik(&pairs_of(a, b))?;
                    next_forward[i] = h_column(c, a, b)?;
                    next_backward[i + j + 1] = h_column(c, b, a)?;
                }
                forward = next_forward;
                backward = next_backward;
            }
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dependence::pseudo_observations;
    use crate::testutil::{brute_tau, rng};
    use proptest::prelude::*;
    use rand::Rng;

    fn to_columns(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = rows[0].len();
        (0..n).map(|j| rows.iter().map(|r| r[j]).collect()).collect()
    }

    fn pseudo(rows: &[Vec<f64>]) -> PseudoSample {
        pseudo_observations(&to_columns(rows)).unwrap()
    }

    fn normal(tau: f64) -> BivariateCopula {
        BivariateCopula::normal((std::f64::consts::FRAC_PI_2 * tau).sin()).unwrap()
    }

    fn columns_with_taus(m: usize, seed: u64, model: &RVineModel) -> PseudoSample {
        pseudo(&vine_sample(model, m, &mut rng(seed)).unwrap())
    }

    #[test]
    fn cvine_root_example() {
        // variable 0 dominates: tau(0,1) = 0.8, tau(0,2) = 0.7, tau(1,2) ~ 0.56
        let model = RVineModel {
            vine_type: VineType::CVine,
            order: vec![0, 1, 2],
            copulas: vec![vec![normal(0.8), normal(0.7)], vec![BivariateCopula::Product]],
            trunc_level: 1,
        };
        let u = columns_with_taus(1000, 1, &model);
        let t = |a: usize, b: usize| brute_tau(u.column(a), u.column(b)).abs();
        let sums = [t(0, 1) + t(0, 2), t(0, 1) + t(1, 2), t(0, 2) + t(1, 2)];
        let expected = (0..3).max_by(|&a, &b| sums[a].total_cmp(&sums[b])).unwrap();
        assert_eq!(expected, 0);
        assert_eq!(select_cvine_order(&u).unwrap()[0], 0);
    }

    #[test]
    fn structure_trivial_cases() {
        let mut r = rng(2);
        let rows: Vec<Vec<f64>> = (0..50).map(|_| vec![r.random(), r.random()]).collect();
        let u = pseudo(&rows);
        assert_eq!(select_cvine_order(&u).unwrap(), vec![0, 1]);
        assert_eq!(select_dvine_order(&u).unwrap(), vec![0, 1]);
        // identical columns give equal taus everywhere: lowest index wins
        let same: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[0]; 3]).collect();
        assert_eq!(select_cvine_order(&pseudo(&same)).unwrap()[0], 0);
    }

    fn brute_best_path(w: &[Vec<f64>]) -> f64 {
        let n = w.len();
        let mut best = f64::NEG_INFINITY;
        let mut perm: Vec<usize> = (0..n).collect();
        // Heap's algorithm over all permutations
        fn heap(k: usize, perm: &mut Vec<usize>, w: &[Vec<f64>], best: &mut f64) {
            if k == 1 {
                let s: f64 = perm.windows(2).map(|p| w[p[0]][p[1]]).sum();
                *best = best.max(s);
                return;
            }
            for i in 0..k {
                heap(k - 1, perm, w, best);
                if k % 2 == 0 {
                    perm.swap(i, k - 1);
                } else {
                    perm.swap(0, k - 1);
                }
            }
        }
        heap(n, &mut perm, w, &mut best);
        best
    }

    #[test]
    fn dvine_order_examples() {
        // three variables with tau(0,1) = 0.8, tau(0,2) = 0.7
        let model = RVineModel {
            vine_type: VineType::CVine,
            order: vec![0, 1, 2],
            copulas: vec![vec![normal(0.8), normal(0.7)], vec![BivariateCopula::Product]],
            trunc_level: 1,
        };
        let u = columns_with_taus(1000, 3, &model);
        let order = select_dvine_order(&u).unwrap();
        assert!(order == vec![2, 0, 1] || order == vec![1, 0, 2], "{order:?}");

        // a 4-variable chain 0-1-2-3 built as a D-vine with only tree 1
        let chain = RVineModel {
            vine_type: VineType::DVine,
            order: vec![0, 1, 2, 3],
            copulas: vec![
                vec![normal(0.9), normal(0.9), normal(0.9)],
                vec![BivariateCopula::Product; 2],
                vec![BivariateCopula::Product],
            ],
            trunc_level: 1,
        };
        let u = columns_with_taus(1000, 4, &chain);
        let order = select_dvine_order(&u).unwrap();
        let w: Vec<Vec<f64>> = (0..4)
            .map(|a| (0..4).map(|b| brute_tau(u.column(a), u.column(b)).abs()).collect())
            .collect();
        let got: f64 = order.windows(2).map(|p| w[p[0]][p[1]]).sum();
        assert!((got - brute_best_path(&w)).abs() < 1e-12);
        assert!(order == vec![0, 1, 2, 3] || order == vec![3, 2, 1, 0], "{order:?}");
    }

    #[test]
    fn independent_data_mostly_product() {
        let mut product_edges = 0;
        for s in 0..20 {
            let mut r = rng(500 + s);
            let rows: Vec<Vec<f64>> = (0..300).map(|_| (0..4).map(|_| r.random()).collect()).collect();
            let model = fit_vine(
                &pseudo(&rows),
                VineType::CVine,
                &[CopulaFamily::Normal],
                0.01,
                TruncCriterion::None,
                &mut r,
            )
            .unwrap();
            product_edges += model.copulas[0].iter().filter(|c| **c == BivariateCopula::Product).count();
        }
        assert!(product_edges as f64 >= 0.9 * 60.0, "{product_edges}/60");
    }

    #[test]
    fn two_variable_normal_fit() {
        for vt in [VineType::CVine, VineType::DVine] {
            let data = normal(0.5).sample(1000, &mut rng(9));
            let rows: Vec<Vec<f64>> = data.iter().map(|p| p.to_vec()).collect();
            let model = fit_vine(&pseudo(&rows), vt, &[CopulaFamily::Normal], 0.01, TruncCriterion::Aic, &mut rng(10))
                .unwrap();
            let BivariateCopula::Normal { rho } = model.copulas[0][0] else {
                panic!("{model}")
            };
            assert!((rho - 0.707).abs() <= 0.05, "{rho}");
            assert_eq!(model.trunc_level, 1);
        }
    }

    #[test]
    fn aic_truncates_single_root_cvine() {
        let model = RVineModel {
            vine_type: VineType::CVine,
            order: vec![0, 1, 2, 3, 4],
            copulas: vec![
                vec![normal(0.7), normal(0.6), normal(0.5), normal(0.6)],
                vec![BivariateCopula::Product; 3],
                vec![BivariateCopula::Product; 2],
                vec![BivariateCopula::Product],
            ],
            trunc_level: 1,
        };
        let hits = (0..20)
            .filter(|&s| {
                let u = columns_with_taus(300, 600 + s, &model);
                let fams = [CopulaFamily::Normal, CopulaFamily::Clayton, CopulaFamily::Frank, CopulaFamily::Gumbel];
                let fit = fit_vine(&u, VineType::CVine, &fams, 0.01, TruncCriterion::Aic, &mut rng(s)).unwrap();
                fit.trunc_level <= 2
            })
            .count();
        assert!(hits >= 16, "{hits}/20");
    }

    #[test]
    fn product_vine_samples_independent() {
        for vt in [VineType::CVine, VineType::DVine] {
            let model = RVineModel::independent(vt, 4);
            let rows = vine_sample(&model, 2000, &mut rng(1)).unwrap();
            let cols = to_columns(&rows);
            for a in 0..4 {
                for b in (a + 1)..4 {
                    assert!(brute_tau(&cols[a], &cols[b]).abs() <= 0.05);
                }
            }
            assert_eq!(vine_loglik(&model, &pseudo(&rows)).unwrap(), 0.0);
        }
    }

    #[test]
    fn two_variable_sample_tau() {
        for vt in [VineType::CVine, VineType::DVine] {
            let model = RVineModel {
                vine_type: vt,
                order: vec![1, 0],
                copulas: vec![vec![normal(0.5)]],
                trunc_level: 1,
            };
            let cols = to_columns(&vine_sample(&model, 2000, &mut rng(2)).unwrap());
            assert!((brute_tau(&cols[0], &cols[1]) - 0.5).abs() <= 0.05);
        }
    }

    #[test]
    fn three_variable_round_trip() {
        // D-vine path 2-0-1 with tree-1 taus 0.6, 0.5 and a mild tree-2 edge;
        // C-vine with root 0 and the same tree-1 taus
        let cases = [
            RVineModel {
                vine_type: VineType::DVine,
                order: vec![2, 0, 1],
                copulas: vec![vec![normal(0.6), normal(0.5)], vec![normal(0.2)]],
                trunc_level: 2,
            },
            RVineModel {
                vine_type: VineType::CVine,
                order: vec![0, 1, 2],
                copulas: vec![vec![normal(0.6), normal(0.5)], vec![normal(0.2)]],
                trunc_level: 2,
            },
        ];
        for model in cases {
            let u = columns_with_taus(1000, 21, &model);
            let fit = fit_vine(&u, model.vine_type, &[CopulaFamily::Normal], 0.01, TruncCriterion::None, &mut rng(22))
                .unwrap();
            // compare tree-1 taus pair by pair, keyed by the variables coupled
            let edge_taus = |m: &RVineModel| -> Vec<((usize, usize), f64)> {
                let n = m.dim();
                (0..n - 1)
                    .map(|i| {
                        let (a, b) = match m.vine_type {
                            VineType::CVine => (m.order[0], m.order[i + 1]),
                            VineType::DVine => (m.order[i], m.order[i + 1]),
                        };
                        ((a.min(b), a.max(b)), m.copulas[0][i].tau())
                    })
                    .collect()
            };
            let truth = edge_taus(&model);
            let got = edge_taus(&fit);
            for (edge, t) in truth {
                let found = got.iter().find(|g| g.0 == edge).unwrap_or_else(|| panic!("{fit}"));
                assert!((found.1 - t).abs() <= 0.1, "{edge:?}: {} vs {t}", found.1);
            }
        }
    }

    #[test]
    fn loglik_positive_and_nested() {
        let data = normal(0.5).sample(500, &mut rng(30));
        let rows: Vec<Vec<f64>> = data.iter().map(|p| p.to_vec()).collect();
        let model = RVineModel {
            vine_type: VineType::DVine,
            order: vec![0, 1],
            copulas: vec![vec![normal(0.5)]],
            trunc_level: 1,
        };
        assert!(vine_loglik(&model, &pseudo(&rows)).unwrap() > 0.0);

        let truth = RVineModel {
            vine_type: VineType::CVine,
            order: vec![0, 1, 2],
            copulas: vec![vec![normal(0.6), normal(0.5)], vec![normal(0.3)]],
            trunc_level: 2,
        };
        let u = columns_with_taus(800, 31, &truth);
        let full = fit_vine(&u, VineType::CVine, &[CopulaFamily::Normal], 0.01, TruncCriterion::None, &mut rng(1))
            .unwrap();
        let mut one_tree = full.clone();
        one_tree.copulas[1] = vec![BivariateCopula::Product];
        one_tree.trunc_level = 1;
        assert!(vine_loglik(&full, &u).unwrap() >= vine_loglik(&one_tree, &u).unwrap());
    }

    #[test]
    fn validation_and_display() {
        let mut m = RVineModel::independent(VineType::DVine, 3);
        m.validate().unwrap();
        assert!(m.to_string().contains("D-vine order: 1 2 3"));
        m.copulas[1][0] = normal(0.3);
        assert!(m.validate().is_err());
        m.trunc_level = 2;
        m.validate().unwrap();
        m.order = vec![0, 0, 1];
        assert!(m.validate().is_err());
        assert_eq!(VineType::parse("CVine"), Some(VineType::CVine));
        assert_eq!(TruncCriterion::parse("AIC"), Some(TruncCriterion::Aic));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn fitted_vines_are_well_formed(seed in 0u64..1000, n in 2usize..6, cvine in any::<bool>(), crit in 0usize..3) {
            let vt = if cvine { VineType::CVine } else { VineType::DVine };
            let criterion = [TruncCriterion::Aic, TruncCriterion::Bic, TruncCriterion::None][crit];
            let mut r = rng(seed);
            // mix of shared and private noise gives varied dependence
            let rows: Vec<Vec<f64>> = (0..60)
                .map(|_| {
                    let z: f64 = r.random();
                    (0..n).map(|_| 0.6 * z + 0.4 * r.random::<f64>()).collect()
                })
                .collect();
            let u = pseudo(&rows);
            let fams = [CopulaFamily::Normal, CopulaFamily::Clayton, CopulaFamily::Frank, CopulaFamily::Gumbel];
            let model = fit_vine(&u, vt, &fams, 0.01, criterion, &mut rng(seed + 1)).unwrap();
            prop_assert!(model.validate().is_ok());
            prop_assert!(model.trunc_level <= n - 1);
            let again = fit_vine(&u, vt, &fams, 0.01, criterion, &mut rng(seed + 1)).unwrap();
            prop_assert_eq!(&model, &again);
            let s1 = vine_sample(&model, 20, &mut rng(seed)).unwrap();
            let s2 = vine_sample(&model, 20, &mut rng(seed)).unwrap();
            prop_assert_eq!(&s1, &s2);
            prop_assert!(s1.iter().flatten().all(|x| *x > 0.0 && *x < 1.0));
            let ll = vine_loglik(&model, &u).unwrap();
            prop_assert!(ll.is_finite());
        }
    }
}
