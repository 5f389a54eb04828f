//! Learning and sampling steps of UMDA, GCEDA, the vine EDAs and Copula
//! MIMIC. Every model pairs fitted margins with a dependence structure on
//! the uniform scale.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::copula::{clamp_unit, mvnormal_copula_sample, tau_to_parameter, BivariateCopula, CopulaFamily, CorrelationMatrix};
use crate::dependence::{copula_mutual_information, fit_family, kendall_tau, make_positive_definite, pseudo_observations, MAX_FIT_TAU};
use crate::eda::{Algorithm, EdaSpec, Population};
use crate::error::{EdaError, Result};
use crate::margins::{fit_margin, MarginKind, MarginModel};
use crate::numeric::golden_max;
use crate::vines::{fit_vine, vine_sample, RVineModel};

/// Taus are kept this far from ±1 before the normal-copula inversion.
pub const RHO_TAU_CLIP: f64 = 1.0 - 1e-8;
/// Half-width of the tau window searched by the ML refinement.
pub const ML_TAU_WINDOW: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Dependence {
    Product,
    Normal { correlation: CorrelationMatrix },
    Vine { vine: RVineModel },
    /// `copulas[k]` couples `perm[k]` with `perm[k + 1]`.
    Chain { perm: Vec<usize>, copulas: Vec<BivariateCopula> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchModel {
    pub margins: Vec<MarginModel>,
    pub dependence: Dependence,
}

impl SearchModel {
    pub fn dim(&self) -> usize {
        self.margins.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        match &self.dependence {
            Dependence::Product => Ok(()),
            Dependence::Normal { correlation } if correlation.dim() != n => Err(EdaError::DimensionMismatch {
                expected: n,
                found: correlation.dim(),
            }),
            Dependence::Normal { .. } => Ok(()),
            Dependence::Vine { vine } if vine.dim() != n => Err(EdaError::DimensionMismatch {
                expected: n,
                found: vine.dim(),
            }),
            Dependence::Vine { vine } => vine.validate(),
            Dependence::Chain { perm, copulas } => {
                let mut seen = vec![false; n];
                if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
                    return Err(EdaError::Config(format!("chain order {perm:?} is not a permutation")));
                }
                if copulas.len() != n.saturating_sub(1) {
                    return Err(EdaError::DimensionMismatch {
                        expected: n.saturating_sub(1),
                        found: copulas.len(),
                    });
                }
                copulas.iter().try_for_each(BivariateCopula::validate)
            }
        }
    }

    /// Number of pair copulas of each family in a vine or chain model.
    pub fn family_counts(&self) -> Vec<(CopulaFamily, usize)> {
        let pairs: Vec<CopulaFamily> = match &self.dependence {
            Dependence::Vine { vine } => vine.copulas.iter().flatten().map(|c| c.family()).collect(),
            Dependence::Chain { copulas, .. } => copulas.iter().map(|c| c.family()).collect(),
            _ => Vec::new(),
        };
        CopulaFamily::ALL
            .iter()
            .map(|&f| (f, pairs.iter().filter(|&&p| p == f).count()))
            .collect()
    }
}

fn check_selected(selected: &Population, lower: &[f64], upper: &[f64]) -> Result<()> {
    if selected.len() < 2 {
        return Err(EdaError::Config(format!(
            "learning needs at least 2 selected solutions, got {}",
            selected.len()
        )));
    }
    let n = selected.dim();
    for len in [lower.len(), upper.len()] {
        if len != n {
            return Err(EdaError::DimensionMismatch { expected: n, found: len });
        }
    }
    Ok(())
}

fn fit_margins(spec: &EdaSpec, columns: &[Vec<f64>], lower: &[f64], upper: &[f64]) -> Result<Vec<MarginModel>> {
    columns
        .iter()
        .enumerate()
        .map(|(j, col)| fit_margin(spec.margin, col, lower[j], upper[j]))
        .collect()
}

fn columns_of(pop: &Population) -> Vec<Vec<f64>> {
    (0..pop.dim()).map(|j| pop.column(j)).collect()
}

/// Dispatches to the learning step of `spec.algorithm`.
pub fn learn<R: Rng + ?Sized>(
    spec: &EdaSpec,
    selected: &Population,
    lower: &[f64],
    upper: &[f64],
    rng: &mut R,
) -> Result<SearchModel> {
    match spec.algorithm {
        Algorithm::Umda | Algorithm::Gceda => ceda_learn(spec, selected, lower, upper),
        Algorithm::Cveda | Algorithm::Dveda => veda_learn(spec, selected, lower, upper, rng),
        Algorithm::CopulaMimic => cmimic_learn(spec, selected, lower, upper, rng),
    }
}

/// Draws `pop_size` solutions from any model.
pub fn sample<R: Rng + ?Sized>(model: &SearchModel, pop_size: usize, rng: &mut R) -> Result<Population> {
    model.validate()?;
    let n = model.dim();
    let uniform: Vec<Vec<f64>> = match &model.dependence {
        Dependence::Product => (0..pop_size).map(|_| (0..n).map(|_| rng.random()).collect()).collect(),
        Dependence::Normal { correlation } => mvnormal_copula_sample(correlation, pop_size, rng)?,
        Dependence::Vine { vine } => vine_sample(vine, pop_size, rng)?,
        Dependence::Chain { perm, copulas } => chain_sample(perm, copulas, pop_size, rng)?,
    };
    Ok(Population::new(
        uniform
            .into_iter()
            .map(|u| u.iter().zip(&model.margins).map(|(&p, m)| m.quantile(clamp_unit(p))).collect())
            .collect(),
    ))
}

/// UMDA (product copula) and GCEDA (normal copula) learning. GCEDA with
/// normal margins is EMNA and takes the sample correlation; otherwise the
/// correlations come from Kendall's tau.
pub fn ceda_learn(spec: &EdaSpec, selected: &Population, lower: &[f64], upper: &[f64]) -> Result<SearchModel> {
    check_selected(selected, lower, upper)?;
    let columns = columns_of(selected);
    let margins = fit_margins(spec, &columns, lower, upper)?;
    let dependence = match spec.algorithm {
        Algorithm::Gceda if spec.margin == MarginKind::Normal => Dependence::Normal {
            correlation: pearson_correlation(&columns)?,
        },
        Algorithm::Gceda => Dependence::Normal {
            correlation: normal_correlation(&columns)?,
        },
        _ => Dependence::Product,
    };
    Ok(SearchModel { margins, dependence })
}

/// Correlation matrix from pairwise Kendall taus via `rho = sin(pi tau / 2)`,
/// repaired to be positive definite.
pub fn normal_correlation(columns: &[Vec<f64>]) -> Result<CorrelationMatrix> {
    let n = columns.len();
    let mut rows = vec![vec![0.0; n]; n];
    for i in 0..n {
        rows[i][i] = 1.0;
        for j in 0..i {
            let tau = kendall_tau(&columns[i], &columns[j])?.tau.clamp(-RHO_TAU_CLIP, RHO_TAU_CLIP);
            let rho = (std::f64::consts::FRAC_PI_2 * tau).sin();
            rows[i][j] = rho;
            rows[j][i] = rho;
        }
    }
    Ok(make_positive_definite(&CorrelationMatrix::from_rows(&rows)?))
}

/// Sample correlation matrix, used when every margin is normal so that
/// GCEDA reduces to EMNA. Constant columns are taken as uncorrelated.
pub fn pearson_correlation(columns: &[Vec<f64>]) -> Result<CorrelationMatrix> {
    let n = columns.len();
    let centered: Vec<Vec<f64>> = columns
        .iter()
        .map(|c| {
            let mean = c.iter().sum::<f64>() / c.len() as f64;
            c.iter().map(|x| x - mean).collect()
        })
        .collect();
    let norms: Vec<f64> = centered.iter().map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    let mut rows = vec![vec![0.0; n]; n];
    for i in 0..n {
        rows[i][i] = 1.0;
        for j in 0..i {
            let denom = norms[i] * norms[j];
            let rho = if denom > 0.0 {
                let dot: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
                (dot / denom).clamp(-RHO_TAU_CLIP, RHO_TAU_CLIP)
            } else {
                0.0
            };
            rows[i][j] = rho;
            rows[j][i] = rho;
        }
    }
    Ok(make_positive_definite(&CorrelationMatrix::from_rows(&rows)?))
}

pub fn ceda_sample<R: Rng + ?Sized>(model: &SearchModel, pop_size: usize, rng: &mut R) -> Result<Population> {
    match model.dependence {
        Dependence::Product | Dependence::Normal { .. } => sample(model, pop_size, rng),
        _ => Err(EdaError::Config("ceda_sample expects a product or normal model".into())),
    }
}

/// CVEDA and DVEDA learning: margins, pseudo-observations, then a vine with
/// independence pre-tests and truncation.
pub fn veda_learn<R: Rng + ?Sized>(
    spec: &EdaSpec,
    selected: &Population,
    lower: &[f64],
    upper: &[f64],
    rng: &mut R,
) -> Result<SearchModel> {
    check_selected(selected, lower, upper)?;
    let vine_type = spec
        .algorithm
        .vine_type()
        .ok_or_else(|| EdaError::Config(format!("{} is not a vine EDA", spec.algorithm)))?;
    let columns = columns_of(selected);
    let margins = fit_margins(spec, &columns, lower, upper)?;
    let dependence = if columns.len() < 2 {
        Dependence::Product
    } else {
        let u = pseudo_observations(&columns)?;
        let vine = fit_vine(
            &u,
            vine_type,
            &spec.copula.families,
            spec.copula.sig_level,
            spec.copula.trunc_criterion,
            rng,
        )?;
        Dependence::Vine { vine }
    };
    Ok(SearchModel { margins, dependence })
}

pub fn veda_sample<R: Rng + ?Sized>(model: &SearchModel, pop_size: usize, rng: &mut R) -> Result<Population> {
    match model.dependence {
        Dependence::Vine { .. } | Dependence::Product => sample(model, pop_size, rng),
        _ => Err(EdaError::Config("veda_sample expects a vine model".into())),
    }
}

/// Moment fit refined by maximum likelihood over a tau window around the
/// moment estimate. The moment fit is kept if the refinement does not
/// improve a finite likelihood.
pub fn fit_pair_ml(family: CopulaFamily, pairs: &[[f64; 2]], tau: f64) -> Result<BivariateCopula> {
    let start = fit_family(family, tau, pairs)?.unwrap_or(BivariateCopula::Product);
    let start_ll = start.loglik(pairs).unwrap_or(f64::NEG_INFINITY);
    let tau = tau.clamp(-MAX_FIT_TAU, MAX_FIT_TAU);
    let lo = (tau - ML_TAU_WINDOW).max(-MAX_FIT_TAU);
    let hi = (tau + ML_TAU_WINDOW).min(MAX_FIT_TAU);
    let loglik = |t: f64| {
        tau_to_parameter(family, t)
            .and_then(|c| c.loglik(pairs))
            .ok()
            .filter(|v| v.is_finite())
            .unwrap_or(f64::NEG_INFINITY)
    };
    let (t, ll, _) = golden_max(loglik, lo, hi, 1e-6);
    if ll.is_finite() && ll > start_ll {
        if let Ok(c) = tau_to_parameter(family, t) {
            return Ok(c);
        }
    }
    Ok(start)
}

/// Copula MIMIC learning: margins, pairwise copulas and mutual
/// information, and a greedy chain grown at its head.
pub fn cmimic_learn<R: Rng + ?Sized>(
    spec: &EdaSpec,
    selected: &Population,
    lower: &[f64],
    upper: &[f64],
    rng: &mut R,
) -> Result<SearchModel> {
    check_selected(selected, lower, upper)?;
    let family = match spec.copula.families.as_slice() {
        [f @ (CopulaFamily::Normal | CopulaFamily::Frank)] => *f,
        other => {
            return Err(EdaError::Config(format!(
                "Copula MIMIC takes exactly one of normal or frank, got {other:?}"
            )))
        }
    };
    let columns = columns_of(selected);
    let n = columns.len();
    let margins = fit_margins(spec, &columns, lower, upper)?;
    let uniform: Vec<Vec<f64>> = columns
        .iter()
        .zip(&margins)
        .map(|(col, m)| col.iter().map(|&x| clamp_unit(m.cdf(x))).collect())
        .collect();
    let mut copulas = vec![vec![BivariateCopula::Product; n]; n];
    let mut mi = vec![vec![f64::NEG_INFINITY; n]; n];
    for i in 1..n {
        for j in 0..i {
            let pairs: Vec<[f64; 2]> = uniform[i].iter().zip(&uniform[j]).map(|(&a, &b)| [a, b]).collect();
            let tau = kendall_tau(&uniform[i], &uniform[j])?.tau;
            let c = fit_pair_ml(family, &pairs, tau)?;
            let info = copula_mutual_information(&c, spec.copula.mi_draws, rng)?;
            copulas[i][j] = c;
            copulas[j][i] = c;
            mi[i][j] = info;
            mi[j][i] = info;
        }
    }
    let perm = greedy_chain(&mi);
    let chain = perm.windows(2).map(|w| copulas[w[0]][w[1]]).collect();
    Ok(SearchModel {
        margins,
        dependence: Dependence::Chain { perm, copulas: chain },
    })
}

/// Chain order from a symmetric score matrix with `-inf` on the diagonal.
/// The best pair (first in column-major order) ends the chain; the unused
/// variable scoring highest with the current head is prepended until all
/// variables are placed.
pub fn greedy_chain(score: &[Vec<f64>]) -> Vec<usize> {
    let n = score.len();
    if n < 2 {
        return (0..n).collect();
    }
    let mut best = (1, 0);
    for col in 0..n {
        for row in 0..n {
            if row != col && score[row][col] > score[best.0][best.1] {
                best = (row, col);
            }
        }
    }
    let mut perm = vec![best.0, best.1];
    let mut used = vec![false; n];
    used[best.0] = true;
    used[best.1] = true;
    while perm.len() < n {
        let head = perm[0];
        let next = (0..n)
            .filter(|&k| !used[k])
            .fold(None, |acc: Option<usize>, k| match acc {
                Some(b) if score[b][head] >= score[k][head] => Some(b),
                _ => Some(k),
            })
            .expect("an unused variable remains");
        used[next] = true;
        perm.insert(0, next);
    }
    perm
}

fn chain_sample<R: Rng + ?Sized>(
    perm: &[usize],
    copulas: &[BivariateCopula],
    m: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let n = perm.len();
    let mut rows = Vec::with_capacity(m);
    for _ in 0..m {
        let mut u = vec![0.0; n];
        if n > 0 {
            u[perm[n - 1]] = rng.random();
        }
        for k in (0..n.saturating_sub(1)).rev() {
            let w: f64 = rng.random();
            u[perm[k]] = copulas[k].hinv(w, u[perm[k + 1]])?;
        }
        rows.push(u);
    }
    Ok(rows)
}

pub fn cmimic_sample<R: Rng + ?Sized>(model: &SearchModel, pop_size: usize, rng: &mut R) -> Result<Population> {
    match model.dependence {
        Dependence::Chain { .. } => sample(model, pop_size, rng),
        _ => Err(EdaError::Config("cmimic_sample expects a chain model".into())),
    }
}
