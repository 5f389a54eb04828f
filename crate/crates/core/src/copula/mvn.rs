use nalgebra::{Cholesky, DMatrix};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{EdaError, Result};
use crate::numeric::normal_cdf;

use super::clamp_unit;

/// Symmetric matrix with unit diagonal and entries in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix(DMatrix<f64>);

impl CorrelationMatrix {
    pub fn identity(n: usize) -> Self {
        CorrelationMatrix(DMatrix::identity(n, n))
    }

    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        let n = entries.nrows();
        if entries.ncols() != n {
            return Err(EdaError::DimensionMismatch {
                expected: n,
                found: entries.ncols(),
            });
        }
        for i in 0..n {
            if (entries[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(EdaError::Config(format!(
                    "correlation diagonal entry {i} is {}",
                    entries[(i, i)]
                )));
            }
            for j in 0..i {
                let (a, b) = (entries[(i, j)], entries[(j, i)]);
                if (a - b).abs() > 1e-12 || !a.is_finite() || a.abs() > 1.0 {
                    return Err(EdaError::Config(format!(
                        "correlation entries ({i},{j})={a} and ({j},{i})={b} are not a valid symmetric pair"
                    )));
                }
            }
        }
        Ok(CorrelationMatrix(entries))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(EdaError::DimensionMismatch {
                expected: n,
                found: bad.len(),
            });
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.0[(i, j)]).collect())
            .collect()
    }

    pub fn cholesky(&self) -> Option<Cholesky<f64, nalgebra::Dyn>> {
        self.0.clone().cholesky()
    }

    pub fn is_positive_definite(&self) -> bool {
        self.cholesky().is_some()
    }
}

impl Serialize for CorrelationMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CorrelationMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        CorrelationMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Draws `m` rows `Φ(Z)` with `Z ~ N(0, R)` through the Cholesky factor of `R`.
pub fn mvnormal_copula_sample<R: Rng + ?Sized>(
    corr: &CorrelationMatrix,
    m: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let n = corr.dim();
    let chol = corr
        .cholesky()
        .ok_or_else(|| EdaError::Internal("correlation matrix is not positive definite".into()))?;
    let l = chol.l();
    let mut z = vec![0.0; n];
    let mut rows = Vec::with_capacity(m);
    for _ in 0..m {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        let row = (0..n)
            .map(|i| {
                let x: f64 = (0..=i).map(|k| l[(i, k)] * z[k]).sum();
                clamp_unit(normal_cdf(x))
            })
            .collect();
        rows.push(row);
    }
    Ok(rows)
}
