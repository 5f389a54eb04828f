//! Copula-based estimation of distribution algorithms (EDAs) for continuous
//! black-box minimization: UMDA, GCEDA, C-/D-vine EDAs and Copula MIMIC,
//! together with the copula, margin and dependence machinery they share and
//! an experiment harness for independent runs and critical population sizes.

pub mod algorithms;
pub mod benchmarks;
pub mod copula;
pub mod dependence;
pub mod eda;
pub mod error;
pub mod margins;
pub mod numeric;
pub mod vines;

#[cfg(test)]
pub(crate) mod testutil;

pub use algorithms::{Dependence, SearchModel};
pub use copula::{BivariateCopula, CopulaFamily, CorrelationMatrix};
pub use eda::{Algorithm, EdaSpec, Population, RunResult, RunsSummary, TerminationSpec};
pub use error::{EdaError, Result};
pub use margins::{MarginKind, MarginModel};
pub use vines::{RVineModel, TruncCriterion, VineType};
