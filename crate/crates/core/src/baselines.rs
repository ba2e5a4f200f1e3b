//! Randomized balanced baselines and their quantile summaries.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocation::{random_balanced_allocations, Allocation};
use crate::covariates::CovariateMatrix;
use crate::error::{DesignError, Result};
use crate::limits::Deadline;
use crate::objective::{CovariateSpace, SpectralCache};
use crate::report::{
    evaluate_allocation, DesignReport, Method, Quantiles, RandSummary, SolverDiagnostics, SpaceKind, Status,
};
use crate::scalar::Scalar;

pub const DEFAULT_REPLICATES: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Original,
    Surrogate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandBenchmark {
    pub objective: Objective,
    pub replicates: usize,
    /// Objective value per replicate, in draw order; `None` where the
    /// allocation is confounded.
    pub values: Vec<Option<f64>>,
    pub confounded: usize,
    pub quantiles: Quantiles,
}

/// Nearest-rank percentile of ascending `sorted`: the `⌈pct·N/100⌉`-th
/// smallest value.
pub fn nearest_rank(sorted: &[f64], pct: usize) -> f64 {
    assert!(!sorted.is_empty(), "nearest rank of an empty sample");
    let rank = (pct * sorted.len()).div_ceil(100).max(1);
    sorted[rank.min(sorted.len()) - 1]
}

pub fn quantiles(values: &[f64]) -> Quantiles {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Quantiles {
        q01: nearest_rank(&sorted, 1),
        q05: nearest_rank(&sorted, 5),
        q50: nearest_rank(&sorted, 50),
    }
}

/// Evaluates `objective` on every allocation in parallel and summarizes.
pub fn rand_quantiles<T: Scalar>(
    h: &CovariateMatrix<T>,
    space: &CovariateSpace<T>,
    allocations: &[Allocation],
    objective: Objective,
) -> Result<RandBenchmark> {
    let cache = SpectralCache::new(h)?;
    rand_quantiles_cached(&cache, space, allocations, objective)
}

pub fn rand_quantiles_cached<T: Scalar>(
    cache: &SpectralCache<T>,
    space: &CovariateSpace<T>,
    allocations: &[Allocation],
    objective: Objective,
) -> Result<RandBenchmark> {
    if allocations.is_empty() {
        return Err(DesignError::InvalidInput("no allocations to evaluate".into()));
    }
    space.check(cache.p())?;
    let values: Vec<Option<f64>> = allocations
        .par_iter()
        .map(|x| {
            let r = match objective {
                Objective::Surrogate => cache.surrogate_value(x, space),
                Objective::Original => cache.original_value(x, space),
            };
            match r {
                Ok(v) => Ok(Some(v.value.as_f64())),
                Err(DesignError::ConfoundedDesign) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let ok: Vec<f64> = values.iter().flatten().copied().collect();
    if ok.is_empty() {
        return Err(DesignError::AllConfounded { count: values.len() });
    }
    Ok(RandBenchmark {
        objective,
        replicates: values.len(),
        confounded: values.len() - ok.len(),
        quantiles: quantiles(&ok),
        values,
    })
}

/// RAND baseline report. The reported allocation is the replicate at the
/// surrogate median; both quantile summaries are attached.
pub fn rand_report<T: Scalar>(
    h: &CovariateMatrix<T>,
    space: &CovariateSpace<T>,
    replicates: usize,
    seed: u64,
) -> Result<DesignReport> {
    let deadline = Deadline::unlimited();
    let cache = SpectralCache::new(h)?;
    let allocations = random_balanced_allocations(cache.n(), replicates, seed)?;
    let surrogate = rand_quantiles_cached(&cache, space, &allocations, Objective::Surrogate)?;
    let original = match rand_quantiles_cached(&cache, space, &allocations, Objective::Original) {
        Ok(b) => Some(b),
        Err(DesignError::AllConfounded { .. }) => None,
        Err(e) => return Err(e),
    };
    let median = surrogate.quantiles.q50;
    let pick = surrogate
        .values
        .iter()
        .position(|v| *v == Some(median))
        .expect("the median is one of the values");
    let x = allocations[pick].clone();
    let values = evaluate_allocation(&cache, &x, space)?;
    let mut report = DesignReport::assemble(
        Method::Rand,
        x,
        values,
        Status::Sampled,
        SolverDiagnostics::default(),
        deadline.elapsed(),
        seed,
        SpaceKind::of(space),
    );
    report.rand = Some(RandSummary {
        replicates,
        surrogate: surrogate.quantiles,
        confounded: original.as_ref().map_or(replicates, |b| b.confounded),
        original: original.map(|b| b.quantiles),
    });
    Ok(report)
}
