//! Serializable results shared by every design method.

use serde::{Deserialize, Serialize};

use crate::allocation::Allocation;
use crate::error::{DesignError, Result};
use crate::objective::{CovariateSpace, SpectralCache};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "EXACT")]
    Exact,
    #[serde(rename = "LB_APPROX")]
    LbApprox,
    #[serde(rename = "RAND")]
    Rand,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Exact => "EXACT",
            Method::LbApprox => "LB_APPROX",
            Method::Rand => "RAND",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    /// Optimality is certified within epsilon.
    Optimal,
    /// The stopping rule held but the master was solved heuristically, so
    /// no certificate is available.
    Converged,
    /// A time or node limit stopped the run; the best allocation so far.
    Incumbent,
    /// A sampled baseline; optimality does not apply.
    Sampled,
}

/// Which set the inner maximization ranges over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpaceKind {
    Hypercube,
    Rows,
    Explicit,
}

/// One master/subproblem round of the cutting plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Master optimum.
    pub theta: f64,
    /// Worst-case covariate value of the master allocation.
    pub delta: f64,
    /// Seconds since the start of the solve.
    pub elapsed: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub iterations: usize,
    pub cuts: usize,
    pub nodes: u64,
    /// Upper minus lower bound on the optimized objective.
    pub gap: f64,
    pub lower_bound: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<IterationRecord>,
}

/// Nearest-rank quantiles at the 1%, 5% and 50% levels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub q01: f64,
    pub q05: f64,
    pub q50: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandSummary {
    pub replicates: usize,
    pub surrogate: Quantiles,
    /// Absent when every replicate was confounded.
    pub original: Option<Quantiles>,
    pub confounded: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub method: Method,
    pub allocation: Allocation,
    pub surrogate_value: f64,
    pub surrogate_argmax: Vec<f64>,
    /// Absent when the allocation is confounded with the covariates.
    pub original_value: Option<f64>,
    pub original_argmax: Option<Vec<f64>>,
    /// `p/n + xᵀQx/n`.
    pub lb_objective: f64,
    pub status: Status,
    pub diagnostics: SolverDiagnostics,
    pub wall_time: f64,
    pub seed: u64,
    pub space: SpaceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rand: Option<RandSummary>,
}

impl SpaceKind {
    pub fn of<T>(space: &CovariateSpace<T>) -> Self {
        match space {
            CovariateSpace::FullHypercube => SpaceKind::Hypercube,
            CovariateSpace::Rows => SpaceKind::Rows,
            CovariateSpace::Explicit(_) => SpaceKind::Explicit,
        }
    }
}

/// Objective values of one allocation, in `f64` for reporting.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluated {
    pub surrogate_value: f64,
    pub surrogate_argmax: Vec<f64>,
    pub original_value: Option<f64>,
    pub original_argmax: Option<Vec<f64>>,
    pub lb_objective: f64,
}

/// Evaluates all three objectives; a confounded allocation leaves the
/// original value empty instead of failing.
pub fn evaluate_allocation<T: Scalar>(
    cache: &SpectralCache<T>,
    x: &Allocation,
    space: &CovariateSpace<T>,
) -> Result<Evaluated> {
    let to64 = |z: Vec<T>| z.into_iter().map(|v| v.as_f64()).collect::<Vec<f64>>();
    let surrogate = cache.surrogate_value(x, space)?;
    let (original_value, original_argmax) = match cache.original_value(x, space) {
        Ok(v) => (Some(v.value.as_f64()), Some(to64(v.z))),
        Err(DesignError::ConfoundedDesign) => (None, None),
        Err(e) => return Err(e),
    };
    Ok(Evaluated {
        surrogate_value: surrogate.value.as_f64(),
        surrogate_argmax: to64(surrogate.z),
        original_value,
        original_argmax,
        lb_objective: cache.lb_value(x)?.as_f64(),
    })
}

impl DesignReport {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn assemble(
        method: Method,
        allocation: Allocation,
        values: Evaluated,
        status: Status,
        diagnostics: SolverDiagnostics,
        wall_time: f64,
        seed: u64,
        space: SpaceKind,
    ) -> Self {
        Self {
            method,
            allocation,
            surrogate_value: values.surrogate_value,
            surrogate_argmax: values.surrogate_argmax,
            original_value: values.original_value,
            original_argmax: values.original_argmax,
            lb_objective: values.lb_objective,
            status,
            diagnostics,
            wall_time,
            seed,
            space,
            rand: None,
        }
    }
}
