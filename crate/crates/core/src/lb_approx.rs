//! Lower-bound approximation: minimize `xᵀQx` with `Q = M ∘ M` over balanced
//! allocations, a single convex quadratic instead of the min-max problem.

use crate::bqp::{minimize_max_quadratic, BqpStatus, CutSet};
use crate::covariates::CovariateMatrix;
use crate::error::Result;
use crate::limits::SolveLimits;
use crate::objective::{CovariateSpace, SpectralCache};
use crate::report::{evaluate_allocation, DesignReport, Method, SolverDiagnostics, SpaceKind, Status};
use crate::scalar::Scalar;

/// Solves the lower-bound problem and reports the allocation against the
/// full covariate hypercube.
pub fn solve_lb<T: Scalar>(h: &CovariateMatrix<T>, limits: &SolveLimits) -> Result<DesignReport> {
    solve_lb_in(h, CovariateSpace::FullHypercube, limits)
}

/// As [`solve_lb`], reporting objectives over `space`.
pub fn solve_lb_in<T: Scalar>(
    h: &CovariateMatrix<T>,
    space: CovariateSpace<T>,
    limits: &SolveLimits,
) -> Result<DesignReport> {
    let deadline = limits.deadline();
    let cache = SpectralCache::new(h)?;
    space.check(cache.p())?;
    let cuts = CutSet::single(cache.lb_matrix())?;
    let r = minimize_max_quadratic(&cuts, limits)?;
    let values = evaluate_allocation(&cache, &r.x_star, &space)?;
    let n = T::count(cache.n());
    let p = T::count(cache.p());
    let scale = |v: T| ((p + v) / n).as_f64();
    let diagnostics = SolverDiagnostics {
        iterations: r.restarts,
        cuts: 1,
        nodes: r.nodes,
        gap: r.gap().as_f64() / n.as_f64(),
        lower_bound: scale(r.lower_bound),
        history: Vec::new(),
    };
    let status = match r.status {
        BqpStatus::Optimal => Status::Optimal,
        _ => Status::Incumbent,
    };
    Ok(DesignReport::assemble(
        Method::LbApprox,
        r.x_star,
        values,
        status,
        diagnostics,
        deadline.elapsed(),
        limits.seed,
        SpaceKind::of(&space),
    ))
}
