//! Exact min-max design by cutting planes.
//!
//! The master problem minimizes `θ` subject to one cut
//! `θ ≥ zᵀG⁻¹z + xᵀΥ(z)x` per generated covariate vector; the subproblem
//! finds the worst covariate vector for the master's allocation. The loop
//! stops once the master value reaches the subproblem value within epsilon.

use log::{debug, info};

use crate::allocation::Allocation;
use crate::bqp::{minimize_max_quadratic_from, BqpStatus, Cut, CutSet};
use crate::covariates::CovariateMatrix;
use crate::error::{DesignError, Result};
use crate::inner_max::{solve_inner_max, InnerMaxProblem};
use crate::limits::{Deadline, SolveLimits, SolveMode};
use crate::objective::{CovariateSpace, InnerValue, SpectralCache};
use crate::report::{evaluate_allocation, DesignReport, IterationRecord, Method, SolverDiagnostics, SpaceKind, Status};
use crate::scalar::Scalar;

/// Fraction of epsilon used as the master problem's own tolerance, so that
/// master slack and the stopping rule together stay within epsilon.
const MASTER_EPSILON_FRACTION: f64 = 0.1;

#[derive(Clone, Debug)]
pub struct CuttingPlaneState<T> {
    /// Generated covariate vectors, without duplicates.
    pub generated: Vec<Vec<T>>,
    /// Running maximum of the master values.
    pub theta: T,
    /// Worst-case value of the latest master allocation.
    pub delta: T,
    pub iteration: usize,
    pub history: Vec<IterationRecord>,
    /// Latest master allocation.
    pub current: Option<Allocation>,
    /// Allocation with the smallest worst-case value seen so far.
    pub best: Option<(Allocation, T)>,
    /// Largest certified lower bound on the optimum.
    pub lower_bound: T,
    pub nodes: u64,
}

/// Result of a single master/subproblem round.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    /// A new cut was added.
    Cut,
    /// The stopping rule holds for the current allocation.
    Converged { certified: bool },
    /// A limit stopped the master or the subproblem.
    LimitReached,
}

pub struct CuttingPlane<T: Scalar> {
    cache: SpectralCache<T>,
    space: CovariateSpace<T>,
    limits: SolveLimits,
    deadline: Deadline,
    cuts: Vec<Cut<T>>,
    state: CuttingPlaneState<T>,
    force_exact: bool,
}

impl<T: Scalar> CuttingPlane<T> {
    pub fn new(h: &CovariateMatrix<T>, space: CovariateSpace<T>, limits: SolveLimits) -> Result<Self> {
        limits.check()?;
        let cache = SpectralCache::new(h)?;
        space.check(cache.p())?;
        if cache.n() < 2 {
            return Err(DesignError::Infeasible);
        }
        let deadline = limits.deadline();
        let mut plane = Self {
            cache,
            space,
            limits,
            deadline,
            cuts: Vec::new(),
            state: CuttingPlaneState {
                generated: Vec::new(),
                theta: T::neg_infinity(),
                delta: T::infinity(),
                iteration: 0,
                history: Vec::new(),
                current: None,
                best: None,
                lower_bound: T::neg_infinity(),
                nodes: 0,
            },
            force_exact: false,
        };
        for z in plane.seed_vectors()? {
            plane.add_cut(z)?;
        }
        Ok(plane)
    }

    pub fn state(&self) -> &CuttingPlaneState<T> {
        &self.state
    }

    pub fn cache(&self) -> &SpectralCache<T> {
        &self.cache
    }

    /// All-ones and alternating vectors on the hypercube; on a finite list,
    /// its first element and the maximizer of the allocation-free term.
    fn seed_vectors(&self) -> Result<Vec<Vec<T>>> {
        let p = self.cache.p();
        let mut seeds = match &self.space {
            CovariateSpace::FullHypercube => {
                let ones = vec![T::one(); p];
                let alternating = (0..p).map(|i| if i % 2 == 0 { T::one() } else { -T::one() }).collect();
                vec![ones, alternating]
            }
            _ => {
                let base = self.cache.maximize_over(self.cache.gram_inverse(), &self.space)?;
                let first = match &self.space {
                    CovariateSpace::Explicit(list) => list[0].clone(),
                    _ => self.cache.covariates().row(0).to_vec(),
                };
                vec![first, base.z]
            }
        };
        seeds.dedup();
        Ok(seeds)
    }

    fn add_cut(&mut self, z: Vec<T>) -> Result<()> {
        let constant = self.cache.base_variance(&z)?;
        let matrix = self.cache.upsilon(&z)?;
        self.cuts.push(Cut { constant, matrix });
        self.state.generated.push(z);
        Ok(())
    }

    fn subproblem(&self, x: &Allocation) -> Result<(InnerValue<T>, bool)> {
        let s = self.cache.surrogate_matrix(x)?;
        match &self.space {
            CovariateSpace::FullHypercube => {
                let limits = self.limits.clone().with_time_limit(self.deadline.remaining());
                let r = solve_inner_max(&InnerMaxProblem::new(s)?, &limits);
                Ok((InnerValue { value: r.value, z: r.z_star }, r.optimal))
            }
            space => Ok((self.cache.maximize_over(&s, space)?, true)),
        }
    }

    fn master_mode(&self) -> SolveMode {
        if self.force_exact {
            SolveMode::Exact
        } else {
            self.limits.mode.resolve(self.cache.n())
        }
    }

    fn solve_master(&self, mode: SolveMode) -> Result<crate::bqp::BqpResult<T>> {
        let cutset = CutSet::new(self.cuts.clone())?;
        let limits = SolveLimits {
            epsilon: self.limits.epsilon * MASTER_EPSILON_FRACTION,
            time_limit: self.deadline.remaining(),
            seed: self.limits.seed.wrapping_add(self.state.iteration as u64),
            mode,
            ..self.limits.clone()
        };
        minimize_max_quadratic_from(&cutset, &limits, self.state.current.as_ref())
    }

    /// Runs one master solve and one subproblem solve.
    pub fn step(&mut self) -> Result<StepOutcome> {
        let mode = self.master_mode();
        let master = self.solve_master(mode)?;
        self.state.iteration += 1;
        self.state.nodes += master.nodes;
        let exact_master = master.status == BqpStatus::Optimal;
        if exact_master {
            self.state.lower_bound = self.state.lower_bound.max(master.lower_bound);
        }
        let x = master.x_star.clone();
        let (worst, sub_optimal) = self.subproblem(&x)?;
        let theta = master.value;
        let delta = worst.value;
        self.state.theta = self.state.theta.max(theta);
        self.state.delta = delta;
        self.state.current = Some(x.clone());
        if self.state.best.as_ref().is_none_or(|(_, v)| delta < *v) {
            self.state.best = Some((x.clone(), delta));
        }
        let elapsed = self.deadline.elapsed();
        self.state.history.push(IterationRecord {
            iteration: self.state.iteration,
            theta: theta.as_f64(),
            delta: delta.as_f64(),
            elapsed,
        });
        debug!(
            "iteration {} theta {:.9} delta {:.9} gap {:.3e} elapsed {:.3}s",
            self.state.iteration,
            theta.as_f64(),
            delta.as_f64(),
            (delta - theta).as_f64(),
            elapsed
        );

        let eps = T::lit(self.limits.epsilon);
        if theta >= delta - eps {
            return Ok(StepOutcome::Converged {
                certified: exact_master && sub_optimal,
            });
        }
        if self.state.generated.contains(&worst.z) {
            return Err(DesignError::DuplicateCut {
                iteration: self.state.iteration,
                theta: theta.as_f64(),
                delta: delta.as_f64(),
            });
        }
        if master.status == BqpStatus::Incumbent && mode == SolveMode::Exact || !sub_optimal {
            // A limit cut the master short; keep the cut for a possible
            // resumption but report the stop.
            self.add_cut(worst.z)?;
            return Ok(StepOutcome::LimitReached);
        }
        self.add_cut(worst.z)?;
        if self.deadline.expired() {
            return Ok(StepOutcome::LimitReached);
        }
        Ok(StepOutcome::Cut)
    }

    /// Iterates until convergence or a limit and assembles the report.
    pub fn run(mut self) -> Result<DesignReport> {
        let status = loop {
            match self.step()? {
                StepOutcome::Cut => continue,
                StepOutcome::LimitReached => break Status::Incumbent,
                StepOutcome::Converged { certified: true } => break Status::Optimal,
                StepOutcome::Converged { certified: false } => {
                    if self.force_exact || self.deadline.expired() {
                        break Status::Converged;
                    }
                    // Verify the heuristic master with the exact engine.
                    let verify = self.solve_master(SolveMode::Exact)?;
                    self.state.nodes += verify.nodes;
                    if verify.status != BqpStatus::Optimal {
                        break Status::Converged;
                    }
                    self.state.lower_bound = self.state.lower_bound.max(verify.lower_bound);
                    let eps = T::lit(self.limits.epsilon);
                    if verify.value >= self.state.delta - eps {
                        break Status::Optimal;
                    }
                    self.force_exact = true;
                    self.state.current = Some(verify.x_star);
                }
            }
        };
        self.finish(status)
    }

    fn finish(self, status: Status) -> Result<DesignReport> {
        let (x, delta) = match status {
            Status::Optimal | Status::Converged => (
                self.state.current.clone().expect("at least one iteration ran"),
                self.state.delta,
            ),
            _ => self.state.best.clone().expect("at least one iteration ran"),
        };
        let lower_bound = self.state.lower_bound.max(if status == Status::Optimal {
            self.state.theta.min(delta)
        } else {
            T::neg_infinity()
        });
        let mut values = evaluate_allocation(&self.cache, &x, &self.space)?;
        values.surrogate_value = delta.as_f64();
        info!(
            "cutting plane finished after {} iterations with status {status:?}",
            self.state.iteration
        );
        let diagnostics = SolverDiagnostics {
            iterations: self.state.iteration,
            cuts: self.state.generated.len(),
            nodes: self.state.nodes,
            gap: (delta - lower_bound).max(T::zero()).as_f64(),
            lower_bound: lower_bound.as_f64(),
            history: self.state.history,
        };
        Ok(DesignReport::assemble(
            Method::Exact,
            x,
            values,
            status,
            diagnostics,
            self.deadline.elapsed(),
            self.limits.seed,
            SpaceKind::of(&self.space),
        ))
    }
}

/// Surrogate-optimal allocation over the full covariate hypercube.
pub fn solve_exact<T: Scalar>(h: &CovariateMatrix<T>, limits: &SolveLimits) -> Result<DesignReport> {
    solve_exact_in(h, CovariateSpace::FullHypercube, limits)
}

pub fn solve_exact_in<T: Scalar>(
    h: &CovariateMatrix<T>,
    space: CovariateSpace<T>,
    limits: &SolveLimits,
) -> Result<DesignReport> {
    CuttingPlane::new(h, space, limits.clone())?.run()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_design() {
        let h = CovariateMatrix::<f64>::from_rows(&[[1.0, 1.0], [1.0, -1.0], [1.0, 1.0], [1.0, -1.0]])
            .unwrap();
        let r = solve_exact(&h, &SolveLimits::unlimited()).unwrap();
        assert!((r.surrogate_value - 0.5).abs() < 1e-9);
        assert!(r.diagnostics.iterations <= 2);
        assert_eq!(r.status, Status::Optimal);
        let c = SpectralCache::new(&h).unwrap().cross_moment(&r.allocation).unwrap();
        assert!(c.max_abs() < 1e-12);
    }

    #[test]
    fn intercept_only() {
        for n in [4usize, 5, 7] {
            let rows: Vec<[f64; 1]> = vec![[1.0]; n];
            let h = CovariateMatrix::from_rows(&rows).unwrap();
            let r = solve_exact(&h, &SolveLimits::unlimited()).unwrap();
            let s = (n % 2) as f64;
            let nf = n as f64;
            let expected = (1.0 + (s / nf).powi(2)) / nf;
            assert!((r.surrogate_value - expected).abs() < 1e-12, "n = {n}");
            assert_eq!(r.diagnostics.cuts, 1);
        }
    }

    #[test]
    fn theta_is_monotone() {
        let spec = crate::covariates::SyntheticSpec::new(12, 4, 5).unwrap();
        let h = crate::covariates::generate_synthetic::<f64>(&spec);
        let r = solve_exact(&h, &SolveLimits::unlimited()).unwrap();
        let mut running = f64::NEG_INFINITY;
        for rec in &r.diagnostics.history {
            assert!(rec.theta <= rec.delta + 1e-9);
            running = running.max(rec.theta);
        }
        assert!(running <= r.surrogate_value + 1e-9);
    }

    #[test]
    fn rows_space() {
        let h = CovariateMatrix::<f64>::from_rows(&[[1.0, 1.0], [1.0, -1.0], [1.0, 1.0], [1.0, -1.0]])
            .unwrap();
        let r = solve_exact_in(&h, CovariateSpace::Rows, &SolveLimits::unlimited()).unwrap();
        assert!((r.surrogate_value - 0.5).abs() < 1e-9);
        assert_eq!(r.space, SpaceKind::Rows);
    }
}
