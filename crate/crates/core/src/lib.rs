//! Robust two-arm treatment allocation.
//!
//! Given a patient covariate matrix `H` (first column all ones), the library
//! chooses a balanced ±1 allocation that minimizes the worst-case variance of
//! the estimated treatment-covariate interaction effect. Three methods are
//! available:
//!
//! * [`solve_exact`]: cutting planes on the surrogate min-max problem,
//! * [`solve_lb`]: the single quadratic lower-bound approximation,
//! * [`rand_report`]: random balanced allocations summarized by quantiles.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); reports
//! are always `f64`.

pub mod allocation;
pub mod baselines;
pub mod bqp;
pub mod covariates;
pub mod cutting_plane;
pub mod error;
pub mod evaluation;
pub mod inner_max;
pub mod lb_approx;
pub mod limits;
pub mod linalg;
pub mod objective;
pub mod report;
pub mod scalar;

pub use allocation::{random_balanced_allocations, Allocation, BalancedSampler};
pub use baselines::{rand_quantiles, rand_report, Objective, RandBenchmark};
pub use bqp::{minimize_max_quadratic, BqpResult, BqpStatus, Cut, CutSet};
pub use covariates::{
    encode_csv, encode_reader, generate_synthetic, ColumnKind, ColumnSpec, CovariateMatrix, CovariateSchema,
    EncodedCovariates, SyntheticSpec,
};
pub use cutting_plane::{solve_exact, solve_exact_in, CuttingPlane, CuttingPlaneState};
pub use error::{DesignError, Result};
pub use evaluation::{
    fit_interaction_model, recommend, simulate_responses, surrogate_gap_scan, variance_reduction, FittedModel,
    GapPoint, SimulationSpec, VarianceReductionReport,
};
pub use inner_max::{solve_inner_max, InnerMaxProblem, InnerMaxResult};
pub use lb_approx::{solve_lb, solve_lb_in};
pub use limits::{SolveLimits, SolveMode};
pub use linalg::Matrix;
pub use objective::{CovariateSpace, SpectralCache};
pub use report::{DesignReport, Method, Quantiles, SolverDiagnostics, SpaceKind, Status};
pub use scalar::Scalar;

pub type Matrix64 = Matrix<f64>;
pub type CovariateMatrix64 = CovariateMatrix<f64>;
pub type SpectralCache64 = SpectralCache<f64>;
pub type CovariateSpace64 = CovariateSpace<f64>;
pub type Matrix32 = Matrix<f32>;
pub type CovariateMatrix32 = CovariateMatrix<f32>;
