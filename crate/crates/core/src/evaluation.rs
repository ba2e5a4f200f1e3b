//! Response simulation, interaction-model fitting, per-patient variance
//! reduction against random designs, and the surrogate-versus-exact gap scan.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocation::{Allocation, BalancedSampler};
use crate::covariates::CovariateMatrix;
use crate::error::{DesignError, Result};
use crate::linalg::{least_squares, Matrix};
use crate::objective::{CovariateSpace, SpectralCache, CONFOUNDING_TOLERANCE};
use crate::scalar::Scalar;

pub const DEFAULT_Z0_COUNT: usize = 1000;
pub const DEFAULT_RAND_DESIGNS: usize = 1000;

/// Stream of the z0 draws, kept apart from the design stream.
const Z0_STREAM: u64 = 1;

/// Parameters of `y = Hα + D_x Hβ + ε` with `ε ~ N(0, σ²)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec<T> {
    pub alpha: Vec<T>,
    pub beta: Vec<T>,
    pub sigma: T,
    pub seed: u64,
}

impl<T: Scalar> SimulationSpec<T> {
    pub fn new(alpha: Vec<T>, beta: Vec<T>, sigma: T, seed: u64) -> Result<Self> {
        if alpha.len() != beta.len() {
            return Err(DesignError::DimensionMismatch {
                expected: alpha.len(),
                found: beta.len(),
            });
        }
        if !(sigma > T::zero()) || !sigma.is_finite() {
            return Err(DesignError::InvalidInput("sigma must be positive".into()));
        }
        Ok(Self { alpha, beta, sigma, seed })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedModel<T> {
    pub alpha_hat: Vec<T>,
    pub beta_hat: Vec<T>,
}

fn check_dims<T: Scalar>(h: &CovariateMatrix<T>, x: &Allocation, p: usize) -> Result<()> {
    if x.len() != h.n() {
        return Err(DesignError::DimensionMismatch {
            expected: h.n(),
            found: x.len(),
        });
    }
    if p != h.p() {
        return Err(DesignError::DimensionMismatch {
            expected: h.p(),
            found: p,
        });
    }
    Ok(())
}

fn simulate_with<T: Scalar, R: Rng>(h: &CovariateMatrix<T>, x: &Allocation, spec: &SimulationSpec<T>, rng: &mut R) -> Vec<T> {
    let ha = h.matrix().matvec(&spec.alpha);
    let hb = h.matrix().matvec(&spec.beta);
    ha.iter()
        .zip(&hb)
        .zip(x.as_slice())
        .map(|((&a, &b), &xi)| {
            let noise: f64 = rng.sample(StandardNormal);
            let s = if xi == 1 { T::one() } else { -T::one() };
            a + s * b + spec.sigma * T::lit(noise)
        })
        .collect()
}

/// Draws one response vector.
pub fn simulate_responses<T: Scalar>(h: &CovariateMatrix<T>, x: &Allocation, spec: &SimulationSpec<T>) -> Result<Vec<T>> {
    check_dims(h, x, spec.alpha.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok(simulate_with(h, x, spec, &mut rng))
}

/// Least squares of `y` on `[H | D_x H]`.
pub fn fit_interaction_model<T: Scalar>(h: &CovariateMatrix<T>, x: &Allocation, y: &[T]) -> Result<FittedModel<T>> {
    check_dims(h, x, h.p())?;
    if y.len() != h.n() {
        return Err(DesignError::DimensionMismatch {
            expected: h.n(),
            found: y.len(),
        });
    }
    let p = h.p();
    let xs = x.to_scalars::<T>();
    let stacked = Matrix::from_fn(h.n(), 2 * p, |i, j| {
        if j < p {
            h.matrix()[(i, j)]
        } else {
            xs[i] * h.matrix()[(i, j - p)]
        }
    });
    let coef = least_squares(&stacked, y, T::tolerance(CONFOUNDING_TOLERANCE)).ok_or(DesignError::ConfoundedDesign)?;
    Ok(FittedModel {
        alpha_hat: coef[..p].to_vec(),
        beta_hat: coef[p..].to_vec(),
    })
}

/// Suggested treatment `sign(zᵀβ̂)`, with zero resolved to +1.
pub fn recommend<T: Scalar>(model: &FittedModel<T>, z: &[T]) -> i8 {
    let v: T = model.beta_hat.iter().zip(z).map(|(&b, &zi)| b * zi).sum();
    if v < T::zero() {
        -1
    } else {
        1
    }
}

/// Empirical variance of each `β̂` coordinate over `refits` independent
/// noise draws (ChaCha stream `r` of `spec.seed` for refit `r`).
pub fn monte_carlo_beta_variance<T: Scalar>(
    h: &CovariateMatrix<T>,
    x: &Allocation,
    spec: &SimulationSpec<T>,
    refits: usize,
) -> Result<Vec<f64>> {
    check_dims(h, x, spec.alpha.len())?;
    if refits < 2 {
        return Err(DesignError::InvalidInput("at least two refits are needed".into()));
    }
    let fits: Vec<Vec<f64>> = (0..refits)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(r as u64);
            let y = simulate_with(h, x, spec, &mut rng);
            fit_interaction_model(h, x, &y).map(|m| m.beta_hat.iter().map(|b| b.as_f64()).collect())
        })
        .collect::<Result<_>>()?;
    let p = h.p();
    let count = refits as f64;
    Ok((0..p)
        .map(|j| {
            let mean = fits.iter().map(|f| f[j]).sum::<f64>() / count;
            fits.iter().map(|f| (f[j] - mean).powi(2)).sum::<f64>() / (count - 1.0)
        })
        .collect())
}

/// Largest absolute entry of `G⁻¹HᵀD_xH`; shrinks as balanced designs grow.
pub fn balance_statistic<T: Scalar>(cache: &SpectralCache<T>, x: &Allocation) -> Result<T> {
    Ok(cache.balance_ratio(x)?.max_abs())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub z0: Vec<f64>,
    pub mean_random: f64,
    pub optimal: f64,
    /// `100 · (mean_random − optimal) / mean_random`.
    pub reduction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceReductionReport {
    pub per_z0: Vec<VarianceRow>,
    pub fraction_positive: f64,
    pub rand_designs: usize,
    /// Random designs that were confounded and redrawn.
    pub redrawn: usize,
    pub seed: u64,
}

/// Entrywise mean of `Σ_β` over `count` non-confounded random balanced
/// designs from `BalancedSampler::new(n, seed)`; confounded draws are
/// replaced by further draws. Returns the mean and the redraw count.
pub fn mean_random_sigma<T: Scalar>(cache: &SpectralCache<T>, count: usize, seed: u64) -> Result<(Matrix<T>, usize)> {
    if count == 0 {
        return Err(DesignError::InvalidInput("at least one random design is needed".into()));
    }
    let max_draws = 100 * count + 1000;
    let mut sampler = BalancedSampler::new(cache.n(), seed);
    let mut accepted: Vec<Matrix<T>> = Vec::with_capacity(count);
    let mut drawn = 0;
    while accepted.len() < count {
        if drawn >= max_draws {
            return Err(DesignError::AllConfounded { count: drawn });
        }
        let batch: Vec<Allocation> = sampler.by_ref().take(count - accepted.len()).collect();
        drawn += batch.len();
        let sigmas: Vec<Option<Matrix<T>>> = batch
            .par_iter()
            .map(|x| match cache.sigma_beta(x) {
                Ok(s) => Ok(Some(s)),
                Err(DesignError::ConfoundedDesign) => Ok(None),
                Err(e) => Err(e),
            })
            .collect::<Result<_>>()?;
        accepted.extend(sigmas.into_iter().flatten());
    }
    let p = cache.p();
    let mut mean = Matrix::zeros(p, p);
    for s in &accepted {
        mean = mean.add(s);
    }
    Ok((mean.scale(T::one() / T::count(count)), drawn - count))
}

/// Per-patient variance reduction of `x_star` against random designs.
pub fn variance_reduction<T: Scalar>(
    h: &CovariateMatrix<T>,
    x_star: &Allocation,
    z0_count: usize,
    rand_designs: usize,
    seed: u64,
) -> Result<VarianceReductionReport> {
    let cache = SpectralCache::new(h)?;
    let sigma_opt = cache.sigma_beta(x_star)?;
    let (mean, redrawn) = mean_random_sigma(&cache, rand_designs, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(Z0_STREAM);
    let p = cache.p();
    let per_z0: Vec<VarianceRow> = (0..z0_count)
        .map(|_| {
            let z: Vec<T> = (0..p)
                .map(|k| if k == 0 || rng.random::<bool>() { T::one() } else { -T::one() })
                .collect();
            let m = mean.quad_form(&z).as_f64();
            let o = sigma_opt.quad_form(&z).as_f64();
            VarianceRow {
                z0: z.iter().map(|v| v.as_f64()).collect(),
                mean_random: m,
                optimal: o,
                reduction: 100.0 * (m - o) / m,
            }
        })
        .collect();
    let positive = per_z0.iter().filter(|r| r.reduction > 0.0).count();
    let fraction_positive = if per_z0.is_empty() {
        0.0
    } else {
        positive as f64 / per_z0.len() as f64
    };
    Ok(VarianceReductionReport {
        per_z0,
        fraction_positive,
        rand_designs,
        redrawn,
        seed,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapPoint {
    /// Absent for a confounded allocation.
    pub original: Option<f64>,
    pub surrogate: f64,
}

impl GapPoint {
    /// `|surrogate − original| / original`.
    pub fn relative_gap(&self) -> Option<f64> {
        self.original.map(|o| (self.surrogate - o).abs() / o)
    }
}

/// Exact and surrogate worst-case values of each allocation over the full
/// covariate hypercube.
pub fn surrogate_gap_scan<T: Scalar>(h: &CovariateMatrix<T>, allocations: &[Allocation]) -> Result<Vec<GapPoint>> {
    let cache = SpectralCache::new(h)?;
    let space = CovariateSpace::FullHypercube;
    allocations
        .par_iter()
        .map(|x| {
            let surrogate = cache.surrogate_value(x, &space)?.value.as_f64();
            let original = match cache.original_value(x, &space) {
                Ok(v) => Some(v.value.as_f64()),
                Err(DesignError::ConfoundedDesign) => None,
                Err(e) => return Err(e),
            };
            Ok(GapPoint { original, surrogate })
        })
        .collect()
}

/// Mean relative gap over the non-confounded points.
pub fn mean_relative_gap(points: &[GapPoint]) -> Option<f64> {
    let gaps: Vec<f64> = points.iter().filter_map(GapPoint::relative_gap).collect();
    (!gaps.is_empty()).then(|| gaps.iter().sum::<f64>() / gaps.len() as f64)
}
