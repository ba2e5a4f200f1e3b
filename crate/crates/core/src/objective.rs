//! Variance objectives of the two-arm interaction model.
//!
//! With `G = HᵀH`, `C = HᵀD_xH` and hat matrix `M = HG⁻¹Hᵀ`:
//!
//! * exact interaction covariance `Σ_β = (G − C G⁻¹ C)⁻¹`,
//! * surrogate correction `Ψ = G⁻¹ C G⁻¹ C G⁻¹`,
//! * `Υ(z) = M ∘ (u uᵀ)` with `u = HG⁻¹z`, so that `zᵀΨz = xᵀΥ(z)x`,
//! * lower-bound matrix `Q = M ∘ M`.
//!
//! The noise variance is fixed to one throughout.

use serde::{Deserialize, Serialize};

use crate::allocation::Allocation;
use crate::covariates::CovariateMatrix;
use crate::error::{DesignError, Result};
use crate::inner_max::{beats, solve_inner_max, InnerMaxProblem};
use crate::limits::SolveLimits;
use crate::linalg::{symmetric_eigenvalues, Cholesky, Matrix};
use crate::scalar::Scalar;

/// Relative eigenvalue threshold for the matrix inverted in `Σ_β`.
pub const CONFOUNDING_TOLERANCE: f64 = 1e-10;

/// Domain of the inner maximization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateSpace<T> {
    /// Every `z ∈ {1} × {−1, 1}^{p−1}`.
    FullHypercube,
    /// The rows of the covariate matrix.
    Rows,
    /// A fixed nonempty list of `p`-vectors with leading entry one.
    Explicit(Vec<Vec<T>>),
}

impl<T: Scalar> CovariateSpace<T> {
    pub fn check(&self, p: usize) -> Result<()> {
        if let CovariateSpace::Explicit(list) = self {
            if list.is_empty() {
                return Err(DesignError::InvalidSpace("explicit covariate list is empty".into()));
            }
            for (k, z) in list.iter().enumerate() {
                if z.len() != p {
                    return Err(DesignError::InvalidSpace(format!(
                        "vector {k} has length {}, expected {p}",
                        z.len()
                    )));
                }
                if z[0] != T::one() {
                    return Err(DesignError::InvalidSpace(format!("vector {k} does not start with 1")));
                }
            }
        }
        Ok(())
    }
}

/// Maximizer of a quadratic form over a covariate space.
#[derive(Clone, Debug, PartialEq)]
pub struct InnerValue<T> {
    pub value: T,
    pub z: Vec<T>,
}

/// Gram matrix, its inverse and the hat matrix of a covariate matrix.
#[derive(Clone, Debug)]
pub struct SpectralCache<T> {
    h: CovariateMatrix<T>,
    gram: Matrix<T>,
    gram_inverse: Matrix<T>,
    /// Largest eigenvalue of `G`, the scale for confounding checks.
    gram_scale: T,
    /// `H G⁻¹`, n × p.
    weights: Matrix<T>,
    hat: Matrix<T>,
}

impl<T: Scalar> SpectralCache<T> {
    pub fn new(h: &CovariateMatrix<T>) -> Result<Self> {
        let condition = T::lit(h.diagnostics().gram_condition);
        if !(condition <= T::max_condition()) {
            return Err(DesignError::IllConditioned {
                condition: condition.as_f64(),
            });
        }
        let hm = h.matrix();
        let gram = hm.gram();
        let gram_factor = Cholesky::new(&gram).ok_or(DesignError::IllConditioned {
            condition: condition.as_f64(),
        })?;
        let gram_inverse = gram_factor.inverse();
        let gram_scale = *symmetric_eigenvalues(&gram).last().expect("p ≥ 1");
        let weights = hm.matmul(&gram_inverse);
        let mut hat = weights.matmul(&hm.transpose());
        hat.symmetrize();

        let cache = Self {
            h: h.clone(),
            gram,
            gram_inverse,
            gram_scale,
            weights,
            hat,
        };
        cache.verify()?;
        Ok(cache)
    }

    fn verify(&self) -> Result<()> {
        let p = T::count(self.p());
        let scale = T::one() + self.hat.max_abs();
        let idem = self.hat.matmul(&self.hat).sub(&self.hat).max_abs();
        let trace = (self.hat.trace() - p).abs();
        if idem > T::tolerance(1e-8) * scale || trace > T::tolerance(1e-8) * (T::one() + p) {
            return Err(DesignError::IllConditioned {
                condition: self.h.diagnostics().gram_condition,
            });
        }
        Ok(())
    }

    pub fn covariates(&self) -> &CovariateMatrix<T> {
        &self.h
    }

    pub fn n(&self) -> usize {
        self.h.n()
    }

    pub fn p(&self) -> usize {
        self.h.p()
    }

    pub fn gram(&self) -> &Matrix<T> {
        &self.gram
    }

    pub fn gram_inverse(&self) -> &Matrix<T> {
        &self.gram_inverse
    }

    pub fn hat(&self) -> &Matrix<T> {
        &self.hat
    }

    fn check_allocation(&self, x: &Allocation) -> Result<()> {
        if x.len() != self.n() {
            return Err(DesignError::DimensionMismatch {
                expected: self.n(),
                found: x.len(),
            });
        }
        Ok(())
    }

    fn check_z(&self, z: &[T]) -> Result<()> {
        if z.len() != self.p() {
            return Err(DesignError::DimensionMismatch {
                expected: self.p(),
                found: z.len(),
            });
        }
        if z[0] != T::one() {
            return Err(DesignError::InvalidSpace("covariate vector must start with 1".into()));
        }
        Ok(())
    }

    /// `C = HᵀD_xH = Σ xᵢ hᵢhᵢᵀ`.
    pub fn cross_moment(&self, x: &Allocation) -> Result<Matrix<T>> {
        self.check_allocation(x)?;
        let p = self.p();
        let mut c = Matrix::zeros(p, p);
        for (i, &xi) in x.as_slice().iter().enumerate() {
            let r = self.h.row(i);
            let s = if xi == 1 { T::one() } else { -T::one() };
            for a in 0..p {
                let ra = s * r[a];
                for b in a..p {
                    c[(a, b)] += ra * r[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                c[(a, b)] = c[(b, a)];
            }
        }
        Ok(c)
    }

    /// `G⁻¹ C`, whose entries shrink like `1/n` under balanced designs.
    pub fn balance_ratio(&self, x: &Allocation) -> Result<Matrix<T>> {
        Ok(self.gram_inverse.matmul(&self.cross_moment(x)?))
    }

    /// Interaction covariance `(G − C G⁻¹ C)⁻¹` with unit noise variance.
    pub fn sigma_beta(&self, x: &Allocation) -> Result<Matrix<T>> {
        let c = self.cross_moment(x)?;
        let b = self.gram_inverse.matmul(&c);
        let mut s = self.gram.sub(&c.matmul(&b));
        s.symmetrize();
        let ev = symmetric_eigenvalues(&s);
        if !(ev[0] > T::tolerance(CONFOUNDING_TOLERANCE) * self.gram_scale) {
            return Err(DesignError::ConfoundedDesign);
        }
        let chol = Cholesky::new(&s).ok_or(DesignError::ConfoundedDesign)?;
        Ok(chol.inverse())
    }

    /// Surrogate correction `Ψ = G⁻¹ C G⁻¹ C G⁻¹`.
    pub fn psi(&self, x: &Allocation) -> Result<Matrix<T>> {
        let b = self.balance_ratio(x)?;
        let mut psi = b.matmul(&b).matmul(&self.gram_inverse);
        psi.symmetrize();
        Ok(psi)
    }

    /// Surrogate covariance `G⁻¹ + Ψ`.
    pub fn surrogate_matrix(&self, x: &Allocation) -> Result<Matrix<T>> {
        Ok(self.gram_inverse.add(&self.psi(x)?))
    }

    /// `u = H G⁻¹ z`.
    pub fn leverage_direction(&self, z: &[T]) -> Result<Vec<T>> {
        self.check_z(z)?;
        Ok(self.weights.matvec(z))
    }

    /// `Υ(z) = M ∘ (u uᵀ)`.
    pub fn upsilon(&self, z: &[T]) -> Result<Matrix<T>> {
        let u = self.leverage_direction(z)?;
        let n = self.n();
        let mut out = Matrix::from_fn(n, n, |i, j| self.hat[(i, j)] * u[i] * u[j]);
        out.symmetrize();
        Ok(out)
    }

    /// `zᵀ G⁻¹ z`, the constant of a cut.
    pub fn base_variance(&self, z: &[T]) -> Result<T> {
        self.check_z(z)?;
        Ok(self.gram_inverse.quad_form(z))
    }

    /// `Q = M ∘ M`.
    pub fn lb_matrix(&self) -> Matrix<T> {
        self.hat.hadamard(&self.hat)
    }

    /// `xᵀQx`, computed without materializing `Q`.
    pub fn lb_quadratic(&self, x: &Allocation) -> Result<T> {
        self.check_allocation(x)?;
        let xs = x.to_scalars::<T>();
        let n = self.n();
        let mut total = T::zero();
        for i in 0..n {
            let row = self.hat.row(i);
            let mut s = T::zero();
            for j in 0..n {
                s += row[j] * row[j] * xs[j];
            }
            total += xs[i] * s;
        }
        Ok(total)
    }

    /// Single-level lower bound `p/n + xᵀQx / n` of the surrogate inner
    /// maximum over the rows of `H`.
    pub fn lb_value(&self, x: &Allocation) -> Result<T> {
        let n = T::count(self.n());
        Ok((T::count(self.p()) + self.lb_quadratic(x)?) / n)
    }

    /// Maximizes `zᵀAz` over a covariate space with lexicographic ties.
    pub fn maximize_over(&self, a: &Matrix<T>, space: &CovariateSpace<T>) -> Result<InnerValue<T>> {
        space.check(self.p())?;
        let scan = |candidates: &mut dyn Iterator<Item = &[T]>| -> InnerValue<T> {
            let tol = T::tolerance(1e-12) * (T::one() + a.max_abs() * T::count(self.p()));
            let mut best: Option<InnerValue<T>> = None;
            for z in candidates {
                let v = a.quad_form(z);
                match &best {
                    Some(b) if !beats(v, z, b.value, &b.z, tol) => {}
                    _ => best = Some(InnerValue { value: v, z: z.to_vec() }),
                }
            }
            best.expect("nonempty covariate space")
        };
        Ok(match space {
            CovariateSpace::FullHypercube => {
                let r = solve_inner_max(&InnerMaxProblem::new(a.clone())?, &SolveLimits::unlimited());
                InnerValue {
                    value: r.value,
                    z: r.z_star,
                }
            }
            CovariateSpace::Rows => scan(&mut (0..self.n()).map(|i| self.h.row(i))),
            CovariateSpace::Explicit(list) => scan(&mut list.iter().map(Vec::as_slice)),
        })
    }

    /// Worst-case exact variance `max_z zᵀΣ_β z`.
    pub fn original_value(&self, x: &Allocation, space: &CovariateSpace<T>) -> Result<InnerValue<T>> {
        let sigma = self.sigma_beta(x)?;
        self.maximize_over(&sigma, space)
    }

    /// Worst-case surrogate variance `max_z zᵀ(G⁻¹ + Ψ)z`.
    pub fn surrogate_value(&self, x: &Allocation, space: &CovariateSpace<T>) -> Result<InnerValue<T>> {
        let s = self.surrogate_matrix(x)?;
        self.maximize_over(&s, space)
    }
}

/// Convenience wrappers that build a [`SpectralCache`] per call.
pub fn sigma_beta<T: Scalar>(h: &CovariateMatrix<T>, x: &Allocation) -> Result<Matrix<T>> {
    SpectralCache::new(h)?.sigma_beta(x)
}

pub fn psi<T: Scalar>(h: &CovariateMatrix<T>, x: &Allocation) -> Result<Matrix<T>> {
    SpectralCache::new(h)?.psi(x)
}

pub fn upsilon<T: Scalar>(h: &CovariateMatrix<T>, z: &[T]) -> Result<Matrix<T>> {
    SpectralCache::new(h)?.upsilon(z)
}

pub fn lb_matrix<T: Scalar>(h: &CovariateMatrix<T>) -> Result<Matrix<T>> {
    Ok(SpectralCache::new(h)?.lb_matrix())
}

pub fn lb_value<T: Scalar>(h: &CovariateMatrix<T>, x: &Allocation) -> Result<T> {
    SpectralCache::new(h)?.lb_value(x)
}

pub fn original_value<T: Scalar>(
    h: &CovariateMatrix<T>,
    x: &Allocation,
    space: &CovariateSpace<T>,
) -> Result<InnerValue<T>> {
    SpectralCache::new(h)?.original_value(x, space)
}

pub fn surrogate_value<T: Scalar>(
    h: &CovariateMatrix<T>,
    x: &Allocation,
    space: &CovariateSpace<T>,
) -> Result<InnerValue<T>> {
    SpectralCache::new(h)?.surrogate_value(x, space)
}
