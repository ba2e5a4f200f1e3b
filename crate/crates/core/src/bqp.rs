//! Balanced ±1 minimization of a pointwise maximum of convex quadratics:
//!
//! ```text
//! min  max_k (c_k + xᵀA_k x)   over x ∈ {−1, +1}ⁿ with |Σ xᵢ| ≤ 1.
//! ```
//!
//! Two modes are provided. The heuristic runs seeded multi-start pair-swap
//! steepest descent. The exact mode is a best-first branch-and-bound whose
//! node bound is `max_k (c_k + min xᵀA_k x)` over the box relaxation with the
//! balance constraint relaxed to an interval on the sum; each relaxation is
//! solved by projected gradient and certified with a linear-minimization
//! (Frank–Wolfe) gap, so the bound is valid however early the iteration
//! stops.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocation::{draw_balanced, Allocation};
use crate::error::{DesignError, Result};
use crate::limits::{Deadline, SolveLimits, SolveMode};
use crate::linalg::{power_iteration, Cholesky, Matrix};
use crate::scalar::Scalar;

/// One constraint `θ ≥ c + xᵀAx` of the master problem.
#[derive(Clone, Debug)]
pub struct Cut<T> {
    pub constant: T,
    pub matrix: Matrix<T>,
}

/// Nonempty list of cuts sharing the dimension `n`, each with a symmetric
/// positive semidefinite matrix.
#[derive(Clone, Debug)]
pub struct CutSet<T> {
    cuts: Vec<Cut<T>>,
    n: usize,
}

/// Eigenvalue floor accepted for cut matrices.
pub const PSD_TOLERANCE: f64 = 1e-8;

impl<T: Scalar> CutSet<T> {
    pub fn new(cuts: Vec<Cut<T>>) -> Result<Self> {
        let n = cuts
            .first()
            .ok_or_else(|| DesignError::InvalidInput("cut set is empty".into()))?
            .matrix
            .nrows();
        for (k, cut) in cuts.iter().enumerate() {
            check_cut(cut, n).map_err(|m| DesignError::InvalidInput(format!("cut {k}: {m}")))?;
        }
        Ok(Self { cuts, n })
    }

    pub fn single(matrix: Matrix<T>) -> Result<Self> {
        Self::new(vec![Cut {
            constant: T::zero(),
            matrix,
        }])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.cuts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cuts.is_empty()
    }

    pub fn cuts(&self) -> &[Cut<T>] {
        &self.cuts
    }

    /// `max_k (c_k + xᵀA_k x)`.
    pub fn evaluate(&self, x: &Allocation) -> T {
        let xs = x.to_scalars::<T>();
        self.cuts
            .iter()
            .map(|c| c.constant + c.matrix.quad_form(&xs))
            .fold(T::neg_infinity(), T::max)
    }
}

fn check_cut<T: Scalar>(cut: &Cut<T>, n: usize) -> std::result::Result<(), String> {
    let a = &cut.matrix;
    if a.nrows() != n || a.ncols() != n {
        return Err(format!("expected {n}×{n}, found {}×{}", a.nrows(), a.ncols()));
    }
    if !a.is_finite() || !cut.constant.is_finite() {
        return Err("non-finite entries".into());
    }
    if a.asymmetry() > T::tolerance(1e-12) * (T::one() + a.max_abs()) {
        return Err("matrix is not symmetric".into());
    }
    // λ_min ≥ −τ  ⇔  A + τI ⪰ 0; the shifted factorization must succeed.
    let shift = T::tolerance(PSD_TOLERANCE) + T::epsilon() * T::lit(16.0) * (T::one() + a.trace().abs());
    let shifted = a.add(&Matrix::identity(n).scale(shift));
    if Cholesky::new(&shifted).is_none() {
        return Err("matrix is not positive semidefinite".into());
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BqpStatus {
    /// Proven optimal within epsilon.
    Optimal,
    /// Best known solution: heuristic mode or a limit stopped the search.
    Incumbent,
    Infeasible,
}

#[derive(Clone, Debug)]
pub struct BqpResult<T> {
    /// Canonical (first entry +1) minimizer.
    pub x_star: Allocation,
    pub value: T,
    pub lower_bound: T,
    pub status: BqpStatus,
    pub nodes: u64,
    pub restarts: usize,
}

impl<T: Scalar> BqpResult<T> {
    pub fn gap(&self) -> T {
        (self.value - self.lower_bound).max(T::zero())
    }
}

/// Solves in the mode selected by `limits.mode`.
pub fn minimize_max_quadratic<T: Scalar>(cuts: &CutSet<T>, limits: &SolveLimits) -> Result<BqpResult<T>> {
    minimize_max_quadratic_from(cuts, limits, None)
}

/// As [`minimize_max_quadratic`], with an optional warm-start allocation
/// that competes with the heuristic incumbent.
pub fn minimize_max_quadratic_from<T: Scalar>(
    cuts: &CutSet<T>,
    limits: &SolveLimits,
    warm_start: Option<&Allocation>,
) -> Result<BqpResult<T>> {
    limits.check()?;
    let n = cuts.n();
    if n < 2 {
        return Err(DesignError::Infeasible);
    }
    if let Some(w) = warm_start {
        if w.len() != n || !w.is_balanced() {
            return Err(DesignError::InvalidAllocation("warm start must be balanced and of length n".into()));
        }
    }
    let deadline = limits.deadline();
    let mut heuristic = heuristic_search(cuts, limits, &deadline);
    if let Some(w) = warm_start {
        let w = w.canonical();
        let v = cuts.evaluate(&w);
        if prefer(v, &w, heuristic.value, &heuristic.x_star) {
            heuristic.value = v;
            heuristic.x_star = w;
        }
    }
    match limits.mode.resolve(n) {
        SolveMode::Exact => Ok(branch_and_bound(cuts, limits, &deadline, heuristic)),
        _ => {
            let relax = Relaxation::new(cuts);
            let mut root = vec![0i8; n];
            root[0] = 1;
            let bound = relax.node_bound(&root, T::infinity()).bound;
            heuristic.lower_bound = bound.min(heuristic.value);
            Ok(heuristic)
        }
    }
}

/// Strictly smaller value, or a tie (within round-off) broken by canonical
/// lexicographic order.
fn prefer<T: Scalar>(v: T, x: &Allocation, best: T, best_x: &Allocation) -> bool {
    let tol = T::tolerance(1e-12) * (T::one() + best.abs());
    if v < best - tol {
        true
    } else if v <= best + tol {
        x.lex_cmp(best_x) == Ordering::Less
    } else {
        false
    }
}

/// Default heuristic restart count.
pub fn default_restarts(n: usize) -> usize {
    32usize.max(n / 4)
}

fn heuristic_search<T: Scalar>(cuts: &CutSet<T>, limits: &SolveLimits, deadline: &Deadline) -> BqpResult<T> {
    let n = cuts.n();
    let restarts = limits.restarts.unwrap_or_else(|| default_restarts(n)).max(1);
    let runs: Vec<Option<(T, Allocation)>> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            if r > 0 && deadline.expired() {
                return None;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(limits.seed);
            rng.set_stream(r as u64);
            let start = draw_balanced(n, &mut rng);
            let (x, v) = local_search(cuts, start, deadline);
            Some((v, x.canonical()))
        })
        .collect();
    let mut completed = 0;
    let mut best: Option<(T, Allocation)> = None;
    for (v, x) in runs.into_iter().flatten() {
        completed += 1;
        match &best {
            Some((bv, bx)) if !prefer(v, &x, *bv, bx) => {}
            _ => best = Some((v, x)),
        }
    }
    let (value, x_star) = best.expect("restart 0 always runs");
    BqpResult {
        x_star,
        value,
        lower_bound: T::neg_infinity(),
        status: BqpStatus::Incumbent,
        nodes: 0,
        restarts: completed,
    }
}

/// Pair-swap steepest descent; single flips are added for odd `n`. Every
/// accepted move strictly lowers the objective, so the walk terminates.
pub fn local_search<T: Scalar>(cuts: &CutSet<T>, start: Allocation, deadline: &Deadline) -> (Allocation, T) {
    let n = cuts.n();
    let mut x: Vec<i8> = start.as_slice().to_vec();
    let xs = start.to_scalars::<T>();
    let k_count = cuts.len();
    let mut g: Vec<Vec<T>> = cuts.cuts().iter().map(|c| c.matrix.matvec(&xs)).collect();
    let mut f: Vec<T> = g
        .iter()
        .map(|gk| gk.iter().zip(&xs).fold(T::zero(), |s, (&a, &b)| s + a * b))
        .collect();
    let objective = |f: &[T]| -> T {
        cuts.cuts()
            .iter()
            .zip(f)
            .fold(T::neg_infinity(), |m, (c, &fk)| m.max(c.constant + fk))
    };
    let four = T::lit(4.0);
    let eight = T::lit(8.0);
    let two = T::lit(2.0);
    let sgn = |v: i8| if v == 1 { T::one() } else { -T::one() };
    let mut current = objective(&f);
    let mut trial = vec![T::zero(); k_count];
    let mut moves = 0u64;

    loop {
        if moves % 16 == 15 && deadline.expired() {
            break;
        }
        let tol = T::tolerance(1e-12) * (T::one() + current.abs());
        let mut best_move: Option<(usize, Option<usize>, T)> = None;
        let sum: i64 = x.iter().map(|&v| v as i64).sum();
        for i in 0..n {
            let xi = sgn(x[i]);
            // Single flip: only when it keeps |Σx| ≤ 1 (odd n).
            if (sum - 2 * x[i] as i64).abs() <= 1 {
                for (k, c) in cuts.cuts().iter().enumerate() {
                    trial[k] = f[k] - four * xi * g[k][i] + four * c.matrix[(i, i)];
                }
                let v = objective(&trial);
                if v < current - tol && best_move.as_ref().is_none_or(|b| v < b.2) {
                    best_move = Some((i, None, v));
                }
            }
            if x[i] != 1 {
                continue;
            }
            for j in 0..n {
                if x[j] != -1 {
                    continue;
                }
                let xj = -T::one();
                for (k, c) in cuts.cuts().iter().enumerate() {
                    let a = &c.matrix;
                    trial[k] = f[k] - four * xi * g[k][i] - four * xj * g[k][j]
                        + four * (a[(i, i)] + a[(j, j)])
                        + eight * xi * xj * a[(i, j)];
                }
                let v = objective(&trial);
                if v < current - tol && best_move.as_ref().is_none_or(|b| v < b.2) {
                    best_move = Some((i, Some(j), v));
                }
            }
        }
        let Some((i, j, _)) = best_move else { break };
        for idx in std::iter::once(i).chain(j) {
            let xi = sgn(x[idx]);
            for (k, c) in cuts.cuts().iter().enumerate() {
                let a = &c.matrix;
                for (r, gr) in g[k].iter_mut().enumerate() {
                    *gr -= two * xi * a[(r, idx)];
                }
            }
            x[idx] = -x[idx];
        }
        // Recompute from the updated products to avoid drift.
        let xs: Vec<T> = x.iter().map(|&v| sgn(v)).collect();
        for k in 0..k_count {
            f[k] = g[k].iter().zip(&xs).fold(T::zero(), |s, (&a, &b)| s + a * b);
        }
        current = objective(&f);
        moves += 1;
    }
    let alloc = Allocation::new(x).expect("local search keeps ±1 entries");
    let value = cuts.evaluate(&alloc);
    (alloc, value)
}

/// Projected-gradient solver of the box/slab relaxation of each cut.
struct Relaxation<'a, T> {
    cuts: &'a CutSet<T>,
    /// Per-cut gradient Lipschitz constant `2 λ_max(A_k)`.
    lipschitz: Vec<T>,
    /// Sum interval of the full vector: `[0, 0]` for even n, `[−1, 1]` for odd.
    sum_lo: i64,
    sum_hi: i64,
}

struct NodeBound<T> {
    bound: T,
    /// Relaxed point of the cut attaining the bound (full length n).
    point: Vec<T>,
}

const PG_MAX_ITERS: usize = 500;
const PG_REL_TOL: f64 = 1e-7;
const POWER_ITERS: usize = 50;

impl<'a, T: Scalar> Relaxation<'a, T> {
    fn new(cuts: &'a CutSet<T>) -> Self {
        let lipschitz = cuts
            .cuts()
            .iter()
            .map(|c| {
                let est = power_iteration(&c.matrix, POWER_ITERS) * T::lit(1.05);
                let cap = c.matrix.gershgorin_radius();
                T::lit(2.0) * est.min(cap).max(T::epsilon())
            })
            .collect();
        let odd = cuts.n() % 2 == 1;
        Self {
            cuts,
            lipschitz,
            sum_lo: if odd { -1 } else { 0 },
            sum_hi: if odd { 1 } else { 0 },
        }
    }

    /// Lower bound of `max_k (c_k + xᵀA_k x)` over the node's subcube.
    /// Stops early once the bound reaches `prune_at`.
    fn node_bound(&self, partial: &[i8], prune_at: T) -> NodeBound<T> {
        let free: Vec<usize> = (0..partial.len()).filter(|&i| partial[i] == 0).collect();
        let fixed_sum: i64 = partial.iter().map(|&v| v as i64).sum();
        let lo = T::lit((self.sum_lo - fixed_sum) as f64);
        let hi = T::lit((self.sum_hi - fixed_sum) as f64);
        let mut best = NodeBound {
            bound: T::neg_infinity(),
            point: Vec::new(),
        };
        for (k, cut) in self.cuts.cuts().iter().enumerate() {
            let (lb, point) = self.solve_cut(&cut.matrix, self.lipschitz[k], partial, &free, lo, hi, prune_at - cut.constant);
            let b = cut.constant + lb;
            if b > best.bound {
                best = NodeBound { bound: b, point };
            }
            if best.bound >= prune_at {
                break;
            }
        }
        best
    }

    /// Minimizes `xᵀAx` with fixed coordinates pinned, free ones in
    /// `[−1, 1]` and their sum in `[lo, hi]`. Returns a certified lower
    /// bound and the final iterate.
    #[allow(clippy::too_many_arguments)]
    fn solve_cut(
        &self,
        a: &Matrix<T>,
        lipschitz: T,
        partial: &[i8],
        free: &[usize],
        lo: T,
        hi: T,
        stop_at: T,
    ) -> (T, Vec<T>) {
        let n = partial.len();
        let fixed_vec: Vec<T> = partial
            .iter()
            .map(|&v| match v {
                1 => T::one(),
                -1 => -T::one(),
                _ => T::zero(),
            })
            .collect();
        // b = A x_F restricted to free rows; constant = x_Fᵀ A x_F.
        let af = a.matvec(&fixed_vec);
        let constant = fixed_vec.iter().zip(&af).fold(T::zero(), |s, (&x, &y)| s + x * y);
        let mut full = fixed_vec.clone();
        if free.is_empty() {
            return (constant, full);
        }
        let two = T::lit(2.0);
        let u = free.len();
        let b: Vec<T> = free.iter().map(|&i| af[i]).collect();
        // Start from the centre of the slab.
        let mid = (lo + hi) / two / T::count(u);
        let mut y = project_box_slab(&vec![mid; u], lo, hi);
        let a_ff = |y: &[T]| -> Vec<T> {
            free.iter()
                .map(|&i| {
                    let row = a.row(i);
                    free.iter().zip(y).fold(T::zero(), |s, (&j, &yj)| s + row[j] * yj)
                })
                .collect()
        };
        let value_grad = |y: &[T]| -> (T, Vec<T>) {
            let ay = a_ff(y);
            let quad = y.iter().zip(&ay).fold(T::zero(), |s, (&p, &q)| s + p * q);
            let lin = y.iter().zip(&b).fold(T::zero(), |s, (&p, &q)| s + p * q);
            let grad = ay.iter().zip(&b).map(|(&p, &q)| two * (p + q)).collect();
            (constant + quad + two * lin, grad)
        };
        let mut step = T::one() / lipschitz;
        let (mut fval, mut grad) = value_grad(&y);
        let mut certified = certify(fval, &grad, &y, lo, hi);
        let mut it = 0;
        while it < PG_MAX_ITERS && certified < stop_at {
            it += 1;
            let trial: Vec<T> = y.iter().zip(&grad).map(|(&v, &g)| v - step * g).collect();
            let next = project_box_slab(&trial, lo, hi);
            let (nf, ng) = value_grad(&next);
            if nf > fval {
                // The Lipschitz estimate was low: backtrack.
                step /= two;
                continue;
            }
            let improvement = fval - nf;
            y = next;
            fval = nf;
            grad = ng;
            let stalled = improvement <= T::tolerance(PG_REL_TOL) * (T::one() + fval.abs());
            if stalled || it % 10 == 0 {
                certified = certified.max(certify(fval, &grad, &y, lo, hi));
            }
            if stalled {
                break;
            }
        }
        certified = certified.max(certify(fval, &grad, &y, lo, hi));
        for (&i, &v) in free.iter().zip(&y) {
            full[i] = v;
        }
        debug_assert_eq!(full.len(), n);
        (certified, full)
    }
}

/// `f(y) + min_{w ∈ C} ∇f(y)ᵀ(w − y)`: a lower bound on `min_C f` for convex
/// `f`, whatever `y` is.
fn certify<T: Scalar>(fval: T, grad: &[T], y: &[T], lo: T, hi: T) -> T {
    let gy = grad.iter().zip(y).fold(T::zero(), |s, (&g, &v)| s + g * v);
    fval + linear_min_box_slab(grad, lo, hi) - gy
}

/// `min gᵀw` over `w ∈ [−1, 1]^u` with `Σw ∈ [lo, hi]`.
pub(crate) fn linear_min_box_slab<T: Scalar>(g: &[T], lo: T, hi: T) -> T {
    let mut w: Vec<T> = g
        .iter()
        .map(|&gi| if gi > T::zero() { -T::one() } else { T::one() })
        .collect();
    let sum: T = w.iter().copied().sum();
    let two = T::lit(2.0);
    if sum < lo {
        // Raise the cheapest −1 entries (smallest nonnegative gradient).
        let mut idx: Vec<usize> = (0..g.len()).filter(|&i| w[i] < T::zero()).collect();
        idx.sort_by(|&a, &b| g[a].partial_cmp(&g[b]).unwrap_or(Ordering::Equal));
        let mut need = lo - sum;
        for i in idx {
            if need <= T::zero() {
                break;
            }
            let d = need.min(two);
            w[i] += d;
            need -= d;
        }
    } else if sum > hi {
        let mut idx: Vec<usize> = (0..g.len()).filter(|&i| w[i] > T::zero()).collect();
        idx.sort_by(|&a, &b| g[b].partial_cmp(&g[a]).unwrap_or(Ordering::Equal));
        let mut need = sum - hi;
        for i in idx {
            if need <= T::zero() {
                break;
            }
            let d = need.min(two);
            w[i] -= d;
            need -= d;
        }
    }
    g.iter().zip(&w).fold(T::zero(), |s, (&a, &b)| s + a * b)
}

/// Euclidean projection onto `[−1, 1]^u ∩ {Σw ∈ [lo, hi]}` via bisection on
/// the shift multiplier.
pub(crate) fn project_box_slab<T: Scalar>(v: &[T], lo: T, hi: T) -> Vec<T> {
    let clip = |t: T| -> Vec<T> { v.iter().map(|&x| (x - t).max(-T::one()).min(T::one())).collect() };
    let sum_at = |t: T| -> T { v.iter().map(|&x| (x - t).max(-T::one()).min(T::one())).sum() };
    let s0 = sum_at(T::zero());
    let target = if s0 > hi {
        hi
    } else if s0 < lo {
        lo
    } else {
        return clip(T::zero());
    };
    // Σ clip(v − t) is non-increasing in t.
    let spread = v.iter().fold(T::zero(), |m, &x| m.max(x.abs())) + T::lit(2.0);
    let (mut a, mut b) = (-spread, spread);
    for _ in 0..200 {
        let mid = (a + b) / T::lit(2.0);
        if sum_at(mid) > target {
            a = mid;
        } else {
            b = mid;
        }
        if b - a <= T::epsilon() * spread {
            break;
        }
    }
    clip((a + b) / T::lit(2.0))
}

/// Whether some ±1 completion of `u` free entries sums into `[lo, hi]`.
fn completion_feasible(u: i64, lo: i64, hi: i64) -> bool {
    let lo = lo.max(-u);
    let hi = hi.min(u);
    if lo > hi {
        return false;
    }
    // Reachable sums are −u, −u+2, …, u.
    let first = if (lo + u) % 2 == 0 { lo } else { lo + 1 };
    first <= hi
}

struct OpenNode<T> {
    bound: T,
    id: u64,
    partial: Vec<i8>,
    point: Vec<T>,
}

impl<T: Scalar> PartialEq for OpenNode<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<T: Scalar> Eq for OpenNode<T> {}
impl<T: Scalar> PartialOrd for OpenNode<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Scalar> Ord for OpenNode<T> {
    // Max-heap: the smallest bound, then the oldest node, pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .partial_cmp(&self.bound)
            .unwrap_or(Ordering::Equal)
            .then(other.id.cmp(&self.id))
    }
}

/// Rounds a relaxed point to a balanced ±1 completion of `partial`.
fn round_completion<T: Scalar>(partial: &[i8], point: &[T], sum_lo: i64, sum_hi: i64) -> Option<Allocation> {
    let free: Vec<usize> = (0..partial.len()).filter(|&i| partial[i] == 0).collect();
    let u = free.len() as i64;
    let fixed_sum: i64 = partial.iter().map(|&v| v as i64).sum();
    let relaxed: T = free.iter().map(|&i| point[i]).sum();
    let relaxed = relaxed.as_f64();
    // Feasible free sums, closest to the relaxed sum.
    let target = (-u..=u)
        .step_by(2)
        .filter(|t| (sum_lo..=sum_hi).contains(&(t + fixed_sum)))
        .min_by(|a, b| {
            ((*a as f64) - relaxed)
                .abs()
                .partial_cmp(&((*b as f64) - relaxed).abs())
                .unwrap_or(Ordering::Equal)
        })?;
    let plus = ((u + target) / 2) as usize;
    let mut order = free.clone();
    order.sort_by(|&a, &b| point[b].partial_cmp(&point[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    let mut x = partial.to_vec();
    for (rank, &i) in order.iter().enumerate() {
        x[i] = if rank < plus { 1 } else { -1 };
    }
    Allocation::new(x).ok()
}

fn branch_and_bound<T: Scalar>(
    cuts: &CutSet<T>,
    limits: &SolveLimits,
    deadline: &Deadline,
    seed: BqpResult<T>,
) -> BqpResult<T> {
    let n = cuts.n();
    let relax = Relaxation::new(cuts);
    let eps = T::lit(limits.epsilon);
    let mut incumbent = seed.x_star;
    let mut best = seed.value;
    let mut pruned_floor = T::infinity();
    let mut nodes = 0u64;
    let mut next_id = 0u64;
    let mut heap = BinaryHeap::new();

    let update = |x: Allocation, incumbent: &mut Allocation, best: &mut T| {
        let x = x.canonical();
        let v = cuts.evaluate(&x);
        if prefer(v, &x, *best, incumbent) {
            *best = v;
            *incumbent = x;
        }
    };

    // x and −x are equivalent; pin the first coordinate.
    let mut root = vec![0i8; n];
    root[0] = 1;
    let rb = relax.node_bound(&root, best - eps);
    nodes += 1;
    if let Some(x) = round_completion(&root, &rb.point, relax.sum_lo, relax.sum_hi) {
        update(x, &mut incumbent, &mut best);
    }
    if rb.bound >= best - eps {
        pruned_floor = pruned_floor.min(rb.bound);
    } else {
        heap.push(OpenNode {
            bound: rb.bound,
            id: next_id,
            partial: root,
            point: rb.point,
        });
        next_id += 1;
    }

    let mut stopped = false;
    while let Some(node) = heap.pop() {
        if node.bound >= best - eps {
            pruned_floor = pruned_floor.min(node.bound);
            continue;
        }
        if limits.node_limit.is_some_and(|l| nodes >= l) || deadline.expired() {
            heap.push(node);
            stopped = true;
            break;
        }
        // Most undecided coordinate: relaxed value closest to zero.
        let branch = (0..n)
            .filter(|&i| node.partial[i] == 0)
            .min_by(|&a, &b| {
                node.point[a]
                    .abs()
                    .partial_cmp(&node.point[b].abs())
                    .unwrap_or(Ordering::Equal)
                    .then(a.cmp(&b))
            })
            .expect("open nodes have a free coordinate");
        for s in [1i8, -1] {
            let mut child = node.partial.clone();
            child[branch] = s;
            let u = child.iter().filter(|&&v| v == 0).count() as i64;
            let fixed_sum: i64 = child.iter().map(|&v| v as i64).sum();
            if !completion_feasible(u, relax.sum_lo - fixed_sum, relax.sum_hi - fixed_sum) {
                continue;
            }
            nodes += 1;
            if u == 0 {
                update(Allocation::new(child).expect("±1"), &mut incumbent, &mut best);
                continue;
            }
            let cb = relax.node_bound(&child, best - eps);
            let bound = cb.bound.max(node.bound);
            if let Some(x) = round_completion(&child, &cb.point, relax.sum_lo, relax.sum_hi) {
                update(x, &mut incumbent, &mut best);
            }
            if bound >= best - eps {
                pruned_floor = pruned_floor.min(bound);
            } else {
                heap.push(OpenNode {
                    bound,
                    id: next_id,
                    partial: child,
                    point: cb.point,
                });
                next_id += 1;
            }
        }
    }

    let open_floor = heap.iter().map(|n| n.bound).fold(T::infinity(), T::min);
    let lower_bound = best.min(pruned_floor).min(open_floor);
    BqpResult {
        x_star: incumbent,
        value: best,
        lower_bound,
        status: if stopped { BqpStatus::Incumbent } else { BqpStatus::Optimal },
        nodes,
        restarts: seed.restarts,
    }
}

/// Lower bound of the relaxation over the subcube fixed by `partial`
/// (`0` marks a free coordinate). Exposed for soundness checks.
pub fn relaxation_bound<T: Scalar>(cuts: &CutSet<T>, partial: &[i8]) -> T {
    Relaxation::new(cuts).node_bound(partial, T::infinity()).bound
}
