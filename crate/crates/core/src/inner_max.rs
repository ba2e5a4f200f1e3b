//! Worst-case covariate search: maximize `zᵀMz` over
//! `z ∈ {1} × {−1, 1}^{p−1}` for a symmetric `M`.
//!
//! Up to [`ENUMERATION_MAX_FREE`] free coordinates the hypercube is walked in
//! Gray-code order, updating `Mz` in `O(p)` per flip. Beyond that a
//! depth-first branch-and-bound is used whose node bound relaxes every
//! product `zᵢzⱼ` involving a free coordinate to `[−1, 1]`.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DesignError, Result};
use crate::limits::{Deadline, SolveLimits};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Largest number of free coordinates solved by full enumeration.
pub const ENUMERATION_MAX_FREE: usize = 22;

/// Free-coordinate count from which enumeration is split into shards.
const SHARD_MIN_FREE: usize = 14;
/// Number of high free bits fixed per shard (64 shards). Fixed so results do
/// not depend on the thread count.
const SHARD_BITS: usize = 6;

/// Symmetric matrix whose quadratic form is maximized.
#[derive(Clone, Debug)]
pub struct InnerMaxProblem<T> {
    m: Matrix<T>,
}

impl<T: Scalar> InnerMaxProblem<T> {
    pub fn new(mut m: Matrix<T>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(DesignError::InvalidInput("inner problem needs a nonempty square matrix".into()));
        }
        if !m.is_finite() {
            return Err(DesignError::InvalidInput("inner problem matrix is not finite".into()));
        }
        let tol = T::tolerance(1e-12) * (T::one() + m.max_abs());
        if m.asymmetry() > tol {
            return Err(DesignError::InvalidInput("inner problem matrix is not symmetric".into()));
        }
        m.symmetrize();
        Ok(Self { m })
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.m
    }

    /// Σ|M_ij|, an upper bound on |zᵀMz| used to scale tolerances.
    fn scale(&self) -> T {
        self.m.as_slice().iter().fold(T::zero(), |s, &a| s + a.abs())
    }

    fn tie_tolerance(&self) -> T {
        T::tolerance(1e-11) * (T::one() + self.scale())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerMethod {
    Enumeration,
    BranchAndBound,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InnerMaxResult<T> {
    pub z_star: Vec<T>,
    pub value: T,
    pub nodes_explored: u64,
    pub method: InnerMethod,
    /// False when a limit stopped branch-and-bound early.
    pub optimal: bool,
    /// Upper bound minus `value`; zero when optimal.
    pub gap: T,
}

/// Lexicographic comparison of ±1 vectors with −1 ordered first.
pub fn lex_cmp<T: Scalar>(a: &[T], b: &[T]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// Whether `(value, z)` should replace the incumbent `(best, best_z)` under
/// "largest value, ties to the lexicographically smallest z".
#[inline]
pub(crate) fn beats<T: Scalar>(value: T, z: &[T], best: T, best_z: &[T], tol: T) -> bool {
    if value > best + tol {
        true
    } else if value >= best - tol {
        lex_cmp(z, best_z) == Ordering::Less
    } else {
        false
    }
}

/// Solves with the default method for the problem size.
pub fn solve_inner_max<T: Scalar>(problem: &InnerMaxProblem<T>, limits: &SolveLimits) -> InnerMaxResult<T> {
    let method = if problem.dim() - 1 <= ENUMERATION_MAX_FREE {
        InnerMethod::Enumeration
    } else {
        InnerMethod::BranchAndBound
    };
    solve_inner_max_with(problem, limits, method)
}

/// Solves with an explicitly chosen method. Enumeration ignores limits.
pub fn solve_inner_max_with<T: Scalar>(
    problem: &InnerMaxProblem<T>,
    limits: &SolveLimits,
    method: InnerMethod,
) -> InnerMaxResult<T> {
    match method {
        InnerMethod::Enumeration => enumerate(problem),
        InnerMethod::BranchAndBound => branch_and_bound(problem, limits),
    }
}

fn signed<T: Scalar>(negative: bool) -> T {
    if negative {
        -T::one()
    } else {
        T::one()
    }
}

fn enumerate<T: Scalar>(problem: &InnerMaxProblem<T>) -> InnerMaxResult<T> {
    let p = problem.dim();
    let free = p - 1;
    assert!(free < 63, "enumeration beyond 62 free coordinates");
    let tol = problem.tie_tolerance();
    let shard_bits = if free >= SHARD_MIN_FREE { SHARD_BITS } else { 0 };
    let low_bits = free - shard_bits;

    let shard = |s: u64| -> (T, Vec<T>) {
        // Free coordinate k (1-based) is bit k-1; shard fixes the top bits.
        let mut z: Vec<T> = (0..p)
            .map(|k| {
                if k == 0 || k <= low_bits {
                    T::one()
                } else {
                    signed((s >> (k - 1 - low_bits)) & 1 == 1)
                }
            })
            .collect();
        let m = &problem.m;
        let mut g = m.matvec(&z);
        let mut f = crate::linalg::dot(&z, &g);
        let mut best = f;
        let mut best_z = z.clone();
        let four = T::lit(4.0);
        let two = T::lit(2.0);
        for t in 1u64..(1u64 << low_bits) {
            let k = t.trailing_zeros() as usize + 1;
            let zk = z[k];
            f = f - four * zk * g[k] + four * m[(k, k)];
            for (i, gi) in g.iter_mut().enumerate() {
                *gi -= two * zk * m[(i, k)];
            }
            z[k] = -zk;
            if beats(f, &z, best, &best_z, tol) {
                best = f;
                best_z.copy_from_slice(&z);
            }
        }
        (best, best_z)
    };

    let shards: Vec<(T, Vec<T>)> = if shard_bits > 0 {
        (0..1u64 << shard_bits).into_par_iter().map(shard).collect()
    } else {
        vec![shard(0)]
    };
    let (mut best, mut best_z) = shards[0].clone();
    for (v, z) in shards.into_iter().skip(1) {
        if beats(v, &z, best, &best_z, tol) {
            best = v;
            best_z = z;
        }
    }
    let value = problem.m.quad_form(&best_z);
    InnerMaxResult {
        z_star: best_z,
        value,
        nodes_explored: 1u64 << free,
        method: InnerMethod::Enumeration,
        optimal: true,
        gap: T::zero(),
    }
}

/// Upper bound on `zᵀMz` over the subcube where `partial[i] ∈ {−1, +1}` is
/// fixed and `partial[i] == 0` is free.
///
/// Fixed-by-fixed products are exact. A product of a fixed and a free
/// coordinate is linear in the free one, so the linear terms of each free
/// coordinate are collected and bounded by their absolute value. Free-by-free
/// products are relaxed to `[−1, 1]` and free diagonal terms contribute
/// `M_ii` exactly.
pub fn node_upper_bound<T: Scalar>(m: &Matrix<T>, partial: &[i8]) -> T {
    let p = m.nrows();
    let two = T::lit(2.0);
    let mut bound = T::zero();
    for i in 0..p {
        let zi = partial[i];
        if zi != 0 {
            let zi = signed::<T>(zi < 0);
            for j in 0..p {
                let zj = partial[j];
                if zj != 0 {
                    bound += m[(i, j)] * zi * signed::<T>(zj < 0);
                }
            }
        }
    }
    for j in 0..p {
        if partial[j] != 0 {
            continue;
        }
        let mut lin = T::zero();
        for i in 0..p {
            if partial[i] != 0 {
                lin += m[(i, j)] * signed::<T>(partial[i] < 0);
            }
        }
        bound += two * lin.abs() + m[(j, j)];
        for k in (j + 1)..p {
            if partial[k] == 0 {
                bound += two * m[(j, k)].abs();
            }
        }
    }
    bound
}

fn to_scalars<T: Scalar>(z: &[i8]) -> Vec<T> {
    z.iter().map(|&v| signed::<T>(v < 0)).collect()
}

/// Single-flip ascent from the all-ones vector; seeds the incumbent.
fn greedy_incumbent<T: Scalar>(m: &Matrix<T>) -> Vec<T> {
    let p = m.nrows();
    let mut z = vec![T::one(); p];
    let mut g = m.matvec(&z);
    let four = T::lit(4.0);
    let two = T::lit(2.0);
    loop {
        let mut best_k = None;
        let mut best_gain = T::zero();
        for k in 1..p {
            let gain = -four * z[k] * g[k] + four * m[(k, k)];
            if gain > best_gain {
                best_gain = gain;
                best_k = Some(k);
            }
        }
        let Some(k) = best_k else { break };
        let zk = z[k];
        for (i, gi) in g.iter_mut().enumerate() {
            *gi -= two * zk * m[(i, k)];
        }
        z[k] = -zk;
    }
    z
}

struct Node {
    partial: Vec<i8>,
    bound: f64,
}

fn branch_and_bound<T: Scalar>(problem: &InnerMaxProblem<T>, limits: &SolveLimits) -> InnerMaxResult<T> {
    let m = &problem.m;
    let p = problem.dim();
    let tol = problem.tie_tolerance();
    let deadline: Deadline = limits.deadline();

    let mut best_z = greedy_incumbent(m);
    let mut best = m.quad_form(&best_z);

    let mut root = vec![0i8; p];
    root[0] = 1;
    let mut stack = vec![Node {
        bound: node_upper_bound(m, &root).as_f64(),
        partial: root,
    }];
    let mut nodes = 0u64;
    let mut stopped = false;

    while let Some(node) = stack.pop() {
        if T::lit(node.bound) <= best + tol {
            continue;
        }
        if limits.node_limit.is_some_and(|l| nodes >= l) || (nodes.is_multiple_of(256) && deadline.expired()) {
            stack.push(node);
            stopped = true;
            break;
        }
        nodes += 1;
        let partial = node.partial;
        // Branch on the free coordinate with the largest absolute row mass
        // over the remaining free coordinates.
        let free: Vec<usize> = (0..p).filter(|&i| partial[i] == 0).collect();
        let Some(&branch) = free.iter().max_by(|&&a, &&b| {
            let mass = |i: usize| {
                free.iter()
                    .filter(|&&j| j != i)
                    .fold(T::zero(), |s, &j| s + m[(i, j)].abs())
            };
            mass(a)
                .partial_cmp(&mass(b))
                .unwrap_or(Ordering::Equal)
                .then(b.cmp(&a))
        }) else {
            let z = to_scalars::<T>(&partial);
            let v = m.quad_form(&z);
            if beats(v, &z, best, &best_z, tol) {
                best = v;
                best_z = z;
            }
            continue;
        };

        let mut children: Vec<Node> = [-1i8, 1]
            .into_iter()
            .map(|s| {
                let mut c = partial.clone();
                c[branch] = s;
                Node {
                    bound: node_upper_bound(m, &c).as_f64(),
                    partial: c,
                }
            })
            .collect();
        // Explore the child with the larger bound first (pushed last);
        // on equal bounds the −1 child goes first.
        if children[1].bound > children[0].bound {
            children.swap(0, 1);
        }
        for c in children.into_iter().rev() {
            if free.len() == 1 {
                let z = to_scalars::<T>(&c.partial);
                let v = m.quad_form(&z);
                nodes += 1;
                if beats(v, &z, best, &best_z, tol) {
                    best = v;
                    best_z = z;
                }
            } else if T::lit(c.bound) > best + tol {
                stack.push(c);
            }
        }
    }

    let open_bound = stack
        .iter()
        .map(|n| T::lit(n.bound))
        .fold(best, T::max);
    let value = m.quad_form(&best_z);
    InnerMaxResult {
        z_star: best_z,
        value,
        nodes_explored: nodes,
        method: InnerMethod::BranchAndBound,
        optimal: !stopped,
        gap: if stopped { (open_bound - value).max(T::zero()) } else { T::zero() },
    }
}
