//! Treatment allocations and the seeded balanced sampler.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DesignError, Result};
use crate::scalar::Scalar;

/// A ±1 treatment vector, one entry per patient.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<i8>", into = "Vec<i8>")]
pub struct Allocation(Vec<i8>);

impl Allocation {
    pub fn new(x: Vec<i8>) -> Result<Self> {
        if x.is_empty() {
            return Err(DesignError::InvalidAllocation("empty allocation".into()));
        }
        if let Some(i) = x.iter().position(|&v| v != 1 && v != -1) {
            return Err(DesignError::InvalidAllocation(format!(
                "entry {i} is {}, expected ±1",
                x[i]
            )));
        }
        Ok(Self(x))
    }

    /// Like [`Allocation::new`] but also requires `|Σ xᵢ| ≤ 1`.
    pub fn balanced(x: Vec<i8>) -> Result<Self> {
        let a = Self::new(x)?;
        if !a.is_balanced() {
            return Err(DesignError::InvalidAllocation(format!(
                "allocation sum {} violates |Σx| ≤ 1",
                a.sum()
            )));
        }
        Ok(a)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }

    pub fn sum(&self) -> i64 {
        self.0.iter().map(|&v| v as i64).sum()
    }

    /// `|Σ xᵢ| ≤ 1`.
    pub fn is_balanced(&self) -> bool {
        self.sum().abs() <= 1
    }

    pub fn n_plus(&self) -> usize {
        self.0.iter().filter(|&&v| v == 1).count()
    }

    pub fn n_minus(&self) -> usize {
        self.len() - self.n_plus()
    }

    pub fn negated(&self) -> Self {
        Self(self.0.iter().map(|&v| -v).collect())
    }

    /// The representative of `{x, −x}` whose first entry is +1.
    pub fn canonical(&self) -> Self {
        if self.0[0] == 1 {
            self.clone()
        } else {
            self.negated()
        }
    }

    pub fn to_scalars<T: Scalar>(&self) -> Vec<T> {
        self.0
            .iter()
            .map(|&v| if v == 1 { T::one() } else { -T::one() })
            .collect()
    }

    /// Lexicographic order with −1 before +1.
    pub fn lex_cmp(&self, other: &Self) -> Ordering {
        self.0.cmp(&other.0)
    }
}

impl TryFrom<Vec<i8>> for Allocation {
    type Error = DesignError;
    fn try_from(v: Vec<i8>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Allocation> for Vec<i8> {
    fn from(a: Allocation) -> Self {
        a.0
    }
}

/// Draws one uniformly random balanced allocation: ⌈n/2⌉ entries of one
/// sign and ⌊n/2⌋ of the other, the majority sign chosen by a fair coin
/// when `n` is odd.
pub fn draw_balanced<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Allocation {
    let majority: i8 = if n % 2 == 1 && rng.random::<bool>() { -1 } else { 1 };
    let big = n.div_ceil(2);
    let mut x: Vec<i8> = (0..n).map(|i| if i < big { majority } else { -majority }).collect();
    x.shuffle(rng);
    Allocation(x)
}

/// Endless seeded stream of balanced allocations. The first `k` draws
/// equal `random_balanced_allocations(n, k, seed)`.
pub struct BalancedSampler {
    n: usize,
    rng: ChaCha8Rng,
}

impl BalancedSampler {
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            n,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Seeded sampler on an independent ChaCha stream.
    pub fn with_stream(n: usize, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { n, rng }
    }
}

impl Iterator for BalancedSampler {
    type Item = Allocation;
    fn next(&mut self) -> Option<Allocation> {
        Some(draw_balanced(self.n, &mut self.rng))
    }
}

/// Seeded uniformly random balanced allocations.
pub fn random_balanced_allocations(n: usize, replicates: usize, seed: u64) -> Result<Vec<Allocation>> {
    if n < 2 {
        return Err(DesignError::InvalidInput(format!("n = {n} must be at least 2")));
    }
    Ok(BalancedSampler::new(n, seed).take(replicates).collect())
}
