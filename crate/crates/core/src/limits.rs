//! Solver budgets shared by the inner maximization, the quadratic engine and
//! the cutting-plane driver.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

/// Default wall-clock budget for a complete solve, in seconds.
pub const DEFAULT_TIME_LIMIT: f64 = 300.0;

/// Problem size up to which `Auto` resolves to exact branch-and-bound.
pub const EXACT_MODE_MAX_N: usize = 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMode {
    /// Exact when `n ≤ 40`, heuristic otherwise.
    Auto,
    Exact,
    Heuristic,
}

impl SolveMode {
    /// Resolves `Auto` for a problem with `n` decision variables.
    pub fn resolve(self, n: usize) -> SolveMode {
        match self {
            SolveMode::Auto if n <= EXACT_MODE_MAX_N => SolveMode::Exact,
            SolveMode::Auto => SolveMode::Heuristic,
            m => m,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveLimits {
    /// Optimality tolerance.
    pub epsilon: f64,
    /// Wall-clock budget in seconds; `None` for unlimited.
    pub time_limit: Option<f64>,
    /// Maximum branch-and-bound nodes; `None` for unlimited.
    pub node_limit: Option<u64>,
    pub seed: u64,
    pub mode: SolveMode,
    /// Heuristic restart count; `None` uses `max(32, n/4)`.
    pub restarts: Option<usize>,
}

impl Default for SolveLimits {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            time_limit: Some(DEFAULT_TIME_LIMIT),
            node_limit: None,
            seed: 0,
            mode: SolveMode::Auto,
            restarts: None,
        }
    }
}

impl SolveLimits {
    pub fn unlimited() -> Self {
        Self {
            time_limit: None,
            ..Self::default()
        }
    }

    pub fn with_mode(mut self, mode: SolveMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_time_limit(mut self, seconds: Option<f64>) -> Self {
        self.time_limit = seconds;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn check(&self) -> crate::Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(crate::DesignError::InvalidInput("epsilon must be positive".into()));
        }
        if let Some(t) = self.time_limit {
            if !(t >= 0.0) {
                return Err(crate::DesignError::InvalidInput("time limit must be non-negative".into()));
            }
        }
        Ok(())
    }

    pub fn deadline(&self) -> Deadline {
        Deadline::new(self.time_limit)
    }
}

/// A start instant plus an optional budget.
#[derive(Clone, Copy, Debug)]
pub struct Deadline {
    start: Instant,
    limit: Option<Duration>,
}

impl Deadline {
    pub fn new(seconds: Option<f64>) -> Self {
        Self {
            start: Instant::now(),
            limit: seconds.map(|s| Duration::from_secs_f64(s.max(0.0))),
        }
    }

    pub fn unlimited() -> Self {
        Self::new(None)
    }

    pub fn expired(&self) -> bool {
        self.limit.is_some_and(|l| self.start.elapsed() >= l)
    }

    /// Remaining budget in seconds; `None` when unlimited.
    pub fn remaining(&self) -> Option<f64> {
        self.limit
            .map(|l| l.saturating_sub(self.start.elapsed()).as_secs_f64())
    }

    pub fn elapsed(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }
}
