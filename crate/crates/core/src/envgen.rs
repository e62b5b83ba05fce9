//! Random row-stochastic transition matrices with local dynamics.
//!
//! Every state `s` reaches a contiguous ring window `{s+1, …, s+w} mod N`
//! with `w = log₂N`. Since column `c` can only be reached from the `w`
//! states preceding it, both the out-degree and the in-degree stay at most
//! `w`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numerics::{sparsity_stats, RealMatrix, ZERO_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DynamicsKind {
    /// A single successor drawn uniformly from the window.
    Deterministic,
    /// Probability `1/w` on every window state.
    UniformLocal,
    /// Probability `∝ exp((1 − 1/β)·d(s, s'))` with ring distance `d`.
    ExponentialLocal { beta: f64 },
}

impl DynamicsKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Deterministic => "deterministic",
            Self::UniformLocal => "uniform",
            Self::ExponentialLocal { .. } => "exponential",
        }
    }

    /// Perturbation parameter for reporting (`0` deterministic, `1` uniform).
    pub fn beta(&self) -> f64 {
        match self {
            Self::Deterministic => 0.0,
            Self::UniformLocal => 1.0,
            Self::ExponentialLocal { beta } => *beta,
        }
    }

    /// Only deterministic dynamics draw from the seed; the other kinds give
    /// the same matrix for every seed.
    pub fn uses_seed(&self) -> bool {
        matches!(self, Self::Deterministic)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalDynamicsSpec {
    pub num_states: usize,
    pub kind: DynamicsKind,
    pub seed: u64,
}

impl LocalDynamicsSpec {
    pub fn window(&self) -> usize {
        self.num_states.trailing_zeros() as usize
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_states;
        if n < 4 || !n.is_power_of_two() {
            return Err(invalid(format!(
                "number of states {n} must be a power of two and at least 4"
            )));
        }
        if let DynamicsKind::ExponentialLocal { beta } = self.kind {
            if !(beta > 0.0 && beta <= 1.0) {
                return Err(invalid(format!("perturbation {beta} outside (0, 1]")));
            }
        }
        Ok(())
    }
}

/// Dense row-stochastic `P_π`.
#[derive(Debug, Clone, PartialEq)]
pub struct RowStochasticMatrix(RealMatrix);

impl RowStochasticMatrix {
    pub fn matrix(&self) -> &RealMatrix {
        &self.0
    }

    pub fn into_inner(self) -> RealMatrix {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// Wraps a matrix without checking stochasticity; used for validation
    /// counterexamples.
    pub fn from_matrix_unchecked(m: RealMatrix) -> Self {
        Self(m)
    }
}

fn ring_distance(a: usize, b: usize, n: usize) -> usize {
    let d = a.abs_diff(b);
    d.min(n - d)
}

pub fn generate(spec: &LocalDynamicsSpec) -> Result<RowStochasticMatrix> {
    spec.validate()?;
    let n = spec.num_states;
    let w = spec.window();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut p = RealMatrix::zeros(n, n);
    for s in 0..n {
        let window = (1..=w).map(|k| (s + k) % n);
        match spec.kind {
            DynamicsKind::Deterministic => {
                let k = rng.random_range(1..=w);
                p[(s, (s + k) % n)] = 1.0;
            }
            DynamicsKind::UniformLocal => {
                for next in window {
                    p[(s, next)] = 1.0 / w as f64;
                }
            }
            DynamicsKind::ExponentialLocal { beta } => {
                let rate = 1.0 - 1.0 / beta;
                let dist: Vec<(usize, usize)> =
                    window.map(|next| (next, ring_distance(s, next, n))).collect();
                // shifted by the nearest distance so small β cannot underflow
                let nearest = dist.iter().map(|&(_, d)| d).min().unwrap_or(0);
                let weights: Vec<(usize, f64)> = dist
                    .into_iter()
                    .map(|(next, d)| (next, (rate * (d - nearest) as f64).exp()))
                    .collect();
                let total: f64 = weights.iter().map(|(_, x)| x).sum();
                for (next, x) in weights {
                    p[(s, next)] = x / total;
                }
            }
        }
    }
    Ok(RowStochasticMatrix(p))
}

/// `I − γP`.
pub fn system_matrix(p: &RowStochasticMatrix, gamma: f64) -> RealMatrix {
    let n = p.dim();
    RealMatrix::identity(n, n) - p.matrix() * gamma
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalityReport {
    pub max_row_nnz: usize,
    pub max_col_nnz: usize,
    /// Every `|S_{s,a}| ≤ log₂N`.
    pub rows_local: bool,
    /// Every `|S̄_{s',a}| ≤ log₂N`.
    pub cols_local: bool,
}

pub fn validate_local(p: &RowStochasticMatrix) -> LocalityReport {
    let stats = sparsity_stats(p.matrix(), ZERO_TOL);
    let cap = (p.dim() as f64).log2();
    LocalityReport {
        max_row_nnz: stats.max_row_nnz,
        max_col_nnz: stats.max_col_nnz,
        rows_local: stats.max_row_nnz as f64 <= cap,
        cols_local: stats.max_col_nnz as f64 <= cap,
    }
}
