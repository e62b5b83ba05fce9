//! Variational quantum policy iteration.
//!
//! Each iteration assembles the Bellman system of the current policy,
//! trains the ansatz on it, reads out the solution state (sampled counts or
//! exact probabilities) and takes the per-state argmax as the next policy. With warm start the
//! trained parameters seed the next iteration's optimizer.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mdp::{
    argmax_first, assemble_lse, greedy_improvement, solve_exact, DeterministicPolicy, Mdp,
};
use crate::seeding::derive_seed;
use crate::sim::{sample_counts, StateVector};
use crate::vls::{solution_state, train, Init, TrainConfig, VlsProblem};

pub const DEFAULT_SHOTS: usize = 1000;
pub const DEFAULT_MAX_ITERATIONS: usize = 30;
pub const DEFAULT_SUCCESS_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EvaluationMode {
    Variational { train: TrainConfig, depth: usize },
    /// Direct solve and greedy improvement, no sampling.
    Exact,
}

/// How `M(s,a)` is obtained from the prepared state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tomography {
    /// Categorical sampling with a fixed shot budget.
    Sampled { shots: usize },
    /// The infinite-shot limit: `M(s,a) = |x_{s,a}|²`.
    ExactProbabilities,
}

impl Default for Tomography {
    fn default() -> Self {
        Self::Sampled {
            shots: DEFAULT_SHOTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpiConfig {
    pub tomography: Tomography,
    pub warm_start: bool,
    pub max_iterations: usize,
    pub mode: EvaluationMode,
    pub success_tolerance: f64,
    pub seed: u64,
}

impl QpiConfig {
    pub fn variational(depth: usize, train: TrainConfig, warm_start: bool, seed: u64) -> Self {
        Self {
            tomography: Tomography::default(),
            warm_start,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            mode: EvaluationMode::Variational { train, depth },
            success_tolerance: DEFAULT_SUCCESS_TOLERANCE,
            seed,
        }
    }

    pub fn exact() -> Self {
        Self {
            tomography: Tomography::default(),
            warm_start: false,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            mode: EvaluationMode::Exact,
            success_tolerance: DEFAULT_SUCCESS_TOLERANCE,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tomography == (Tomography::Sampled { shots: 0 }) {
            return Err(invalid("shots must be at least 1"));
        }
        if self.max_iterations == 0 {
            return Err(invalid("max_iterations must be at least 1"));
        }
        if !(self.success_tolerance >= 0.0) {
            return Err(invalid("success tolerance must be non-negative"));
        }
        if let EvaluationMode::Variational { train, depth } = &self.mode {
            train.validate()?;
            if *depth == 0 {
                return Err(invalid("ansatz depth must be at least 1"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// 1-based.
    pub index: usize,
    pub policy_before: DeterministicPolicy,
    pub policy_after: DeterministicPolicy,
    /// Optimizer updates (0 in exact mode).
    pub steps: usize,
    /// `None` in exact mode.
    pub final_loss: Option<f64>,
    pub loss_trace: Vec<f64>,
    pub training_converged: bool,
    /// Sampled `M(s,a)` over the padded register; empty in exact evaluation
    /// mode and for exact-probability tomography.
    pub counts: Vec<usize>,
    pub parameters: Vec<f64>,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpiRun {
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
    pub total_steps: usize,
}

impl QpiRun {
    pub fn final_policy(&self) -> &DeterministicPolicy {
        &self
            .iterations
            .last()
            .expect("a run has at least one iteration")
            .policy_after
    }

    /// The initial policy followed by every improved policy.
    pub fn policy_sequence(&self) -> Vec<DeterministicPolicy> {
        let mut seq = vec![self.iterations[0].policy_before.clone()];
        seq.extend(self.iterations.iter().map(|r| r.policy_after.clone()));
        seq
    }
}

/// Samples `state` and takes the per-state argmax of `M(s,a)`.
pub fn tomography_policy(
    state: &StateVector,
    mdp: &Mdp,
    shots: usize,
    seed: u64,
) -> Result<(Vec<usize>, DeterministicPolicy)> {
    let n = mdp.system_size();
    if state.dim() < n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: state.dim(),
        });
    }
    let counts = sample_counts(state, shots, seed);
    let policy = policy_from_counts(&counts, mdp, shots)?;
    Ok((counts, policy))
}

/// Argmax over counts with ties toward the smallest action; terminal states
/// get action 0. Mass on padding indices above 10% of `shots` means the
/// solver failed.
pub fn policy_from_counts(counts: &[usize], mdp: &Mdp, shots: usize) -> Result<DeterministicPolicy> {
    let padding: usize = counts[mdp.system_size()..].iter().sum();
    if padding * 10 > shots {
        return Err(Error::PaddingMass { padding, shots });
    }
    greedy_from(counts, mdp)
}

/// Argmax over `|x_{s,a}|²` directly, with the same tie-break and padding
/// rule as [`policy_from_counts`].
pub fn policy_from_probabilities(state: &StateVector, mdp: &Mdp) -> Result<DeterministicPolicy> {
    let n = mdp.system_size();
    if state.dim() < n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: state.dim(),
        });
    }
    let probs = state.probabilities();
    let padding: f64 = probs[n..].iter().sum();
    if padding > 0.1 {
        return Err(Error::PaddingProbability(padding));
    }
    greedy_from(&probs, mdp)
}

fn greedy_from<T: PartialOrd + Copy>(m: &[T], mdp: &Mdp) -> Result<DeterministicPolicy> {
    let na = mdp.num_actions();
    let actions = (0..mdp.num_states())
        .map(|s| {
            if mdp.is_terminal(s) {
                0
            } else {
                argmax_first(&m[s * na..(s + 1) * na])
            }
        })
        .collect();
    DeterministicPolicy::new(actions, na)
}

/// Whether `policy` is greedy within `tolerance` for the exact `Q` of
/// `evaluated` on every non-terminal state. Values are compared on the scale
/// of measured frequencies, `Q(s,a)²/‖Q‖²` (sign kept so round-off below
/// zero cannot reorder actions).
pub fn score_success(
    policy: &DeterministicPolicy,
    evaluated: &DeterministicPolicy,
    mdp: &Mdp,
    tolerance: f64,
) -> Result<bool> {
    let q = solve_exact(&assemble_lse(mdp, evaluated))?;
    let norm_sq = q.norm_squared();
    let scale = if norm_sq > 0.0 { 1.0 / norm_sq } else { 0.0 };
    let na = mdp.num_actions();
    Ok((0..mdp.num_states())
        .filter(|&s| !mdp.is_terminal(s))
        .all(|s| {
            let freq: Vec<f64> = q.as_slice()[s * na..(s + 1) * na]
                .iter()
                .map(|v| v * v.abs() * scale)
                .collect();
            let best = freq.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            freq[policy.action(s)] >= best - tolerance
        }))
}

/// Seeds of iteration `index` (1-based): `(parameter init, sampling)`.
pub fn iteration_seeds(seed: u64, index: usize) -> (u64, u64) {
    (
        derive_seed(&[seed, index as u64, 0]),
        derive_seed(&[seed, index as u64, 1]),
    )
}

/// One evaluate-and-improve cycle on `policy`. `warm` replaces the random
/// initialization in variational mode.
pub fn run_iteration(
    mdp: &Mdp,
    policy: &DeterministicPolicy,
    cfg: &QpiConfig,
    index: usize,
    warm: Option<&[f64]>,
) -> Result<IterationRecord> {
    let lse = assemble_lse(mdp, policy);
    let (init_seed, sample_seed) = iteration_seeds(cfg.seed, index);
    let mut record = IterationRecord {
        index,
        policy_before: policy.clone(),
        policy_after: policy.clone(),
        steps: 0,
        final_loss: None,
        loss_trace: Vec::new(),
        training_converged: true,
        counts: Vec::new(),
        parameters: Vec::new(),
        success: false,
    };
    match &cfg.mode {
        EvaluationMode::Exact => {
            let q = solve_exact(&lse)?;
            record.policy_after = greedy_improvement(q.as_slice(), mdp);
        }
        EvaluationMode::Variational { train: base, depth } => {
            let problem = VlsProblem::new(&lse.matrix, &lse.rhs, *depth)?;
            let tc = TrainConfig {
                seed: init_seed,
                init: match warm {
                    Some(a) => Init::WarmStart(a.to_vec()),
                    None => Init::Random,
                },
                ..base.clone()
            };
            let result = train(&problem, &tc)?;
            let state = solution_state(&problem, &result.final_parameters)?;
            record.policy_after = match cfg.tomography {
                Tomography::Sampled { shots } => {
                    let (counts, next) = tomography_policy(&state, mdp, shots, sample_seed)?;
                    record.counts = counts;
                    next
                }
                Tomography::ExactProbabilities => policy_from_probabilities(&state, mdp)?,
            };
            record.steps = result.steps_taken;
            record.final_loss = Some(result.final_loss());
            record.training_converged = result.converged;
            record.parameters = result.final_parameters;
            record.loss_trace = result.loss_trace;
        }
    }
    record.success = score_success(&record.policy_after, policy, mdp, cfg.success_tolerance)?;
    Ok(record)
}

pub fn run_qpi(mdp: &Mdp, initial: &DeterministicPolicy, cfg: &QpiConfig) -> Result<QpiRun> {
    cfg.validate()?;
    if initial.len() != mdp.num_states() {
        return Err(Error::DimensionMismatch {
            expected: mdp.num_states(),
            found: initial.len(),
        });
    }
    let mut iterations: Vec<IterationRecord> = Vec::new();
    let mut policy = initial.clone();
    let mut converged = false;
    for index in 1..=cfg.max_iterations {
        let warm = match iterations.last() {
            Some(prev) if cfg.warm_start => Some(prev.parameters.as_slice()),
            _ => None,
        };
        let record = run_iteration(mdp, &policy, cfg, index, warm)?;
        let done = record.policy_after.agrees_on_nonterminal(&policy, mdp);
        policy = record.policy_after.clone();
        iterations.push(record);
        if done {
            converged = true;
            break;
        }
    }
    let total_steps = iterations.iter().map(|r| r.steps).sum();
    Ok(QpiRun {
        iterations,
        converged,
        total_steps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLogRow {
    pub iteration: usize,
    pub steps: usize,
    pub final_loss: Option<f64>,
    pub success: bool,
    pub policy: String,
}

pub fn run_log_rows(run: &QpiRun) -> Vec<RunLogRow> {
    run.iterations
        .iter()
        .map(|r| RunLogRow {
            iteration: r.index,
            steps: r.steps,
            final_loss: r.final_loss,
            success: r.success,
            policy: r.policy_after.to_action_string(),
        })
        .collect()
}

/// Columns `iteration,steps,final_loss,success,policy`.
pub fn write_run_log<W: Write>(writer: W, run: &QpiRun) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in run_log_rows(run) {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_run_log<R: Read>(reader: R) -> Result<Vec<RunLogRow>> {
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
