//! Benchmark studies: warm start vs cold start, loss threshold, circuit
//! depth, condition numbers, sparsity and the 8×8 lake.
//!
//! Trials run in parallel, each from its own seed
//! `derive_seed([master, cell, trial])`, and are collected in trial order so
//! every output is independent of scheduling.

use rayon::prelude::*;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::decomp::{decompose, validate};
use crate::envgen::{generate, system_matrix, DynamicsKind, LocalDynamicsSpec};
use crate::error::{invalid, Result};
use crate::mdp::frozen_lake::{build_frozen_lake, FrozenLakeSpec, Layout};
use crate::mdp::{assemble_lse, classical_policy_iteration, DeterministicPolicy, Mdp};
use crate::numerics::{
    bound_empirical, bound_general_local, bound_uniform_local, condition_number, sparsity_stats,
    RealMatrix, ZERO_TOL,
};
use crate::qpi::{
    run_iteration, run_qpi, score_success, QpiConfig, QpiRun, Tomography,
    DEFAULT_MAX_ITERATIONS, DEFAULT_SUCCESS_TOLERANCE,
};
use crate::seeding::derive_seed;
use crate::sim::{qubit_requirements, QubitRequirements};
use crate::vls::TrainConfig;

pub mod plot;
pub mod report;

use plot::{Chart, Series};

pub use report::{
    DecompositionRow, DepthRow, KappaRow, LossTraceRow, SparsityRow, ThresholdRow, WarmStartRow,
};

/// Relative slack when comparing κ against a theorem bound.
pub const BOUND_SLACK: f64 = 1e-9;

/// Training cap of the single-cycle studies.
pub const CYCLE_MAX_STEPS: usize = 10_000;

pub fn trial_seed(master: u64, cell: usize, trial: usize) -> u64 {
    derive_seed(&[master, cell as u64, trial as u64])
}

/// Initial policy of a trial, shared by every arm run from that seed.
pub fn trial_policy(mdp: &Mdp, seed: u64) -> DeterministicPolicy {
    DeterministicPolicy::random(mdp, derive_seed(&[seed, 0]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub mean: f64,
    /// Sample standard deviation; 0 for fewer than two values.
    pub std: f64,
}

pub fn mean_std(values: &[f64]) -> Stats {
    let n = values.len();
    if n == 0 {
        return Stats { mean: f64::NAN, std: f64::NAN };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    Stats { mean, std }
}

fn fraction(flags: impl Iterator<Item = bool>) -> f64 {
    let (hits, total) = flags.fold((0usize, 0usize), |(h, t), f| (h + f as usize, t + 1));
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

fn lake(layout: &Layout, beta: f64, gamma: f64) -> Result<Mdp> {
    build_frozen_lake(&FrozenLakeSpec {
        layout: layout.clone(),
        beta,
        discount: gamma,
    })
}

fn check_trials(trials: usize) -> Result<()> {
    if trials == 0 {
        return Err(invalid("trials must be at least 1"));
    }
    Ok(())
}

fn check_grid<T>(name: &str, grid: &[T]) -> Result<()> {
    if grid.is_empty() {
        return Err(invalid(format!("{name} grid is empty")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// warm start

#[derive(Debug, Clone)]
pub struct WarmStartSpec {
    pub layout: Layout,
    pub beta: f64,
    pub gamma: f64,
    pub depth: usize,
    pub train: TrainConfig,
    pub tomography: Tomography,
    pub max_iterations: usize,
    pub trials: usize,
    pub master_seed: u64,
}

impl WarmStartSpec {
    /// 20 paired runs on the 4×4 lake, β = 0.1.
    pub fn desk() -> Self {
        Self {
            layout: Layout::standard(4).expect("built-in map"),
            beta: 0.1,
            gamma: 0.9,
            depth: 12,
            train: TrainConfig::default(),
            tomography: Tomography::ExactProbabilities,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            trials: 20,
            master_seed: 0,
        }
    }

    pub fn full() -> Self {
        Self {
            trials: 100,
            ..Self::desk()
        }
    }

    fn config(&self, warm: bool, seed: u64) -> QpiConfig {
        QpiConfig {
            tomography: self.tomography,
            max_iterations: self.max_iterations,
            ..QpiConfig::variational(self.depth, self.train.clone(), warm, seed)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    Cold,
    Warm,
}

impl Arm {
    pub fn name(self) -> &'static str {
        match self {
            Self::Cold => "cold",
            Self::Warm => "warm",
        }
    }
}

#[derive(Debug, Clone)]
pub struct PairedTrial {
    pub seed: u64,
    pub cold: QpiRun,
    pub warm: QpiRun,
}

impl PairedTrial {
    pub fn arm(&self, arm: Arm) -> &QpiRun {
        match arm {
            Arm::Cold => &self.cold,
            Arm::Warm => &self.warm,
        }
    }
}

/// One row of the per-iteration table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationSummary {
    pub iteration: usize,
    /// Runs that reached this iteration.
    pub active: usize,
    pub active_fraction: f64,
    pub steps: Stats,
}

#[derive(Debug, Clone)]
pub struct WarmStartResult {
    pub trials: Vec<PairedTrial>,
}

impl WarmStartResult {
    pub fn max_iterations(&self) -> usize {
        self.trials
            .iter()
            .flat_map(|t| [t.cold.iterations.len(), t.warm.iterations.len()])
            .max()
            .unwrap_or(0)
    }

    pub fn iteration_summary(&self, arm: Arm) -> Vec<IterationSummary> {
        let total = self.trials.len();
        (1..=self.max_iterations())
            .map(|it| {
                let steps: Vec<f64> = self
                    .trials
                    .iter()
                    .filter_map(|t| t.arm(arm).iterations.get(it - 1))
                    .map(|r| r.steps as f64)
                    .collect();
                IterationSummary {
                    iteration: it,
                    active: steps.len(),
                    active_fraction: steps.len() as f64 / total as f64,
                    steps: mean_std(&steps),
                }
            })
            .collect()
    }

    pub fn total_steps(&self, arm: Arm) -> Stats {
        let totals: Vec<f64> = self
            .trials
            .iter()
            .map(|t| t.arm(arm).total_steps as f64)
            .collect();
        mean_std(&totals)
    }

    /// Warm-start total steps over cold-start total steps, summed over trials.
    pub fn step_ratio(&self) -> f64 {
        let sum = |arm| -> usize { self.trials.iter().map(|t| t.arm(arm).total_steps).sum() };
        sum(Arm::Warm) as f64 / sum(Arm::Cold) as f64
    }

    /// One row per (trial, arm, iteration) up to the longest run; iterations
    /// a run never reached are written with `active = 0`.
    pub fn rows(&self) -> Vec<WarmStartRow> {
        let max_it = self.max_iterations();
        let mut rows = Vec::new();
        for t in &self.trials {
            for arm in [Arm::Cold, Arm::Warm] {
                let run = t.arm(arm);
                for it in 1..=max_it {
                    let rec = run.iterations.get(it - 1);
                    rows.push(WarmStartRow {
                        seed: t.seed,
                        arm: arm.name().to_string(),
                        iteration: it,
                        steps: rec.map_or(0, |r| r.steps),
                        final_loss: rec.and_then(|r| r.final_loss),
                        active: rec.is_some() as u8,
                    });
                }
            }
        }
        rows
    }

    /// Concatenated loss curves of the first trial in both arms.
    pub fn representative_traces(&self) -> Vec<LossTraceRow> {
        let Some(t) = self.trials.first() else {
            return Vec::new();
        };
        let mut rows = Vec::new();
        for arm in [Arm::Cold, Arm::Warm] {
            let mut step = 0;
            for rec in &t.arm(arm).iterations {
                for (k, &loss) in rec.loss_trace.iter().enumerate() {
                    // the first entry repeats the previous iteration's end
                    if k > 0 || step == 0 {
                        rows.push(LossTraceRow {
                            arm: arm.name().to_string(),
                            iteration: rec.index,
                            step: step + k,
                            loss,
                        });
                    }
                }
                step += rec.steps;
            }
        }
        rows
    }
}

/// Paired runs with identical seeds and initial policies, warm start off
/// and on.
pub fn warm_start_study(spec: &WarmStartSpec) -> Result<WarmStartResult> {
    check_trials(spec.trials)?;
    let mdp = lake(&spec.layout, spec.beta, spec.gamma)?;
    spec.config(false, 0).validate()?;
    let trials = (0..spec.trials)
        .into_par_iter()
        .map(|i| {
            let seed = trial_seed(spec.master_seed, 0, i);
            let initial = trial_policy(&mdp, seed);
            Ok(PairedTrial {
                seed,
                cold: run_qpi(&mdp, &initial, &spec.config(false, seed))?,
                warm: run_qpi(&mdp, &initial, &spec.config(true, seed))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WarmStartResult { trials })
}

// ---------------------------------------------------------------------------
// single policy-evaluation cycles

/// Settings shared by the threshold and depth studies.
#[derive(Debug, Clone)]
pub struct CycleSettings {
    pub layout: Layout,
    pub gamma: f64,
    pub learning_rate: f64,
    pub max_steps: usize,
    pub tomography: Tomography,
    pub success_tolerance: f64,
}

impl Default for CycleSettings {
    fn default() -> Self {
        Self {
            layout: Layout::standard(4).expect("built-in map"),
            gamma: 0.9,
            learning_rate: 0.01,
            max_steps: CYCLE_MAX_STEPS,
            tomography: Tomography::ExactProbabilities,
            success_tolerance: DEFAULT_SUCCESS_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleOutcome {
    pub steps: usize,
    pub converged: bool,
    pub success: bool,
    pub final_loss: f64,
}

/// Trains once on the Bellman system of a random policy and scores the
/// greedy readout against that policy's exact `Q`.
pub fn evaluation_cycle(
    mdp: &Mdp,
    settings: &CycleSettings,
    depth: usize,
    threshold: f64,
    seed: u64,
) -> Result<CycleOutcome> {
    let policy = trial_policy(mdp, seed);
    let train = TrainConfig {
        learning_rate: settings.learning_rate,
        loss_threshold: threshold,
        max_steps: settings.max_steps,
        ..TrainConfig::default()
    };
    let cfg = QpiConfig {
        tomography: settings.tomography,
        success_tolerance: settings.success_tolerance,
        ..QpiConfig::variational(depth, train, false, seed)
    };
    cfg.validate()?;
    let rec = run_iteration(mdp, &policy, &cfg, 1, None)?;
    Ok(CycleOutcome {
        steps: rec.steps,
        converged: rec.training_converged,
        success: rec.success,
        final_loss: rec.final_loss.unwrap_or(0.0),
    })
}

/// Aggregate of one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub trials: usize,
    pub success_rate: f64,
    pub convergence_rate: f64,
    pub steps: Stats,
}

impl CellSummary {
    fn from_outcomes(outcomes: &[CycleOutcome]) -> Self {
        let steps: Vec<f64> = outcomes.iter().map(|o| o.steps as f64).collect();
        Self {
            trials: outcomes.len(),
            success_rate: fraction(outcomes.iter().map(|o| o.success)),
            convergence_rate: fraction(outcomes.iter().map(|o| o.converged)),
            steps: mean_std(&steps),
        }
    }
}

fn run_cells(
    settings: &CycleSettings,
    cells: &[(f64, usize, f64)],
    trials: usize,
    master: u64,
) -> Result<Vec<Vec<CycleOutcome>>> {
    check_trials(trials)?;
    let mdps = cells
        .iter()
        .map(|&(beta, _, _)| lake(&settings.layout, beta, settings.gamma))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..trials).map(move |t| (c, t)))
        .collect();
    let flat = jobs
        .into_par_iter()
        .map(|(c, t)| {
            let (_, depth, threshold) = cells[c];
            evaluation_cycle(&mdps[c], settings, depth, threshold, trial_seed(master, c, t))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(flat.chunks(trials).map(<[_]>::to_vec).collect())
}

#[derive(Debug, Clone)]
pub struct ThresholdSpec {
    pub settings: CycleSettings,
    pub betas: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub depth: usize,
    pub trials: usize,
    pub master_seed: u64,
}

impl ThresholdSpec {
    pub fn desk() -> Self {
        Self {
            settings: CycleSettings::default(),
            betas: vec![0.0, 0.1, 0.3],
            thresholds: vec![0.05, 0.01, 1e-3, 1e-4],
            depth: 12,
            trials: 50,
            master_seed: 0,
        }
    }

    pub fn full() -> Self {
        Self {
            thresholds: vec![
                0.05, 0.02, 0.01, 5e-3, 2e-3, 1e-3, 5e-4, 2e-4, 1e-4, 5e-5, 2e-5,
            ],
            trials: 1000,
            ..Self::desk()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdCell {
    pub beta: f64,
    pub threshold: f64,
    pub summary: CellSummary,
    pub outcomes: Vec<CycleOutcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdResult {
    pub cells: Vec<ThresholdCell>,
}

impl ThresholdResult {
    pub fn cell(&self, beta: f64, threshold: f64) -> Option<&ThresholdCell> {
        self.cells
            .iter()
            .find(|c| c.beta == beta && c.threshold == threshold)
    }

    pub fn rows(&self) -> Vec<ThresholdRow> {
        self.cells
            .iter()
            .map(|c| ThresholdRow {
                beta: c.beta,
                threshold: c.threshold,
                trials: c.summary.trials,
                success_rate: c.summary.success_rate,
                mean_steps: c.summary.steps.mean,
                std_steps: c.summary.steps.std,
            })
            .collect()
    }
}

/// Success rate and steps over the (β, threshold) grid.
pub fn threshold_study(spec: &ThresholdSpec) -> Result<ThresholdResult> {
    check_grid("beta", &spec.betas)?;
    check_grid("threshold", &spec.thresholds)?;
    if let Some(t) = spec.thresholds.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
        return Err(invalid(format!("loss threshold {t} outside (0, 1)")));
    }
    let cells: Vec<(f64, usize, f64)> = spec
        .betas
        .iter()
        .flat_map(|&b| spec.thresholds.iter().map(move |&t| (b, spec.depth, t)))
        .collect();
    let outcomes = run_cells(&spec.settings, &cells, spec.trials, spec.master_seed)?;
    Ok(ThresholdResult {
        cells: cells
            .iter()
            .zip(outcomes)
            .map(|(&(beta, _, threshold), outcomes)| ThresholdCell {
                beta,
                threshold,
                summary: CellSummary::from_outcomes(&outcomes),
                outcomes,
            })
            .collect(),
    })
}

#[derive(Debug, Clone)]
pub struct DepthSpec {
    pub settings: CycleSettings,
    pub betas: Vec<f64>,
    pub depths: Vec<usize>,
    pub threshold: f64,
    pub trials: usize,
    pub master_seed: u64,
}

impl DepthSpec {
    pub fn desk() -> Self {
        Self {
            settings: CycleSettings::default(),
            betas: vec![0.0, 0.1],
            depths: vec![2, 4, 8, 12],
            threshold: 1e-4,
            trials: 50,
            master_seed: 0,
        }
    }

    pub fn full() -> Self {
        Self {
            betas: vec![0.0, 0.1, 0.3],
            depths: vec![2, 4, 6, 8, 10, 12, 14],
            trials: 1000,
            ..Self::desk()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthCell {
    pub beta: f64,
    pub depth: usize,
    pub summary: CellSummary,
    pub outcomes: Vec<CycleOutcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthResult {
    pub cells: Vec<DepthCell>,
}

impl DepthResult {
    pub fn cell(&self, beta: f64, depth: usize) -> Option<&DepthCell> {
        self.cells.iter().find(|c| c.beta == beta && c.depth == depth)
    }

    pub fn rows(&self) -> Vec<DepthRow> {
        self.cells
            .iter()
            .map(|c| DepthRow {
                beta: c.beta,
                depth: c.depth,
                success_rate: c.summary.success_rate,
                mean_steps: c.summary.steps.mean,
                std_steps: c.summary.steps.std,
                convergence_ratio: c.summary.convergence_rate,
            })
            .collect()
    }
}

/// Success rate, steps and convergence ratio over the (β, depth) grid.
pub fn depth_study(spec: &DepthSpec) -> Result<DepthResult> {
    check_grid("beta", &spec.betas)?;
    check_grid("depth", &spec.depths)?;
    if spec.depths.contains(&0) {
        return Err(invalid("depths must be at least 1"));
    }
    let cells: Vec<(f64, usize, f64)> = spec
        .betas
        .iter()
        .flat_map(|&b| spec.depths.iter().map(move |&d| (b, d, spec.threshold)))
        .collect();
    let outcomes = run_cells(&spec.settings, &cells, spec.trials, spec.master_seed)?;
    Ok(DepthResult {
        cells: cells
            .iter()
            .zip(outcomes)
            .map(|(&(beta, depth, _), outcomes)| DepthCell {
                beta,
                depth,
                summary: CellSummary::from_outcomes(&outcomes),
                outcomes,
            })
            .collect(),
    })
}

// ---------------------------------------------------------------------------
// condition numbers and sparsity of generated dynamics

#[derive(Debug, Clone, PartialEq)]
pub struct KappaSpec {
    pub kinds: Vec<DynamicsKind>,
    pub gammas: Vec<f64>,
    /// `log₂N` values, each in `[2, 12]`.
    pub qubits: Vec<usize>,
    pub trials: usize,
    pub master_seed: u64,
}

impl KappaSpec {
    pub fn desk() -> Self {
        Self {
            kinds: vec![
                DynamicsKind::Deterministic,
                DynamicsKind::UniformLocal,
                DynamicsKind::ExponentialLocal { beta: 0.1 },
                DynamicsKind::ExponentialLocal { beta: 0.4 },
            ],
            gammas: vec![0.85, 0.9, 0.95],
            qubits: (2..=10).collect(),
            trials: 100,
            master_seed: 0,
        }
    }

    pub fn full() -> Self {
        Self {
            qubits: (2..=12).collect(),
            ..Self::desk()
        }
    }

    fn validate(&self) -> Result<()> {
        check_trials(self.trials)?;
        check_grid("kind", &self.kinds)?;
        check_grid("gamma", &self.gammas)?;
        check_grid("qubit", &self.qubits)?;
        if let Some(q) = self.qubits.iter().find(|q| !(2..=12).contains(*q)) {
            return Err(invalid(format!("qubit count {q} outside [2, 12]")));
        }
        if let Some(g) = self.gammas.iter().find(|g| !(**g >= 0.0 && **g < 1.0)) {
            return Err(invalid(format!("discount {g} outside [0, 1)")));
        }
        Ok(())
    }

    /// `(kind, γ, qubits)` in output order.
    fn cells(&self) -> Vec<(DynamicsKind, f64, usize)> {
        let mut cells = Vec::new();
        for &kind in &self.kinds {
            for &gamma in &self.gammas {
                for &q in &self.qubits {
                    cells.push((kind, gamma, q));
                }
            }
        }
        cells
    }
}

/// The theorem bound that applies to `kind`.
pub fn theorem_bound(kind: DynamicsKind, n: usize, gamma: f64) -> f64 {
    match kind {
        DynamicsKind::UniformLocal => bound_uniform_local(gamma),
        _ => bound_general_local(n, gamma),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KappaCell {
    pub kind: DynamicsKind,
    pub gamma: f64,
    pub qubits: usize,
    pub kappas: Vec<f64>,
    pub stats: Stats,
    pub bound_thm: f64,
    pub bound_empirical: f64,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KappaResult {
    pub cells: Vec<KappaCell>,
}

impl KappaResult {
    pub fn total_violations(&self) -> usize {
        self.cells.iter().map(|c| c.violations).sum()
    }

    pub fn rows(&self) -> Vec<KappaRow> {
        self.cells
            .iter()
            .map(|c| KappaRow {
                kind: c.kind.name().to_string(),
                beta: c.kind.beta(),
                gamma: c.gamma,
                qubits: c.qubits,
                mean_kappa: c.stats.mean,
                std_kappa: c.stats.std,
                bound_thm: c.bound_thm,
                bound_empirical: c.bound_empirical,
                violations: c.violations,
            })
            .collect()
    }
}

fn generated_kappa(kind: DynamicsKind, q: usize, gamma: f64, seed: u64) -> Result<f64> {
    let p = generate(&LocalDynamicsSpec {
        num_states: 1 << q,
        kind,
        seed,
    })?;
    condition_number(&system_matrix(&p, gamma))
}

/// κ of `I − γP` over generated local dynamics, with theorem-bound violations.
/// Kinds that ignore the seed are computed once per cell.
pub fn kappa_study(spec: &KappaSpec) -> Result<KappaResult> {
    spec.validate()?;
    let cells = spec.cells();
    let jobs: Vec<(usize, usize)> = cells
        .iter()
        .enumerate()
        .flat_map(|(c, (kind, _, _))| {
            let distinct = if kind.uses_seed() { spec.trials } else { 1 };
            (0..distinct).map(move |t| (c, t))
        })
        .collect();
    let kappas = jobs
        .par_iter()
        .map(|&(c, t)| {
            let (kind, gamma, q) = cells[c];
            generated_kappa(kind, q, gamma, trial_seed(spec.master_seed, c, t))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut per_cell: Vec<Vec<f64>> = vec![Vec::new(); cells.len()];
    for (&(c, _), k) in jobs.iter().zip(kappas) {
        per_cell[c].push(k);
    }
    Ok(KappaResult {
        cells: cells
            .iter()
            .zip(per_cell)
            .map(|(&(kind, gamma, q), mut kappas)| {
                if kappas.len() == 1 {
                    kappas = vec![kappas[0]; spec.trials];
                }
                let n = 1 << q;
                let bound_thm = theorem_bound(kind, n, gamma);
                let violations = kappas
                    .iter()
                    .filter(|&&k| k > bound_thm * (1.0 + BOUND_SLACK))
                    .count();
                KappaCell {
                    kind,
                    gamma,
                    qubits: q,
                    stats: mean_std(&kappas),
                    kappas,
                    bound_thm,
                    bound_empirical: bound_empirical(n, gamma),
                    violations,
                }
            })
            .collect(),
    })
}

/// κ of the 4×4 (or larger) lake's `A_π` under random policies.
pub fn lake_kappas(
    layout: &Layout,
    beta: f64,
    gamma: f64,
    trials: usize,
    master_seed: u64,
) -> Result<Vec<f64>> {
    check_trials(trials)?;
    let mdp = lake(layout, beta, gamma)?;
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let policy = trial_policy(&mdp, trial_seed(master_seed, 0, t));
            condition_number(&assemble_lse(&mdp, &policy).matrix)
        })
        .collect()
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

#[derive(Debug, Clone)]
pub struct SparsitySpec {
    pub kinds: Vec<DynamicsKind>,
    pub gamma: f64,
    pub qubits: Vec<usize>,
    pub trials: usize,
    /// Slip probabilities of the lake instances checked alongside.
    pub lake_betas: Vec<f64>,
    pub layout: Layout,
    pub master_seed: u64,
}

impl SparsitySpec {
    pub fn desk() -> Self {
        Self {
            kinds: KappaSpec::desk().kinds,
            gamma: 0.9,
            qubits: (2..=10).collect(),
            trials: 20,
            lake_betas: vec![0.0, 0.1, 0.3],
            layout: Layout::standard(4).expect("built-in map"),
            master_seed: 0,
        }
    }

    pub fn full() -> Self {
        Self {
            qubits: (2..=12).collect(),
            trials: 100,
            ..Self::desk()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparsityResult {
    pub rows: Vec<SparsityRow>,
}

impl SparsityResult {
    pub fn total_violations(&self) -> usize {
        self.rows.iter().map(|r| r.violations).sum()
    }
}

/// Row non-zeros of a lake `A_π`: the diagonal plus one successor per move.
pub fn lake_row_bound(beta: f64) -> usize {
    if beta > 0.0 {
        4
    } else {
        2
    }
}

/// Maximum row/column non-zeros of generated `I − γP` against `log₂N + 1`
/// and of lake systems against [`lake_row_bound`].
pub fn sparsity_study(spec: &SparsitySpec) -> Result<SparsityResult> {
    check_trials(spec.trials)?;
    check_grid("kind", &spec.kinds)?;
    check_grid("qubit", &spec.qubits)?;
    let cells: Vec<(DynamicsKind, usize)> = spec
        .kinds
        .iter()
        .flat_map(|&k| spec.qubits.iter().map(move |&q| (k, q)))
        .collect();
    let mut rows = cells
        .par_iter()
        .enumerate()
        .map(|(c, &(kind, q))| {
            let bound = q + 1;
            let mut row = SparsityRow {
                kind: kind.name().to_string(),
                beta: kind.beta(),
                qubits: q,
                trials: spec.trials,
                max_row_nnz: 0,
                max_col_nnz: 0,
                bound,
                violations: 0,
            };
            for t in 0..spec.trials {
                let p = generate(&LocalDynamicsSpec {
                    num_states: 1 << q,
                    kind,
                    seed: trial_seed(spec.master_seed, c, t),
                })?;
                let s = sparsity_stats(&system_matrix(&p, spec.gamma), ZERO_TOL);
                row.max_row_nnz = row.max_row_nnz.max(s.max_row_nnz);
                row.max_col_nnz = row.max_col_nnz.max(s.max_col_nnz);
                row.violations += (s.max_row_nnz > bound || s.max_col_nnz > bound) as usize;
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    for (b, &beta) in spec.lake_betas.iter().enumerate() {
        let mdp = lake(&spec.layout, beta, spec.gamma)?;
        let bound = lake_row_bound(beta);
        let mut row = SparsityRow {
            kind: "frozenlake".into(),
            beta,
            qubits: qubit_requirements(mdp.system_size()).ansatz,
            trials: spec.trials,
            max_row_nnz: 0,
            max_col_nnz: 0,
            bound,
            violations: 0,
        };
        for t in 0..spec.trials {
            let policy = trial_policy(&mdp, trial_seed(spec.master_seed, cells.len() + b, t));
            let s = sparsity_stats(&assemble_lse(&mdp, &policy).matrix, ZERO_TOL);
            row.max_row_nnz = row.max_row_nnz.max(s.max_row_nnz);
            row.max_col_nnz = row.max_col_nnz.max(s.max_col_nnz);
            row.violations += (s.max_row_nnz > bound) as usize;
        }
        rows.push(row);
    }
    Ok(SparsityResult { rows })
}

// ---------------------------------------------------------------------------
// unitary decomposition

#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionSpec {
    /// Matrix sizes `2^q`, cycled over the trials.
    pub qubits: Vec<usize>,
    pub trials: usize,
    pub tolerance: f64,
    pub master_seed: u64,
}

impl Default for DecompositionSpec {
    fn default() -> Self {
        Self {
            qubits: (1..=6).collect(),
            trials: 100,
            tolerance: 1e-10,
            master_seed: 0,
        }
    }
}

/// Decomposes random real matrices with entries uniform in `[-1, 1]` and
/// records the unitarity and reconstruction residuals.
pub fn decomposition_study(spec: &DecompositionSpec) -> Result<Vec<DecompositionRow>> {
    check_trials(spec.trials)?;
    check_grid("qubit", &spec.qubits)?;
    if let Some(q) = spec.qubits.iter().find(|q| !(1..=8).contains(*q)) {
        return Err(invalid(format!("qubit count {q} outside [1, 8]")));
    }
    (0..spec.trials)
        .into_par_iter()
        .map(|t| {
            let dim = 1usize << spec.qubits[t % spec.qubits.len()];
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(spec.master_seed, 0, t));
            let a = RealMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..=1.0));
            let report = validate(&decompose(&a)?, &a)?;
            Ok(DecompositionRow {
                trial: t,
                dim,
                unitarity: report.max_unitarity(),
                reconstruction: report.reconstruction,
                passed: report.passes(spec.tolerance),
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// single runs

/// One (WS-)VarQPI run on a lake, scored against classical policy iteration
/// from the same initial policy.
#[derive(Debug, Clone)]
pub struct LakeRunSpec {
    pub layout: Layout,
    pub beta: f64,
    pub gamma: f64,
    pub depth: usize,
    pub train: TrainConfig,
    pub tomography: Tomography,
    pub warm_start: bool,
    pub max_iterations: usize,
    /// Solve each Bellman system directly instead of training.
    pub exact: bool,
    pub success_tolerance: f64,
    pub seed: u64,
}

impl LakeRunSpec {
    /// 4×4 lake, β = 0.1, depth 12, warm start.
    pub fn small(seed: u64) -> Self {
        Self {
            layout: Layout::standard(4).expect("built-in map"),
            beta: 0.1,
            gamma: 0.9,
            depth: 12,
            train: TrainConfig::default(),
            tomography: Tomography::ExactProbabilities,
            warm_start: true,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            exact: false,
            success_tolerance: DEFAULT_SUCCESS_TOLERANCE,
            seed,
        }
    }

    /// 8×8 lake, β = 0.1, depth 24, warm start.
    pub fn large(seed: u64) -> Self {
        Self {
            layout: Layout::standard(8).expect("built-in map"),
            depth: 24,
            ..Self::small(seed)
        }
    }

    pub fn config(&self) -> QpiConfig {
        let base = if self.exact {
            QpiConfig {
                seed: self.seed,
                ..QpiConfig::exact()
            }
        } else {
            QpiConfig::variational(self.depth, self.train.clone(), self.warm_start, self.seed)
        };
        QpiConfig {
            tomography: self.tomography,
            max_iterations: self.max_iterations,
            success_tolerance: self.success_tolerance,
            ..base
        }
    }

    pub fn mdp(&self) -> Result<Mdp> {
        lake(&self.layout, self.beta, self.gamma)
    }
}

#[derive(Debug, Clone)]
pub struct LakeRunResult {
    pub run: QpiRun,
    pub oracle: DeterministicPolicy,
    pub oracle_iterations: usize,
    /// Final policy greedy within tolerance for the optimal `Q`.
    pub success: bool,
    pub matches_oracle: bool,
    pub requirements: QubitRequirements,
}

pub fn lake_run(spec: &LakeRunSpec) -> Result<LakeRunResult> {
    let mdp = spec.mdp()?;
    let cfg = spec.config();
    cfg.validate()?;
    let initial = trial_policy(&mdp, spec.seed);
    let run = run_qpi(&mdp, &initial, &cfg)?;
    let (oracle, oracle_iterations) = classical_policy_iteration(&mdp, &initial)?;
    let final_policy = run.final_policy();
    Ok(LakeRunResult {
        success: score_success(final_policy, &oracle, &mdp, cfg.success_tolerance)?,
        matches_oracle: final_policy.agrees_on_nonterminal(&oracle, &mdp),
        requirements: qubit_requirements(mdp.system_size()),
        oracle,
        oracle_iterations,
        run,
    })
}

/// The 8×8 upscaling run.
pub fn large_lake_run(seed: u64) -> Result<LakeRunResult> {
    lake_run(&LakeRunSpec::large(seed))
}

impl LakeRunResult {
    /// Loss of every optimizer step, iterations concatenated.
    pub fn loss_chart(&self) -> Chart {
        let mut pts = Vec::new();
        let mut step = 0;
        for rec in &self.run.iterations {
            for (k, &loss) in rec.loss_trace.iter().enumerate() {
                if k > 0 || step == 0 {
                    pts.push(((step + k) as f64, loss));
                }
            }
            step += rec.steps;
        }
        Chart {
            title: "Loss over the run".into(),
            x_label: "optimizer step".into(),
            y_label: "global cost".into(),
            log_y: true,
            series: vec![Series::new("loss", pts)],
            ..Chart::default()
        }
    }
}

// ---------------------------------------------------------------------------
// figures

impl WarmStartResult {
    /// Mean steps per iteration in both arms.
    pub fn steps_chart(&self) -> Chart {
        let series = [Arm::Cold, Arm::Warm]
            .into_iter()
            .map(|arm| {
                let pts = self
                    .iteration_summary(arm)
                    .iter()
                    .filter(|s| s.active > 0)
                    .map(|s| (s.iteration as f64, s.steps.mean))
                    .collect();
                Series::new(arm.name(), pts)
            })
            .collect();
        Chart {
            title: "Steps per policy-iteration cycle".into(),
            x_label: "iteration".into(),
            y_label: "mean optimizer steps".into(),
            series,
            ..Chart::default()
        }
    }

    pub fn loss_chart(&self) -> Chart {
        let traces = self.representative_traces();
        let series = [Arm::Cold, Arm::Warm]
            .into_iter()
            .map(|arm| {
                let pts = traces
                    .iter()
                    .filter(|r| r.arm == arm.name())
                    .map(|r| (r.step as f64, r.loss))
                    .collect();
                Series::new(arm.name(), pts)
            })
            .collect();
        Chart {
            title: "Loss curves of one instance".into(),
            x_label: "optimizer step".into(),
            y_label: "global cost".into(),
            log_y: true,
            series,
            ..Chart::default()
        }
    }
}

fn by_beta<T>(cells: &[T], beta: impl Fn(&T) -> f64, point: impl Fn(&T) -> (f64, f64)) -> Vec<Series> {
    let mut betas: Vec<f64> = cells.iter().map(&beta).collect();
    betas.dedup();
    betas
        .into_iter()
        .map(|b| {
            let pts = cells.iter().filter(|c| beta(c) == b).map(&point).collect();
            Series::new(format!("beta={b}"), pts)
        })
        .collect()
}

impl ThresholdResult {
    pub fn chart(&self) -> Chart {
        Chart {
            title: "Success rate against loss threshold".into(),
            x_label: "loss threshold".into(),
            y_label: "success rate".into(),
            log_x: true,
            series: by_beta(&self.cells, |c| c.beta, |c| (c.threshold, c.summary.success_rate)),
            ..Chart::default()
        }
    }
}

impl DepthResult {
    pub fn chart(&self) -> Chart {
        Chart {
            title: "Success rate against circuit depth".into(),
            x_label: "depth".into(),
            y_label: "success rate".into(),
            series: by_beta(&self.cells, |c| c.beta, |c| (c.depth as f64, c.summary.success_rate)),
            ..Chart::default()
        }
    }
}

impl KappaResult {
    /// Mean κ against `log₂N`, one line per (kind, γ), theorem bounds dashed.
    pub fn chart(&self) -> Chart {
        let mut series = Vec::new();
        let mut keys: Vec<(String, f64, f64)> = Vec::new();
        for c in &self.cells {
            let key = (c.kind.name().to_string(), c.kind.beta(), c.gamma);
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
        for (name, beta, gamma) in keys {
            let cells: Vec<&KappaCell> = self
                .cells
                .iter()
                .filter(|c| c.kind.name() == name && c.kind.beta() == beta && c.gamma == gamma)
                .collect();
            let label = match name.as_str() {
                "exponential" => format!("{name} b={beta} g={gamma}"),
                _ => format!("{name} g={gamma}"),
            };
            series.push(Series::new(
                label.clone(),
                cells.iter().map(|c| (c.qubits as f64, c.stats.mean)).collect(),
            ));
            series.push(
                Series::new(
                    format!("bound {label}"),
                    cells.iter().map(|c| (c.qubits as f64, c.bound_thm)).collect(),
                )
                .dashed(),
            );
        }
        Chart {
            title: "Condition number of generated systems".into(),
            x_label: "log2 N".into(),
            y_label: "kappa".into(),
            log_y: true,
            series,
            ..Chart::default()
        }
    }
}

impl SparsityResult {
    pub fn chart(&self) -> Chart {
        let mut kinds: Vec<(String, f64)> = Vec::new();
        for r in self.rows.iter().filter(|r| r.kind != "frozenlake") {
            if !kinds.contains(&(r.kind.clone(), r.beta)) {
                kinds.push((r.kind.clone(), r.beta));
            }
        }
        let mut series: Vec<Series> = kinds
            .iter()
            .map(|(k, b)| {
                let pts = self
                    .rows
                    .iter()
                    .filter(|r| &r.kind == k && r.beta == *b)
                    .map(|r| (r.qubits as f64, r.max_row_nnz.max(r.max_col_nnz) as f64))
                    .collect();
                Series::new(format!("{k} b={b}"), pts)
            })
            .collect();
        let mut qs: Vec<usize> = self
            .rows
            .iter()
            .filter(|r| r.kind != "frozenlake")
            .map(|r| r.qubits)
            .collect();
        qs.sort_unstable();
        qs.dedup();
        series.push(
            Series::new("log2 N + 1", qs.iter().map(|&q| (q as f64, (q + 1) as f64)).collect())
                .dashed(),
        );
        Chart {
            title: "Maximum non-zeros per row or column".into(),
            x_label: "log2 N".into(),
            y_label: "non-zeros".into(),
            series,
            ..Chart::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_std() {
        let s = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[7.0]).std, 0.0);
        assert!(mean_std(&[]).mean.is_nan());
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn kappa_cells_and_violations() {
        let spec = KappaSpec {
            qubits: vec![2, 3, 4],
            trials: 5,
            ..KappaSpec::desk()
        };
        let res = kappa_study(&spec).unwrap();
        assert_eq!(res.cells.len(), 4 * 3 * 3);
        assert_eq!(res.total_violations(), 0);
        for c in &res.cells {
            assert_eq!(c.kappas.len(), 5);
            if !c.kind.uses_seed() {
                assert!(c.stats.std <= 1e-12 * c.stats.mean);
            }
        }
    }

    #[test]
    fn sparsity_has_no_violations() {
        let spec = SparsitySpec {
            qubits: vec![2, 4, 6],
            trials: 3,
            ..SparsitySpec::desk()
        };
        let res = sparsity_study(&spec).unwrap();
        assert_eq!(res.total_violations(), 0);
        let lake0 = res.rows.iter().find(|r| r.kind == "frozenlake" && r.beta == 0.0).unwrap();
        assert!(lake0.max_row_nnz <= 2);
    }

    #[test]
    fn threshold_cells_are_reproducible() {
        let spec = ThresholdSpec {
            betas: vec![0.0],
            thresholds: vec![0.3],
            depth: 2,
            trials: 3,
            ..ThresholdSpec::desk()
        };
        let a = threshold_study(&spec).unwrap();
        let b = threshold_study(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows()[0].trials, 3);
    }

    #[test]
    fn exact_lake_run_matches_oracle() {
        let spec = LakeRunSpec {
            exact: true,
            ..LakeRunSpec::small(3)
        };
        let res = lake_run(&spec).unwrap();
        assert!(res.run.converged);
        assert!(res.matches_oracle && res.success);
        assert_eq!(res.run.iterations.len(), res.oracle_iterations);
        assert_eq!(res.requirements.hadamard, 7);
    }

    #[test]
    fn decompositions_pass() {
        let spec = DecompositionSpec {
            trials: 12,
            ..DecompositionSpec::default()
        };
        let rows = decomposition_study(&spec).unwrap();
        assert_eq!(rows.len(), 12);
        assert_eq!(rows[5].dim, 64);
        assert!(rows.iter().all(|r| r.passed), "{rows:?}");
    }

    #[test]
    fn rejects_empty_grids() {
        let spec = DepthSpec {
            depths: vec![],
            ..DepthSpec::desk()
        };
        assert!(depth_study(&spec).is_err());
        let spec = KappaSpec {
            qubits: vec![13],
            ..KappaSpec::desk()
        };
        assert!(kappa_study(&spec).is_err());
    }
}
