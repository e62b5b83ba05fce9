use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use varqpi::envgen::DynamicsKind;
use varqpi::experiments::report::{sibling, write_csv, write_atomic};
use varqpi::experiments::{
    decomposition_study, depth_study, kappa_study, lake_run, sparsity_study, threshold_study,
    warm_start_study, Arm, CycleSettings, DecompositionSpec, DepthSpec, KappaSpec, LakeRunResult,
    LakeRunSpec, SparsitySpec, ThresholdSpec, WarmStartSpec,
};
use varqpi::mdp::frozen_lake::Layout;
use varqpi::qpi::{write_run_log, Tomography};
use varqpi::vls::TrainConfig;

use crate::config::{load_config, CliConfig, Shots};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "varqpi", version, about = "Warm-start variational quantum policy iteration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// One (WS-)VarQPI run on FrozenLake.
    Run,
    /// Paired warm-start and cold-start runs.
    Warmstart,
    /// Success rate against loss threshold.
    Threshold,
    /// Success rate against circuit depth.
    Depth,
    /// Condition numbers of generated local dynamics.
    Kappa,
    /// Non-zeros per row and column of generated systems.
    Sparsity,
    /// The 8x8 upscaling run.
    Biglake,
    /// Residuals of the unitary decomposition on random matrices.
    DecomposeCheck,
}

#[derive(Args, Debug, Default)]
struct Flags {
    /// Environment (only "frozenlake").
    #[arg(long, global = true)]
    env: Option<String>,
    /// Side of the built-in lake map (4 or 8).
    #[arg(long, global = true)]
    size: Option<usize>,
    /// Lake layout file, one row of S/F/H/G per line.
    #[arg(long, global = true)]
    layout: Option<PathBuf>,
    /// Slip probability; comma-separated for sweeps.
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    beta: Option<Vec<f64>>,
    /// Discount; comma-separated for sweeps.
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    gamma: Option<Vec<f64>>,
    /// Ansatz depth; comma-separated for sweeps.
    #[arg(long, global = true, value_delimiter = ',')]
    depth: Option<Vec<usize>>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    lr: Option<f64>,
    /// Training stops below this global cost; comma-separated for sweeps.
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    loss_threshold: Option<Vec<f64>>,
    /// Measurement shots per readout, or "exact" for the infinite-shot limit.
    #[arg(long, global = true)]
    shots: Option<Shots>,
    #[arg(long, global = true, overrides_with = "no_warm_start")]
    warm_start: bool,
    #[arg(long, global = true, overrides_with = "warm_start")]
    no_warm_start: bool,
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output CSV; plots and side tables go next to it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Also write SVG plots.
    #[arg(long, global = true)]
    plot: bool,
    /// JSON file with the same keys as the flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Paper-scale trial counts and grids.
    #[arg(long, global = true)]
    full: bool,
    /// Solve each Bellman system directly instead of training.
    #[arg(long, global = true)]
    exact: bool,
    #[arg(long, global = true)]
    max_iterations: Option<usize>,
    /// Optimizer step cap per policy evaluation.
    #[arg(long, global = true)]
    max_steps: Option<usize>,
    /// log2 of the system sizes for kappa, sparsity and decompose-check.
    #[arg(long, global = true, value_delimiter = ',')]
    qubits: Option<Vec<usize>>,
    /// Tolerance of the success score (or of decompose-check residuals).
    #[arg(long, global = true)]
    tolerance: Option<f64>,
}

impl Flags {
    fn to_config(&self) -> CliConfig {
        let set = |b: bool| b.then_some(true);
        CliConfig {
            env: self.env.clone(),
            size: self.size,
            layout: self.layout.clone(),
            beta: self.beta.clone(),
            gamma: self.gamma.clone(),
            depth: self.depth.clone(),
            lr: self.lr,
            loss_threshold: self.loss_threshold.clone(),
            shots: self.shots,
            warm_start: if self.warm_start {
                Some(true)
            } else if self.no_warm_start {
                Some(false)
            } else {
                None
            },
            trials: self.trials,
            seed: self.seed,
            out: self.out.clone(),
            plot: set(self.plot),
            full: set(self.full),
            exact: set(self.exact),
            max_iterations: self.max_iterations,
            max_steps: self.max_steps,
            qubits: self.qubits.clone(),
            tolerance: self.tolerance,
        }
    }
}

/// Outcome of a command: summary line and exit code.
struct Outcome {
    summary: String,
    code: i32,
}

type Res<T> = std::result::Result<T, String>;

fn single<T: Copy>(name: &str, values: &Option<Vec<T>>) -> Res<Option<T>> {
    match values.as_deref() {
        None => Ok(None),
        Some([v]) => Ok(Some(*v)),
        Some(_) => Err(format!("{name} takes a single value for this command")),
    }
}

/// Merged configuration with the accessors every command uses.
struct Resolved(CliConfig);

impl Resolved {
    fn layout(&self, default_side: usize) -> Res<Layout> {
        if let Some(env) = &self.0.env {
            if !env.eq_ignore_ascii_case("frozenlake") {
                return Err(format!("unknown environment {env:?} (only frozenlake)"));
            }
        }
        match (&self.0.layout, self.0.size) {
            (Some(_), Some(_)) => Err("give either size or layout, not both".into()),
            (Some(path), None) => Layout::from_file(path).map_err(|e| e.to_string()),
            (None, size) => Layout::standard(size.unwrap_or(default_side)).map_err(|e| e.to_string()),
        }
    }

    fn tomography(&self) -> Res<Tomography> {
        match self.0.shots {
            None | Some(Shots::Exact) => Ok(Tomography::ExactProbabilities),
            Some(Shots::Count(0)) => Err("shots must be at least 1".into()),
            Some(Shots::Count(shots)) => Ok(Tomography::Sampled { shots }),
        }
    }

    fn train(&self, threshold: Option<f64>) -> TrainConfig {
        let base = TrainConfig::default();
        TrainConfig {
            learning_rate: self.0.lr.unwrap_or(base.learning_rate),
            loss_threshold: threshold.unwrap_or(base.loss_threshold),
            max_steps: self.0.max_steps.unwrap_or(base.max_steps),
            ..base
        }
    }

    fn trials(&self, default: usize) -> Res<usize> {
        match self.0.trials.unwrap_or(default) {
            0 => Err("trials must be at least 1".into()),
            t => Ok(t),
        }
    }

    fn full(&self) -> bool {
        self.0.full.unwrap_or(false)
    }

    fn seed(&self) -> u64 {
        self.0.seed.unwrap_or(0)
    }

    fn plot_path(&self, suffix: &str) -> Res<Option<PathBuf>> {
        match (self.0.plot.unwrap_or(false), &self.0.out) {
            (false, _) => Ok(None),
            (true, None) => Err("--plot needs --out".into()),
            (true, Some(out)) => Ok(Some(sibling(out, suffix, "svg"))),
        }
    }

    fn kinds(&self, default: Vec<DynamicsKind>) -> Res<Vec<DynamicsKind>> {
        let Some(betas) = &self.0.beta else {
            return Ok(default);
        };
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b <= 1.0)) {
            return Err(format!("perturbation {b} outside (0, 1]"));
        }
        let mut kinds = vec![DynamicsKind::Deterministic, DynamicsKind::UniformLocal];
        kinds.extend(betas.iter().map(|&beta| DynamicsKind::ExponentialLocal { beta }));
        Ok(kinds)
    }
}

fn check_beta(beta: f64) -> Res<()> {
    if !(0.0..=1.0 / 3.0).contains(&beta) {
        return Err(format!("slip probability {beta} outside [0, 1/3]"));
    }
    Ok(())
}

fn check_gamma(gamma: f64) -> Res<()> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(format!("discount {gamma} outside [0, 1)"));
    }
    Ok(())
}

fn check_lake_grid(betas: &[f64], gamma: f64) -> Res<()> {
    betas.iter().try_for_each(|&b| check_beta(b))?;
    check_gamma(gamma)
}

/// A validated command ready to execute.
enum Plan {
    Lake {
        spec: LakeRunSpec,
        out: Option<PathBuf>,
        plot: Option<PathBuf>,
    },
    WarmStart {
        spec: WarmStartSpec,
        out: Option<PathBuf>,
        plot: Option<PathBuf>,
    },
    Threshold {
        spec: ThresholdSpec,
        out: Option<PathBuf>,
        plot: Option<PathBuf>,
    },
    Depth {
        spec: DepthSpec,
        out: Option<PathBuf>,
        plot: Option<PathBuf>,
    },
    Kappa {
        spec: KappaSpec,
        out: Option<PathBuf>,
        plot: Option<PathBuf>,
    },
    Sparsity {
        spec: SparsitySpec,
        out: Option<PathBuf>,
        plot: Option<PathBuf>,
    },
    Decompose {
        spec: DecompositionSpec,
        out: Option<PathBuf>,
    },
}

fn lake_spec(cfg: &Resolved, large: bool) -> Res<LakeRunSpec> {
    let layout = cfg.layout(if large { 8 } else { 4 })?;
    let base = if layout.side() >= 8 {
        LakeRunSpec::large(cfg.seed())
    } else {
        LakeRunSpec::small(cfg.seed())
    };
    let spec = LakeRunSpec {
        layout,
        beta: single("beta", &cfg.0.beta)?.unwrap_or(base.beta),
        gamma: single("gamma", &cfg.0.gamma)?.unwrap_or(base.gamma),
        depth: single("depth", &cfg.0.depth)?.unwrap_or(base.depth),
        train: cfg.train(single("loss-threshold", &cfg.0.loss_threshold)?),
        tomography: cfg.tomography()?,
        warm_start: cfg.0.warm_start.unwrap_or(base.warm_start),
        max_iterations: cfg.0.max_iterations.unwrap_or(base.max_iterations),
        exact: cfg.0.exact.unwrap_or(false),
        success_tolerance: cfg.0.tolerance.unwrap_or(base.success_tolerance),
        seed: cfg.seed(),
    };
    check_beta(spec.beta)?;
    check_gamma(spec.gamma)?;
    spec.config().validate().map_err(|e| e.to_string())?;
    Ok(spec)
}

fn cycle_settings(cfg: &Resolved) -> Res<CycleSettings> {
    let base = CycleSettings::default();
    let s = CycleSettings {
        layout: cfg.layout(4)?,
        gamma: single("gamma", &cfg.0.gamma)?.unwrap_or(base.gamma),
        learning_rate: cfg.0.lr.unwrap_or(base.learning_rate),
        max_steps: cfg.0.max_steps.unwrap_or(base.max_steps),
        tomography: cfg.tomography()?,
        success_tolerance: cfg.0.tolerance.unwrap_or(base.success_tolerance),
    };
    if !(s.learning_rate > 0.0 && s.learning_rate.is_finite()) {
        return Err(format!("learning rate {} must be positive", s.learning_rate));
    }
    if s.max_steps == 0 {
        return Err("max_steps must be at least 1".into());
    }
    if !(s.success_tolerance >= 0.0) {
        return Err("tolerance must be non-negative".into());
    }
    Ok(s)
}

fn check_thresholds(thresholds: &[f64]) -> Res<()> {
    match thresholds.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
        Some(t) => Err(format!("loss threshold {t} outside (0, 1)")),
        None => Ok(()),
    }
}

fn check_depths(depths: &[usize]) -> Res<()> {
    if depths.contains(&0) {
        return Err("depth must be at least 1".into());
    }
    Ok(())
}

fn nonempty<T>(name: &str, v: &[T]) -> Res<()> {
    if v.is_empty() {
        return Err(format!("{name} list is empty"));
    }
    Ok(())
}

fn plan(command: Command, cfg: &Resolved) -> Res<Plan> {
    let out = cfg.0.out.clone();
    let full = cfg.full();
    Ok(match command {
        Command::Run | Command::Biglake => Plan::Lake {
            spec: lake_spec(cfg, command == Command::Biglake)?,
            plot: cfg.plot_path("")?,
            out,
        },
        Command::Warmstart => {
            let base = if full { WarmStartSpec::full() } else { WarmStartSpec::desk() };
            let spec = WarmStartSpec {
                layout: cfg.layout(4)?,
                beta: single("beta", &cfg.0.beta)?.unwrap_or(base.beta),
                gamma: single("gamma", &cfg.0.gamma)?.unwrap_or(base.gamma),
                depth: single("depth", &cfg.0.depth)?.unwrap_or(base.depth),
                train: cfg.train(single("loss-threshold", &cfg.0.loss_threshold)?),
                tomography: cfg.tomography()?,
                max_iterations: cfg.0.max_iterations.unwrap_or(base.max_iterations),
                trials: cfg.trials(base.trials)?,
                master_seed: cfg.seed(),
            };
            check_lake_grid(&[spec.beta], spec.gamma)?;
            check_depths(&[spec.depth])?;
            spec.train.validate().map_err(|e| e.to_string())?;
            Plan::WarmStart {
                spec,
                plot: cfg.plot_path("")?,
                out,
            }
        }
        Command::Threshold => {
            let base = if full { ThresholdSpec::full() } else { ThresholdSpec::desk() };
            let spec = ThresholdSpec {
                settings: cycle_settings(cfg)?,
                betas: cfg.0.beta.clone().unwrap_or(base.betas),
                thresholds: cfg.0.loss_threshold.clone().unwrap_or(base.thresholds),
                depth: single("depth", &cfg.0.depth)?.unwrap_or(base.depth),
                trials: cfg.trials(base.trials)?,
                master_seed: cfg.seed(),
            };
            nonempty("beta", &spec.betas)?;
            nonempty("loss-threshold", &spec.thresholds)?;
            check_lake_grid(&spec.betas, spec.settings.gamma)?;
            check_thresholds(&spec.thresholds)?;
            check_depths(&[spec.depth])?;
            Plan::Threshold {
                spec,
                plot: cfg.plot_path("")?,
                out,
            }
        }
        Command::Depth => {
            let base = if full { DepthSpec::full() } else { DepthSpec::desk() };
            let spec = DepthSpec {
                settings: cycle_settings(cfg)?,
                betas: cfg.0.beta.clone().unwrap_or(base.betas),
                depths: cfg.0.depth.clone().unwrap_or(base.depths),
                threshold: single("loss-threshold", &cfg.0.loss_threshold)?
                    .unwrap_or(base.threshold),
                trials: cfg.trials(base.trials)?,
                master_seed: cfg.seed(),
            };
            nonempty("beta", &spec.betas)?;
            nonempty("depth", &spec.depths)?;
            check_lake_grid(&spec.betas, spec.settings.gamma)?;
            check_thresholds(&[spec.threshold])?;
            check_depths(&spec.depths)?;
            Plan::Depth {
                spec,
                plot: cfg.plot_path("")?,
                out,
            }
        }
        Command::Kappa => {
            let base = if full { KappaSpec::full() } else { KappaSpec::desk() };
            let spec = KappaSpec {
                kinds: cfg.kinds(base.kinds)?,
                gammas: cfg.0.gamma.clone().unwrap_or(base.gammas),
                qubits: cfg.0.qubits.clone().unwrap_or(base.qubits),
                trials: cfg.trials(base.trials)?,
                master_seed: cfg.seed(),
            };
            nonempty("gamma", &spec.gammas)?;
            nonempty("qubits", &spec.qubits)?;
            spec.gammas.iter().try_for_each(|&g| check_gamma(g))?;
            if let Some(q) = spec.qubits.iter().find(|q| !(2..=12).contains(*q)) {
                return Err(format!("qubit count {q} outside [2, 12]"));
            }
            Plan::Kappa {
                spec,
                plot: cfg.plot_path("")?,
                out,
            }
        }
        Command::Sparsity => {
            let base = if full { SparsitySpec::full() } else { SparsitySpec::desk() };
            let spec = SparsitySpec {
                kinds: cfg.kinds(base.kinds)?,
                gamma: single("gamma", &cfg.0.gamma)?.unwrap_or(base.gamma),
                qubits: cfg.0.qubits.clone().unwrap_or(base.qubits),
                trials: cfg.trials(base.trials)?,
                layout: cfg.layout(4)?,
                master_seed: cfg.seed(),
                ..base
            };
            nonempty("qubits", &spec.qubits)?;
            check_gamma(spec.gamma)?;
            if let Some(q) = spec.qubits.iter().find(|q| !(2..=12).contains(*q)) {
                return Err(format!("qubit count {q} outside [2, 12]"));
            }
            Plan::Sparsity {
                spec,
                plot: cfg.plot_path("")?,
                out,
            }
        }
        Command::DecomposeCheck => {
            let base = DecompositionSpec::default();
            let spec = DecompositionSpec {
                qubits: cfg.0.qubits.clone().unwrap_or(base.qubits),
                trials: cfg.trials(base.trials)?,
                tolerance: cfg.0.tolerance.unwrap_or(base.tolerance),
                master_seed: cfg.seed(),
            };
            nonempty("qubits", &spec.qubits)?;
            if let Some(q) = spec.qubits.iter().find(|q| !(1..=8).contains(*q)) {
                return Err(format!("qubit count {q} outside [1, 8]"));
            }
            if !(spec.tolerance > 0.0) {
                return Err("tolerance must be positive".into());
            }
            Plan::Decompose { spec, out }
        }
    })
}

fn write_lake(res: &LakeRunResult, out: Option<&Path>, plot: Option<&Path>) -> varqpi::Result<()> {
    if let Some(out) = out {
        let mut buf = Vec::new();
        write_run_log(&mut buf, &res.run)?;
        write_atomic(out, &buf)?;
    }
    if let Some(plot) = plot {
        res.loss_chart().write(plot)?;
    }
    Ok(())
}

fn execute(plan: Plan) -> varqpi::Result<Outcome> {
    Ok(match plan {
        Plan::Lake { spec, out, plot } => {
            let res = lake_run(&spec)?;
            write_lake(&res, out.as_deref(), plot.as_deref())?;
            Outcome {
                summary: format!(
                    "iterations={} total_steps={} success={} converged={} matches_oracle={} qubits={}/{}/{}",
                    res.run.iterations.len(),
                    res.run.total_steps,
                    res.success,
                    res.run.converged,
                    res.matches_oracle,
                    res.requirements.ansatz,
                    res.requirements.hadamard,
                    res.requirements.hadamard_overlap,
                ),
                code: if res.run.converged { EXIT_OK } else { EXIT_NOT_CONVERGED },
            }
        }
        Plan::WarmStart { spec, out, plot } => {
            let res = warm_start_study(&spec)?;
            if let Some(out) = &out {
                write_csv(out, &res.rows())?;
                write_csv(&sibling(out, "loss", "csv"), &res.representative_traces())?;
            }
            if let Some(plot) = &plot {
                res.steps_chart().write(plot)?;
                res.loss_chart().write(&sibling(plot, "loss", "svg"))?;
            }
            let unconverged = res
                .trials
                .iter()
                .filter(|t| !t.cold.converged || !t.warm.converged)
                .count();
            let (cold, warm) = (res.total_steps(Arm::Cold), res.total_steps(Arm::Warm));
            Outcome {
                summary: format!(
                    "trials={} cold_steps={:.0}±{:.0} warm_steps={:.0}±{:.0} ratio={:.3} unconverged={}",
                    spec.trials,
                    cold.mean,
                    cold.std,
                    warm.mean,
                    warm.std,
                    res.step_ratio(),
                    unconverged
                ),
                code: if unconverged == 0 { EXIT_OK } else { EXIT_NOT_CONVERGED },
            }
        }
        Plan::Threshold { spec, out, plot } => {
            let res = threshold_study(&spec)?;
            if let Some(out) = &out {
                write_csv(out, &res.rows())?;
            }
            if let Some(plot) = &plot {
                res.chart().write(plot)?;
            }
            let cells: Vec<String> = res
                .cells
                .iter()
                .map(|c| format!("{}/{}:{:.2}", c.beta, c.threshold, c.summary.success_rate))
                .collect();
            Outcome {
                summary: format!("trials={} success={}", spec.trials, cells.join(",")),
                code: EXIT_OK,
            }
        }
        Plan::Depth { spec, out, plot } => {
            let res = depth_study(&spec)?;
            if let Some(out) = &out {
                write_csv(out, &res.rows())?;
            }
            if let Some(plot) = &plot {
                res.chart().write(plot)?;
            }
            let cells: Vec<String> = res
                .cells
                .iter()
                .map(|c| format!("{}/{}:{:.2}", c.beta, c.depth, c.summary.success_rate))
                .collect();
            Outcome {
                summary: format!("trials={} success={}", spec.trials, cells.join(",")),
                code: EXIT_OK,
            }
        }
        Plan::Kappa { spec, out, plot } => {
            let res = kappa_study(&spec)?;
            if let Some(out) = &out {
                write_csv(out, &res.rows())?;
            }
            if let Some(plot) = &plot {
                res.chart().write(plot)?;
            }
            let violations = res.total_violations();
            Outcome {
                summary: format!(
                    "cells={} trials={} violations={violations}",
                    res.cells.len(),
                    spec.trials
                ),
                code: if violations == 0 { EXIT_OK } else { EXIT_NOT_CONVERGED },
            }
        }
        Plan::Sparsity { spec, out, plot } => {
            let res = sparsity_study(&spec)?;
            if let Some(out) = &out {
                write_csv(out, &res.rows)?;
            }
            if let Some(plot) = &plot {
                res.chart().write(plot)?;
            }
            let violations = res.total_violations();
            Outcome {
                summary: format!(
                    "rows={} trials={} violations={violations}",
                    res.rows.len(),
                    spec.trials
                ),
                code: if violations == 0 { EXIT_OK } else { EXIT_NOT_CONVERGED },
            }
        }
        Plan::Decompose { spec, out } => {
            let rows = decomposition_study(&spec)?;
            if let Some(out) = &out {
                write_csv(out, &rows)?;
            }
            let failed = rows.iter().filter(|r| !r.passed).count();
            let max = |f: fn(&varqpi::experiments::DecompositionRow) -> f64| {
                rows.iter().map(f).fold(0.0, f64::max)
            };
            Outcome {
                summary: format!(
                    "matrices={} max_unitarity={:.2e} max_reconstruction={:.2e} failed={failed}",
                    rows.len(),
                    max(|r| r.unitarity),
                    max(|r| r.reconstruction)
                ),
                code: if failed == 0 { EXIT_OK } else { EXIT_NOT_CONVERGED },
            }
        }
    })
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    let flags = cli.flags.to_config();
    let file = match &cli.flags.config {
        Some(path) => match load_config(path) {
            Ok(c) => c,
            Err(msg) => {
                eprintln!("error: {msg}");
                return EXIT_INVALID;
            }
        },
        None => CliConfig::default(),
    };
    let cfg = Resolved(file.overlay(flags));
    let plan = match plan(cli.command, &cfg) {
        Ok(p) => p,
        Err(msg) => {
            eprintln!("error: {msg}");
            return EXIT_INVALID;
        }
    };
    match execute(plan) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            outcome.code
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INVALID
        }
    }
}
