//! `goaldyn` command-line tool.
//!
//! Settings come from an optional JSON config (`--config`); flags override
//! it. `GOALDYN_OUT` and `GOALDYN_THREADS` stand in for `--out` and
//! `--threads` when those flags are absent.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numeric failure.

mod commands;
mod config;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use goaldyn::eval::GoalMode;

use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

impl From<goaldyn::Error> for CliError {
    fn from(e: goaldyn::Error) -> Self {
        match e {
            goaldyn::Error::Config(m) => CliError::Usage(m),
            goaldyn::Error::Numeric(m) => CliError::Numeric(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "goaldyn", version, about = "Goal-conditioned stable-dynamics trajectory prediction")]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, env = "GOALDYN_OUT")]
    out: Option<PathBuf>,

    /// Worker thread cap. Results do not depend on it.
    #[arg(long, global = true, env = "GOALDYN_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct TrainArgs {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Training seed (initialisation, shuffling, noise).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Feed absolute positions instead of goal-relative ones.
    #[arg(long)]
    no_goal_shift: bool,
    /// Predict velocities directly instead of the positive-definite field.
    #[arg(long)]
    no_stable_dynamics: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GoalModeArg {
    Oracle,
    PerCandidate,
}

#[derive(Args, Debug, Default)]
struct EvalArgs {
    /// Samples drawn per window.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, value_enum)]
    goal_mode: Option<GoalModeArg>,
    /// Sampling seed.
    #[arg(long)]
    sample_seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse annotation files, print counts and write normalized caches.
    Ingest { datasets: Vec<PathBuf> },
    /// Write synthetic goal-driven arc datasets.
    Synth {
        #[arg(long, default_value = "synth")]
        name: String,
        /// Number of datasets; each gets the next seed.
        #[arg(long, default_value_t = 1)]
        sets: usize,
        #[arg(long)]
        trajectories: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train on every window of the given datasets.
    Train {
        datasets: Vec<PathBuf>,
        #[command(flatten)]
        train: TrainArgs,
        /// Continue from a checkpoint until the epoch target is reached.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Sample futures for the windows of one dataset.
    Predict {
        /// Datasets forming the goal pool.
        datasets: Vec<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset to predict.
        #[arg(long)]
        dataset: PathBuf,
        /// Only this window.
        #[arg(long)]
        window: Option<usize>,
        /// File name under the output directory.
        #[arg(long, default_value = "predictions.json")]
        output: String,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Best-of-N evaluation of a checkpoint.
    Eval {
        /// Goal-pool datasets (or, with --loo, all datasets).
        datasets: Vec<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Held-out datasets.
        #[arg(long = "test")]
        test: Vec<PathBuf>,
        /// Leave-one-out over the datasets, retraining with the checkpoint's settings.
        #[arg(long)]
        loo: bool,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Leave-one-out for the four component combinations.
    Ablate {
        datasets: Vec<PathBuf>,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Render one predicted window as SVG.
    Plot {
        /// Predictions file written by `predict`.
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        window: usize,
    },
}

fn apply_datasets(cfg: &mut RunConfig, datasets: &[PathBuf]) {
    if !datasets.is_empty() {
        cfg.datasets = datasets.to_vec();
    }
}

fn apply_train(cfg: &mut RunConfig, a: &TrainArgs) {
    if let Some(v) = a.epochs {
        cfg.training.epochs = v;
    }
    if let Some(v) = a.lr {
        cfg.training.learning_rate = v;
    }
    if let Some(v) = a.seed {
        cfg.training.seed = v;
    }
    if let Some(v) = a.batch_size {
        cfg.training.batch_size = v;
    }
    if a.no_goal_shift {
        cfg.variant.goal_shift = false;
    }
    if a.no_stable_dynamics {
        cfg.variant.stable_dynamics = false;
    }
}

fn apply_eval(cfg: &mut RunConfig, a: &EvalArgs) {
    if let Some(v) = a.samples {
        cfg.eval.n_samples = v;
    }
    if let Some(m) = a.goal_mode {
        cfg.eval.goal_mode = match m {
            GoalModeArg::Oracle => GoalMode::Oracle,
            GoalModeArg::PerCandidate => GoalMode::PerCandidate,
        };
    }
    if let Some(v) = a.sample_seed {
        cfg.eval.seed = v;
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    match &cli.command {
        Command::Ingest { datasets } => apply_datasets(&mut cfg, datasets),
        Command::Synth { trajectories, seed, .. } => {
            if let Some(n) = trajectories {
                cfg.synth.trajectories = *n;
            }
            if let Some(s) = seed {
                cfg.synth.seed = *s;
            }
        }
        Command::Train { datasets, train, .. } => {
            apply_datasets(&mut cfg, datasets);
            apply_train(&mut cfg, train);
        }
        Command::Predict { datasets, eval, .. } | Command::Eval { datasets, eval, .. } => {
            apply_datasets(&mut cfg, datasets);
            apply_eval(&mut cfg, eval);
        }
        Command::Ablate { datasets, train, eval } => {
            apply_datasets(&mut cfg, datasets);
            apply_train(&mut cfg, train);
            apply_eval(&mut cfg, eval);
        }
        Command::Plot { .. } => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn dispatch(cli: &Cli, cfg: &RunConfig) -> Result<(), CliError> {
    match &cli.command {
        Command::Ingest { .. } => commands::ingest(cfg),
        Command::Synth { name, sets, .. } => commands::synth(cfg, name, *sets),
        Command::Train { resume, .. } => commands::train(cfg, resume.as_deref()),
        Command::Predict {
            checkpoint,
            dataset,
            window,
            output,
            ..
        } => commands::predict(cfg, checkpoint, dataset, *window, output),
        Command::Eval {
            checkpoint, test, loo, ..
        } => commands::eval(cfg, checkpoint, test, *loo),
        Command::Ablate { .. } => commands::ablate(cfg),
        Command::Plot { predictions, window } => commands::plot(cfg, predictions, *window),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = resolve(&cli)?;
    match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot build thread pool: {e}")))?
            .install(|| dispatch(&cli, &cfg)),
        None => dispatch(&cli, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("goaldyn: {e}");
            ExitCode::from(e.code())
        }
    }
}
