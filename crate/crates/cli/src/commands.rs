//! Subcommand implementations. Each one reads inputs, calls the library and
//! writes its outputs under the run's output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use goaldyn::eval::{
    evaluate_datasets, evaluate_window, leave_one_out, run_ablation, Predictor, ProtocolConfig,
};
use goaldyn::goals::{estimate_goals, ExpertPool};
use goaldyn::model::{Checkpoint, PredictionSample, Trainer};
use goaldyn::synth::generate;
use goaldyn::types::{window_scenes, Dataset, Position2, Trajectory};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::plot::render_svg;
use crate::CliError;

pub const PREDICTIONS_FORMAT: &str = "goaldyn-predictions/1";

/// One window of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowPrediction {
    pub id: usize,
    pub source: String,
    pub start_frame: i64,
    pub t_obs: usize,
    /// Full observed + future tracks.
    pub ground_truth: Vec<Trajectory>,
    /// Goal candidates per pedestrian.
    pub candidates: Vec<Vec<Position2>>,
    pub samples: Vec<PredictionSample>,
    pub min_ade: f64,
    pub min_fde: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionFile {
    pub format: String,
    pub dataset: String,
    pub checkpoint: PathBuf,
    pub config: ProtocolConfig,
    pub windows: Vec<WindowPrediction>,
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))
}

fn load_datasets(paths: &[PathBuf]) -> Result<Vec<Dataset>, CliError> {
    paths
        .iter()
        .map(|p| {
            Dataset::from_file(p).map_err(|e| match e {
                goaldyn::Error::Io(io) => CliError::Data(format!("cannot read {}: {io}", p.display())),
                other => other.into(),
            })
        })
        .collect()
}

fn load_checkpoint(path: &Path) -> Result<Trainer, CliError> {
    if !path.is_file() {
        return Err(CliError::Data(format!("checkpoint {} does not exist", path.display())));
    }
    let ck = Checkpoint::load(path)
        .map_err(|e| CliError::Data(format!("cannot load checkpoint {}: {e}", path.display())))?;
    Ok(ck.into_trainer()?)
}

fn require(paths: &[PathBuf], what: &str) -> Result<(), CliError> {
    if paths.is_empty() {
        return Err(CliError::Usage(format!(
            "no {what} given (pass paths or set `datasets` in the config)"
        )));
    }
    Ok(())
}

pub fn ingest(cfg: &RunConfig) -> Result<(), CliError> {
    require(&cfg.datasets, "datasets")?;
    let datasets = load_datasets(&cfg.datasets)?;
    let mut table = format!(
        "{:<16}  {:>7}  {:>5}  {:>7}  {:>11}  {:>10}\n",
        "dataset", "rows", "peds", "frames", "train_wins", "eval_wins"
    );
    for ds in &datasets {
        let train = window_scenes(ds, cfg.t_obs, cfg.t_end, cfg.train_stride)?;
        let eval = window_scenes(ds, cfg.t_obs, cfg.t_end, cfg.eval_stride)?;
        let frames: std::collections::BTreeSet<i64> = ds.rows.iter().map(|r| r.frame_id).collect();
        let _ = writeln!(
            table,
            "{:<16}  {:>7}  {:>5}  {:>7}  {:>11}  {:>10}",
            ds.name,
            ds.rows.len(),
            ds.pedestrian_ids().len(),
            frames.len(),
            train.len(),
            eval.len()
        );
        write(&cfg.out_dir.join("cache").join(format!("{}.txt", ds.name)), &ds.to_text())?;
    }
    print!("{table}");
    Ok(())
}

pub fn synth(cfg: &RunConfig, name: &str, sets: usize) -> Result<(), CliError> {
    if sets == 0 {
        return Err(CliError::Usage("--sets must be at least 1".into()));
    }
    for i in 0..sets {
        let (label, seed) = if sets == 1 {
            (name.to_string(), cfg.synth.seed)
        } else {
            (format!("{name}_{i}"), cfg.synth.seed + i as u64)
        };
        let mut scfg = cfg.synth;
        scfg.seed = seed;
        let ds = generate(label.clone(), &scfg)?;
        let path = cfg.out_dir.join(format!("{label}.txt"));
        write(&path, &ds.to_text())?;
        println!("{}  ({} pedestrians, {} rows)", path.display(), ds.pedestrian_ids().len(), ds.rows.len());
    }
    Ok(())
}

/// Loss curve as `epoch,loss`, one row per completed epoch.
pub fn loss_csv(history: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (i, l) in history.iter().enumerate() {
        let _ = writeln!(out, "{},{}", i + 1, l);
    }
    out
}

pub fn train(cfg: &RunConfig, resume: Option<&Path>) -> Result<(), CliError> {
    require(&cfg.datasets, "datasets")?;
    let datasets = load_datasets(&cfg.datasets)?;
    let mut windows = Vec::new();
    for ds in &datasets {
        windows.extend(window_scenes(ds, cfg.t_obs, cfg.t_end, cfg.train_stride)?);
    }
    if windows.is_empty() {
        return Err(CliError::Data("the datasets contain no complete windows".into()));
    }
    let mut trainer = match resume {
        Some(path) => {
            let mut t = load_checkpoint(path)?;
            t.config.epochs = cfg.training.epochs;
            t
        }
        None => Trainer::new(cfg.training, cfg.variant, cfg.dynamics, cfg.t_end)?,
    };
    let remaining = cfg.training.epochs.saturating_sub(trainer.epochs_completed);
    let total = cfg.training.epochs;
    let result = trainer.train_epochs(&windows, remaining, |epoch, loss| {
        if epoch % 10 == 0 || epoch == total {
            eprintln!("epoch {epoch:>4}/{total}  loss {loss:.6e}");
        }
    });
    // keep the loss curve even when training diverges
    write(&cfg.out_dir.join("loss.csv"), &loss_csv(&trainer.loss_history))?;
    result?;
    let ck_path = cfg.out_dir.join("checkpoint.json");
    fs::create_dir_all(&cfg.out_dir).map_err(|e| CliError::Data(e.to_string()))?;
    Checkpoint::from_trainer(&trainer).save(&ck_path)?;
    println!(
        "trained {} windows to epoch {}; wrote {} and {}",
        windows.len(),
        trainer.epochs_completed,
        ck_path.display(),
        cfg.out_dir.join("loss.csv").display()
    );
    Ok(())
}

/// Protocol settings with the model-side fields taken from a checkpoint.
fn with_checkpoint(cfg: &RunConfig, trainer: &Trainer) -> ProtocolConfig {
    ProtocolConfig {
        training: trainer.config,
        variant: trainer.variant,
        dynamics: trainer.dynamics,
        ..cfg.protocol()
    }
}

pub fn predict(
    cfg: &RunConfig,
    checkpoint: &Path,
    dataset: &Path,
    window: Option<usize>,
    output: &str,
) -> Result<(), CliError> {
    require(&cfg.datasets, "goal-pool datasets")?;
    let trainer = load_checkpoint(checkpoint)?;
    let test = load_datasets(&[dataset.to_path_buf()])?.remove(0);
    let mut pool = Vec::new();
    for ds in load_datasets(&cfg.datasets)? {
        for w in window_scenes(&ds, cfg.t_obs, cfg.t_end, cfg.train_stride)? {
            pool.extend(w.trajectories);
        }
    }
    let pool = ExpertPool::new(pool)?;
    let windows = window_scenes(&test, cfg.t_obs, cfg.t_end, cfg.eval_stride)?;
    let selected: Vec<usize> = match window {
        Some(id) if id < windows.len() => vec![id],
        Some(id) => {
            return Err(CliError::Data(format!(
                "unknown window id {id}; {} has {} windows",
                test.name,
                windows.len()
            )))
        }
        None => (0..windows.len()).collect(),
    };
    let predictor = Predictor::from_trainer(&trainer);
    let mut out = Vec::with_capacity(selected.len());
    for id in selected {
        let w = &windows[id];
        let result = evaluate_window(w, &predictor, &pool, &cfg.goal, &cfg.eval)?;
        let candidates = w
            .observed()
            .iter()
            .map(|obs| estimate_goals(obs, &pool, &cfg.goal).map(|c| c.centers))
            .collect::<goaldyn::Result<Vec<_>>>()?;
        out.push(WindowPrediction {
            id,
            source: w.source.clone(),
            start_frame: w.start_frame,
            t_obs: w.t_obs,
            ground_truth: w.trajectories.clone(),
            candidates,
            samples: result.samples,
            min_ade: result.ade,
            min_fde: result.fde,
        });
    }
    let file = PredictionFile {
        format: PREDICTIONS_FORMAT.to_string(),
        dataset: test.name.clone(),
        checkpoint: checkpoint.to_path_buf(),
        config: with_checkpoint(cfg, &trainer),
        windows: out,
    };
    let path = cfg.out_dir.join(output);
    write(&path, &to_json(&file)?)?;
    println!("{} windows of {} -> {}", file.windows.len(), test.name, path.display());
    Ok(())
}

fn write_report(cfg: &RunConfig, stem: &str, json: String, table: &str) -> Result<(), CliError> {
    write(&cfg.out_dir.join(format!("{stem}.json")), &json)?;
    write(&cfg.out_dir.join(format!("{stem}.txt")), table)?;
    print!("{table}");
    Ok(())
}

pub fn eval(cfg: &RunConfig, checkpoint: &Path, test: &[PathBuf], loo: bool) -> Result<(), CliError> {
    let trainer = load_checkpoint(checkpoint)?;
    let protocol = with_checkpoint(cfg, &trainer);
    let report = if loo {
        require(&cfg.datasets, "datasets")?;
        leave_one_out(&load_datasets(&cfg.datasets)?, &protocol)?.report
    } else {
        require(test, "test datasets (--test)")?;
        let pool = load_datasets(&cfg.datasets)?;
        if pool.is_empty() {
            return Err(CliError::Usage("no goal-pool datasets given".into()));
        }
        evaluate_datasets(&trainer, &load_datasets(test)?, &pool, &protocol)?
    };
    write_report(cfg, "report", to_json(&report)?, &report.to_table())
}

pub fn ablate(cfg: &RunConfig) -> Result<(), CliError> {
    require(&cfg.datasets, "datasets")?;
    let report = run_ablation(&load_datasets(&cfg.datasets)?, &cfg.protocol())?;
    write_report(cfg, "ablation", to_json(&report)?, &report.to_table())
}

pub fn plot(cfg: &RunConfig, predictions: &Path, window: usize) -> Result<(), CliError> {
    let text = fs::read_to_string(predictions)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", predictions.display())))?;
    let file: PredictionFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("invalid predictions file {}: {e}", predictions.display())))?;
    if file.format != PREDICTIONS_FORMAT {
        return Err(CliError::Data(format!("unsupported predictions format `{}`", file.format)));
    }
    let w = file
        .windows
        .iter()
        .find(|w| w.id == window)
        .ok_or_else(|| CliError::Data(format!("unknown window id {window} in {}", predictions.display())))?;
    let svg = render_svg(w)?;
    let path = cfg.out_dir.join("plots").join(format!("{}_window_{window}.svg", file.dataset));
    write(&path, &svg)?;
    println!("{}", path.display());
    Ok(())
}
