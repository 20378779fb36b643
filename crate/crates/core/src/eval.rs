//! Displacement metrics, Best-of-N aggregation, the leave-one-out protocol
//! and the component ablation.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{attractor_value, DynamicsConfig};
use crate::error::{Error, Result};
use crate::goals::{estimate_goals, select_oracle_goal, ExpertPool, GoalConfig};
use crate::model::{sample_with_goals, train, ModelParams, PredictionSample, Trainer, TrainingConfig, Variant};
use crate::types::{window_scenes, Dataset, Position2, SceneWindow, Trajectory, T_END, T_OBS};

/// Mean displacement over the predicted frames `t_obs..t_end` (0-based).
pub fn ade(pred: &Trajectory, gt: &Trajectory, t_obs: usize, t_end: usize) -> Result<f64> {
    check_lengths(pred, gt, t_obs, t_end)?;
    Ok(future_ade(&pred.positions[t_obs..t_end], &gt.positions[t_obs..t_end]))
}

/// Displacement at the final frame.
pub fn fde(pred: &Trajectory, gt: &Trajectory, t_end: usize) -> Result<f64> {
    check_lengths(pred, gt, t_end - 1, t_end)?;
    Ok(pred.positions[t_end - 1].distance(gt.positions[t_end - 1]))
}

fn check_lengths(pred: &Trajectory, gt: &Trajectory, t_obs: usize, t_end: usize) -> Result<()> {
    if t_obs >= t_end {
        return Err(Error::invalid(format!("need t_obs < t_end, got {t_obs} and {t_end}")));
    }
    if pred.len() != t_end || gt.len() != t_end {
        return Err(Error::invalid(format!(
            "metric expects {t_end} positions, got {} predicted and {} ground truth",
            pred.len(),
            gt.len()
        )));
    }
    Ok(())
}

fn future_ade(pred: &[Position2], gt: &[Position2]) -> f64 {
    pred.iter().zip(gt).map(|(a, b)| a.distance(*b)).sum::<f64>() / pred.len() as f64
}

/// Per pedestrian, the smallest ADE and (independently) the smallest FDE
/// over all samples, then averaged over pedestrians.
pub fn best_of_n(samples: &[PredictionSample], gt: &SceneWindow) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::invalid("best-of-n needs at least one sample"));
    }
    if gt.is_empty() {
        return Err(Error::invalid("best-of-n on a window with no pedestrians"));
    }
    let horizon = gt.pred_len();
    let mut ade_sum = 0.0;
    let mut fde_sum = 0.0;
    for (i, truth) in gt.trajectories.iter().enumerate() {
        let future = &truth.positions[gt.t_obs..];
        let (mut best_ade, mut best_fde) = (f64::INFINITY, f64::INFINITY);
        for s in samples {
            let pred = s
                .trajectories
                .get(i)
                .ok_or_else(|| Error::invalid("sample is missing a pedestrian"))?;
            if pred.len() != horizon {
                return Err(Error::invalid(format!(
                    "sample has {} future positions, expected {horizon}",
                    pred.len()
                )));
            }
            best_ade = best_ade.min(future_ade(&pred.positions, future));
            best_fde = best_fde.min(pred.last().distance(truth.last()));
        }
        ade_sum += best_ade;
        fde_sum += best_fde;
    }
    let m = gt.len() as f64;
    Ok((ade_sum / m, fde_sum / m))
}

/// How the goals of the `n` evaluation draws are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalMode {
    /// Every draw uses the candidate nearest the ground-truth endpoint.
    Oracle,
    /// Draw `s` uses candidate `s mod K`.
    PerCandidate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub n_samples: usize,
    pub goal_mode: GoalMode,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_samples: 20,
            goal_mode: GoalMode::Oracle,
            seed: 0,
        }
    }
}

/// Everything the train/evaluate protocol needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    pub t_obs: usize,
    pub t_end: usize,
    pub train_stride: usize,
    pub eval_stride: usize,
    pub goal: GoalConfig,
    pub dynamics: DynamicsConfig,
    pub training: TrainingConfig,
    pub eval: EvalConfig,
    pub variant: Variant,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            t_obs: T_OBS,
            t_end: T_END,
            train_stride: 1,
            eval_stride: T_END,
            goal: GoalConfig::default(),
            dynamics: DynamicsConfig::default(),
            training: TrainingConfig::default(),
            eval: EvalConfig::default(),
            variant: Variant::default(),
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_obs < 2 || self.t_obs >= self.t_end {
            return Err(Error::Config(format!(
                "need 2 <= t_obs < t_end, got t_obs={} t_end={}",
                self.t_obs, self.t_end
            )));
        }
        if self.train_stride == 0 || self.eval_stride == 0 {
            return Err(Error::Config("window strides must be at least 1".into()));
        }
        if self.eval.n_samples == 0 {
            return Err(Error::Config("n_samples must be at least 1".into()));
        }
        self.goal.validate()?;
        self.dynamics.validate()?;
        self.training.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub name: String,
    pub ade: f64,
    pub fde: f64,
    pub n_windows: usize,
    pub n_pedestrians: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
    pub average: MetricsRow,
    /// Samples drawn per window.
    pub samples_per_window: usize,
    /// Whether every sample was verified to descend toward its goal.
    pub descent_checked: bool,
    pub config: ProtocolConfig,
}

impl MetricsReport {
    fn from_rows(rows: Vec<MetricsRow>, config: &ProtocolConfig) -> Self {
        let n = rows.len().max(1) as f64;
        let average = MetricsRow {
            name: "average".into(),
            ade: rows.iter().map(|r| r.ade).sum::<f64>() / n,
            fde: rows.iter().map(|r| r.fde).sum::<f64>() / n,
            n_windows: rows.iter().map(|r| r.n_windows).sum(),
            n_pedestrians: rows.iter().map(|r| r.n_pedestrians).sum(),
        };
        MetricsReport {
            rows,
            average,
            samples_per_window: config.eval.n_samples,
            descent_checked: config.variant.stable_dynamics,
            config: *config,
        }
    }

    /// Aligned plain-text table, one line per dataset plus the average.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let width = self
            .rows
            .iter()
            .map(|r| r.name.len())
            .chain(["dataset".len(), "average".len()])
            .max()
            .unwrap_or(7);
        let _ = writeln!(
            out,
            "{:<width$}  {:>8}  {:>8}  {:>8}  {:>8}",
            "dataset", "minADE", "minFDE", "windows", "peds"
        );
        for r in self.rows.iter().chain(std::iter::once(&self.average)) {
            let _ = writeln!(
                out,
                "{:<width$}  {:>8.4}  {:>8.4}  {:>8}  {:>8}",
                r.name, r.ade, r.fde, r.n_windows, r.n_pedestrians
            );
        }
        out
    }
}

/// Metrics for one evaluated window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowResult {
    pub ade: f64,
    pub fde: f64,
    pub pedestrians: usize,
    pub samples: Vec<PredictionSample>,
}

/// A trained model plus what it needs at prediction time.
#[derive(Debug, Clone, Copy)]
pub struct Predictor<'a> {
    pub params: &'a ModelParams,
    pub variant: Variant,
    pub dynamics: &'a DynamicsConfig,
    pub noise_std: f64,
}

impl<'a> Predictor<'a> {
    pub fn from_trainer(trainer: &'a Trainer) -> Self {
        Predictor {
            params: &trainer.params,
            variant: trainer.variant,
            dynamics: &trainer.dynamics,
            noise_std: trainer.config.noise_std,
        }
    }
}

/// Potential never increases from the last observed position through every
/// predicted position.
fn check_descent(window: &SceneWindow, sample: &PredictionSample) -> Result<()> {
    for ((pred, truth), goal) in sample.trajectories.iter().zip(&window.trajectories).zip(&sample.goals) {
        let mut prev = attractor_value(truth.positions[window.t_obs - 1], *goal);
        for p in &pred.positions {
            let v = attractor_value(*p, *goal);
            if v > prev + 1e-12 * (1.0 + prev) {
                return Err(Error::Numeric(format!(
                    "pedestrian {} moved away from its goal ({prev} -> {v})",
                    pred.pedestrian_id
                )));
            }
            prev = v;
        }
    }
    Ok(())
}

/// Goal candidates, sampling and Best-of-N for one window.
pub fn evaluate_window(
    window: &SceneWindow,
    predictor: &Predictor<'_>,
    pool: &ExpertPool,
    goal_cfg: &GoalConfig,
    eval: &EvalConfig,
) -> Result<WindowResult> {
    let candidates = window
        .observed()
        .iter()
        .map(|obs| estimate_goals(obs, pool, goal_cfg))
        .collect::<Result<Vec<_>>>()?;
    let oracle = candidates
        .iter()
        .zip(window.endpoints())
        .map(|(c, gt)| select_oracle_goal(c, gt))
        .collect::<Result<Vec<_>>>()?;
    let samples = sample_with_goals(
        window,
        predictor.params,
        predictor.variant,
        predictor.dynamics,
        predictor.noise_std,
        eval.n_samples,
        eval.seed,
        |s| match eval.goal_mode {
            GoalMode::Oracle => oracle.clone(),
            GoalMode::PerCandidate => candidates.iter().map(|c| c.centers[s % c.len()]).collect(),
        },
    )?;
    if predictor.variant.stable_dynamics {
        for s in &samples {
            check_descent(window, s)?;
        }
    }
    let (ade, fde) = best_of_n(&samples, window)?;
    Ok(WindowResult {
        ade,
        fde,
        pedestrians: window.len(),
        samples,
    })
}

/// Evaluate every window; unweighted mean over windows.
pub fn evaluate_windows(
    name: &str,
    windows: &[SceneWindow],
    predictor: &Predictor<'_>,
    pool: &ExpertPool,
    goal_cfg: &GoalConfig,
    eval: &EvalConfig,
) -> Result<MetricsRow> {
    let results = windows
        .par_iter()
        .map(|w| evaluate_window(w, predictor, pool, goal_cfg, eval))
        .collect::<Result<Vec<_>>>()?;
    let n = results.len().max(1) as f64;
    Ok(MetricsRow {
        name: name.to_string(),
        ade: results.iter().map(|r| r.ade).sum::<f64>() / n,
        fde: results.iter().map(|r| r.fde).sum::<f64>() / n,
        n_windows: results.len(),
        n_pedestrians: results.iter().map(|r| r.pedestrians).sum(),
    })
}

/// Unique identity of a pedestrian track across datasets.
pub type Identity = (String, i64);

fn identities<'a>(windows: impl IntoIterator<Item = &'a SceneWindow>) -> BTreeSet<Identity> {
    windows
        .into_iter()
        .flat_map(|w| w.trajectories.iter().map(move |t| (w.source.clone(), t.pedestrian_id)))
        .collect()
}

/// What one leave-one-out round trained and tested on.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundTrace {
    pub held_out: String,
    pub train_sets: Vec<String>,
    pub train_identities: BTreeSet<Identity>,
    pub pool_identities: BTreeSet<Identity>,
    pub test_identities: BTreeSet<Identity>,
    pub loss_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeaveOneOut {
    pub report: MetricsReport,
    pub rounds: Vec<RoundTrace>,
}

fn check_datasets(datasets: &[Dataset]) -> Result<()> {
    if datasets.len() < 2 {
        return Err(Error::Config(format!(
            "leave-one-out needs at least 2 datasets, got {}",
            datasets.len()
        )));
    }
    let names: BTreeSet<&str> = datasets.iter().map(|d| d.name.as_str()).collect();
    if names.len() != datasets.len() {
        return Err(Error::Config("dataset names must be unique".into()));
    }
    Ok(())
}

/// Train on all but one dataset, test on the held-out one, for every dataset.
pub fn leave_one_out(datasets: &[Dataset], cfg: &ProtocolConfig) -> Result<LeaveOneOut> {
    cfg.validate()?;
    check_datasets(datasets)?;
    let mut rows = Vec::with_capacity(datasets.len());
    let mut rounds = Vec::with_capacity(datasets.len());
    for (held, test_set) in datasets.iter().enumerate() {
        let mut train_windows = Vec::new();
        for (i, ds) in datasets.iter().enumerate() {
            if i != held {
                train_windows.extend(window_scenes(ds, cfg.t_obs, cfg.t_end, cfg.train_stride)?);
            }
        }
        let test_windows = window_scenes(test_set, cfg.t_obs, cfg.t_end, cfg.eval_stride)?;
        if train_windows.is_empty() {
            return Err(Error::Config(format!(
                "no training windows when holding out {}",
                test_set.name
            )));
        }
        let pool_trajectories: Vec<Trajectory> = train_windows
            .iter()
            .flat_map(|w| w.trajectories.iter().cloned())
            .collect();
        let trace = RoundTrace {
            held_out: test_set.name.clone(),
            train_sets: datasets
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != held)
                .map(|(_, d)| d.name.clone())
                .collect(),
            train_identities: identities(&train_windows),
            pool_identities: identities(&train_windows),
            test_identities: identities(&test_windows),
            loss_history: Vec::new(),
        };
        if !trace.train_identities.is_disjoint(&trace.test_identities)
            || !trace.pool_identities.is_disjoint(&trace.test_identities)
        {
            return Err(Error::Config(format!(
                "held-out set {} leaks into training",
                test_set.name
            )));
        }

        let pool = ExpertPool::new(pool_trajectories)?;
        let trainer = train(&train_windows, &cfg.training, cfg.variant, &cfg.dynamics)?;
        let row = evaluate_windows(
            &test_set.name,
            &test_windows,
            &Predictor::from_trainer(&trainer),
            &pool,
            &cfg.goal,
            &cfg.eval,
        )?;
        rows.push(row);
        rounds.push(RoundTrace {
            loss_history: trainer.loss_history,
            ..trace
        });
    }
    Ok(LeaveOneOut {
        report: MetricsReport::from_rows(rows, cfg),
        rounds,
    })
}

/// Evaluate an already-trained model on test datasets against a goal pool
/// built from the training datasets.
pub fn evaluate_datasets(
    trainer: &Trainer,
    test: &[Dataset],
    pool_sets: &[Dataset],
    cfg: &ProtocolConfig,
) -> Result<MetricsReport> {
    cfg.validate()?;
    if test.is_empty() {
        return Err(Error::Config("no test datasets given".into()));
    }
    let mut pool_trajectories = Vec::new();
    for ds in pool_sets {
        for w in window_scenes(ds, cfg.t_obs, cfg.t_end, cfg.train_stride)? {
            pool_trajectories.extend(w.trajectories);
        }
    }
    let pool = ExpertPool::new(pool_trajectories)?;
    let mut effective = *cfg;
    effective.variant = trainer.variant;
    effective.training = trainer.config;
    effective.dynamics = trainer.dynamics;
    let predictor = Predictor::from_trainer(trainer);
    let rows = test
        .iter()
        .map(|ds| {
            let windows = window_scenes(ds, cfg.t_obs, cfg.t_end, cfg.eval_stride)?;
            evaluate_windows(&ds.name, &windows, &predictor, &pool, &cfg.goal, &cfg.eval)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsReport::from_rows(rows, &effective))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub variant: Variant,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

/// The four component combinations, backbone always on.
pub const ABLATION_ROWS: [(&str, Variant); 4] = [
    (
        "backbone",
        Variant {
            goal_shift: false,
            stable_dynamics: false,
        },
    ),
    (
        "backbone+stable",
        Variant {
            goal_shift: false,
            stable_dynamics: true,
        },
    ),
    (
        "backbone+goalshift",
        Variant {
            goal_shift: true,
            stable_dynamics: false,
        },
    ),
    (
        "backbone+goalshift+stable",
        Variant {
            goal_shift: true,
            stable_dynamics: true,
        },
    ),
];

pub fn run_ablation(datasets: &[Dataset], base: &ProtocolConfig) -> Result<AblationReport> {
    let rows = ABLATION_ROWS
        .iter()
        .map(|&(label, variant)| {
            let cfg = ProtocolConfig { variant, ..*base };
            Ok(AblationRow {
                label: label.to_string(),
                variant,
                report: leave_one_out(datasets, &cfg)?.report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationReport { rows })
}

impl AblationReport {
    /// One line per component combination with the averaged metrics.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<26}  {:>10}  {:>6}  {:>8}  {:>8}",
            "components", "goal_shift", "stable", "minADE", "minFDE"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<26}  {:>10}  {:>6}  {:>8.4}  {:>8.4}",
                r.label,
                if r.variant.goal_shift { "yes" } else { "no" },
                if r.variant.stable_dynamics { "yes" } else { "no" },
                r.report.average.ade,
                r.report.average.fde
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn traj(points: Vec<(f64, f64)>) -> Trajectory {
        Trajectory::new(0, 0, points.into_iter().map(|(x, y)| Position2::new(x, y)).collect()).unwrap()
    }

    fn walk(n: usize) -> Trajectory {
        traj((0..n).map(|t| (0.4 * t as f64, 0.1 * (t * t) as f64)).collect())
    }

    fn sample_of(futures: Vec<Trajectory>) -> PredictionSample {
        let goals = futures.iter().map(Trajectory::last).collect();
        PredictionSample {
            trajectories: futures,
            goals,
            noise_seed: 0,
        }
    }

    #[test]
    fn ade_fde_examples() {
        let gt = walk(20);
        assert_eq!(ade(&gt, &gt, 8, 20).unwrap(), 0.0);
        assert_eq!(fde(&gt, &gt, 20).unwrap(), 0.0);
        let off = gt.translate(crate::types::Velocity2::new(1.0, 0.0));
        assert_relative_eq!(ade(&off, &gt, 8, 20).unwrap(), 1.0, epsilon = 1e-12);

        let gt2 = traj(vec![(0., 0.), (0., 0.), (0., 0.)]);
        let pred2 = traj(vec![(5., 5.), (1., 0.), (0., 3.)]);
        assert_relative_eq!(ade(&pred2, &gt2, 1, 3).unwrap(), 2.0, epsilon = 1e-12);

        let mut end = gt.clone();
        end.positions[19].x += 3.0;
        end.positions[19].y += 4.0;
        assert_relative_eq!(fde(&end, &gt, 20).unwrap(), 5.0, epsilon = 1e-12);
        let mut middle = end.clone();
        for p in &mut middle.positions[8..19] {
            p.x -= 7.0;
        }
        assert_eq!(fde(&middle, &gt, 20).unwrap(), fde(&end, &gt, 20).unwrap());
        assert!(ade(&walk(19), &gt, 8, 20).is_err());
    }

    fn window_of(trajs: Vec<Trajectory>) -> SceneWindow {
        SceneWindow::new("w", 0, trajs, 8, 20).unwrap()
    }

    #[test]
    fn best_of_n_examples() {
        let gt = walk(20);
        let w = window_of(vec![gt.clone()]);
        let future = gt.positions[8..].to_vec();
        let perfect = traj(future.iter().map(|p| (p.x, p.y)).collect());
        let mut samples: Vec<PredictionSample> = (1..20)
            .map(|k| sample_of(vec![perfect.translate(crate::types::Velocity2::new(k as f64, 0.0))]))
            .collect();
        samples.insert(7, sample_of(vec![perfect.clone()]));
        assert_eq!(best_of_n(&samples, &w).unwrap(), (0.0, 0.0));

        let one = vec![sample_of(vec![perfect.translate(crate::types::Velocity2::new(0.0, 2.0))])];
        let full = traj(
            gt.positions[..8]
                .iter()
                .chain(&one[0].trajectories[0].positions)
                .map(|p| (p.x, p.y))
                .collect(),
        );
        let (a, f) = best_of_n(&one, &w).unwrap();
        assert_relative_eq!(a, ade(&full, &gt, 8, 20).unwrap(), epsilon = 1e-12);
        assert_relative_eq!(f, fde(&full, &gt, 20).unwrap(), epsilon = 1e-12);
        assert!(best_of_n(&[], &w).is_err());
    }

    #[test]
    fn min_ade_and_min_fde_come_from_different_samples() {
        let gt = traj(vec![(0.0, 0.0); 20]);
        let w = window_of(vec![gt]);
        // sample A: 0.5 everywhere; sample B: exact except a final miss of 3
        let a = traj(vec![(0.5, 0.0); 12]);
        let mut b_pts = vec![(0.0, 0.0); 12];
        b_pts[11] = (3.0, 0.0);
        let b = traj(b_pts);
        let (min_ade, min_fde) = best_of_n(&[sample_of(vec![a]), sample_of(vec![b])], &w).unwrap();
        assert_relative_eq!(min_ade, 0.25, epsilon = 1e-12); // B: 3/12
        assert_relative_eq!(min_fde, 0.5, epsilon = 1e-12); // A
    }

    #[test]
    fn report_average_is_unweighted_mean() {
        let rows = vec![
            MetricsRow { name: "a".into(), ade: 0.2, fde: 0.4, n_windows: 3, n_pedestrians: 10 },
            MetricsRow { name: "b".into(), ade: 0.4, fde: 1.0, n_windows: 1, n_pedestrians: 1 },
        ];
        let r = MetricsReport::from_rows(rows, &ProtocolConfig::default());
        assert_relative_eq!(r.average.ade, 0.3, epsilon = 1e-15);
        assert_relative_eq!(r.average.fde, 0.7, epsilon = 1e-15);
        assert_eq!(r.average.n_windows, 4);
        let table = r.to_table();
        assert_eq!(table.lines().count(), 4);
        assert!(table.lines().last().unwrap().starts_with("average"));
    }

    #[test]
    fn leave_one_out_needs_datasets() {
        let cfg = ProtocolConfig::default();
        assert!(matches!(leave_one_out(&[], &cfg), Err(Error::Config(_))));
    }

    fn future(max: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), max..=max)
    }

    proptest! {
        #[test]
        fn best_ade_non_increasing_in_n(futs in prop::collection::vec(future(12), 1..8)) {
            let gt = walk(20);
            let w = window_of(vec![gt]);
            let samples: Vec<PredictionSample> = futs.into_iter().map(|f| sample_of(vec![traj(f)])).collect();
            let mut prev = f64::INFINITY;
            for n in 1..=samples.len() {
                let (a, _) = best_of_n(&samples[..n], &w).unwrap();
                prop_assert!(a <= prev);
                prev = a;
            }
        }

        #[test]
        fn metrics_rigid_invariant(pts in future(20), noise in future(20), angle in 0.0..std::f64::consts::TAU, tx in -9.0..9.0f64, ty in -9.0..9.0f64) {
            let gt = traj(pts.clone());
            let pred = traj(pts.iter().zip(&noise).map(|(p, n)| (p.0 + 0.1 * n.0, p.1 + 0.1 * n.1)).collect());
            let (c, s) = (angle.cos(), angle.sin());
            let rigid = |t: &Trajectory| traj(t.positions.iter().map(|p| (c * p.x - s * p.y + tx, s * p.x + c * p.y + ty)).collect());
            let a0 = ade(&pred, &gt, 8, 20).unwrap();
            let a1 = ade(&rigid(&pred), &rigid(&gt), 8, 20).unwrap();
            prop_assert!((a0 - a1).abs() < 1e-9);
            let f0 = fde(&pred, &gt, 20).unwrap();
            let f1 = fde(&rigid(&pred), &rigid(&gt), 20).unwrap();
            prop_assert!((f0 - f1).abs() < 1e-9);
        }
    }
}
