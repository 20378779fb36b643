//! Teacher-forced training of the matrix-field model.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::forward::{bind_params, forward_graph, SceneInput};
use super::params::{HeadKind, ModelDims, ModelParams};
use super::tape::{Graph, StepConstants};
use super::tensor::Tensor;
use crate::dynamics::DynamicsConfig;
use crate::error::{Error, Result};
use crate::types::{goal_shift, SceneWindow, Trajectory};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub d: usize,
    pub z_dim: usize,
    pub heads: usize,
    pub seed: u64,
    /// Global gradient-norm ceiling.
    pub grad_clip: f64,
    /// Windows per optimizer step.
    pub batch_size: usize,
    /// Standard deviation of the injected Gaussian noise.
    pub noise_std: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 1e-3,
            epochs: 200,
            d: 32,
            z_dim: 16,
            heads: 2,
            seed: 0,
            grad_clip: 1.0,
            batch_size: 8,
            noise_std: 1.0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.d == 0 || self.heads == 0 || !self.d.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "d={} must be a positive multiple of heads={}",
                self.d, self.heads
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be finite and >= 0".into()));
        }
        if !(self.grad_clip > 0.0) {
            return Err(Error::Config("grad_clip must be > 0".into()));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config("noise_std must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Which of the two method components are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Variant {
    /// Feed goal-shifted positions to the model (otherwise absolute).
    pub goal_shift: bool,
    /// Advance positions through the PD natural-gradient law (otherwise the
    /// head emits a velocity directly).
    pub stable_dynamics: bool,
}

impl Default for Variant {
    fn default() -> Self {
        Variant {
            goal_shift: true,
            stable_dynamics: true,
        }
    }
}

impl Variant {
    pub fn head(&self) -> HeadKind {
        if self.stable_dynamics {
            HeadKind::PdFactor
        } else {
            HeadKind::Velocity
        }
    }
}

/// Mean squared displacement over every position after the first.
///
/// Normalised by `M · (len − 1)` where `M` is the number of trajectories.
pub fn mse_loss(predicted: &[Trajectory], ground_truth: &[Trajectory]) -> Result<f64> {
    if predicted.len() != ground_truth.len() || predicted.is_empty() {
        return Err(Error::invalid(format!(
            "loss needs matching non-empty sets, got {} predicted and {} ground truth",
            predicted.len(),
            ground_truth.len()
        )));
    }
    let len = ground_truth[0].len();
    if len < 2 {
        return Err(Error::invalid("loss needs trajectories of at least 2 positions"));
    }
    let mut sum = 0.0;
    for (p, g) in predicted.iter().zip(ground_truth) {
        if p.len() != len || g.len() != len {
            return Err(Error::invalid("loss trajectories differ in length"));
        }
        for (a, b) in p.positions.iter().zip(&g.positions).skip(1) {
            let d = *a - *b;
            sum += d.dot(d);
        }
    }
    Ok(sum / (predicted.len() * (len - 1)) as f64)
}

/// Inputs for one teacher-forced window: model input plus goal-frame geometry.
struct WindowBatch {
    input: SceneInput,
    /// Goal-frame positions at the rows that predict a successor.
    from: Tensor,
    /// Goal-frame positions one step later.
    target: Tensor,
    rows: Vec<usize>,
}

fn prepare(window: &SceneWindow, variant: Variant) -> Result<WindowBatch> {
    let shifted: Vec<Trajectory> = window
        .trajectories
        .iter()
        .map(|t| goal_shift(t, t.last()))
        .collect();
    let geometry = SceneInput::from_trajectories(&shifted)?;
    let input = if variant.goal_shift {
        geometry.clone()
    } else {
        SceneInput::from_trajectories(&window.trajectories)?
    };
    let steps = geometry.steps;
    if steps < 2 {
        return Err(Error::invalid("training windows need at least 2 steps"));
    }
    let rows: Vec<usize> = (0..geometry.peds)
        .flat_map(|i| (0..steps - 1).map(move |t| i * steps + t))
        .collect();
    let pick = |offset: usize| {
        Tensor::from_fn(rows.len(), 2, |r, c| geometry.positions.get(rows[r] + offset, c))
    };
    Ok(WindowBatch {
        from: pick(0),
        target: pick(1),
        input,
        rows,
    })
}

/// Teacher-forced loss of one window and its gradient for every parameter
/// tensor (canonical order).
pub fn loss_and_gradients(
    window: &SceneWindow,
    params: &ModelParams,
    variant: Variant,
    dynamics: &DynamicsConfig,
    noise: &[f64],
) -> Result<(f64, Vec<Tensor>)> {
    let batch = prepare(window, variant)?;
    let mut g = Graph::new();
    let pv = bind_params(&mut g, params);
    let loss = record_loss(&mut g, &pv, params, &batch, variant, dynamics, noise)?;
    let value = g.value(loss).get(0, 0);
    let grads = g.backward(loss);
    let tensors = params.tensors();
    let out = pv
        .0
        .iter()
        .zip(tensors)
        .map(|(v, t)| grads.wrt(*v).cloned().unwrap_or_else(|| Tensor::zeros(t.rows(), t.cols())))
        .collect();
    Ok((value, out))
}

/// Teacher-forced loss of one window, forward only.
pub fn window_loss(
    window: &SceneWindow,
    params: &ModelParams,
    variant: Variant,
    dynamics: &DynamicsConfig,
    noise: &[f64],
) -> Result<f64> {
    let batch = prepare(window, variant)?;
    let mut g = Graph::new();
    let pv = bind_params(&mut g, params);
    let loss = record_loss(&mut g, &pv, params, &batch, variant, dynamics, noise)?;
    Ok(g.value(loss).get(0, 0))
}

fn record_loss(
    g: &mut Graph,
    pv: &super::forward::ParamVars,
    params: &ModelParams,
    batch: &WindowBatch,
    variant: Variant,
    dynamics: &DynamicsConfig,
    noise: &[f64],
) -> Result<super::tape::Var> {
    if params.dims.head != variant.head() {
        return Err(Error::shape(format!(
            "model head {:?} does not match variant {:?}",
            params.dims.head, variant
        )));
    }
    let out = forward_graph(g, pv, params, &batch.input, noise)?;
    let picked = g.gather_rows(out, batch.rows.clone());
    let next = if variant.stable_dynamics {
        let consts = StepConstants {
            sigma: dynamics.sigma,
            goal_epsilon: dynamics.goal_epsilon,
            dt: dynamics.dt,
        };
        g.pd_step(picked, batch.from.clone(), consts)
    } else {
        g.velocity_step(picked, &batch.from, dynamics.dt)
    };
    let denom = batch.rows.len() as f64;
    Ok(g.mse_loss(next, batch.target.clone(), denom))
}

/// First and second moment estimates for every parameter tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Tensor> = params
            .tensors()
            .iter()
            .map(|t| Tensor::zeros(t.rows(), t.cols()))
            .collect();
        AdamState {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    fn update(&mut self, params: &mut ModelParams, grads: &[Tensor], lr: f64) {
        self.step += 1;
        let bc1 = 1.0 - BETA1.powi(self.step as i32);
        let bc2 = 1.0 - BETA2.powi(self.step as i32);
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            let pd = p.data_mut();
            for i in 0..pd.len() {
                let gi = g.data()[i];
                let mi = BETA1 * m.data()[i] + (1.0 - BETA1) * gi;
                let vi = BETA2 * v.data()[i] + (1.0 - BETA2) * gi * gi;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                pd[i] -= lr * (mi / bc1) / ((vi / bc2).sqrt() + ADAM_EPS);
            }
        }
    }
}

/// Model, optimizer state and loss history; resumable across calls.
#[derive(Debug, Clone, PartialEq)]
pub struct Trainer {
    pub params: ModelParams,
    pub config: TrainingConfig,
    pub variant: Variant,
    pub dynamics: DynamicsConfig,
    pub adam: AdamState,
    pub epochs_completed: usize,
    /// Mean window loss per completed epoch.
    pub loss_history: Vec<f64>,
}

impl Trainer {
    pub fn new(
        config: TrainingConfig,
        variant: Variant,
        dynamics: DynamicsConfig,
        max_len: usize,
    ) -> Result<Self> {
        config.validate()?;
        dynamics.validate()?;
        let dims = ModelDims {
            d: config.d,
            z_dim: config.z_dim,
            heads: config.heads,
            max_len,
            head: variant.head(),
        };
        let params = ModelParams::init(dims, config.seed)?;
        let adam = AdamState::new(&params);
        Ok(Trainer {
            params,
            config,
            variant,
            dynamics,
            adam,
            epochs_completed: 0,
            loss_history: Vec::new(),
        })
    }

    /// Window order and noise for an epoch depend only on the seed and epoch index.
    fn epoch_plan(&self, windows: usize) -> (Vec<usize>, Vec<Vec<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(self.epochs_completed as u64 + 1);
        let mut order: Vec<usize> = (0..windows).collect();
        order.shuffle(&mut rng);
        let normal = Normal::new(0.0, self.config.noise_std).expect("finite std");
        let noise = (0..windows)
            .map(|_| (0..self.config.z_dim).map(|_| normal.sample(&mut rng)).collect())
            .collect();
        (order, noise)
    }

    /// One pass over `windows`; returns the mean window loss.
    pub fn run_epoch(&mut self, windows: &[SceneWindow]) -> Result<f64> {
        if windows.is_empty() {
            return Err(Error::invalid("training needs at least one window"));
        }
        let (order, noise) = self.epoch_plan(windows.len());
        let mut epoch_loss = 0.0;
        for batch in order.chunks(self.config.batch_size) {
            let params = &self.params;
            let results = batch
                .par_iter()
                .map(|&w| {
                    loss_and_gradients(&windows[w], params, self.variant, &self.dynamics, &noise[w])
                })
                .collect::<Result<Vec<_>>>()?;

            let scale = 1.0 / batch.len() as f64;
            let mut total = params
                .tensors()
                .iter()
                .map(|t| Tensor::zeros(t.rows(), t.cols()))
                .collect::<Vec<_>>();
            for (loss, grads) in &results {
                if !loss.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite training loss at epoch {}",
                        self.epochs_completed + 1
                    )));
                }
                epoch_loss += loss;
                for (t, g) in total.iter_mut().zip(grads) {
                    t.add_assign(g);
                }
            }
            let mut norm_sq = 0.0;
            for t in &mut total {
                t.scale(scale);
                norm_sq += t.sum_sq();
            }
            let norm = norm_sq.sqrt();
            if !norm.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite gradient at epoch {}",
                    self.epochs_completed + 1
                )));
            }
            if norm > self.config.grad_clip {
                let k = self.config.grad_clip / norm;
                total.iter_mut().for_each(|t| t.scale(k));
            }
            self.adam.update(&mut self.params, &total, self.config.learning_rate);
        }
        let mean = epoch_loss / windows.len() as f64;
        self.epochs_completed += 1;
        self.loss_history.push(mean);
        Ok(mean)
    }

    /// Run `epochs` further epochs, reporting each epoch's loss to `on_epoch`.
    pub fn train_epochs(
        &mut self,
        windows: &[SceneWindow],
        epochs: usize,
        mut on_epoch: impl FnMut(usize, f64),
    ) -> Result<()> {
        for _ in 0..epochs {
            let loss = self.run_epoch(windows)?;
            on_epoch(self.epochs_completed, loss);
        }
        Ok(())
    }
}

/// Train a fresh model for `cfg.epochs` epochs.
pub fn train(
    windows: &[SceneWindow],
    cfg: &TrainingConfig,
    variant: Variant,
    dynamics: &DynamicsConfig,
) -> Result<Trainer> {
    if windows.is_empty() {
        return Err(Error::invalid("training needs at least one window"));
    }
    let max_len = windows.iter().map(|w| w.t_end).max().unwrap_or(0);
    let mut trainer = Trainer::new(*cfg, variant, *dynamics, max_len)?;
    trainer.train_epochs(windows, cfg.epochs, |_, _| {})?;
    Ok(trainer)
}
