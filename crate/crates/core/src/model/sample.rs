//! Autoregressive sampling of future trajectories.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::forward::{forward_input, SceneInput};
use super::params::HeadKind;
use super::tensor::Tensor;
use super::train::Variant;
use super::ModelParams;
use crate::dynamics::{assemble_pd, guarded_step, natural_gradient_velocity, DynamicsConfig};
use crate::error::{Error, Result};
use crate::types::{Position2, SceneWindow, Trajectory};

/// One sampled future for every pedestrian of a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSample {
    /// Predicted positions after the observed frames, world coordinates.
    pub trajectories: Vec<Trajectory>,
    /// Goal each pedestrian was driven toward.
    pub goals: Vec<Position2>,
    pub noise_seed: u64,
}

/// Draw `n` futures for a window.
///
/// `goals_per_sample` yields the per-pedestrian goals for draw `s`; each draw
/// gets its own noise vector from stream `s` of `seed`. Each future step runs
/// the model over the full history so far and advances every pedestrian with
/// the last step's output.
#[allow(clippy::too_many_arguments)]
pub fn sample_with_goals<G>(
    window: &SceneWindow,
    params: &ModelParams,
    variant: Variant,
    dynamics: &DynamicsConfig,
    noise_std: f64,
    n: usize,
    seed: u64,
    mut goals_per_sample: G,
) -> Result<Vec<PredictionSample>>
where
    G: FnMut(usize) -> Vec<Position2>,
{
    if params.dims.head != variant.head() {
        return Err(Error::shape(format!(
            "model head {:?} does not match variant {variant:?}",
            params.dims.head
        )));
    }
    let normal = Normal::new(0.0, noise_std).map_err(|e| Error::invalid(e.to_string()))?;
    let peds = window.len();
    let (t_obs, horizon) = (window.t_obs, window.pred_len());
    (0..n)
        .map(|s| {
            let goals = goals_per_sample(s);
            if goals.len() != peds {
                return Err(Error::shape(format!("{} goals for {peds} pedestrians", goals.len())));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64);
            let noise: Vec<f64> = (0..params.dims.z_dim).map(|_| normal.sample(&mut rng)).collect();

            let mut history: Vec<Vec<Position2>> =
                window.trajectories.iter().map(|t| t.positions[..t_obs].to_vec()).collect();
            for _ in 0..horizon {
                let steps = history[0].len();
                let input = Tensor::from_fn(peds * steps, 2, |r, c| {
                    let (i, t) = (r / steps, r % steps);
                    let p = history[i][t];
                    let origin = if variant.goal_shift { goals[i] } else { Position2::ORIGIN };
                    if c == 0 {
                        p.x - origin.x
                    } else {
                        p.y - origin.y
                    }
                });
                let input = SceneInput {
                    peds,
                    steps,
                    positions: input,
                };
                let out = forward_input(&input, params, &noise)?;
                for (i, h) in history.iter_mut().enumerate() {
                    let p = *h.last().expect("observed history");
                    let next = match out.head {
                        HeadKind::PdFactor => {
                            let pd = assemble_pd(out.pd_params(i, steps - 1), dynamics.sigma)?;
                            let v = natural_gradient_velocity(p, goals[i], &pd, dynamics);
                            guarded_step(p, goals[i], v, dynamics.dt)
                        }
                        HeadKind::Velocity => p + out.velocity(i, steps - 1) * dynamics.dt,
                    };
                    if !next.is_finite() {
                        return Err(Error::Numeric(format!(
                            "non-finite prediction for pedestrian {}",
                            window.trajectories[i].pedestrian_id
                        )));
                    }
                    h.push(next);
                }
            }
            let trajectories = history
                .into_iter()
                .zip(&window.trajectories)
                .map(|(h, t)| Trajectory::new(t.pedestrian_id, t.start_frame, h[t_obs..].to_vec()))
                .collect::<Result<Vec<_>>>()?;
            Ok(PredictionSample {
                trajectories,
                goals,
                noise_seed: s as u64,
            })
        })
        .collect()
}

/// `n` draws toward fixed per-pedestrian goals.
pub fn sample_predictions(
    window: &SceneWindow,
    params: &ModelParams,
    goals: &[Position2],
    n: usize,
    seed: u64,
    variant: Variant,
    dynamics: &DynamicsConfig,
) -> Result<Vec<PredictionSample>> {
    sample_with_goals(window, params, variant, dynamics, 1.0, n, seed, |_| goals.to_vec())
}
