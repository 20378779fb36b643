//! Forward pass of the matrix-field model.
//!
//! Rows of every hidden tensor are ordered pedestrian-major
//! (`row = ped * steps + t`). Temporal attention runs within each
//! pedestrian's row group under a causal mask; spatial attention runs across
//! pedestrians within each frame.

use std::sync::Arc;

use super::params::{HeadKind, ModelParams};
use super::tape::{AttentionLayout, Graph, Var};
use super::tensor::Tensor;
use crate::dynamics::PdMatrixParams;
use crate::error::{Error, Result};
use crate::types::{Trajectory, Velocity2};

/// Positions of `peds` pedestrians over `steps` frames, pedestrian-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneInput {
    pub peds: usize,
    pub steps: usize,
    pub positions: Tensor,
}

impl SceneInput {
    pub fn from_trajectories(trajectories: &[Trajectory]) -> Result<Self> {
        let Some(first) = trajectories.first() else {
            return Err(Error::shape("scene has no pedestrians"));
        };
        let steps = first.len();
        if let Some(t) = trajectories.iter().find(|t| t.len() != steps) {
            return Err(Error::shape(format!(
                "pedestrian {} has {} steps, expected {steps}",
                t.pedestrian_id,
                t.len()
            )));
        }
        let data = trajectories
            .iter()
            .flat_map(|t| t.positions.iter().flat_map(|p| [p.x, p.y]))
            .collect();
        Ok(SceneInput {
            peds: trajectories.len(),
            steps,
            positions: Tensor::from_vec(trajectories.len() * steps, 2, data)?,
        })
    }

    pub fn row(&self, ped: usize, t: usize) -> usize {
        ped * self.steps + t
    }
}

/// Model outputs, one row per pedestrian per step.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldOutput {
    pub peds: usize,
    pub steps: usize,
    pub head: HeadKind,
    pub values: Tensor,
}

impl FieldOutput {
    pub fn pd_params(&self, ped: usize, t: usize) -> PdMatrixParams {
        debug_assert_eq!(self.head, HeadKind::PdFactor);
        let r = self.values.row(ped * self.steps + t);
        PdMatrixParams::new(r[0], r[1], r[2])
    }

    pub fn velocity(&self, ped: usize, t: usize) -> Velocity2 {
        debug_assert_eq!(self.head, HeadKind::Velocity);
        let r = self.values.row(ped * self.steps + t);
        Velocity2::new(r[0], r[1])
    }
}

/// Graph handles for every parameter tensor, in canonical order.
pub(crate) struct ParamVars(pub(crate) Vec<Var>);

const EMBED_W: usize = 0;
const EMBED_B: usize = 1;
const POSITIONAL: usize = 2;
const TEMPORAL: usize = 3;
const SPATIAL: usize = 12;
const NOISE_W: usize = 21;
const NOISE_B: usize = 22;
const HEAD_W: usize = 23;
const HEAD_B: usize = 24;

pub(crate) fn bind_params(g: &mut Graph, params: &ModelParams) -> ParamVars {
    let vars: Vec<Var> = params.tensors().into_iter().map(|t| g.input(t.clone())).collect();
    debug_assert_eq!(vars.len(), HEAD_B + 1);
    ParamVars(vars)
}

fn layouts(peds: usize, steps: usize) -> (Arc<AttentionLayout>, Arc<AttentionLayout>) {
    let temporal = AttentionLayout {
        groups: (0..peds).map(|i| (0..steps).map(|t| i * steps + t).collect()).collect(),
        causal: true,
    };
    let spatial = AttentionLayout {
        groups: (0..steps).map(|t| (0..peds).map(|i| i * steps + t).collect()).collect(),
        causal: false,
    };
    (Arc::new(temporal), Arc::new(spatial))
}

fn block(g: &mut Graph, x: Var, w: &[Var], heads: usize, layout: Arc<AttentionLayout>) -> Var {
    let q = g.matmul(x, w[0]);
    let k = g.matmul(x, w[1]);
    let v = g.matmul(x, w[2]);
    let attended = g.attention(q, k, v, heads, layout);
    let projected = g.linear(attended, w[3], w[4]);
    let x = g.add(x, projected);
    let hidden = g.linear(x, w[5], w[6]);
    let hidden = g.gelu(hidden);
    let ff = g.linear(hidden, w[7], w[8]);
    g.add(x, ff)
}

pub(crate) fn check_inputs(params: &ModelParams, input: &SceneInput, noise: &[f64]) -> Result<()> {
    let dims = &params.dims;
    if noise.len() != dims.z_dim {
        return Err(Error::shape(format!(
            "noise has {} entries, model expects z_dim={}",
            noise.len(),
            dims.z_dim
        )));
    }
    if input.peds == 0 || input.steps == 0 {
        return Err(Error::shape("scene input is empty"));
    }
    if input.steps > dims.max_len {
        return Err(Error::shape(format!(
            "{} steps exceed the positional table ({})",
            input.steps, dims.max_len
        )));
    }
    if input.positions.shape() != (input.peds * input.steps, 2) {
        return Err(Error::shape("scene positions do not match peds x steps"));
    }
    Ok(())
}

/// Record the forward pass on `g`; returns the head output node.
pub(crate) fn forward_graph(
    g: &mut Graph,
    pv: &ParamVars,
    params: &ModelParams,
    input: &SceneInput,
    noise: &[f64],
) -> Result<Var> {
    check_inputs(params, input, noise)?;
    let p = &pv.0;
    let (peds, steps) = (input.peds, input.steps);
    let n = peds * steps;

    let x = g.input(input.positions.clone());
    let embedded = g.linear(x, p[EMBED_W], p[EMBED_B]);
    let time_index: Vec<usize> = (0..n).map(|r| r % steps).collect();
    let pos = g.gather_rows(p[POSITIONAL], time_index);
    let h = g.add(embedded, pos);

    let (temporal, spatial) = layouts(peds, steps);
    let heads = params.dims.heads;
    let h = block(g, h, &p[TEMPORAL..TEMPORAL + 9], heads, temporal);
    let h = block(g, h, &p[SPATIAL..SPATIAL + 9], heads, spatial);

    let z = g.input(Tensor::from_vec(1, noise.len(), noise.to_vec())?);
    let z = g.gather_rows(z, vec![0; n]);
    let hz = g.concat_cols(h, z);
    let injected = g.linear(hz, p[NOISE_W], p[NOISE_B]);
    let h = g.add(h, injected);

    Ok(g.linear(h, p[HEAD_W], p[HEAD_B]))
}

/// Per-pedestrian, per-step head outputs for goal-shifted (or absolute) input
/// trajectories of equal length.
pub fn forward(trajectories: &[Trajectory], params: &ModelParams, noise: &[f64]) -> Result<FieldOutput> {
    let input = SceneInput::from_trajectories(trajectories)?;
    forward_input(&input, params, noise)
}

pub fn forward_input(input: &SceneInput, params: &ModelParams, noise: &[f64]) -> Result<FieldOutput> {
    let mut g = Graph::new();
    let pv = bind_params(&mut g, params);
    let out = forward_graph(&mut g, &pv, params, input, noise)?;
    Ok(FieldOutput {
        peds: input.peds,
        steps: input.steps,
        head: params.dims.head,
        values: g.value(out).clone(),
    })
}
