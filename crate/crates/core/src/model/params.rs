use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// What the output head emits per pedestrian per step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    /// Lower-triangular factor `(a, b, c)` of the PD matrix.
    PdFactor,
    /// A 2-D velocity, bypassing the stable dynamics.
    Velocity,
}

impl HeadKind {
    pub fn outputs(self) -> usize {
        match self {
            HeadKind::PdFactor => 3,
            HeadKind::Velocity => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub d: usize,
    pub z_dim: usize,
    pub heads: usize,
    /// Longest sequence the positional table covers.
    pub max_len: usize,
    pub head: HeadKind,
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.heads == 0 || !self.d.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "model width d={} must be a positive multiple of heads={}",
                self.d, self.heads
            )));
        }
        if self.max_len == 0 {
            return Err(Error::Config("max_len must be at least 1".into()));
        }
        Ok(())
    }
}

/// One self-attention block: projections, output projection and a
/// two-layer feed-forward, each wrapped in a residual connection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionBlock {
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
    pub wo: Tensor,
    pub bo: Tensor,
    pub ff_w1: Tensor,
    pub ff_b1: Tensor,
    pub ff_w2: Tensor,
    pub ff_b2: Tensor,
}

impl AttentionBlock {
    fn init(d: usize, rng: &mut ChaCha8Rng) -> Self {
        AttentionBlock {
            wq: glorot(d, d, rng),
            wk: glorot(d, d, rng),
            wv: glorot(d, d, rng),
            wo: scaled(glorot(d, d, rng), 0.5),
            bo: Tensor::zeros(1, d),
            ff_w1: glorot(d, 4 * d, rng),
            ff_b1: Tensor::zeros(1, 4 * d),
            ff_w2: scaled(glorot(4 * d, d, rng), 0.5),
            ff_b2: Tensor::zeros(1, d),
        }
    }

    fn tensors(&self) -> [(&'static str, &Tensor); 9] {
        [
            ("wq", &self.wq),
            ("wk", &self.wk),
            ("wv", &self.wv),
            ("wo", &self.wo),
            ("bo", &self.bo),
            ("ff_w1", &self.ff_w1),
            ("ff_b1", &self.ff_b1),
            ("ff_w2", &self.ff_w2),
            ("ff_b2", &self.ff_b2),
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor; 9] {
        [
            &mut self.wq,
            &mut self.wk,
            &mut self.wv,
            &mut self.wo,
            &mut self.bo,
            &mut self.ff_w1,
            &mut self.ff_b1,
            &mut self.ff_w2,
            &mut self.ff_b2,
        ]
    }
}

/// All weights of the matrix-field model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub embed_w: Tensor,
    pub embed_b: Tensor,
    /// Positional encodings, one row per time step.
    pub positional: Tensor,
    pub temporal: AttentionBlock,
    pub spatial: AttentionBlock,
    pub noise_w: Tensor,
    pub noise_b: Tensor,
    pub head_w: Tensor,
    pub head_b: Tensor,
}

fn glorot(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("positive std");
    Tensor::from_fn(fan_in, fan_out, |_, _| normal.sample(rng))
}

fn scaled(mut t: Tensor, k: f64) -> Tensor {
    t.scale(k);
    t
}

/// Sinusoidal table used to initialise the learnable positional encodings.
fn sinusoidal(len: usize, d: usize) -> Tensor {
    Tensor::from_fn(len, d, |t, c| {
        let freq = 1.0 / 10_000f64.powf((2 * (c / 2)) as f64 / d as f64);
        let angle = t as f64 * freq;
        if c % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

impl ModelParams {
    /// Random initialisation. The PD head starts near `L = 0.5·I`.
    pub fn init(dims: ModelDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = dims.d;
        let out = dims.head.outputs();
        let head_b = match dims.head {
            HeadKind::PdFactor => Tensor::from_vec(1, 3, vec![0.5, 0.0, 0.5])?,
            HeadKind::Velocity => Tensor::zeros(1, 2),
        };
        Ok(ModelParams {
            dims,
            embed_w: glorot(2, d, &mut rng),
            embed_b: Tensor::zeros(1, d),
            positional: sinusoidal(dims.max_len, d),
            temporal: AttentionBlock::init(d, &mut rng),
            spatial: AttentionBlock::init(d, &mut rng),
            noise_w: scaled(glorot(d + dims.z_dim, d, &mut rng), 0.5),
            noise_b: Tensor::zeros(1, d),
            head_w: scaled(glorot(d, out, &mut rng), 0.1),
            head_b,
        })
    }

    /// Parameter tensors with stable names, in canonical order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = vec![
            ("embed.w".into(), &self.embed_w),
            ("embed.b".into(), &self.embed_b),
            ("positional".into(), &self.positional),
        ];
        for (prefix, block) in [("temporal", &self.temporal), ("spatial", &self.spatial)] {
            out.extend(block.tensors().into_iter().map(|(n, t)| (format!("{prefix}.{n}"), t)));
        }
        out.extend([
            ("noise.w".into(), &self.noise_w),
            ("noise.b".into(), &self.noise_b),
            ("head.w".into(), &self.head_w),
            ("head.b".into(), &self.head_b),
        ]);
        out
    }

    /// Mutable tensors in the same order as [`ModelParams::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = vec![&mut self.embed_w, &mut self.embed_b, &mut self.positional];
        out.extend(self.temporal.tensors_mut());
        out.extend(self.spatial.tensors_mut());
        out.extend([
            &mut self.noise_w,
            &mut self.noise_b,
            &mut self.head_w,
            &mut self.head_b,
        ]);
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.named_tensors().into_iter().map(|(_, t)| t).collect()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|t| t.data().len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    /// Zero the output head so every prediction is `(0, 0, 0)`.
    pub fn zero_head(&mut self) {
        self.head_w.fill(0.0);
        self.head_b.fill(0.0);
    }
}
