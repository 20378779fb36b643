//! The trainable matrix-field model: a temporal and a spatial attention
//! block with Gaussian noise injection, emitting the factor `(a, b, c)` of
//! the positive-definite matrix per pedestrian per step.

mod checkpoint;
mod forward;
mod params;
mod sample;
mod tape;
mod tensor;
mod train;

pub use checkpoint::{Checkpoint, NamedTensor, CHECKPOINT_FORMAT};
pub use forward::{forward, forward_input, FieldOutput, SceneInput};
pub use params::{AttentionBlock, HeadKind, ModelDims, ModelParams};
pub use sample::{sample_predictions, sample_with_goals, PredictionSample};
pub use tape::{AttentionLayout, Gradients, Graph, StepConstants, Var};
pub use tensor::Tensor;
pub use train::{
    loss_and_gradients, mse_loss, train, window_loss, AdamState, Trainer, TrainingConfig, Variant,
};
