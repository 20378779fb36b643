//! Run configuration file.

use std::path::{Path, PathBuf};

use goaldyn::dynamics::DynamicsConfig;
use goaldyn::eval::{EvalConfig, ProtocolConfig};
use goaldyn::goals::GoalConfig;
use goaldyn::model::{TrainingConfig, Variant};
use goaldyn::synth::SynthConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Everything a run needs. Every key is optional; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Annotation files (`frame ped x y` per line).
    pub datasets: Vec<PathBuf>,
    pub out_dir: PathBuf,
    pub threads: Option<usize>,
    pub t_obs: usize,
    pub t_end: usize,
    pub train_stride: usize,
    pub eval_stride: usize,
    pub goal: GoalConfig,
    pub dynamics: DynamicsConfig,
    pub training: TrainingConfig,
    pub eval: EvalConfig,
    pub variant: Variant,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = ProtocolConfig::default();
        RunConfig {
            datasets: Vec::new(),
            out_dir: PathBuf::from("out"),
            threads: None,
            t_obs: p.t_obs,
            t_end: p.t_end,
            train_stride: p.train_stride,
            eval_stride: p.eval_stride,
            goal: p.goal,
            dynamics: p.dynamics,
            training: p.training,
            eval: p.eval,
            variant: p.variant,
            synth: SynthConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    pub fn protocol(&self) -> ProtocolConfig {
        ProtocolConfig {
            t_obs: self.t_obs,
            t_end: self.t_end,
            train_stride: self.train_stride,
            eval_stride: self.eval_stride,
            goal: self.goal,
            dynamics: self.dynamics,
            training: self.training,
            eval: self.eval,
            variant: self.variant,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.threads == Some(0) {
            return Err(CliError::Usage("threads must be at least 1".into()));
        }
        self.protocol().validate().map_err(|e| CliError::Usage(e.to_string()))
    }
}
