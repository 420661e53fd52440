//! Desk-scale three-stage alignment trainer.
//!
//! A frozen random affine+tanh layer stands in for the language model. On top
//! of it sit the trainable pieces of the real architecture: the visual
//! adapter, token embeddings, the vocabulary mapping, a localization
//! projector (stage 1) and a trajectory projector (stage 2) initialized by
//! tiling the localization projector. Gradients are analytic and checked
//! against central finite differences.

mod linalg;
mod loss;
mod model;
pub mod narratives;
mod sample;
pub mod synthetic;
mod train;
mod vocab;

pub use linalg::Matrix;
pub use loss::{
    loss_from_outputs, loss_stage1, loss_stage2, loss_stage3, smoothed_cross_entropy,
    smoothed_label_entropy, stage_loss, stage_loss_and_gradient,
};
pub use model::{forward, greedy_decode, tile_init, ForwardOutput, ParamGroup, Projector, ToyModelParams};
pub use sample::TrainingSample;
pub use train::{grad_check, train, TrainOutcome};
pub use vocab::Vocab;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainerError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("sample {index}: {reason}")]
    Schema { index: usize, reason: String },
    #[error("unknown stage {0} (expected 1, 2 or 3)")]
    Stage(u8),
}

/// One of the three training stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Stage {
    /// Referring-expression localization: CE + λ·L1 on per-token locations.
    Localization,
    /// Pixel-temporal alignment: CE + λ/(P·N)·L1 on per-token trajectories.
    Trajectory,
    /// Instruction tuning: CE only.
    Instruction,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Localization, Stage::Trajectory, Stage::Instruction];

    pub fn number(self) -> u8 {
        match self {
            Stage::Localization => 1,
            Stage::Trajectory => 2,
            Stage::Instruction => 3,
        }
    }

    /// Parameter groups updated in this stage. The backbone is never listed.
    pub fn trainable(self) -> &'static [ParamGroup] {
        use ParamGroup::*;
        match self {
            Stage::Localization => &[Adapter, Embeddings, VocabMap, LocWeight, LocBias],
            Stage::Trajectory => &[Embeddings, VocabMap, TrajWeight, TrajBias],
            Stage::Instruction => &[Embeddings, VocabMap],
        }
    }

    pub fn is_trainable(self, group: ParamGroup) -> bool {
        self.trainable().contains(&group)
    }
}

impl TryFrom<u8> for Stage {
    type Error = TrainerError;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            1 => Ok(Stage::Localization),
            2 => Ok(Stage::Trajectory),
            3 => Ok(Stage::Instruction),
            other => Err(TrainerError::Stage(other)),
        }
    }
}

impl From<Stage> for u8 {
    fn from(s: Stage) -> u8 {
        s.number()
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerConfig {
    /// Visual feature dimension.
    pub d_v: usize,
    /// Hidden dimension.
    pub d: usize,
    pub vocab: usize,
    /// Tracking points per trajectory.
    pub points: usize,
    /// Sampled frames per trajectory.
    pub frames: usize,
    /// Weight of the L1 regression term.
    pub lambda: f64,
    /// Label-smoothing factor.
    pub smoothing: f64,
    pub lr: f64,
    pub steps: usize,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            d_v: 16,
            d: 32,
            vocab: 64,
            points: 3,
            frames: 100,
            lambda: 1.0,
            smoothing: 0.1,
            lr: 0.5,
            steps: 1000,
            seed: 0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), TrainerError> {
        let dims = [
            ("d_v", self.d_v),
            ("d", self.d),
            ("vocab", self.vocab),
            ("points", self.points),
            ("frames", self.frames),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(TrainerError::Config(format!("{name} must be at least 1")));
        }
        if !(self.lambda >= 0.0) {
            return Err(TrainerError::Config("lambda must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.smoothing) {
            return Err(TrainerError::Config("smoothing must be in [0, 1)".into()));
        }
        if !self.lr.is_finite() || self.lr < 0.0 {
            return Err(TrainerError::Config("lr must be finite and >= 0".into()));
        }
        Ok(())
    }
}
