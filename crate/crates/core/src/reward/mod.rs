//! Desk-scale process reward model.
//!
//! A step is featurized by [`HashingFeaturizer`], scored by a small
//! `embedding → backbone → activation → final layer → reward head` network,
//! and trained with a temperature-scaled contrastive loss in which each
//! positive step competes against negatives drawn from incorrect traces of
//! the same problem.

mod features;
mod loss;
mod model;
mod train;

pub use features::HashingFeaturizer;
pub use loss::{contrastive_loss, contrastive_loss_from_scores, LossAndGrad, PairFeatures};
pub use model::{Activation, Aggregation, RewardConfig, RewardModel, ScoreTransform};
pub use train::{mean_loss, train_prm, Curriculum, LossPoint, Stage, TrainedPrm};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RewardError {
    #[error("contrastive pair has no negatives")]
    DegeneratePair,
    #[error("feature vector has dimension {got}, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite loss {loss} at {stage:?} step {step}")]
    NonFiniteLoss { stage: Stage, step: usize, loss: f64 },
    #[error("cannot aggregate reward over an empty output")]
    EmptyOutput,
}
