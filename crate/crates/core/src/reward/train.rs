use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::loss::batch_loss;
use super::{PairFeatures, RewardError, RewardModel};
use crate::params::Segment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Embedding and backbone frozen; final layer and reward head train.
    HeadOnly,
    /// Everything trains.
    Full,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::HeadOnly => "head_only",
            Stage::Full => "full",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Curriculum {
    pub stage1_steps: usize,
    pub stage2_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    /// Global step index, counted across both stages.
    pub step: usize,
    pub stage: Stage,
    /// Mean batch loss before the update at this step.
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedPrm {
    pub model: RewardModel,
    pub trace: Vec<LossPoint>,
}

/// Full-batch gradient descent on the mean contrastive loss, first with the
/// embedding and backbone frozen, then with everything trainable. The
/// returned model has an empty freeze mask.
pub fn train_prm(
    mut model: RewardModel,
    pairs: &[PairFeatures],
    curriculum: Curriculum,
    learning_rate: f64,
) -> Result<TrainedPrm, RewardError> {
    let mut trace = Vec::with_capacity(curriculum.stage1_steps + curriculum.stage2_steps);
    let stages = [(Stage::HeadOnly, curriculum.stage1_steps), (Stage::Full, curriculum.stage2_steps)];
    let mut step = 0;
    for (stage, n) in stages {
        match stage {
            Stage::HeadOnly => model.params.freeze_only(&[Segment::Embedding, Segment::Backbone]),
            Stage::Full => model.params.unfreeze_all(),
        }
        for _ in 0..n {
            let lg = batch_loss(&model, pairs)?;
            if !lg.loss.is_finite() || !lg.grad.all_finite() {
                return Err(RewardError::NonFiniteLoss { stage, step, loss: lg.loss });
            }
            trace.push(LossPoint { step, stage, loss: lg.loss });
            model.params.descend(&lg.grad, learning_rate);
            step += 1;
        }
    }
    model.params.unfreeze_all();
    Ok(TrainedPrm { model, trace })
}

/// Mean contrastive loss of `model` over `pairs` (0 for an empty batch).
pub fn mean_loss(model: &RewardModel, pairs: &[PairFeatures]) -> Result<f64, RewardError> {
    batch_loss(model, pairs).map(|lg| lg.loss)
}
