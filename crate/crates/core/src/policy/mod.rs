//! Group-relative (GRPO) and per-sample clipped (PPO) policy optimization
//! on a tabular autoregressive softmax policy.

mod advantage;
mod objective;
mod toy;
mod train;

pub use advantage::group_advantages;
pub use objective::{
    clipped_surrogate, grpo_objective, kl_divergence, ppo_objective, sequence_kl, sequence_ratio, Objective, PpoSample,
    RolloutGroup, Surrogate,
};
pub use toy::ToyPolicy;
pub use train::{train_loop, Algo, RewardFn, ScriptedReward, StepMetrics, TrainOutcome};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("group-relative objective needs at least 2 outputs, got {0}")]
    GroupTooSmall(usize),
    #[error("rollout group is inconsistent: {0}")]
    MalformedGroup(&'static str),
    #[error("non-finite objective {value} at step {step}")]
    NonFiniteObjective { step: usize, value: f64 },
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    /// Clip range ε of the ratio.
    pub clip_eps: f64,
    /// KL penalty coefficient β against the reference policy.
    pub kl_coeff: f64,
    pub group_size: usize,
    /// Groups whose reward std falls below this get all-zero advantages.
    pub sigma_floor: f64,
    pub learning_rate: f64,
    pub steps: usize,
    /// Gradient steps taken on each sampled group before resampling.
    pub epochs_per_step: usize,
    pub seed: u64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            clip_eps: 0.2,
            kl_coeff: 0.01,
            group_size: 8,
            sigma_floor: 1e-8,
            learning_rate: 0.1,
            steps: 500,
            epochs_per_step: 1,
            seed: 42,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(PolicyError::InvalidConfig("clip_eps must lie in (0, 1)"));
        }
        if !(self.kl_coeff >= 0.0) {
            return Err(PolicyError::InvalidConfig("kl_coeff must be >= 0"));
        }
        if self.group_size == 0 {
            return Err(PolicyError::InvalidConfig("group_size must be >= 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(PolicyError::InvalidConfig("learning_rate must be > 0"));
        }
        if self.epochs_per_step == 0 {
            return Err(PolicyError::InvalidConfig("epochs_per_step must be >= 1"));
        }
        Ok(())
    }
}
