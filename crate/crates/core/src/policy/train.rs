use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    group_advantages, grpo_objective, ppo_objective, OptimConfig, PolicyError, PpoSample, RolloutGroup, ToyPolicy,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    Grpo,
    Ppo,
}

/// Scores a sampled output for an input.
pub trait RewardFn {
    fn reward(&self, input: usize, output: &[usize]) -> f64;
}

impl<F: Fn(usize, &[usize]) -> f64> RewardFn for F {
    fn reward(&self, input: usize, output: &[usize]) -> f64 {
        self(input, output)
    }
}

/// 1 when the output starts with `token`, else 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScriptedReward {
    pub token: usize,
}

impl RewardFn for ScriptedReward {
    fn reward(&self, _input: usize, output: &[usize]) -> f64 {
        if output.first() == Some(&self.token) {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    pub mean_reward: f64,
    pub kl: f64,
    pub clip_fraction: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub policy: ToyPolicy,
    pub reference: ToyPolicy,
    pub metrics: Vec<StepMetrics>,
}

/// Sample-score-update loop.
///
/// Each step snapshots the current policy as π_old, draws an input
/// uniformly, samples `group_size` outputs from π_old, scores them, and
/// normalizes rewards within the group. GRPO then takes `epochs_per_step`
/// ascent steps on the group objective; PPO walks the samples one at a time
/// with step size `learning_rate / group_size`. π_ref is the initial policy.
/// Metrics come from the first objective evaluation of each step.
pub fn train_loop(
    policy: ToyPolicy,
    reward: &dyn RewardFn,
    cfg: &OptimConfig,
    algo: Algo,
) -> Result<TrainOutcome, PolicyError> {
    cfg.validate()?;
    if algo == Algo::Grpo && cfg.group_size < 2 {
        return Err(PolicyError::GroupTooSmall(cfg.group_size));
    }
    let reference = policy.clone();
    let mut policy = policy;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut metrics = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        let old = policy.clone();
        let input = rng.random_range(0..old.num_inputs);
        let outputs: Vec<Vec<usize>> = (0..cfg.group_size).map(|_| old.sample(input, &mut rng)).collect();
        let old_logprobs = outputs.iter().map(|o| old.sequence_logprob(input, o)).collect();
        let rewards: Vec<f64> = outputs.iter().map(|o| reward.reward(input, o)).collect();
        let advantages = group_advantages(&rewards, cfg.sigma_floor);
        let group = RolloutGroup { input, outputs, old_logprobs, rewards, advantages };
        let mean_reward = group.rewards.iter().sum::<f64>() / group.rewards.len() as f64;

        let mut first: Option<(f64, f64, f64)> = None;
        for _ in 0..cfg.epochs_per_step {
            match algo {
                Algo::Grpo => {
                    let obj = grpo_objective(&policy, &reference, &group, cfg)?;
                    check_finite(step, obj.value)?;
                    first.get_or_insert((obj.value, obj.kl, obj.clip_fraction));
                    policy.params.ascend(&obj.grad, cfg.learning_rate);
                }
                Algo::Ppo => {
                    let g = group.outputs.len() as f64;
                    let (mut value, mut kl, mut clipped) = (0.0, 0.0, 0.0);
                    for i in 0..group.outputs.len() {
                        let sample = PpoSample {
                            input,
                            output: &group.outputs[i],
                            old_logprob: group.old_logprobs[i],
                            advantage: group.advantages[i],
                        };
                        let obj = ppo_objective(&policy, &reference, sample, cfg);
                        check_finite(step, obj.value)?;
                        value += obj.value / g;
                        kl += obj.kl / g;
                        clipped += obj.clip_fraction / g;
                        policy.params.ascend(&obj.grad, cfg.learning_rate / g);
                    }
                    first.get_or_insert((value, kl, clipped));
                }
            }
        }
        if !policy.params.all_finite() {
            return Err(PolicyError::NonFiniteObjective { step, value: f64::NAN });
        }
        let (objective, kl, clip_fraction) = first.unwrap_or_default();
        metrics.push(StepMetrics { step, mean_reward, kl, clip_fraction, objective });
    }
    Ok(TrainOutcome { policy, reference, metrics })
}

fn check_finite(step: usize, value: f64) -> Result<(), PolicyError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(PolicyError::NonFiniteObjective { step, value })
    }
}
