//! Adapters between dataset records and the core trainers.

use debate_distill_core::policy::RewardFn;
use debate_distill_core::reward::{HashingFeaturizer, PairFeatures, RewardModel};
use debate_distill_core::ReasoningStep;

use crate::dataset::PrmPairRecord;

/// Featurizes every pair record with the model's hashing featurizer.
pub fn pair_features(featurizer: &HashingFeaturizer, records: &[PrmPairRecord]) -> Vec<PairFeatures> {
    records
        .iter()
        .map(|r| PairFeatures {
            positive: featurizer.featurize(&r.context, &r.positive_step.text),
            negatives: r.negatives.iter().map(|n| featurizer.featurize(&r.context, &n.text)).collect(),
        })
        .collect()
}

/// Distinct step texts in first-appearance order (positives before their
/// negatives). Used as the action vocabulary of the toy policy.
pub fn step_vocabulary(records: &[PrmPairRecord]) -> Vec<String> {
    let mut vocab: Vec<String> = Vec::new();
    let mut push = |t: &str| {
        if !vocab.iter().any(|v| v == t) {
            vocab.push(t.to_string());
        }
    };
    for r in records {
        push(&r.positive_step.text);
        for n in &r.negatives {
            push(&n.text);
        }
    }
    vocab
}

/// Scores a token sequence by reading each token as a reasoning step and
/// aggregating the reward model's step scores.
pub struct PrmReward {
    pub model: RewardModel,
    pub vocab: Vec<String>,
}

impl RewardFn for PrmReward {
    fn reward(&self, _input: usize, output: &[usize]) -> f64 {
        let steps: Vec<ReasoningStep> = output
            .iter()
            .enumerate()
            .map(|(i, &tok)| ReasoningStep::new(i, self.vocab.get(tok).cloned().unwrap_or_default()))
            .collect();
        self.model.aggregate_reward(&steps).unwrap_or(f64::NAN)
    }
}
