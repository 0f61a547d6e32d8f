//! Analytic gradients against central finite differences.

use debate_distill_core::policy::{
    group_advantages, grpo_objective, ppo_objective, OptimConfig, PpoSample, RolloutGroup, ToyPolicy,
};
use debate_distill_core::reward::{
    contrastive_loss, Activation, PairFeatures, RewardConfig, RewardModel, ScoreTransform,
};
use debate_distill_core::ParamVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-5;
const NOISE: f64 = 1e-9;
const CONFIGS: usize = 250;

/// Worst coordinate under `|a - n| <= TOL * max(|a|, |n|) + NOISE`.
/// Returns the violation ratio (pass iff < 1) and its coordinate.
///
/// With a step of 1e-5 the central difference carries roughly 1e-11 of
/// rounding noise, so relative error alone is meaningless for gradients
/// much below 1e-6; `NOISE` absorbs that and nothing larger.
fn worst_violation(values: &[f64], analytic: &[f64], f: impl Fn(&[f64]) -> f64) -> (f64, usize) {
    let mut worst = (0.0, 0);
    let mut x = values.to_vec();
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + H;
        let up = f(&x);
        x[i] = orig - H;
        let down = f(&x);
        x[i] = orig;
        let numeric = (up - down) / (2.0 * H);
        let allowed = TOL * analytic[i].abs().max(numeric.abs()) + NOISE;
        let ratio = (analytic[i] - numeric).abs() / allowed;
        if ratio > worst.0 {
            worst = (ratio, i);
        }
    }
    worst
}

fn random_reward_model(rng: &mut ChaCha8Rng) -> RewardModel {
    let config = RewardConfig {
        feature_dim: rng.random_range(1..=8),
        hidden_dim: rng.random_range(1..=8),
        activation: if rng.random_bool(0.5) { Activation::Tanh } else { Activation::Identity },
        temperature: rng.random_range(0.3..3.0),
        transform: if rng.random_bool(0.7) { ScoreTransform::Sigmoid } else { ScoreTransform::Raw },
        ..RewardConfig::default()
    };
    let mut model = RewardModel::init(config, rng.random());
    for v in &mut model.params.values {
        *v = rng.random_range(-1.0..1.0);
    }
    model
}

fn random_features(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
}

#[test]
fn contrastive_loss_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..CONFIGS {
        let model = random_reward_model(&mut rng);
        let d = model.config.feature_dim;
        let m = rng.random_range(1..=4);
        let pair = PairFeatures {
            positive: random_features(&mut rng, d),
            negatives: (0..m).map(|_| random_features(&mut rng, d)).collect(),
        };
        let analytic = contrastive_loss(&model, &pair).unwrap().grad;
        let (err, at) = worst_violation(&model.params.values, &analytic.values, |x| {
            let mut probe = model.clone();
            probe.params.values.copy_from_slice(x);
            contrastive_loss(&probe, &pair).unwrap().loss
        });
        assert!(err < 1.0, "case {case}: tolerance exceeded {err:.3}x at coordinate {at}");
    }
}

fn random_policy(rng: &mut ChaCha8Rng, inputs: usize, v: usize, l: usize, spread: f64) -> ToyPolicy {
    let mut p = ToyPolicy::uniform(inputs, v, l);
    for x in &mut p.params.values {
        *x = rng.random_range(-spread..spread);
    }
    p
}

fn perturbed(base: &ToyPolicy, rng: &mut ChaCha8Rng, scale: f64) -> ToyPolicy {
    let mut p = base.clone();
    for x in &mut p.params.values {
        *x += rng.random_range(-scale..scale);
    }
    p
}

struct PolicyCase {
    policy: ToyPolicy,
    reference: ToyPolicy,
    group: RolloutGroup,
    cfg: OptimConfig,
}

fn with_values(p: &ToyPolicy, x: &[f64]) -> ToyPolicy {
    let mut q = p.clone();
    q.params = ParamVector { values: x.to_vec(), ..q.params.clone() };
    q
}

/// Draws cases until one has no ratio within 1e-4 of a clip boundary.
fn policy_case(rng: &mut ChaCha8Rng) -> PolicyCase {
    loop {
        let inputs = rng.random_range(1..=2);
        let v = rng.random_range(2..=6);
        let l = rng.random_range(1..=3);
        let old = random_policy(rng, inputs, v, l, 1.5);
        let policy = perturbed(&old, rng, 0.4);
        let reference = random_policy(rng, inputs, v, l, 1.0);
        let g = rng.random_range(2..=4);
        let input = rng.random_range(0..inputs);
        let outputs: Vec<Vec<usize>> = (0..g).map(|_| old.sample(input, rng)).collect();
        let old_logprobs: Vec<f64> = outputs.iter().map(|o| old.sequence_logprob(input, o)).collect();
        let rewards: Vec<f64> = (0..g).map(|_| rng.random_range(0.0..1.0)).collect();
        let advantages = group_advantages(&rewards, 1e-8);
        let cfg = OptimConfig {
            clip_eps: rng.random_range(0.1..0.3),
            kl_coeff: rng.random_range(0.0..1.0),
            group_size: g,
            ..OptimConfig::default()
        };
        let near_boundary = outputs.iter().zip(&old_logprobs).any(|(o, lp)| {
            let rho = (policy.sequence_logprob(input, o) - lp).exp();
            (rho - (1.0 - cfg.clip_eps)).abs() < 1e-4 || (rho - (1.0 + cfg.clip_eps)).abs() < 1e-4
        });
        if !near_boundary {
            let group = RolloutGroup { input, outputs, old_logprobs, rewards, advantages };
            return PolicyCase { policy, reference, group, cfg };
        }
    }
}

#[test]
fn grpo_objective_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut clipped_seen = 0.0;
    for case in 0..CONFIGS {
        let c = policy_case(&mut rng);
        let obj = grpo_objective(&c.policy, &c.reference, &c.group, &c.cfg).unwrap();
        clipped_seen += obj.clip_fraction;
        let (err, at) = worst_violation(&c.policy.params.values, &obj.grad.values, |x| {
            grpo_objective(&with_values(&c.policy, x), &c.reference, &c.group, &c.cfg).unwrap().value
        });
        assert!(err < 1.0, "case {case}: tolerance exceeded {err:.3}x at coordinate {at}");
    }
    assert!(clipped_seen > 0.0, "no case exercised the clipped branch");
}

#[test]
fn ppo_objective_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..CONFIGS {
        let c = policy_case(&mut rng);
        let i = rng.random_range(0..c.group.outputs.len());
        let sample = PpoSample {
            input: c.group.input,
            output: &c.group.outputs[i],
            old_logprob: c.group.old_logprobs[i],
            advantage: c.group.advantages[i],
        };
        let obj = ppo_objective(&c.policy, &c.reference, sample, &c.cfg);
        let (err, at) = worst_violation(&c.policy.params.values, &obj.grad.values, |x| {
            ppo_objective(&with_values(&c.policy, x), &c.reference, sample, &c.cfg).value
        });
        assert!(err < 1.0, "case {case}: tolerance exceeded {err:.3}x at coordinate {at}");
    }
}
