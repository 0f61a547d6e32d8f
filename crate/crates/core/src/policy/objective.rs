use alloc::vec::Vec;

use super::{OptimConfig, PolicyError, ToyPolicy};
use crate::math;
use crate::params::ParamVector;

/// G outputs sampled from the old policy for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutGroup {
    pub input: usize,
    pub outputs: Vec<Vec<usize>>,
    /// `log π_old(o_i | x)` per output.
    pub old_logprobs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
}

impl RolloutGroup {
    fn check(&self) -> Result<(), PolicyError> {
        let g = self.outputs.len();
        if self.old_logprobs.len() != g || self.advantages.len() != g || self.rewards.len() != g {
            return Err(PolicyError::MalformedGroup("per-output vectors differ in length"));
        }
        Ok(())
    }
}

/// One output with its advantage, for the per-sample objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoSample<'a> {
    pub input: usize,
    pub output: &'a [usize],
    pub old_logprob: f64,
    pub advantage: f64,
}

/// Clipped surrogate value for one output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Surrogate {
    pub value: f64,
    /// The clipped branch is strictly smaller, so the gradient is zero.
    pub clipped: bool,
    /// `d value / d ratio`.
    pub d_ratio: f64,
}

/// `min(ρ·A, clip(ρ, 1-ε, 1+ε)·A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, eps: f64) -> Surrogate {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * advantage;
    if clipped < unclipped {
        Surrogate { value: clipped, clipped: true, d_ratio: 0.0 }
    } else {
        Surrogate { value: unclipped, clipped: false, d_ratio: advantage }
    }
}

/// `π_new(o|x) / π_old(o|x)`, as `exp` of the summed per-token log ratios.
pub fn sequence_ratio(new: &ToyPolicy, old: &ToyPolicy, input: usize, output: &[usize]) -> f64 {
    let log_ratio: f64 = ToyPolicy::prefixes(output)
        .map(|(t, prev, tok)| new.log_probs(input, t, prev)[tok] - old.log_probs(input, t, prev)[tok])
        .sum();
    math::exp(log_ratio)
}

/// `KL(p ‖ q)` for two log-probability rows.
pub fn kl_divergence(log_p: &[f64], log_q: &[f64]) -> f64 {
    log_p.iter().zip(log_q).map(|(lp, lq)| math::exp(*lp) * (lp - lq)).sum()
}

/// Exact KL between `policy` and `reference` summed over the prefixes
/// visited by `output`. With `grad`, adds `scale * ∇` of that sum.
pub fn sequence_kl(
    policy: &ToyPolicy,
    reference: &ToyPolicy,
    input: usize,
    output: &[usize],
    mut grad: Option<(&mut ParamVector, f64)>,
) -> f64 {
    let mut total = 0.0;
    for (t, prev, _) in ToyPolicy::prefixes(output) {
        let lp = policy.log_probs(input, t, prev);
        let lq = reference.log_probs(input, t, prev);
        let kl = kl_divergence(&lp, &lq);
        total += kl;
        if let Some((g, scale)) = grad.as_mut() {
            // d KL / d z_k = p_k (log p_k - log q_k - KL)
            let r = policy.row(input, t, prev);
            for k in 0..lp.len() {
                g.values[r + k] += *scale * math::exp(lp[k]) * (lp[k] - lq[k] - kl);
            }
        }
    }
    total
}

/// Objective value, its ascent gradient and diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub value: f64,
    pub grad: ParamVector,
    /// Mean clipped surrogate over the outputs involved (KL excluded).
    pub surrogate: f64,
    /// Mean per-output sequence KL against the reference.
    pub kl: f64,
    pub clip_fraction: f64,
}

struct Term {
    surrogate: Surrogate,
    kl: f64,
}

/// Surrogate and KL of one output, accumulating `weight` times their
/// gradient (surrogate minus β·KL) into `grad`.
fn output_term(
    policy: &ToyPolicy,
    reference: &ToyPolicy,
    sample: PpoSample<'_>,
    cfg: &OptimConfig,
    weight: f64,
    grad: &mut ParamVector,
) -> Term {
    let log_ratio = policy.sequence_logprob(sample.input, sample.output) - sample.old_logprob;
    let ratio = math::exp(log_ratio);
    let surrogate = clipped_surrogate(ratio, sample.advantage, cfg.clip_eps);
    if surrogate.d_ratio != 0.0 {
        // dρ/dθ = ρ ∇log π
        policy.accumulate_logprob_grad(sample.input, sample.output, weight * surrogate.d_ratio * ratio, grad);
    }
    let kl = sequence_kl(policy, reference, sample.input, sample.output, Some((grad, -weight * cfg.kl_coeff)));
    Term { surrogate, kl }
}

/// Group-relative objective `(1/G) Σ_i [min(ρ_i A_i, clip(ρ_i) A_i)] - β·KL`
/// with KL the mean over outputs of the exact per-prefix divergence.
/// The gradient is for ascent and has frozen entries of `policy` zeroed.
pub fn grpo_objective(
    policy: &ToyPolicy,
    reference: &ToyPolicy,
    group: &RolloutGroup,
    cfg: &OptimConfig,
) -> Result<Objective, PolicyError> {
    group.check()?;
    let g = group.outputs.len();
    if g < 2 {
        return Err(PolicyError::GroupTooSmall(g));
    }
    let weight = 1.0 / g as f64;
    let mut grad = policy.params.zeros_like();
    let mut surrogate_sum = 0.0;
    let mut kl_sum = 0.0;
    let mut clipped = 0usize;
    for i in 0..g {
        let sample = PpoSample {
            input: group.input,
            output: &group.outputs[i],
            old_logprob: group.old_logprobs[i],
            advantage: group.advantages[i],
        };
        let term = output_term(policy, reference, sample, cfg, weight, &mut grad);
        surrogate_sum += term.surrogate.value;
        kl_sum += term.kl;
        clipped += usize::from(term.surrogate.clipped);
    }
    policy.params.mask_gradient(&mut grad);
    let surrogate = surrogate_sum / g as f64;
    let kl = kl_sum / g as f64;
    Ok(Objective {
        value: surrogate - cfg.kl_coeff * kl,
        grad,
        surrogate,
        kl,
        clip_fraction: clipped as f64 / g as f64,
    })
}

/// Per-sample clipped objective `min(ρA, clip(ρ)A) - β·KL` for a single
/// output. Its advantage comes from [`super::group_advantages`] over the
/// outputs sampled for the same input, but each sample is optimized on
/// its own.
pub fn ppo_objective(policy: &ToyPolicy, reference: &ToyPolicy, sample: PpoSample<'_>, cfg: &OptimConfig) -> Objective {
    let mut grad = policy.params.zeros_like();
    let term = output_term(policy, reference, sample, cfg, 1.0, &mut grad);
    policy.params.mask_gradient(&mut grad);
    Objective {
        value: term.surrogate.value - cfg.kl_coeff * term.kl,
        grad,
        surrogate: term.surrogate.value,
        kl: term.kl,
        clip_fraction: if term.surrogate.clipped { 1.0 } else { 0.0 },
    }
}
