use alloc::vec::Vec;

use super::{RewardError, RewardModel, ScoreTransform};
use crate::math;
use crate::params::ParamVector;

/// Features of one positive step and its negatives at the same position.
#[derive(Debug, Clone, PartialEq)]
pub struct PairFeatures {
    pub positive: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossAndGrad {
    pub loss: f64,
    pub grad: ParamVector,
}

/// `-log softmax(t(s⁺)/τ, t(s⁻₁)/τ, …)[0]` for raw scores, where `t` is the
/// sigmoid or the identity.
pub fn contrastive_loss_from_scores(
    positive: f64,
    negatives: &[f64],
    temperature: f64,
    transform: ScoreTransform,
) -> Result<f64, RewardError> {
    if negatives.is_empty() {
        return Err(RewardError::DegeneratePair);
    }
    let logits: Vec<f64> =
        core::iter::once(positive).chain(negatives.iter().copied()).map(|s| transform.apply(s) / temperature).collect();
    Ok(math::neg_log_softmax_first(&logits))
}

/// Contrastive loss of one pair and its gradient w.r.t. the model
/// parameters. Frozen coordinates of the gradient are exactly zero.
pub fn contrastive_loss(model: &RewardModel, pair: &PairFeatures) -> Result<LossAndGrad, RewardError> {
    if pair.negatives.is_empty() {
        return Err(RewardError::DegeneratePair);
    }
    let tau = model.temperature();
    let transform = model.config.transform;
    let inputs: Vec<&[f64]> =
        core::iter::once(pair.positive.as_slice()).chain(pair.negatives.iter().map(Vec::as_slice)).collect();
    for x in &inputs {
        model.check_dim(x)?;
    }
    let forwards: Vec<_> = inputs.iter().map(|x| model.forward(x)).collect();
    let logits: Vec<f64> = forwards.iter().map(|f| transform.apply(f.score) / tau).collect();
    let lse = math::log_sum_exp(&logits);
    let loss = math::neg_log_softmax_first(&logits);

    let mut grad = model.params.zeros_like();
    for (j, (x, fwd)) in inputs.iter().zip(&forwards).enumerate() {
        let p = math::exp(logits[j] - lse);
        let d_logit = if j == 0 { p - 1.0 } else { p };
        let upstream = d_logit * transform.derivative(fwd.score) / tau;
        model.backward(x, fwd, upstream, &mut grad);
    }
    model.params.mask_gradient(&mut grad);
    Ok(LossAndGrad { loss, grad })
}

/// Mean loss and mean gradient over a batch of pairs.
pub(crate) fn batch_loss(model: &RewardModel, pairs: &[PairFeatures]) -> Result<LossAndGrad, RewardError> {
    let mut total = LossAndGrad { loss: 0.0, grad: model.params.zeros_like() };
    if pairs.is_empty() {
        return Ok(total);
    }
    let scale = 1.0 / pairs.len() as f64;
    for pair in pairs {
        let lg = contrastive_loss(model, pair)?;
        total.loss += lg.loss * scale;
        total.grad.add_scaled(&lg.grad, scale);
    }
    Ok(total)
}
