use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{HashingFeaturizer, RewardError};
use crate::domain::ReasoningStep;
use crate::math;
use crate::params::{ParamVector, Segment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => math::tanh(x),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation output `y`.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

/// What goes into the contrastive softmax: `σ(R)/τ` or `R/τ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreTransform {
    #[default]
    Sigmoid,
    Raw,
}

impl ScoreTransform {
    pub fn apply(self, s: f64) -> f64 {
        match self {
            ScoreTransform::Sigmoid => math::sigmoid(s),
            ScoreTransform::Raw => s,
        }
    }

    pub fn derivative(self, s: f64) -> f64 {
        match self {
            ScoreTransform::Sigmoid => {
                let p = math::sigmoid(s);
                p * (1.0 - p)
            }
            ScoreTransform::Raw => 1.0,
        }
    }
}

/// How per-step sigmoid scores combine into one output reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Mean,
    Sum,
    Min,
}

impl Aggregation {
    pub fn combine(self, probs: &[f64]) -> Result<f64, RewardError> {
        if probs.is_empty() {
            return Err(RewardError::EmptyOutput);
        }
        Ok(match self {
            Aggregation::Mean => probs.iter().sum::<f64>() / probs.len() as f64,
            Aggregation::Sum => probs.iter().sum(),
            Aggregation::Min => probs.iter().copied().fold(f64::INFINITY, f64::min),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub feature_dim: usize,
    pub hidden_dim: usize,
    pub activation: Activation,
    pub temperature: f64,
    pub transform: ScoreTransform,
    pub aggregation: Aggregation,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            feature_dim: 64,
            hidden_dim: 16,
            activation: Activation::Tanh,
            temperature: 1.0,
            transform: ScoreTransform::Sigmoid,
            aggregation: Aggregation::Mean,
        }
    }
}

/// Step reward model `R(step)`.
///
/// `e = w_emb ⊙ x`, `a = act(W_backbone e)`, `z = W_final a`, `R = w_head · z`.
/// No biases, so all-zero parameters score every step 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardModel {
    pub config: RewardConfig,
    pub params: ParamVector,
}

/// Intermediate activations kept for the backward pass.
pub(crate) struct Forward {
    embedded: Vec<f64>,
    hidden: Vec<f64>,
    pre_head: Vec<f64>,
    pub(crate) score: f64,
}

impl RewardModel {
    pub fn zeros(config: RewardConfig) -> Self {
        assert!(config.temperature > 0.0, "temperature must be positive");
        let (d, h) = (config.feature_dim, config.hidden_dim);
        let params = ParamVector::zeros(&[
            (Segment::Embedding, d),
            (Segment::Backbone, h * d),
            (Segment::FinalLayer, h * h),
            (Segment::RewardHead, h),
        ]);
        Self { config, params }
    }

    /// Embedding scales start at 1; dense layers are uniform in
    /// `±1/sqrt(fan_in)`.
    pub fn init(config: RewardConfig, seed: u64) -> Self {
        let mut m = Self::zeros(config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, h) = (config.feature_dim, config.hidden_dim);
        m.params.segment_mut(Segment::Embedding).fill(1.0);
        for (seg, fan_in) in [(Segment::Backbone, d), (Segment::FinalLayer, h), (Segment::RewardHead, h)] {
            let a = 1.0 / math::sqrt(fan_in as f64);
            for v in m.params.segment_mut(seg) {
                *v = rng.random_range(-a..a);
            }
        }
        m
    }

    pub fn featurizer(&self) -> HashingFeaturizer {
        HashingFeaturizer::new(self.config.feature_dim)
    }

    pub fn temperature(&self) -> f64 {
        self.config.temperature
    }

    /// Raw (pre-sigmoid) score of a step given its preceding steps.
    pub fn score_step(&self, context: &[ReasoningStep], step: &str) -> f64 {
        let x = self.featurizer().featurize(context, step);
        self.forward(&x).score
    }

    pub fn score_features(&self, x: &[f64]) -> Result<f64, RewardError> {
        self.check_dim(x)?;
        Ok(self.forward(x).score)
    }

    /// Aggregate of per-step sigmoid scores; each step sees the steps
    /// before it as context.
    pub fn aggregate_reward(&self, steps: &[ReasoningStep]) -> Result<f64, RewardError> {
        let probs: Vec<f64> =
            (0..steps.len()).map(|t| math::sigmoid(self.score_step(&steps[..t], &steps[t].text))).collect();
        self.config.aggregation.combine(&probs)
    }

    pub(crate) fn check_dim(&self, x: &[f64]) -> Result<(), RewardError> {
        if x.len() != self.config.feature_dim {
            return Err(RewardError::DimensionMismatch { expected: self.config.feature_dim, got: x.len() });
        }
        Ok(())
    }

    pub(crate) fn forward(&self, x: &[f64]) -> Forward {
        let (d, h) = (self.config.feature_dim, self.config.hidden_dim);
        let emb = self.params.segment(Segment::Embedding);
        let backbone = self.params.segment(Segment::Backbone);
        let fin = self.params.segment(Segment::FinalLayer);
        let head = self.params.segment(Segment::RewardHead);

        let embedded: Vec<f64> = x.iter().zip(emb).map(|(a, b)| a * b).collect();
        let hidden: Vec<f64> = (0..h)
            .map(|i| {
                let row = &backbone[i * d..(i + 1) * d];
                let z: f64 = row.iter().zip(&embedded).map(|(w, e)| w * e).sum();
                self.config.activation.apply(z)
            })
            .collect();
        let pre_head: Vec<f64> =
            (0..h).map(|i| fin[i * h..(i + 1) * h].iter().zip(&hidden).map(|(w, a)| w * a).sum()).collect();
        let score = head.iter().zip(&pre_head).map(|(w, z)| w * z).sum();
        Forward { embedded, hidden, pre_head, score }
    }

    /// Accumulate `upstream * dR/dθ` into `grad` (unmasked).
    pub(crate) fn backward(&self, x: &[f64], fwd: &Forward, upstream: f64, grad: &mut ParamVector) {
        let (d, h) = (self.config.feature_dim, self.config.hidden_dim);
        let p = &self.params;
        let span = |s| p.span(s).expect("reward model layout").offset;
        let (o_emb, o_bb, o_fin, o_head) =
            (span(Segment::Embedding), span(Segment::Backbone), span(Segment::FinalLayer), span(Segment::RewardHead));
        let backbone = p.segment(Segment::Backbone);
        let fin = p.segment(Segment::FinalLayer);
        let head = p.segment(Segment::RewardHead);
        let g = &mut grad.values;

        let mut d_pre = vec![0.0; h];
        for i in 0..h {
            g[o_head + i] += upstream * fwd.pre_head[i];
            d_pre[i] = upstream * head[i];
        }
        let mut d_hidden = vec![0.0; h];
        for i in 0..h {
            for j in 0..h {
                g[o_fin + i * h + j] += d_pre[i] * fwd.hidden[j];
                d_hidden[j] += fin[i * h + j] * d_pre[i];
            }
        }
        let mut d_emb = vec![0.0; d];
        for i in 0..h {
            let dz = d_hidden[i] * self.config.activation.derivative_from_output(fwd.hidden[i]);
            for k in 0..d {
                g[o_bb + i * d + k] += dz * fwd.embedded[k];
                d_emb[k] += backbone[i * d + k] * dz;
            }
        }
        for k in 0..d {
            g[o_emb + k] += d_emb[k] * x[k];
        }
    }
}
