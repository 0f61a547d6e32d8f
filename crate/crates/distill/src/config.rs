//! Layered pipeline configuration: built-in defaults, then a TOML file,
//! then command-line flags.

use std::path::Path;

use debate_distill_core::eval::Averaging;
use debate_distill_core::policy::OptimConfig;
use debate_distill_core::reward::{Activation, Aggregation, RewardConfig, ScoreTransform};
use serde::{Deserialize, Serialize};

use crate::client::ClientConfig;
use crate::debate::DebateConfig;
use crate::extract::ExtractionConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Trajectories kept per problem in augmented records.
    pub k: usize,
    pub neg_per_pos: usize,
    pub seed: u64,
    /// Reject unknown keys on read and fail on empty outputs.
    pub strict: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { k: 3, neg_per_pos: 4, seed: 0, strict: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrmConfig {
    pub feature_dim: usize,
    pub hidden_dim: usize,
    pub activation: Activation,
    pub temperature: f64,
    pub transform: ScoreTransform,
    pub aggregation: Aggregation,
    pub stage1_steps: usize,
    pub stage2_steps: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for PrmConfig {
    fn default() -> Self {
        let m = RewardConfig::default();
        Self {
            feature_dim: m.feature_dim,
            hidden_dim: m.hidden_dim,
            activation: m.activation,
            temperature: m.temperature,
            transform: m.transform,
            aggregation: m.aggregation,
            stage1_steps: 100,
            stage2_steps: 100,
            learning_rate: 1e-2,
            seed: 0,
        }
    }
}

impl PrmConfig {
    pub fn model(&self) -> RewardConfig {
        RewardConfig {
            feature_dim: self.feature_dim,
            hidden_dim: self.hidden_dim,
            activation: self.activation,
            temperature: self.temperature,
            transform: self.transform,
            aggregation: self.aggregation,
        }
    }
}

/// Shape of the toy policy and its scripted reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub num_inputs: usize,
    pub vocab_size: usize,
    pub max_len: usize,
    /// Scripted reward pays 1 when the output starts with this token.
    pub reward_token: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self { num_inputs: 1, vocab_size: 10, max_len: 1, reward_token: 7 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub averaging: Averaging,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub client: ClientConfig,
    pub debate: DebateConfig,
    pub extract: ExtractionConfig,
    pub dataset: DatasetConfig,
    pub prm: PrmConfig,
    pub policy: PolicyConfig,
    pub optim: OptimConfig,
    pub eval: EvalConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Defaults overlaid with `path` when given.
    pub fn load(path: Option<&Path>) -> Result<Self, String> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
                Self::from_toml(&text).map_err(|e| format!("{}: {e}", p.display()))
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("pipeline config is always representable in TOML")
    }

    pub fn validate(&self) -> Result<(), String> {
        self.client.validate()?;
        self.debate.validate()?;
        self.extract.validate()?;
        if !(1..=3).contains(&self.dataset.k) {
            return Err(format!("dataset.k must be in 1..=3, got {}", self.dataset.k));
        }
        if self.dataset.neg_per_pos == 0 {
            return Err("dataset.neg_per_pos must be >= 1".into());
        }
        if self.prm.feature_dim == 0 || self.prm.hidden_dim == 0 {
            return Err("prm.feature_dim and prm.hidden_dim must be >= 1".into());
        }
        if !(self.prm.temperature > 0.0) {
            return Err("prm.temperature must be > 0".into());
        }
        if !(self.prm.learning_rate > 0.0) {
            return Err("prm.learning_rate must be > 0".into());
        }
        let p = &self.policy;
        if p.num_inputs == 0 || p.vocab_size == 0 || p.max_len == 0 {
            return Err("policy.num_inputs, vocab_size and max_len must be >= 1".into());
        }
        if p.reward_token >= p.vocab_size {
            return Err(format!("policy.reward_token {} outside vocabulary of {}", p.reward_token, p.vocab_size));
        }
        self.optim.validate().map_err(|e| format!("optim: {e}"))
    }
}
