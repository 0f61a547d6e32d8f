//! Checkpoint container and CSV traces.

use std::fmt::Write as _;
use std::path::Path;

use debate_distill_core::policy::StepMetrics;
use debate_distill_core::reward::LossPoint;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

pub const CHECKPOINT_FORMAT: &str = "debate-distill-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint<M> {
    pub format: String,
    /// `reward_model` or `policy`.
    pub kind: String,
    pub model: M,
    pub metadata: Map<String, Value>,
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{0}")]
    Io(String),
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

pub fn save_checkpoint<M: Serialize>(
    path: &Path,
    kind: &str,
    model: &M,
    metadata: Map<String, Value>,
) -> Result<(), CheckpointError> {
    let ck = Checkpoint { format: CHECKPOINT_FORMAT.to_string(), kind: kind.to_string(), model, metadata };
    let mut text = serde_json::to_string_pretty(&ck).map_err(|e| CheckpointError::Io(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CheckpointError::Io(format!("{}: {e}", path.display())))
}

pub fn load_checkpoint<M: DeserializeOwned>(path: &Path, kind: &str) -> Result<Checkpoint<M>, CheckpointError> {
    let text = std::fs::read_to_string(path).map_err(|e| CheckpointError::Io(format!("{}: {e}", path.display())))?;
    let invalid = |message: String| CheckpointError::Invalid { path: path.display().to_string(), message };
    let ck: Checkpoint<M> = serde_json::from_str(&text).map_err(|e| invalid(e.to_string()))?;
    if ck.format != CHECKPOINT_FORMAT {
        return Err(invalid(format!("unsupported format {:?}", ck.format)));
    }
    if ck.kind != kind {
        return Err(invalid(format!("expected a {kind} checkpoint, found {}", ck.kind)));
    }
    Ok(ck)
}

pub fn loss_csv(trace: &[LossPoint]) -> String {
    let mut out = String::from("step,stage,loss\n");
    for p in trace {
        let _ = writeln!(out, "{},{},{}", p.step, p.stage.as_str(), p.loss);
    }
    out
}

pub fn metrics_csv(metrics: &[StepMetrics]) -> String {
    let mut out = String::from("step,mean_reward,kl,clip_fraction,objective\n");
    for m in metrics {
        let _ = writeln!(out, "{},{},{},{},{}", m.step, m.mean_reward, m.kl, m.clip_fraction, m.objective);
    }
    out
}
