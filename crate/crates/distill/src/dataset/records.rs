use debate_distill_core::eval::Prediction;
use debate_distill_core::{Problem, ReasoningStep, TaskKind};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::jsonl::Record;
use crate::debate::DebateLog;
use crate::extract::{CorrectSet, TrajectoryRecord};

/// Byte ranges `[start, end)` over an RSFT target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSpans {
    pub reasoning: [usize; 2],
    pub answer: [usize; 2],
}

/// Supervised target: reasoning followed by the answer line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsftRecord {
    pub problem_id: String,
    pub question: String,
    pub reasoning: String,
    pub answer: String,
    pub answer_kind: TaskKind,
    pub target: String,
    pub token_spans: TokenSpans,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugTrajectory {
    pub reasoning: String,
    pub answer: String,
    pub diversity_tag: Option<String>,
    pub is_corrective: bool,
}

/// Up to three distinct correct trajectories for one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugRecord {
    pub problem_id: String,
    pub question: String,
    pub trajectories: Vec<AugTrajectory>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

/// One correct step against steps drawn from incorrect trajectories of the
/// same problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrmPairRecord {
    pub problem_id: String,
    pub agent_index: usize,
    pub positive_step: ReasoningStep,
    pub negatives: Vec<ReasoningStep>,
    pub context: Vec<ReasoningStep>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogProb {
    pub text: String,
    pub logprob: f64,
}

/// Per-token log-probabilities of one sequence, as exported by an
/// inference server run in teacher-forcing mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogProbs {
    pub problem_id: String,
    pub tokens: Vec<TokenLogProb>,
}

macro_rules! record {
    ($ty:ty, $schema:literal, [$($field:literal),* $(,)?]) => {
        impl Record for $ty {
            const SCHEMA: &'static str = $schema;
            const FIELDS: &'static [&'static str] = &[$($field),*];
        }
    };
}

record!(Problem, "problem", ["id", "question", "gold_answer", "task_kind", "source_dataset"]);
record!(
    DebateLog,
    "debate_log",
    [
        "problem_id",
        "config",
        "rounds",
        "consensus_round",
        "summarizer_answer",
        "summarizer_raw",
        "final_traces",
        "aborted"
    ]
);
record!(CorrectSet, "verdict", ["problem_id", "correct_agent_indices", "verdicts", "excluded"]);
record!(
    TrajectoryRecord,
    "trajectory",
    ["problem_id", "question", "agent_index", "reasoning", "steps", "answer", "is_corrective", "diversity_tag"]
);
record!(RsftRecord, "rsft", ["problem_id", "question", "reasoning", "answer", "answer_kind", "target", "token_spans"]);
record!(AugRecord, "aug", ["problem_id", "question", "trajectories"]);
record!(PrmPairRecord, "prm_pair", ["problem_id", "agent_index", "positive_step", "negatives", "context"]);
record!(Prediction, "prediction", ["problem_id", "answer"]);
record!(TokenLogProbs, "token_logprobs", ["problem_id", "tokens"]);
