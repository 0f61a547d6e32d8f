//! Problems, canonical answers and reasoning steps shared by every stage.

mod answer;
mod steps;

pub use answer::{find_answer_marker, normalize_answer, AnswerError, NormalizedAnswer, TaskKind};
pub use steps::{segment_steps, ReasoningStep};

use alloc::string::String;
use serde::{Deserialize, Serialize};

/// One benchmark item. `gold_answer` is stored already normalized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub question: String,
    pub gold_answer: String,
    pub task_kind: TaskKind,
    pub source_dataset: String,
}

impl Problem {
    /// The gold answer as a [`NormalizedAnswer`], re-normalized so that
    /// hand-written problem files with `"1,000"` still compare correctly.
    pub fn gold(&self) -> Result<NormalizedAnswer, AnswerError> {
        normalize_answer(&self.gold_answer, self.task_kind)
    }
}
