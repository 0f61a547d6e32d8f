//! Answer accuracy and reasoning-token perplexity.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{normalize_answer, Problem};
use crate::math;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("reasoning mask is empty")]
    EmptyMask,
    #[error("mask index {index} out of range for sequence of length {len}")]
    MaskOutOfRange { index: usize, len: usize },
    #[error("invalid log-probability {value} at position {position}")]
    InvalidLogProb { position: usize, value: f64 },
    #[error("token spans do not tile the text: {0}")]
    SpanMismatch(String),
    #[error("no predictions to evaluate")]
    EmptyPredictions,
    #[error("prediction for unknown problem id {0:?}")]
    UnknownProblemId(String),
    #[error("gold answer of problem {0:?} does not normalize")]
    BadGold(String),
}

/// Positions of reasoning tokens within a tokenized sequence of length
/// `total_len`. Indices are sorted, unique and in range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningMask {
    pub token_indices: Vec<usize>,
    pub total_len: usize,
}

impl ReasoningMask {
    pub fn new(mut token_indices: Vec<usize>, total_len: usize) -> Result<Self, EvalError> {
        token_indices.sort_unstable();
        token_indices.dedup();
        if let Some(&index) = token_indices.last().filter(|&&i| i >= total_len) {
            return Err(EvalError::MaskOutOfRange { index, len: total_len });
        }
        Ok(Self { token_indices, total_len })
    }

    pub fn full(total_len: usize) -> Self {
        Self { token_indices: (0..total_len).collect(), total_len }
    }

    pub fn is_empty(&self) -> bool {
        self.token_indices.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Pool every masked token of every sequence.
    #[default]
    Micro,
    /// Mean of per-sequence average NLLs.
    MacroNll,
    /// Mean of per-sequence perplexities; `avg_nll` is its log.
    MacroPpl,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerplexityReport {
    pub avg_nll: f64,
    pub ppl: f64,
    pub n_sequences: usize,
    pub n_tokens_scored: usize,
}

impl PerplexityReport {
    fn new(avg_nll: f64, n_sequences: usize, n_tokens_scored: usize) -> Self {
        let ppl = math::exp(avg_nll);
        debug_assert!(avg_nll >= 0.0 && ppl >= 1.0);
        Self { avg_nll, ppl, n_sequences, n_tokens_scored }
    }
}

fn masked_nll(logprobs: &[f64], mask: &ReasoningMask) -> Result<(f64, usize), EvalError> {
    if mask.is_empty() {
        return Err(EvalError::EmptyMask);
    }
    if mask.total_len != logprobs.len() {
        return Err(EvalError::MaskOutOfRange { index: mask.total_len, len: logprobs.len() });
    }
    let mut nll = 0.0;
    for &i in &mask.token_indices {
        let lp = *logprobs.get(i).ok_or(EvalError::MaskOutOfRange { index: i, len: logprobs.len() })?;
        if !(lp <= 0.0) {
            return Err(EvalError::InvalidLogProb { position: i, value: lp });
        }
        nll -= lp;
    }
    Ok((nll, mask.token_indices.len()))
}

/// `exp(-(1/|R|) Σ_{t∈R} log p(x_t | x_<t))` over one or more sequences.
pub fn reasoning_perplexity(
    sequences: &[(&[f64], &ReasoningMask)],
    averaging: Averaging,
) -> Result<PerplexityReport, EvalError> {
    if sequences.is_empty() {
        return Err(EvalError::EmptyMask);
    }
    let mut total_nll = 0.0;
    let mut total_tokens = 0;
    let mut per_seq = Vec::with_capacity(sequences.len());
    for (lp, mask) in sequences {
        let (nll, n) = masked_nll(lp, mask)?;
        total_nll += nll;
        total_tokens += n;
        per_seq.push(nll / n as f64);
    }
    let k = sequences.len() as f64;
    let avg_nll = match averaging {
        Averaging::Micro => total_nll / total_tokens as f64,
        Averaging::MacroNll => per_seq.iter().sum::<f64>() / k,
        Averaging::MacroPpl => math::ln(per_seq.iter().map(|n| math::exp(*n)).sum::<f64>() / k),
    };
    Ok(PerplexityReport::new(avg_nll, sequences.len(), total_tokens))
}

/// Mask of tokens that overlap `reasoning` and do not touch `answer`.
///
/// `token_spans` are byte ranges that must tile `0..text_len` in order.
pub fn build_reasoning_mask(
    reasoning: (usize, usize),
    answer: (usize, usize),
    token_spans: &[(usize, usize)],
    text_len: usize,
) -> Result<ReasoningMask, EvalError> {
    let mut cursor = 0;
    for (i, &(s, e)) in token_spans.iter().enumerate() {
        if s != cursor || e < s {
            return Err(EvalError::SpanMismatch(alloc::format!("token {i} spans {s}..{e}, expected start {cursor}")));
        }
        cursor = e;
    }
    if cursor != text_len {
        return Err(EvalError::SpanMismatch(alloc::format!("tokens end at {cursor}, text has {text_len} bytes")));
    }
    let overlaps = |(a, b): (usize, usize), (c, d): (usize, usize)| a < b && c < d && a < d && c < b;
    let indices = token_spans
        .iter()
        .enumerate()
        .filter(|(_, &span)| overlaps(span, reasoning) && !overlaps(span, answer))
        .map(|(i, _)| i)
        .collect();
    ReasoningMask::new(indices, token_spans.len())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub problem_id: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemVerdict {
    pub problem_id: String,
    pub predicted: Option<String>,
    pub gold: String,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    pub items: Vec<ItemVerdict>,
}

/// Fraction of predictions whose normalized answer equals the gold answer.
/// Unparsable predictions count as incorrect.
pub fn accuracy_eval(
    predictions: &[Prediction],
    problems: &BTreeMap<String, Problem>,
) -> Result<AccuracyReport, EvalError> {
    if predictions.is_empty() {
        return Err(EvalError::EmptyPredictions);
    }
    let mut items = Vec::with_capacity(predictions.len());
    for pred in predictions {
        let problem =
            problems.get(&pred.problem_id).ok_or_else(|| EvalError::UnknownProblemId(pred.problem_id.clone()))?;
        let gold = problem.gold().map_err(|_| EvalError::BadGold(problem.id.clone()))?;
        let predicted = normalize_answer(&pred.answer, problem.task_kind).ok();
        let correct = predicted.as_ref() == Some(&gold);
        items.push(ItemVerdict {
            problem_id: pred.problem_id.clone(),
            predicted: predicted.map(|p| p.canonical),
            gold: gold.canonical,
            correct,
        });
    }
    let correct = items.iter().filter(|i| i.correct).count();
    Ok(AccuracyReport { accuracy: correct as f64 / items.len() as f64, correct, total: items.len(), items })
}
