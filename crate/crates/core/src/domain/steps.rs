use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// One unit of step-level supervision. `label` is 1 for a correct step and
/// 0 for an incorrect one when known.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningStep {
    pub index: usize,
    pub text: String,
    pub label: Option<u8>,
}

impl ReasoningStep {
    pub fn new(index: usize, text: impl Into<String>) -> Self {
        Self { index, text: text.into(), label: None }
    }

    pub fn with_label(mut self, label: u8) -> Self {
        debug_assert!(label <= 1);
        self.label = Some(label);
        self
    }
}

fn is_step_header(line: &str) -> bool {
    let t = line.trim_start().as_bytes();
    if t.len() < 6 || !t[..4].eq_ignore_ascii_case(b"step") {
        return false;
    }
    let rest = &t[4..];
    let mut i = 0;
    while i < rest.len() && rest[i] == b' ' {
        i += 1;
    }
    let digits = i;
    while i < rest.len() && rest[i].is_ascii_digit() {
        i += 1;
    }
    i > digits && i < rest.len() && rest[i] == b':'
}

/// Split a reasoning trace into steps.
///
/// With at least two `Step k:` lines, each step runs from its header to the
/// next one; text before the first header becomes its own leading step and
/// trailing text (e.g. the answer line) stays with the last step. Otherwise
/// blank-line separated paragraphs are used, and failing that the whole
/// trimmed text is a single step. Every step text is a trimmed substring of
/// the input, in order.
pub fn segment_steps(reasoning: &str) -> Vec<ReasoningStep> {
    let pieces = split_on_headers(reasoning)
        .or_else(|| split_on_paragraphs(reasoning))
        .unwrap_or_else(|| Vec::from([reasoning]));
    pieces
        .into_iter()
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .enumerate()
        .map(|(i, p)| ReasoningStep::new(i, p.to_string()))
        .collect()
}

/// Byte offsets of each line start, paired with the line (without newline).
fn lines_with_offsets(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.split_inclusive('\n').scan(0usize, |off, line| {
        let start = *off;
        *off += line.len();
        Some((start, line.trim_end_matches(['\n', '\r'])))
    })
}

fn split_on_headers(text: &str) -> Option<Vec<&str>> {
    let starts: Vec<usize> = lines_with_offsets(text).filter(|(_, l)| is_step_header(l)).map(|(off, _)| off).collect();
    if starts.len() < 2 {
        return None;
    }
    let mut cuts = Vec::with_capacity(starts.len() + 2);
    cuts.push(0);
    cuts.extend(starts.iter().copied().filter(|&s| s > 0));
    cuts.push(text.len());
    Some(cuts.windows(2).map(|w| &text[w[0]..w[1]]).collect())
}

fn split_on_paragraphs(text: &str) -> Option<Vec<&str>> {
    let mut pieces = Vec::new();
    let mut start = 0;
    for (off, line) in lines_with_offsets(text) {
        if line.trim().is_empty() {
            pieces.push(&text[start..off]);
            start = off + line.len();
        }
    }
    pieces.push(&text[start..]);
    let non_empty = pieces.iter().filter(|p| !p.trim().is_empty()).count();
    (non_empty >= 2).then_some(pieces)
}
