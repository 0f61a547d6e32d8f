use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Numeric,
    MultipleChoice,
    FreeText,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Numeric => "numeric",
            TaskKind::MultipleChoice => "multiple_choice",
            TaskKind::FreeText => "free_text",
        })
    }
}

/// Canonical answer string. Two answers of the same kind are equal iff
/// their canonical strings are byte-equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NormalizedAnswer {
    pub canonical: String,
    pub kind: TaskKind,
}

impl fmt::Display for NormalizedAnswer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnswerError {
    #[error("empty answer text")]
    Empty,
    #[error("no {kind} answer found in {snippet:?}")]
    Unparsable { kind: TaskKind, snippet: String },
}

const CHOICES: &[u8] = b"ABCDE";

/// Byte range of the last `Final Answer:` marker, matched
/// case-insensitively with any run of whitespace between the two words.
pub fn find_answer_marker(text: &str) -> Option<(usize, usize)> {
    let bytes = text.as_bytes();
    let mut last = None;
    let mut i = 0;
    while i + 5 <= bytes.len() {
        if bytes[i..i + 5].eq_ignore_ascii_case(b"final") {
            if let Some(end) = match_marker_tail(bytes, i + 5) {
                last = Some((i, end));
            }
        }
        i += 1;
    }
    last
}

fn match_marker_tail(bytes: &[u8], mut j: usize) -> Option<usize> {
    let ws_start = j;
    while j < bytes.len() && bytes[j].is_ascii_whitespace() {
        j += 1;
    }
    if j == ws_start || j + 6 > bytes.len() || !bytes[j..j + 6].eq_ignore_ascii_case(b"answer") {
        return None;
    }
    j += 6;
    while j < bytes.len() && bytes[j].is_ascii_whitespace() {
        j += 1;
    }
    (j < bytes.len() && bytes[j] == b':').then_some(j + 1)
}

/// Canonicalize a raw model answer.
///
/// Only the text after the last `Final Answer:` marker is considered when
/// the marker is present. Numeric answers take the first number token after
/// the marker (or the last number in the text without one), drop thousands
/// separators, currency symbols, a leading `+`, redundant leading zeros and
/// trailing fractional zeros. Multiple-choice answers map to a letter in
/// `A..=E`. Free text is whitespace-collapsed, lowercased and stripped of
/// trailing periods.
pub fn normalize_answer(raw: &str, kind: TaskKind) -> Result<NormalizedAnswer, AnswerError> {
    if raw.trim().is_empty() {
        return Err(AnswerError::Empty);
    }
    let (scope, has_marker) = match find_answer_marker(raw) {
        Some((_, end)) => (&raw[end..], true),
        None => (raw, false),
    };
    let canonical = match kind {
        TaskKind::Numeric => {
            let tokens = number_tokens(scope);
            let tok = if has_marker { tokens.first() } else { tokens.last() };
            tok.map(canonical_number)
        }
        TaskKind::MultipleChoice => choice_letter(scope).map(|c| (c as char).to_string()),
        TaskKind::FreeText => canonical_text(scope),
    };
    canonical
        .map(|canonical| NormalizedAnswer { canonical, kind })
        .ok_or_else(|| AnswerError::Unparsable { kind, snippet: snippet(scope) })
}

fn snippet(s: &str) -> String {
    s.trim().chars().take(40).collect()
}

/// A number as found in text: sign, integer digits (separators removed)
/// and optional fraction digits.
struct NumberToken {
    negative: bool,
    int_digits: String,
    frac_digits: String,
}

fn is_currency(c: char) -> bool {
    matches!(c, '$' | '€' | '£' | '¥')
}

fn number_tokens(text: &str) -> Vec<NumberToken> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let starts_digit = bytes[i].is_ascii_digit();
        let starts_dot = bytes[i] == b'.'
            && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)
            && (i == 0 || !bytes[i - 1].is_ascii_digit());
        if !starts_digit && !starts_dot {
            i += 1;
            continue;
        }
        let negative = sign_before(text, i);
        let mut int_digits = String::new();
        let mut frac_digits = String::new();
        let mut j = i;
        while j < bytes.len() {
            let b = bytes[j];
            if b.is_ascii_digit() {
                int_digits.push(b as char);
                j += 1;
            } else if b == b',' && !int_digits.is_empty() && bytes.get(j + 1).is_some_and(u8::is_ascii_digit) {
                j += 1;
            } else {
                break;
            }
        }
        if j < bytes.len() && bytes[j] == b'.' && bytes.get(j + 1).is_some_and(u8::is_ascii_digit) {
            j += 1;
            while j < bytes.len() && bytes[j].is_ascii_digit() {
                frac_digits.push(bytes[j] as char);
                j += 1;
            }
        }
        out.push(NumberToken { negative, int_digits, frac_digits });
        i = j;
    }
    out
}

/// A `-` directly before the number (optionally around one currency
/// symbol) that is not itself preceded by an alphanumeric character.
fn sign_before(text: &str, start: usize) -> bool {
    let mut before = text[..start].chars().rev().peekable();
    if before.peek().copied().is_some_and(is_currency) {
        before.next();
    }
    match before.next() {
        Some('-') => {}
        _ => return false,
    }
    !before.next().is_some_and(char::is_alphanumeric)
}

fn canonical_number(tok: &NumberToken) -> String {
    let int = tok.int_digits.trim_start_matches('0');
    let frac = tok.frac_digits.trim_end_matches('0');
    let mut s = String::new();
    let is_zero = int.is_empty() && frac.is_empty();
    if tok.negative && !is_zero {
        s.push('-');
    }
    s.push_str(if int.is_empty() { "0" } else { int });
    if !frac.is_empty() {
        s.push('.');
        s.push_str(frac);
    }
    s
}

fn choice_letter(text: &str) -> Option<u8> {
    let accept = |c: u8| {
        let up = c.to_ascii_uppercase();
        CHOICES.contains(&up).then_some(up)
    };
    // Whole answer is a single letter, possibly wrapped: "(b)", "B.", "**C**".
    let core = text.trim().trim_matches(|c: char| !c.is_alphanumeric());
    if core.len() == 1 && core.as_bytes()[0].is_ascii_alphabetic() {
        return accept(core.as_bytes()[0]);
    }
    // "(X)" anywhere.
    let bytes = text.as_bytes();
    for w in bytes.windows(3) {
        if w[0] == b'(' && w[2] == b')' && w[1].is_ascii_alphabetic() {
            return accept(w[1]);
        }
    }
    // First standalone capital letter from the choice alphabet.
    text.split(|c: char| !c.is_alphanumeric())
        .find(|t| t.len() == 1 && CHOICES.contains(&t.as_bytes()[0]))
        .map(|t| t.as_bytes()[0])
}

fn canonical_text(text: &str) -> Option<String> {
    let mut s: String = text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    loop {
        let trimmed = s.trim_end_matches('.').trim_end();
        if trimmed.len() == s.len() {
            break;
        }
        s = trimmed.to_string();
    }
    (!s.is_empty()).then_some(s)
}
