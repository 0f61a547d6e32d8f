//! Turns debate logs into verified training trajectories.
//!
//! Verification is local exact match for numeric and multiple-choice items
//! and a verifier model call for free text. Correct traces are then
//! narrowed to at most `k_diverse` by a judge model, with corrective
//! trajectories (wrong in round 1, right at the end) placed first.

use std::collections::{BTreeMap, BTreeSet};
use std::thread;

use debate_distill_core::{segment_steps, AnswerError, NormalizedAnswer, Problem, ReasoningStep, TaskKind};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::client::{ChatRequest, ClientError, LlmClient, Message};
use crate::debate::{AgentTrace, DebateLog};

pub const FALLBACK_TAG: &str = "fallback";
pub const CORRECTIVE_TAG: &str = "corrective";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionConfig {
    pub verifier_model: String,
    pub judge_model: String,
    pub k_diverse: usize,
    pub min_correct: usize,
    /// Put corrective trajectories ahead of judge picks.
    pub prioritize_corrective: bool,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            verifier_model: "gpt-4o-mini".into(),
            judge_model: "gpt-4o-mini".into(),
            k_diverse: 3,
            min_correct: 2,
            prioritize_corrective: true,
            temperature: 0.0,
            max_tokens: 512,
        }
    }
}

impl ExtractionConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(1..=3).contains(&self.k_diverse) {
            return Err(format!("extract.k_diverse must be in 1..=3, got {}", self.k_diverse));
        }
        if self.min_correct == 0 {
            return Err("extract.min_correct must be >= 1".into());
        }
        if self.max_tokens == 0 {
            return Err("extract.max_tokens must be >= 1".into());
        }
        Ok(())
    }

    fn request(&self, model: &str, messages: Vec<Message>) -> ChatRequest {
        ChatRequest {
            model: model.into(),
            messages,
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Correct,
    Incorrect,
    Unverifiable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentVerdict {
    pub agent_index: usize,
    pub verdict: Verdict,
    pub rationale: String,
}

/// Verification outcome for one debate. `excluded` marks problems with too
/// few correct agents to yield training data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectSet {
    pub problem_id: String,
    pub correct_agent_indices: Vec<usize>,
    pub verdicts: Vec<AgentVerdict>,
    pub excluded: bool,
}

impl CorrectSet {
    pub fn contains(&self, agent: usize) -> bool {
        self.correct_agent_indices.binary_search(&agent).is_ok()
    }
}

/// One correct final trace selected for training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub problem_id: String,
    pub question: String,
    pub agent_index: usize,
    pub reasoning: String,
    pub steps: Vec<ReasoningStep>,
    pub answer: NormalizedAnswer,
    pub is_corrective: bool,
    pub diversity_tag: Option<String>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("invalid extraction config: {0}")]
    Config(String),
    #[error("debate log for {0} is aborted")]
    AbortedLog(String),
    #[error("log is for {log} but problem is {problem}")]
    ProblemMismatch { log: String, problem: String },
    #[error("gold answer of {problem_id} does not normalize: {source}")]
    BadGold { problem_id: String, source: AnswerError },
    #[error("verifier unavailable: {0}")]
    VerifierUnavailable(ClientError),
}

/// Why a judge reply was rejected.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum JudgeProtocolError {
    #[error("no fenced block")]
    NoFence,
    #[error("first line of the block is not a JSON integer array: {0}")]
    BadIndices(String),
    #[error("no indices selected")]
    Empty,
    #[error("index {0} is not one of the correct traces")]
    NotCorrect(usize),
    #[error("index {0} listed twice")]
    Duplicate(usize),
    #[error("missing tag for index {0}")]
    MissingTag(usize),
}

/// The judge's parsed choice, in its order of preference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JudgeChoice {
    pub picks: Vec<(usize, String)>,
}

fn gold_of(problem: &Problem) -> Result<NormalizedAnswer, ExtractError> {
    problem.gold().map_err(|source| ExtractError::BadGold { problem_id: problem.id.clone(), source })
}

fn final_trace(log: &DebateLog, agent: usize) -> Option<&AgentTrace> {
    log.final_traces.iter().find(|t| t.agent_index == agent)
}

fn verifier_prompt(problem: &Problem, candidate: &NormalizedAnswer, cfg: &ExtractionConfig) -> ChatRequest {
    let content = format!(
        "Question: {}\n\nReference answer: {}\n\nCandidate answer: {}\n\n\
         Does the candidate answer mean the same as the reference answer? \
         Reply with exactly one word: CORRECT or INCORRECT.",
        problem.question, problem.gold_answer, candidate.canonical
    );
    cfg.request(&cfg.verifier_model, vec![Message::user(content)])
}

/// Reads a verifier reply: exactly one of the words CORRECT / INCORRECT
/// must appear, otherwise the verdict is unverifiable.
pub fn parse_verifier_reply(reply: &str) -> Verdict {
    let upper = reply.to_ascii_uppercase();
    let words: BTreeSet<&str> = upper.split(|c: char| !c.is_ascii_alphabetic()).collect();
    match (words.contains("CORRECT"), words.contains("INCORRECT")) {
        (true, false) => Verdict::Correct,
        (false, true) => Verdict::Incorrect,
        _ => Verdict::Unverifiable,
    }
}

/// Labels every final trace correct, incorrect or unverifiable against gold.
pub fn verify_answers(
    log: &DebateLog,
    problem: &Problem,
    cfg: &ExtractionConfig,
    client: &LlmClient,
) -> Result<CorrectSet, ExtractError> {
    if log.is_aborted() {
        return Err(ExtractError::AbortedLog(log.problem_id.clone()));
    }
    if log.problem_id != problem.id {
        return Err(ExtractError::ProblemMismatch { log: log.problem_id.clone(), problem: problem.id.clone() });
    }
    let gold = gold_of(problem)?;
    let mut verdicts: Vec<AgentVerdict> = Vec::with_capacity(log.final_traces.len());
    let mut pending = Vec::new();
    for t in &log.final_traces {
        let (verdict, rationale) = match &t.final_answer {
            None => (Verdict::Incorrect, "answer could not be parsed".to_string()),
            Some(a) if problem.task_kind != TaskKind::FreeText => {
                if *a == gold {
                    (Verdict::Correct, "exact match".to_string())
                } else {
                    (Verdict::Incorrect, format!("{} differs from gold {}", a.canonical, gold.canonical))
                }
            }
            Some(a) => {
                pending.push((verdicts.len(), verifier_prompt(problem, a, cfg)));
                (Verdict::Unverifiable, String::new())
            }
        };
        verdicts.push(AgentVerdict { agent_index: t.agent_index, verdict, rationale });
    }
    if !pending.is_empty() {
        let requests: Vec<ChatRequest> = pending.iter().map(|(_, r)| r.clone()).collect();
        for ((slot, _), result) in pending.iter().zip(client.complete_batch(&requests)) {
            let reply = result.map_err(ExtractError::VerifierUnavailable)?;
            verdicts[*slot].verdict = parse_verifier_reply(&reply.content);
            verdicts[*slot].rationale = reply.content.trim().to_string();
        }
    }
    let mut correct: Vec<usize> =
        verdicts.iter().filter(|v| v.verdict == Verdict::Correct).map(|v| v.agent_index).collect();
    correct.sort_unstable();
    correct.dedup();
    Ok(CorrectSet {
        problem_id: problem.id.clone(),
        excluded: correct.len() < cfg.min_correct,
        correct_agent_indices: correct,
        verdicts,
    })
}

/// Correct agents whose round-1 answer was wrong or unparsable. A
/// single-round debate has no corrective agents.
pub fn detect_corrective(log: &DebateLog, correct: &CorrectSet, gold: &NormalizedAnswer) -> Vec<usize> {
    if log.rounds.len() < 2 {
        return Vec::new();
    }
    log.rounds[0]
        .iter()
        .filter(|t| correct.contains(t.agent_index) && t.final_answer.as_ref() != Some(gold))
        .map(|t| t.agent_index)
        .collect()
}

fn judge_prompt(problem: &Problem, log: &DebateLog, correct: &CorrectSet, cfg: &ExtractionConfig) -> ChatRequest {
    let traces: Vec<String> = correct
        .correct_agent_indices
        .iter()
        .filter_map(|&i| final_trace(log, i))
        .map(|t| format!("### Trace {}\n{}", t.agent_index, t.raw.trim()))
        .collect();
    let content = format!(
        "Question: {}\n\nReference answer: {}\n\nThe following solutions all reach the reference answer.\n\n{}\n\n\
         Choose up to {} traces whose reasoning differs most in structure or strategy. \
         Reply with a fenced block. Its first line is a JSON array of the chosen trace numbers; \
         each following line is \"<number>: <one-line description of the approach>\".\n\
         Example:\n```\n[0, 3]\n0: direct arithmetic\n3: works backwards from the total\n```",
        problem.question,
        problem.gold_answer,
        traces.join("\n\n"),
        cfg.k_diverse
    );
    cfg.request(&cfg.judge_model, vec![Message::user(content)])
}

/// Parses a judge reply against the set of correct agents. More than
/// `k` picks is not an error; callers truncate.
pub fn parse_judge_reply(reply: &str, correct: &CorrectSet) -> Result<JudgeChoice, JudgeProtocolError> {
    let open = reply.find("```").ok_or(JudgeProtocolError::NoFence)?;
    let after_open = &reply[open + 3..];
    // Skip an info string such as ```json.
    let body_start = after_open.find('\n').map(|p| p + 1).ok_or(JudgeProtocolError::NoFence)?;
    let body = &after_open[body_start..];
    let body = &body[..body.find("```").ok_or(JudgeProtocolError::NoFence)?];
    let mut lines = body.lines().map(str::trim).filter(|l| !l.is_empty());
    let first = lines.next().ok_or(JudgeProtocolError::Empty)?;
    let indices: Vec<usize> =
        serde_json::from_str(first).map_err(|_| JudgeProtocolError::BadIndices(first.to_string()))?;
    if indices.is_empty() {
        return Err(JudgeProtocolError::Empty);
    }
    let mut tags = BTreeMap::new();
    for line in lines {
        if let Some((k, v)) = line.split_once(':') {
            if let Ok(k) = k.trim().parse::<usize>() {
                tags.entry(k).or_insert_with(|| v.trim().to_string());
            }
        }
    }
    let mut seen = BTreeSet::new();
    let mut picks = Vec::with_capacity(indices.len());
    for i in indices {
        if !correct.contains(i) {
            return Err(JudgeProtocolError::NotCorrect(i));
        }
        if !seen.insert(i) {
            return Err(JudgeProtocolError::Duplicate(i));
        }
        let tag = tags.get(&i).filter(|t| !t.is_empty()).ok_or(JudgeProtocolError::MissingTag(i))?;
        picks.push((i, tag.clone()));
    }
    Ok(JudgeChoice { picks })
}

/// Asks the judge, re-prompting once on a protocol violation. `None` means
/// the caller should fall back.
fn ask_judge(request: ChatRequest, correct: &CorrectSet, client: &LlmClient, problem_id: &str) -> Option<JudgeChoice> {
    let first = match client.complete(&request) {
        Ok(r) => r.content,
        Err(e) => {
            log::warn!("judge unavailable for {problem_id}: {e}");
            return None;
        }
    };
    let err = match parse_judge_reply(&first, correct) {
        Ok(choice) => return Some(choice),
        Err(e) => e,
    };
    log::debug!("judge reply for {problem_id} rejected ({err}), re-prompting");
    let mut retry = request;
    retry.messages.push(Message::assistant(first));
    retry.messages.push(Message::user(format!(
        "That reply could not be used: {err}. Answer again using only trace numbers listed above, \
         in the fenced format described."
    )));
    match client.complete(&retry).map(|r| parse_judge_reply(&r.content, correct)) {
        Ok(Ok(choice)) => Some(choice),
        Ok(Err(e)) => {
            log::warn!("judge protocol failed twice for {problem_id} ({e}); using fallback selection");
            None
        }
        Err(e) => {
            log::warn!("judge unavailable for {problem_id}: {e}");
            None
        }
    }
}

/// Selects up to `k_diverse` correct final traces. Corrective trajectories
/// come first when prioritized, then judge picks in the judge's order.
pub fn select_diverse(
    log: &DebateLog,
    problem: &Problem,
    correct: &CorrectSet,
    cfg: &ExtractionConfig,
    client: &LlmClient,
) -> Result<Vec<TrajectoryRecord>, ExtractError> {
    if correct.excluded || correct.correct_agent_indices.len() < cfg.min_correct {
        return Ok(Vec::new());
    }
    let gold = gold_of(problem)?;
    let corrective = detect_corrective(log, correct, &gold);
    let choice = ask_judge(judge_prompt(problem, log, correct, cfg), correct, client, &problem.id);
    let (ranked, fallback): (Vec<(usize, String)>, bool) = match choice {
        Some(c) => (c.picks, false),
        None => (correct.correct_agent_indices.iter().map(|&i| (i, FALLBACK_TAG.to_string())).collect(), true),
    };
    let mut order: Vec<(usize, String)> = Vec::new();
    if cfg.prioritize_corrective {
        for &i in &corrective {
            let tag = match ranked.iter().find(|(j, _)| *j == i) {
                Some((_, t)) => t.clone(),
                None if fallback => FALLBACK_TAG.to_string(),
                None => CORRECTIVE_TAG.to_string(),
            };
            order.push((i, tag));
        }
    }
    for (i, tag) in ranked {
        if !order.iter().any(|(j, _)| *j == i) {
            order.push((i, tag));
        }
    }
    order.truncate(cfg.k_diverse);
    Ok(order
        .into_iter()
        .filter_map(|(i, tag)| {
            let t = final_trace(log, i)?;
            Some(TrajectoryRecord {
                problem_id: problem.id.clone(),
                question: problem.question.clone(),
                agent_index: i,
                reasoning: t.reasoning.clone(),
                steps: segment_steps(&t.reasoning),
                answer: gold.clone(),
                is_corrective: corrective.contains(&i),
                diversity_tag: Some(tag),
                extra: Map::new(),
            })
        })
        .collect())
}

/// Verification plus selection for one problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub correct: CorrectSet,
    pub corrective: Vec<usize>,
    pub records: Vec<TrajectoryRecord>,
}

pub fn extract_problem(
    log: &DebateLog,
    problem: &Problem,
    cfg: &ExtractionConfig,
    client: &LlmClient,
) -> Result<Extraction, ExtractError> {
    cfg.validate().map_err(ExtractError::Config)?;
    let correct = verify_answers(log, problem, cfg, client)?;
    let corrective = detect_corrective(log, &correct, &gold_of(problem)?);
    let records = select_diverse(log, problem, &correct, cfg, client)?;
    Ok(Extraction { correct, corrective, records })
}

/// Extracts many problems on up to `workers` threads, preserving order.
pub fn extract_all(
    jobs: &[(&DebateLog, &Problem)],
    cfg: &ExtractionConfig,
    client: &LlmClient,
    workers: usize,
) -> Vec<Result<Extraction, ExtractError>> {
    let workers = workers.clamp(1, jobs.len().max(1));
    let mut slots: Vec<Option<Result<Extraction, ExtractError>>> = (0..jobs.len()).map(|_| None).collect();
    thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                s.spawn(move || {
                    (w..jobs.len())
                        .step_by(workers)
                        .map(|i| (i, extract_problem(jobs[i].0, jobs[i].1, cfg, client)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("extract worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|r| r.expect("every job extracted")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::{ClientConfig, MockReply, MockRule, MockScript, MockTransport};
    use crate::debate::DebateConfig;
    use std::sync::Arc;

    fn problem(kind: TaskKind, gold: &str) -> Problem {
        Problem {
            id: "p".into(),
            question: "Q?".into(),
            gold_answer: gold.into(),
            task_kind: kind,
            source_dataset: "toy".into(),
        }
    }

    /// rounds[k][i] is agent i's answer text in round k+1.
    fn log_from(rounds: &[&[&str]], kind: TaskKind) -> DebateLog {
        let rounds: Vec<Vec<AgentTrace>> = rounds
            .iter()
            .enumerate()
            .map(|(k, r)| {
                r.iter()
                    .enumerate()
                    .map(|(i, a)| {
                        AgentTrace::parse(i, k + 1, &format!("Step 1: agent {i} works.\nFinal Answer: {a}"), kind)
                    })
                    .collect()
            })
            .collect();
        DebateLog {
            problem_id: "p".into(),
            config: DebateConfig { n_agents: rounds[0].len(), ..DebateConfig::default() },
            final_traces: rounds.last().unwrap().clone(),
            rounds,
            consensus_round: None,
            summarizer_answer: None,
            summarizer_raw: None,
            aborted: None,
            extra: Map::new(),
        }
    }

    fn client(script: MockScript) -> (LlmClient, Arc<MockTransport>) {
        let mock = Arc::new(MockTransport::new(script));
        let cfg = ClientConfig { max_retries: 0, ..ClientConfig::default() };
        (LlmClient::with_sleeper(mock.clone(), cfg, Arc::new(|_| {})), mock)
    }

    fn judge(reply: &str) -> MockScript {
        MockScript { fallback: Some(MockReply::content(reply)), ..MockScript::default() }
    }

    fn set(indices: &[usize]) -> CorrectSet {
        CorrectSet {
            problem_id: "p".into(),
            correct_agent_indices: indices.to_vec(),
            verdicts: vec![],
            excluded: false,
        }
    }

    #[test]
    fn exact_match_verification() {
        let (c, mock) = client(MockScript::default());
        let log = log_from(&[&["27", "27", "27", "27", "9"]], TaskKind::Numeric);
        let cs = verify_answers(&log, &problem(TaskKind::Numeric, "27"), &ExtractionConfig::default(), &c).unwrap();
        assert_eq!(cs.correct_agent_indices, vec![0, 1, 2, 3]);
        assert!(!cs.excluded);
        assert!(mock.calls().is_empty());
    }

    #[test]
    fn single_correct_agent_is_excluded() {
        let (c, _) = client(judge("```\n[0]\n0: x\n```"));
        let log = log_from(&[&["27", "9", "9", "9", "9"]], TaskKind::Numeric);
        let p = problem(TaskKind::Numeric, "27");
        let ex = extract_problem(&log, &p, &ExtractionConfig::default(), &c).unwrap();
        assert_eq!(ex.correct.correct_agent_indices, vec![0]);
        assert!(ex.correct.excluded);
        assert!(ex.records.is_empty());
    }

    #[test]
    fn free_text_uses_the_verifier() {
        let mut script = MockScript::default();
        script.rules.push(MockRule::new(&["Candidate answer: paris"], vec![MockReply::content("CORRECT")]));
        script.rules.push(MockRule::new(&["Candidate answer: lyon"], vec![MockReply::content("INCORRECT.")]));
        script.rules.push(MockRule::new(&["Candidate answer: nice"], vec![MockReply::content("not sure")]));
        let (c, mock) = client(script);
        let log = log_from(&[&["Paris", "Lyon", "paris.", "Nice"]], TaskKind::FreeText);
        let cs = verify_answers(&log, &problem(TaskKind::FreeText, "Paris"), &ExtractionConfig::default(), &c).unwrap();
        assert_eq!(cs.correct_agent_indices, vec![0, 2]);
        assert_eq!(cs.verdicts[3].verdict, Verdict::Unverifiable);
        assert_eq!(mock.calls().len(), 4);
        assert!(!mock.calls()[0].text.contains("agent 0 works"));
    }

    #[test]
    fn verifier_reply_parsing() {
        assert_eq!(parse_verifier_reply("correct"), Verdict::Correct);
        assert_eq!(parse_verifier_reply("INCORRECT"), Verdict::Incorrect);
        assert_eq!(parse_verifier_reply("CORRECT or INCORRECT"), Verdict::Unverifiable);
        assert_eq!(parse_verifier_reply("yes"), Verdict::Unverifiable);
    }

    #[test]
    fn aborted_logs_are_refused() {
        let (c, _) = client(MockScript::default());
        let mut log = log_from(&[&["27", "27"]], TaskKind::Numeric);
        log.aborted = Some("boom".into());
        assert!(matches!(
            verify_answers(&log, &problem(TaskKind::Numeric, "27"), &ExtractionConfig::default(), &c),
            Err(ExtractError::AbortedLog(_))
        ));
    }

    #[test]
    fn corrective_detection() {
        let log =
            log_from(&[&["27", "27", "27", "27", "9"], &["27", "27", "27", "27", "9"], &["27"; 5]], TaskKind::Numeric);
        let gold = problem(TaskKind::Numeric, "27").gold().unwrap();
        assert_eq!(detect_corrective(&log, &set(&[0, 1, 2, 3, 4]), &gold), vec![4]);
        let log = log_from(&[&["27"; 3], &["27"; 3]], TaskKind::Numeric);
        assert!(detect_corrective(&log, &set(&[0, 1, 2]), &gold).is_empty());
        let log = log_from(&[&["9", "9"]], TaskKind::Numeric);
        assert!(detect_corrective(&log, &set(&[0, 1]), &gold).is_empty());
    }

    #[test]
    fn corrective_enumeration_two_agents_two_rounds() {
        let gold = problem(TaskKind::Numeric, "27").gold().unwrap();
        let ans = |right: bool| if right { "27" } else { "9" };
        for pattern in 0u8..16 {
            let bit = |b: u8| pattern >> b & 1 == 1;
            let r1 = [ans(bit(0)), ans(bit(1))];
            let r2 = [ans(bit(2)), ans(bit(3))];
            let log = log_from(&[&r1, &r2], TaskKind::Numeric);
            let correct: Vec<usize> = (0..2).filter(|&i| bit(2 + i as u8)).collect();
            let got = detect_corrective(&log, &set(&correct), &gold);
            let want: Vec<usize> = (0..2).filter(|&i| bit(2 + i as u8) && !bit(i as u8)).collect();
            assert_eq!(got, want, "pattern {pattern:04b}");
        }
    }

    #[test]
    fn judge_reply_contract() {
        let cs = set(&[0, 2, 3]);
        let ok = parse_judge_reply("Here:\n```json\n[2, 0]\n0: algebra\n2: diagram\n```", &cs).unwrap();
        assert_eq!(ok.picks, vec![(2, "diagram".into()), (0, "algebra".into())]);
        assert_eq!(parse_judge_reply("[0]", &cs), Err(JudgeProtocolError::NoFence));
        assert!(matches!(parse_judge_reply("```\nzero\n```", &cs), Err(JudgeProtocolError::BadIndices(_))));
        assert_eq!(parse_judge_reply("```\n[]\n```", &cs), Err(JudgeProtocolError::Empty));
        assert_eq!(parse_judge_reply("```\n[1]\n1: x\n```", &cs), Err(JudgeProtocolError::NotCorrect(1)));
        assert_eq!(parse_judge_reply("```\n[0,0]\n0: x\n```", &cs), Err(JudgeProtocolError::Duplicate(0)));
        assert_eq!(parse_judge_reply("```\n[0,2]\n0: x\n```", &cs), Err(JudgeProtocolError::MissingTag(2)));
    }

    #[test]
    fn judge_picks_pass_through() {
        let (c, _) = client(judge("```\n[0,2,3]\n0: a\n2: b\n3: c\n```"));
        let log = log_from(&[&["27", "27", "27", "27", "9"]], TaskKind::Numeric);
        let ex = extract_problem(&log, &problem(TaskKind::Numeric, "27"), &ExtractionConfig::default(), &c).unwrap();
        let got: Vec<_> = ex.records.iter().map(|r| (r.agent_index, r.diversity_tag.clone().unwrap())).collect();
        assert_eq!(got, vec![(0, "a".into()), (2, "b".into()), (3, "c".into())]);
        assert!(ex.records.iter().all(|r| r.answer.canonical == "27" && !r.steps.is_empty()));
    }

    #[test]
    fn cannot_exceed_available_traces() {
        let (c, _) = client(judge("```\n[0,1]\n0: a\n1: b\n```"));
        let log = log_from(&[&["27", "27", "9", "9", "9"]], TaskKind::Numeric);
        let ex = extract_problem(&log, &problem(TaskKind::Numeric, "27"), &ExtractionConfig::default(), &c).unwrap();
        assert_eq!(ex.records.len(), 2);
    }

    #[test]
    fn corrective_first_then_truncate() {
        let (c, _) = client(judge("```\n[0,1]\n0: a\n1: b\n```"));
        let log = log_from(&[&["27", "27", "9", "9", "9"], &["27", "27", "9", "9", "27"]], TaskKind::Numeric);
        let cfg = ExtractionConfig { k_diverse: 2, ..ExtractionConfig::default() };
        let ex = extract_problem(&log, &problem(TaskKind::Numeric, "27"), &cfg, &c).unwrap();
        let got: Vec<_> = ex.records.iter().map(|r| (r.agent_index, r.is_corrective)).collect();
        assert_eq!(got, vec![(4, true), (0, false)]);
        assert_eq!(ex.records[0].diversity_tag.as_deref(), Some(CORRECTIVE_TAG));
    }

    #[test]
    fn one_reprompt_then_success() {
        let script = MockScript::sequence(vec![
            MockReply::content("```\n[4]\n4: wrong agent\n```"),
            MockReply::content("```\n[1]\n1: fixed\n```"),
        ]);
        let (c, mock) = client(script);
        let log = log_from(&[&["27", "27", "27", "9", "9"]], TaskKind::Numeric);
        let ex = extract_problem(&log, &problem(TaskKind::Numeric, "27"), &ExtractionConfig::default(), &c).unwrap();
        assert_eq!(ex.records.len(), 1);
        assert_eq!(ex.records[0].diversity_tag.as_deref(), Some("fixed"));
        let calls = mock.calls();
        assert_eq!(calls.len(), 2);
        assert!(calls[1].text.contains("could not be used"));
    }

    #[test]
    fn repeated_violation_falls_back() {
        let (c, mock) = client(judge("I like trace 0"));
        let log = log_from(&[&["9", "27", "27", "27", "9"]], TaskKind::Numeric);
        let cfg = ExtractionConfig { k_diverse: 2, ..ExtractionConfig::default() };
        let ex = extract_problem(&log, &problem(TaskKind::Numeric, "27"), &cfg, &c).unwrap();
        let got: Vec<_> = ex.records.iter().map(|r| (r.agent_index, r.diversity_tag.clone().unwrap())).collect();
        assert_eq!(got, vec![(1, FALLBACK_TAG.into()), (2, FALLBACK_TAG.into())]);
        assert_eq!(mock.calls().len(), 2);
    }

    #[test]
    fn many_problems_keep_order() {
        let (c, _) = client(judge("```\n[0]\n0: a\n```"));
        let log = log_from(&[&["27", "27", "27"]], TaskKind::Numeric);
        let p = problem(TaskKind::Numeric, "27");
        let jobs: Vec<(&DebateLog, &Problem)> = (0..5).map(|_| (&log, &p)).collect();
        let out = extract_all(&jobs, &ExtractionConfig::default(), &c, 2);
        assert_eq!(out.len(), 5);
        assert!(out.iter().all(|r| r.as_ref().unwrap().records.len() == 1));
    }
}
