//! n-agent, K-round debate orchestration.
//!
//! Each round fans out one request per agent through [`LlmClient::complete_batch`],
//! which returns only after every call has finished, so rounds are barriers.
//! Agents keep independent contexts: the only shared state is the peer
//! traces pasted into the next round's prompt.

use std::thread;

use debate_distill_core::domain::find_answer_marker;
use debate_distill_core::{normalize_answer, NormalizedAnswer, Problem, TaskKind};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::client::{ChatRequest, ClientError, LlmClient, Message};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("unresolved placeholder {{{0}}}")]
    Unresolved(String),
    #[error("unbalanced brace at byte {0}")]
    Unbalanced(usize),
}

/// Substitutes `{name}` placeholders. `{{` and `}}` produce literal braces.
pub fn render(template: &str, vars: &[(&str, &str)]) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    let mut offset = 0;
    while let Some(pos) = rest.find(['{', '}']) {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        let consumed = if tail.starts_with("{{") {
            out.push('{');
            2
        } else if tail.starts_with("}}") {
            out.push('}');
            2
        } else if tail.starts_with('}') {
            return Err(TemplateError::Unbalanced(offset + pos));
        } else {
            let close = tail.find('}').ok_or(TemplateError::Unbalanced(offset + pos))?;
            let name = &tail[1..close];
            let value = vars
                .iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| *v)
                .ok_or_else(|| TemplateError::Unresolved(name.to_string()))?;
            out.push_str(value);
            close + 1
        };
        rest = &tail[consumed..];
        offset += pos + consumed;
    }
    out.push_str(rest);
    Ok(out)
}

/// Prompt templates. Placeholders: `{agent}` (1-based), `{n_agents}`,
/// `{round}`, `{question}`, `{previous}` (own previous output), `{peers}`,
/// `{traces}` (summarizer only).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptTemplates {
    pub system: String,
    pub initial: String,
    pub rebuttal: String,
    pub summarizer: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            system: "You are agent {agent} of {n_agents} in a group solving a problem together. \
                     Reason step by step, writing each step as \"Step k: ...\", and end with a line \
                     \"Final Answer: <answer>\"."
                .into(),
            initial: "Round {round}.\n\nQuestion: {question}\n\nSolve the problem step by step. \
                      End with \"Final Answer: <answer>\"."
                .into(),
            rebuttal: "Round {round}.\n\nQuestion: {question}\n\nYour previous solution:\n{previous}\n\n\
                       Solutions from the other agents in the previous round:\n\n{peers}\n\n\
                       Identify any errors in their reasoning or your own, then give a revised \
                       step-by-step solution. End with \"Final Answer: <answer>\"."
                .into(),
            summarizer: "Question: {question}\n\nFinal solutions from {n_agents} agents:\n\n{traces}\n\n\
                         Read every solution and state the single best answer. \
                         End with \"Final Answer: <answer>\"."
                .into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DebateConfig {
    pub n_agents: usize,
    pub max_rounds: usize,
    pub agent_model: String,
    pub summarizer_model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub stop_on_consensus: bool,
    /// Forwarded as the request seed when set.
    pub seed: Option<u64>,
    pub prompt_templates: PromptTemplates,
}

impl Default for DebateConfig {
    fn default() -> Self {
        Self {
            n_agents: 5,
            max_rounds: 3,
            agent_model: "gpt-4o-mini".into(),
            summarizer_model: "gpt-4o-mini".into(),
            temperature: 0.7,
            max_tokens: 1024,
            stop_on_consensus: true,
            seed: None,
            prompt_templates: PromptTemplates::default(),
        }
    }
}

impl DebateConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_agents < 2 {
            return Err(format!("debate.n_agents must be >= 2, got {}", self.n_agents));
        }
        if self.max_rounds < 1 {
            return Err("debate.max_rounds must be >= 1".into());
        }
        if !(self.temperature >= 0.0) {
            return Err("debate.temperature must be >= 0".into());
        }
        if self.max_tokens == 0 {
            return Err("debate.max_tokens must be >= 1".into());
        }
        Ok(())
    }

    fn request(&self, model: &str, messages: Vec<Message>) -> ChatRequest {
        ChatRequest {
            model: model.to_string(),
            messages,
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            seed: self.seed,
        }
    }
}

/// One agent's output in one round. `final_answer` is `None` when the
/// answer could not be parsed; such traces count as incorrect.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentTrace {
    pub agent_index: usize,
    pub round: usize,
    pub reasoning: String,
    pub final_answer: Option<NormalizedAnswer>,
    pub raw: String,
}

impl AgentTrace {
    /// Splits `raw` at its last answer marker: text before it is the
    /// reasoning. Without a marker the whole text is reasoning and the
    /// answer falls back to the normalizer's heuristics.
    pub fn parse(agent_index: usize, round: usize, raw: &str, kind: TaskKind) -> Self {
        let reasoning = match find_answer_marker(raw) {
            Some((start, _)) => raw[..start].trim(),
            None => raw.trim(),
        };
        Self {
            agent_index,
            round,
            reasoning: reasoning.to_string(),
            final_answer: normalize_answer(raw, kind).ok(),
            raw: raw.to_string(),
        }
    }
}

/// Full record of one debate, persisted as one JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebateLog {
    pub problem_id: String,
    pub config: DebateConfig,
    pub rounds: Vec<Vec<AgentTrace>>,
    pub consensus_round: Option<usize>,
    pub summarizer_answer: Option<NormalizedAnswer>,
    pub summarizer_raw: Option<String>,
    pub final_traces: Vec<AgentTrace>,
    /// Set when an agent call failed; `rounds` then holds only the rounds
    /// completed before the failure.
    pub aborted: Option<String>,
    /// Unknown keys kept by lenient reads.
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl DebateLog {
    pub fn is_aborted(&self) -> bool {
        self.aborted.is_some()
    }

    /// Checks the structural invariants of a finished (non-aborted) log.
    pub fn check_invariants(&self) -> Result<(), String> {
        let n = self.config.n_agents;
        let k_max = self.config.max_rounds;
        if self.rounds.is_empty() || self.rounds.len() > k_max {
            return Err(format!("{} rounds outside 1..={k_max}", self.rounds.len()));
        }
        for (k, round) in self.rounds.iter().enumerate() {
            if round.len() != n {
                return Err(format!("round {} has {} traces, expected {n}", k + 1, round.len()));
            }
            for (i, t) in round.iter().enumerate() {
                if t.agent_index != i || t.round != k + 1 {
                    return Err(format!("trace ({}, {}) out of place at ({i}, {})", t.agent_index, t.round, k + 1));
                }
            }
        }
        let last = self.rounds.len();
        let expected = replay_consensus(self);
        if self.consensus_round != expected {
            return Err(format!("consensus_round {:?} but replay gives {expected:?}", self.consensus_round));
        }
        if last < k_max && self.consensus_round != Some(last) {
            return Err(format!("stopped after {last} of {k_max} rounds without consensus"));
        }
        if self.final_traces != self.rounds[last - 1] {
            return Err("final_traces differ from the last round".into());
        }
        Ok(())
    }
}

/// Recomputes the consensus round from the stored traces alone.
pub fn replay_consensus(log: &DebateLog) -> Option<usize> {
    if !log.config.stop_on_consensus {
        return None;
    }
    log.rounds.iter().position(|r| detect_consensus(r).is_some()).map(|k| k + 1)
}

#[derive(Debug, Error)]
pub enum DebateError {
    #[error("invalid debate config: {0}")]
    Config(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("debate on {problem_id} aborted: {cause}")]
    Aborted { problem_id: String, cause: ClientError, log: Box<DebateLog> },
}

/// The shared answer iff every trace parsed and all answers are equal.
pub fn detect_consensus(round: &[AgentTrace]) -> Option<NormalizedAnswer> {
    let first = round.first()?.final_answer.as_ref()?;
    round.iter().all(|t| t.final_answer.as_ref() == Some(first)).then(|| first.clone())
}

fn peer_section(label: &str, traces: &[&AgentTrace]) -> String {
    traces
        .iter()
        .map(|t| format!("### Agent {} ({label})\n{}", t.agent_index + 1, t.raw.trim()))
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Messages for agent `agent` in round `round` (1-based). `previous` is the
/// agent's own last trace and `peers` the other agents' traces from the
/// previous round; both must be empty in round 1.
pub fn build_round_prompt(
    problem: &Problem,
    cfg: &DebateConfig,
    agent: usize,
    round: usize,
    previous: Option<&AgentTrace>,
    peers: &[&AgentTrace],
) -> Result<ChatRequest, TemplateError> {
    let agent_s = (agent + 1).to_string();
    let n_s = cfg.n_agents.to_string();
    let round_s = round.to_string();
    let prev = previous.map(|t| t.raw.trim().to_string()).unwrap_or_default();
    let peers_s = peer_section("previous round", peers);
    let vars = [
        ("agent", agent_s.as_str()),
        ("n_agents", n_s.as_str()),
        ("round", round_s.as_str()),
        ("question", problem.question.as_str()),
        ("previous", prev.as_str()),
        ("peers", peers_s.as_str()),
    ];
    let t = &cfg.prompt_templates;
    let user = if round == 1 { &t.initial } else { &t.rebuttal };
    let messages = vec![Message::system(render(&t.system, &vars)?), Message::user(render(user, &vars)?)];
    Ok(cfg.request(&cfg.agent_model, messages))
}

pub fn build_summarizer_prompt(
    problem: &Problem,
    cfg: &DebateConfig,
    finals: &[AgentTrace],
) -> Result<ChatRequest, TemplateError> {
    let n_s = cfg.n_agents.to_string();
    let traces = peer_section("final", &finals.iter().collect::<Vec<_>>());
    let vars = [("n_agents", n_s.as_str()), ("question", problem.question.as_str()), ("traces", traces.as_str())];
    let content = render(&cfg.prompt_templates.summarizer, &vars)?;
    Ok(cfg.request(&cfg.summarizer_model, vec![Message::user(content)]))
}

/// Runs one debate to consensus or `max_rounds`, then the summarizer.
/// A failed agent call aborts the debate and returns the partial log inside
/// the error; a failed summarizer call only leaves `summarizer_answer` empty.
pub fn run_debate(problem: &Problem, cfg: &DebateConfig, client: &LlmClient) -> Result<DebateLog, DebateError> {
    cfg.validate().map_err(DebateError::Config)?;
    let n = cfg.n_agents;
    let mut log = DebateLog {
        problem_id: problem.id.clone(),
        config: cfg.clone(),
        rounds: Vec::new(),
        consensus_round: None,
        summarizer_answer: None,
        summarizer_raw: None,
        final_traces: Vec::new(),
        aborted: None,
        extra: Map::new(),
    };
    for round in 1..=cfg.max_rounds {
        let prev = log.rounds.last();
        let requests = (0..n)
            .map(|i| {
                let own = prev.map(|r| &r[i]);
                let peers: Vec<&AgentTrace> =
                    prev.map(|r| r.iter().filter(|t| t.agent_index != i).collect()).unwrap_or_default();
                build_round_prompt(problem, cfg, i, round, own, &peers)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut traces = Vec::with_capacity(n);
        for (i, result) in client.complete_batch(&requests).into_iter().enumerate() {
            match result {
                Ok(resp) => traces.push(AgentTrace::parse(i, round, &resp.content, problem.task_kind)),
                Err(cause) => {
                    log.final_traces = log.rounds.last().cloned().unwrap_or_default();
                    log.aborted = Some(format!("round {round}, agent {i}: {cause}"));
                    return Err(DebateError::Aborted { problem_id: problem.id.clone(), cause, log: Box::new(log) });
                }
            }
        }
        let agreed = cfg.stop_on_consensus && detect_consensus(&traces).is_some();
        log.rounds.push(traces);
        if agreed {
            log.consensus_round = Some(round);
            break;
        }
    }
    log.final_traces = log.rounds.last().cloned().unwrap_or_default();
    let summary = build_summarizer_prompt(problem, cfg, &log.final_traces)?;
    match client.complete(&summary) {
        Ok(resp) => {
            log.summarizer_answer = normalize_answer(&resp.content, problem.task_kind).ok();
            log.summarizer_raw = Some(resp.content);
        }
        Err(e) => log::warn!("summarizer failed on {}: {e}", problem.id),
    }
    Ok(log)
}

/// Runs debates for many problems on up to `workers` threads. Results are
/// positionally aligned with `problems`.
pub fn run_debates(
    problems: &[Problem],
    cfg: &DebateConfig,
    client: &LlmClient,
    workers: usize,
) -> Vec<Result<DebateLog, DebateError>> {
    let workers = workers.clamp(1, problems.len().max(1));
    let chunks: Vec<Vec<usize>> = (0..workers).map(|w| (w..problems.len()).step_by(workers).collect()).collect();
    let mut slots: Vec<Option<Result<DebateLog, DebateError>>> = (0..problems.len()).map(|_| None).collect();
    thread::scope(|s| {
        let handles: Vec<_> = chunks
            .iter()
            .map(|idx| {
                s.spawn(move || idx.iter().map(|&i| (i, run_debate(&problems[i], cfg, client))).collect::<Vec<_>>())
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("debate worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|r| r.expect("every problem debated")).collect()
}
