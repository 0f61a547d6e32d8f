use std::collections::BTreeMap;

use debate_distill_core::{segment_steps, ReasoningStep};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Map;

use super::records::{AugRecord, AugTrajectory, PrmPairRecord, RsftRecord, TokenSpans};
use crate::debate::DebateLog;
use crate::extract::{CorrectSet, TrajectoryRecord, Verdict};

pub const ANSWER_PREFIX: &str = "\nFinal Answer: ";

/// One RSFT record per trajectory. The answer span starts at the newline
/// before the answer marker, so it re-normalizes to the stored answer.
pub fn build_rsft(records: &[TrajectoryRecord]) -> Vec<RsftRecord> {
    records
        .iter()
        .map(|r| {
            let answer = r.answer.canonical.clone();
            let target = format!("{}{ANSWER_PREFIX}{answer}", r.reasoning);
            let cut = r.reasoning.len();
            RsftRecord {
                problem_id: r.problem_id.clone(),
                question: r.question.clone(),
                reasoning: r.reasoning.clone(),
                answer,
                answer_kind: r.answer.kind,
                token_spans: TokenSpans { reasoning: [0, cut], answer: [cut, target.len()] },
                target,
                extra: Map::new(),
            }
        })
        .collect()
}

/// Groups trajectories by problem in first-appearance order, keeping at most
/// `k` per problem.
pub fn build_aug(records: &[TrajectoryRecord], k: usize) -> Vec<AugRecord> {
    let mut out: Vec<AugRecord> = Vec::new();
    let mut slot: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        let i = *slot.entry(&r.problem_id).or_insert_with(|| {
            out.push(AugRecord {
                problem_id: r.problem_id.clone(),
                question: r.question.clone(),
                trajectories: Vec::new(),
                extra: Map::new(),
            });
            out.len() - 1
        });
        if out[i].trajectories.len() < k {
            out[i].trajectories.push(AugTrajectory {
                reasoning: r.reasoning.clone(),
                answer: r.answer.canonical.clone(),
                diversity_tag: r.diversity_tag.clone(),
                is_corrective: r.is_corrective,
            });
        }
    }
    out
}

/// Per-problem RNG seed so one problem's sampling does not depend on which
/// other problems are in the file.
pub fn problem_seed(seed: u64, problem_id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in problem_id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    seed ^ h
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PrmBuildReport {
    pub problems_used: usize,
    /// No verdicts, aborted, or lacking either a correct or an incorrect trace.
    pub problems_skipped: usize,
}

/// Pairs every step of every correct final trace with up to `neg_per_pos`
/// steps sampled uniformly without replacement from the incorrect final
/// traces of the same problem. Unverifiable traces are ignored.
pub fn build_prm_pairs(
    logs: &[DebateLog],
    verdicts: &[CorrectSet],
    neg_per_pos: usize,
    seed: u64,
) -> (Vec<PrmPairRecord>, PrmBuildReport) {
    let by_id: BTreeMap<&str, &CorrectSet> = verdicts.iter().map(|v| (v.problem_id.as_str(), v)).collect();
    let mut out = Vec::new();
    let mut report = PrmBuildReport::default();
    for log in logs {
        let Some(cs) = by_id.get(log.problem_id.as_str()).filter(|_| !log.is_aborted()) else {
            report.problems_skipped += 1;
            continue;
        };
        let verdict_of = |agent: usize| cs.verdicts.iter().find(|v| v.agent_index == agent).map(|v| v.verdict);
        let mut positives = Vec::new();
        let mut pool: Vec<ReasoningStep> = Vec::new();
        for t in &log.final_traces {
            match verdict_of(t.agent_index) {
                Some(Verdict::Correct) => positives.push((t.agent_index, segment_steps(&t.reasoning))),
                Some(Verdict::Incorrect) => {
                    pool.extend(segment_steps(&t.reasoning).into_iter().map(|s| s.with_label(0)));
                }
                _ => {}
            }
        }
        if positives.is_empty() || pool.is_empty() || neg_per_pos == 0 {
            report.problems_skipped += 1;
            continue;
        }
        report.problems_used += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(problem_seed(seed, &log.problem_id));
        let m = neg_per_pos.min(pool.len());
        for (agent, steps) in positives {
            for (t, step) in steps.iter().enumerate() {
                let negatives = index::sample(&mut rng, pool.len(), m).into_iter().map(|j| pool[j].clone()).collect();
                out.push(PrmPairRecord {
                    problem_id: log.problem_id.clone(),
                    agent_index: agent,
                    positive_step: step.clone().with_label(1),
                    negatives,
                    context: steps[..t].to_vec(),
                    extra: Map::new(),
                });
            }
        }
    }
    (out, report)
}
