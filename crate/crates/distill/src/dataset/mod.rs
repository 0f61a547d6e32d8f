//! Dataset records, JSONL persistence, builders and corpus statistics.

mod build;
mod jsonl;
mod records;
mod stats;

pub use build::{build_aug, build_prm_pairs, build_rsft, problem_seed, PrmBuildReport, ANSWER_PREFIX};
pub use jsonl::{read_jsonl, read_records, write_jsonl, write_records, JsonlError, ReadMode, Record};
pub use records::{AugRecord, AugTrajectory, PrmPairRecord, RsftRecord, TokenLogProb, TokenLogProbs, TokenSpans};
pub use stats::{CorpusStats, DatasetStats};
