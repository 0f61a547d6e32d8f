//! The `distill` command line.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 transport
//! failure, 4 schema violation, 5 empty result, 6 non-finite numerics.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use debate_distill_core::eval::{self, Averaging, EvalError, Prediction, ReasoningMask};
use debate_distill_core::policy::{train_loop, Algo, PolicyError, RewardFn, ScriptedReward, ToyPolicy};
use debate_distill_core::reward::{mean_loss, train_prm, Curriculum, RewardError, RewardModel};
use debate_distill_core::Problem;
use serde::Serialize;
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::artifacts::{load_checkpoint, loss_csv, metrics_csv, save_checkpoint};
use crate::client::{HttpTransport, LlmClient, MockScript, MockTransport, Transport};
use crate::config::PipelineConfig;
use crate::dataset::{
    build_aug, build_prm_pairs, build_rsft, read_jsonl, write_jsonl, AugRecord, CorpusStats, JsonlError, PrmPairRecord,
    ReadMode, Record, RsftRecord, TokenLogProbs,
};
use crate::debate::{run_debates, DebateError, DebateLog};
use crate::extract::{extract_all, CorrectSet, ExtractError, TrajectoryRecord};
use crate::training::{pair_features, step_vocabulary, PrmReward};

#[derive(Debug, Parser)]
#[command(name = "distill", version, about = "Debate-driven reasoning data generation and distillation")]
pub struct Cli {
    /// TOML file layered over the built-in defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Serve model calls from a JSON mock script instead of the network.
    #[arg(long, global = true)]
    pub mock_script: Option<PathBuf>,
    /// Problems processed concurrently.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Reject unknown keys on read and treat empty outputs as errors.
    #[arg(long, global = true)]
    pub strict: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run multi-agent debates over a problem file.
    Debate {
        #[arg(long)]
        problems: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n_agents: Option<usize>,
        #[arg(long)]
        rounds: Option<usize>,
        /// Model for agents and the summarizer.
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Verify debate answers and select training trajectories.
    Extract {
        #[arg(long)]
        logs: PathBuf,
        #[arg(long)]
        problems: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        /// Per-problem verdicts; defaults to `<out>.verdicts.jsonl`.
        #[arg(long)]
        verdicts_out: Option<PathBuf>,
    },
    /// Reasoning + answer supervision records.
    BuildRsft {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Multi-trajectory augmentation records.
    BuildAug {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Positive/negative step pairs for reward-model training.
    BuildPrmPairs {
        /// Debate logs.
        #[arg(long = "in")]
        input: PathBuf,
        /// Verdicts written by `extract`.
        #[arg(long)]
        verdicts: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        neg_per_pos: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the step reward model with the two-stage curriculum.
    TrainPrm {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        stage1_steps: Option<usize>,
        #[arg(long)]
        stage2_steps: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Defaults to `<out>.loss.csv`.
        #[arg(long)]
        loss_csv: Option<PathBuf>,
    },
    /// Optimize the toy policy against a scripted or learned reward.
    TrainPolicy {
        #[arg(long, value_enum, default_value = "grpo")]
        algo: AlgoArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "scripted")]
        reward: RewardArg,
        /// Reward-model checkpoint, for `--reward prm`.
        #[arg(long)]
        prm: Option<PathBuf>,
        /// Pair records whose step texts form the policy vocabulary, for `--reward prm`.
        #[arg(long)]
        pairs: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        kl_coeff: Option<f64>,
        #[arg(long)]
        group_size: Option<usize>,
        /// Defaults to `<out>.metrics.csv`.
        #[arg(long)]
        metrics_csv: Option<PathBuf>,
    },
    /// Accuracy or reasoning-token perplexity; JSON report on stdout.
    Eval {
        #[arg(long, value_enum)]
        mode: EvalMode,
        #[arg(long)]
        problems: Option<PathBuf>,
        /// `{problem_id, answer}` records.
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Use the summarizer answers of these debate logs as predictions.
        #[arg(long)]
        from_logs: Option<PathBuf>,
        /// `{problem_id, tokens: [{text, logprob}]}` records.
        #[arg(long)]
        logprobs: Option<PathBuf>,
        /// RSFT records aligned line by line with `--logprobs`; without it
        /// every token is scored.
        #[arg(long)]
        rsft: Option<PathBuf>,
        #[arg(long, value_enum)]
        averaging: Option<AveragingArg>,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AlgoArg {
    Grpo,
    Ppo,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RewardArg {
    Scripted,
    Prm,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EvalMode {
    Accuracy,
    Ppl,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AveragingArg {
    Micro,
    MacroNll,
    MacroPpl,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Transport(String),
    #[error("{0}")]
    Schema(String),
    #[error("{0}")]
    Empty(String),
    #[error("{0}")]
    NonFinite(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Transport(_) => 3,
            CliError::Schema(_) => 4,
            CliError::Empty(_) => 5,
            CliError::NonFinite(_) => 6,
        }
    }
}

impl From<JsonlError> for CliError {
    fn from(e: JsonlError) -> Self {
        match e {
            JsonlError::Io { .. } => CliError::Config(e.to_string()),
            _ => CliError::Schema(e.to_string()),
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

struct Ctx {
    cfg: PipelineConfig,
    mock_script: Option<PathBuf>,
    workers: usize,
    mode: ReadMode,
    strict: bool,
}

impl Ctx {
    fn read<T: Record>(&self, path: &Path) -> Result<Vec<T>, CliError> {
        Ok(read_jsonl(path, self.mode)?)
    }

    fn client(&self) -> Result<LlmClient, CliError> {
        let client_cfg = self.cfg.client.clone();
        match &self.mock_script {
            Some(path) => {
                let script = MockScript::from_json_file(path).map_err(CliError::Config)?;
                let transport: Arc<dyn Transport> = Arc::new(MockTransport::new(script));
                Ok(LlmClient::with_sleeper(transport, client_cfg, Arc::new(|_| {})))
            }
            None => {
                let http =
                    HttpTransport::from_config(&client_cfg, true).map_err(|e| CliError::Config(e.to_string()))?;
                Ok(LlmClient::new(Arc::new(http), client_cfg))
            }
        }
    }

    /// Errors in strict mode, warns otherwise.
    fn require_nonempty(&self, n: usize, what: &str) -> Result<(), CliError> {
        if n > 0 {
            return Ok(());
        }
        if self.strict {
            return Err(CliError::Empty(format!("no {what} produced")));
        }
        log::warn!("no {what} produced");
        Ok(())
    }
}

fn write<T: Record>(path: &Path, records: &[T]) -> Result<(), CliError> {
    Ok(write_jsonl(path, records)?)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    out.with_extension(suffix)
}

/// Writes `<dir of out>/<name>.resolved-config.toml`.
fn snapshot(out: &Path, name: &str, cfg: &PipelineConfig) -> Result<(), CliError> {
    let dir = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    write_text(&dir.join(format!("{name}.resolved-config.toml")), &cfg.to_toml())
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let mut cfg = PipelineConfig::load(cli.config.as_deref()).map_err(CliError::Config)?;
    let strict = cli.strict || cfg.dataset.strict;
    cfg.dataset.strict = strict;
    apply_flags(&mut cfg, &cli.command);
    cfg.validate().map_err(CliError::Config)?;
    let workers = cli.workers.unwrap_or(cfg.client.max_in_flight).max(1);
    let ctx = Ctx {
        cfg,
        mock_script: cli.mock_script,
        workers,
        mode: if strict { ReadMode::Strict } else { ReadMode::Lenient },
        strict,
    };
    match cli.command {
        Command::Debate { problems, out, .. } => cmd_debate(&ctx, &problems, &out),
        Command::Extract { logs, problems, out, verdicts_out, .. } => {
            let verdicts_out = verdicts_out.unwrap_or_else(|| sibling(&out, "verdicts.jsonl"));
            cmd_extract(&ctx, &logs, &problems, &out, &verdicts_out)
        }
        Command::BuildRsft { input, out } => cmd_build_rsft(&ctx, &input, &out),
        Command::BuildAug { input, out, .. } => cmd_build_aug(&ctx, &input, &out),
        Command::BuildPrmPairs { input, verdicts, out, .. } => cmd_build_prm_pairs(&ctx, &input, &verdicts, &out),
        Command::TrainPrm { pairs, out, loss_csv, .. } => {
            let loss_csv = loss_csv.unwrap_or_else(|| sibling(&out, "loss.csv"));
            cmd_train_prm(&ctx, &pairs, &out, &loss_csv)
        }
        Command::TrainPolicy { algo, out, reward, prm, pairs, metrics_csv, .. } => {
            let metrics_csv = metrics_csv.unwrap_or_else(|| sibling(&out, "metrics.csv"));
            let algo = match algo {
                AlgoArg::Grpo => Algo::Grpo,
                AlgoArg::Ppo => Algo::Ppo,
            };
            cmd_train_policy(&ctx, algo, reward, prm.as_deref(), pairs.as_deref(), &out, &metrics_csv)
        }
        Command::Eval { mode, problems, predictions, from_logs, logprobs, rsft, out, .. } => match mode {
            EvalMode::Accuracy => cmd_eval_accuracy(
                &ctx,
                problems.as_deref(),
                predictions.as_deref(),
                from_logs.as_deref(),
                out.as_deref(),
            ),
            EvalMode::Ppl => cmd_eval_ppl(&ctx, logprobs.as_deref(), rsft.as_deref(), out.as_deref()),
        },
    }
}

fn apply_flags(cfg: &mut PipelineConfig, cmd: &Command) {
    match cmd {
        Command::Debate { n_agents, rounds, model, seed, .. } => {
            if let Some(n) = n_agents {
                cfg.debate.n_agents = *n;
            }
            if let Some(k) = rounds {
                cfg.debate.max_rounds = *k;
            }
            if let Some(m) = model {
                cfg.debate.agent_model = m.clone();
                cfg.debate.summarizer_model = m.clone();
            }
            if seed.is_some() {
                cfg.debate.seed = *seed;
            }
        }
        Command::Extract { k: Some(k), .. } => cfg.extract.k_diverse = *k,
        Command::BuildAug { k: Some(k), .. } => cfg.dataset.k = *k,
        Command::BuildPrmPairs { neg_per_pos, seed, .. } => {
            if let Some(n) = neg_per_pos {
                cfg.dataset.neg_per_pos = *n;
            }
            if let Some(s) = seed {
                cfg.dataset.seed = *s;
            }
        }
        Command::TrainPrm { stage1_steps, stage2_steps, lr, seed, .. } => {
            if let Some(n) = stage1_steps {
                cfg.prm.stage1_steps = *n;
            }
            if let Some(n) = stage2_steps {
                cfg.prm.stage2_steps = *n;
            }
            if let Some(x) = lr {
                cfg.prm.learning_rate = *x;
            }
            if let Some(s) = seed {
                cfg.prm.seed = *s;
            }
        }
        Command::TrainPolicy { steps, seed, lr, kl_coeff, group_size, .. } => {
            let o = &mut cfg.optim;
            if let Some(n) = steps {
                o.steps = *n;
            }
            if let Some(s) = seed {
                o.seed = *s;
            }
            if let Some(x) = lr {
                o.learning_rate = *x;
            }
            if let Some(x) = kl_coeff {
                o.kl_coeff = *x;
            }
            if let Some(g) = group_size {
                o.group_size = *g;
            }
        }
        Command::Eval { averaging: Some(a), .. } => {
            cfg.eval.averaging = match a {
                AveragingArg::Micro => Averaging::Micro,
                AveragingArg::MacroNll => Averaging::MacroNll,
                AveragingArg::MacroPpl => Averaging::MacroPpl,
            }
        }
        _ => {}
    }
}

fn unique_problems(problems: Vec<Problem>) -> Result<BTreeMap<String, Problem>, CliError> {
    let mut map = BTreeMap::new();
    for p in problems {
        if let Some(dup) = map.insert(p.id.clone(), p) {
            return Err(CliError::Schema(format!("duplicate problem id {:?}", dup.id)));
        }
    }
    Ok(map)
}

fn cmd_debate(ctx: &Ctx, problems_path: &Path, out: &Path) -> Result<(), CliError> {
    let problems: Vec<Problem> = ctx.read(problems_path)?;
    unique_problems(problems.clone())?;
    if problems.is_empty() {
        return Err(CliError::Empty(format!("{} holds no problems", problems_path.display())));
    }
    let client = ctx.client()?;
    let results = run_debates(&problems, &ctx.cfg.debate, &client, ctx.workers);
    let mut logs = Vec::with_capacity(results.len());
    let mut aborted = 0;
    for r in results {
        match r {
            Ok(log) => logs.push(log),
            Err(DebateError::Aborted { log, cause, problem_id }) => {
                log::warn!("debate on {problem_id} aborted: {cause}");
                aborted += 1;
                logs.push(*log);
            }
            Err(e) => return Err(CliError::Config(e.to_string())),
        }
    }
    write(out, &logs)?;
    snapshot(out, "debate", &ctx.cfg)?;
    eprintln!("debate: {} problems, {} completed, {aborted} aborted", logs.len(), logs.len() - aborted);
    if aborted == logs.len() {
        return Err(CliError::Transport(format!("all {aborted} debates aborted")));
    }
    Ok(())
}

fn cmd_extract(
    ctx: &Ctx,
    logs_path: &Path,
    problems_path: &Path,
    out: &Path,
    verdicts_out: &Path,
) -> Result<(), CliError> {
    let logs: Vec<DebateLog> = ctx.read(logs_path)?;
    let problems = unique_problems(ctx.read(problems_path)?)?;
    let mut jobs = Vec::new();
    for log in &logs {
        let p = problems
            .get(&log.problem_id)
            .ok_or_else(|| CliError::Schema(format!("log references unknown problem {:?}", log.problem_id)))?;
        if !log.is_aborted() {
            jobs.push((log, p));
        }
    }
    let client = ctx.client()?;
    let results = extract_all(&jobs, &ctx.cfg.extract, &client, ctx.workers);
    let mut verdicts: Vec<CorrectSet> = Vec::with_capacity(jobs.len());
    let mut records: Vec<TrajectoryRecord> = Vec::new();
    let mut stats = CorpusStats::default();
    let mut extracted = results.into_iter();
    for log in &logs {
        let dataset = &problems[&log.problem_id].source_dataset;
        if log.is_aborted() {
            stats.add_problem(dataset, true, &[]);
            continue;
        }
        let ex = extracted.next().expect("one result per job").map_err(|e| match e {
            ExtractError::VerifierUnavailable(_) => CliError::Transport(e.to_string()),
            ExtractError::Config(_) => CliError::Config(e.to_string()),
            _ => CliError::Schema(e.to_string()),
        })?;
        stats.add_problem(dataset, false, &ex.records);
        verdicts.push(ex.correct);
        records.extend(ex.records);
    }
    ctx.require_nonempty(records.len(), "trajectories")?;
    write(out, &records)?;
    write(verdicts_out, &verdicts)?;
    write_text(&sibling(out, "stats.json"), &to_json(&stats))?;
    snapshot(out, "extract", &ctx.cfg)?;
    let excluded: Vec<&str> = verdicts.iter().filter(|v| v.excluded).map(|v| v.problem_id.as_str()).collect();
    if !excluded.is_empty() {
        eprintln!("extract: excluded {} problems: {}", excluded.len(), excluded.join(", "));
    }
    print!("{}", stats.to_table());
    Ok(())
}

fn file_stats(name: &str, problem_ids: impl Iterator<Item = String>, trajectories: usize) -> CorpusStats {
    let distinct: std::collections::BTreeSet<String> = problem_ids.collect();
    let mut stats = CorpusStats::default();
    stats.add_counts(name, distinct.len(), trajectories);
    stats
}

fn finish_build(out: &Path, name: &str, ctx: &Ctx, stats: &CorpusStats) -> Result<(), CliError> {
    write_text(&sibling(out, "stats.json"), &to_json(stats))?;
    snapshot(out, name, &ctx.cfg)?;
    print!("{}", stats.to_table());
    Ok(())
}

fn cmd_build_rsft(ctx: &Ctx, input: &Path, out: &Path) -> Result<(), CliError> {
    let trajectories: Vec<TrajectoryRecord> = ctx.read(input)?;
    let rsft: Vec<RsftRecord> = build_rsft(&trajectories);
    ctx.require_nonempty(rsft.len(), "rsft records")?;
    write(out, &rsft)?;
    let stats = file_stats("rsft", rsft.iter().map(|r| r.problem_id.clone()), rsft.len());
    finish_build(out, "build-rsft", ctx, &stats)
}

fn cmd_build_aug(ctx: &Ctx, input: &Path, out: &Path) -> Result<(), CliError> {
    let trajectories: Vec<TrajectoryRecord> = ctx.read(input)?;
    let aug: Vec<AugRecord> = build_aug(&trajectories, ctx.cfg.dataset.k);
    ctx.require_nonempty(aug.len(), "augmented records")?;
    write(out, &aug)?;
    let t = aug.iter().map(|a| a.trajectories.len()).sum();
    let stats = file_stats("aug", aug.iter().map(|a| a.problem_id.clone()), t);
    finish_build(out, "build-aug", ctx, &stats)
}

fn cmd_build_prm_pairs(ctx: &Ctx, logs_path: &Path, verdicts_path: &Path, out: &Path) -> Result<(), CliError> {
    let logs: Vec<DebateLog> = ctx.read(logs_path)?;
    let verdicts: Vec<CorrectSet> = ctx.read(verdicts_path)?;
    let (pairs, report) = build_prm_pairs(&logs, &verdicts, ctx.cfg.dataset.neg_per_pos, ctx.cfg.dataset.seed);
    ctx.require_nonempty(pairs.len(), "step pairs")?;
    write(out, &pairs)?;
    eprintln!("build-prm-pairs: {} problems used, {} skipped", report.problems_used, report.problems_skipped);
    let stats = file_stats("prm_pairs", pairs.iter().map(|p| p.problem_id.clone()), pairs.len());
    finish_build(out, "build-prm-pairs", ctx, &stats)
}

fn reward_error(e: RewardError) -> CliError {
    match e {
        RewardError::NonFiniteLoss { .. } => CliError::NonFinite(e.to_string()),
        _ => CliError::Schema(e.to_string()),
    }
}

fn cmd_train_prm(ctx: &Ctx, pairs_path: &Path, out: &Path, loss_path: &Path) -> Result<(), CliError> {
    let records: Vec<PrmPairRecord> = ctx.read(pairs_path)?;
    if records.is_empty() {
        return Err(CliError::Empty(format!("{} holds no pairs", pairs_path.display())));
    }
    let p = &ctx.cfg.prm;
    let model = RewardModel::init(p.model(), p.seed);
    let features = pair_features(&model.featurizer(), &records);
    let curriculum = Curriculum { stage1_steps: p.stage1_steps, stage2_steps: p.stage2_steps };
    let trained = train_prm(model, &features, curriculum, p.learning_rate).map_err(reward_error)?;
    let final_loss = mean_loss(&trained.model, &features).map_err(reward_error)?;
    if !final_loss.is_finite() {
        return Err(CliError::NonFinite(format!("final loss is {final_loss}")));
    }
    let mut meta = Map::new();
    meta.insert("pairs".into(), json!(records.len()));
    meta.insert("stage1_steps".into(), json!(p.stage1_steps));
    meta.insert("stage2_steps".into(), json!(p.stage2_steps));
    meta.insert("learning_rate".into(), json!(p.learning_rate));
    meta.insert("seed".into(), json!(p.seed));
    meta.insert("final_loss".into(), json!(final_loss));
    save_checkpoint(out, "reward_model", &trained.model, meta).map_err(|e| CliError::Config(e.to_string()))?;
    write_text(loss_path, &loss_csv(&trained.trace))?;
    snapshot(out, "train-prm", &ctx.cfg)?;
    println!("final_loss {final_loss}");
    Ok(())
}

fn policy_error(e: PolicyError) -> CliError {
    match e {
        PolicyError::NonFiniteObjective { .. } => CliError::NonFinite(e.to_string()),
        _ => CliError::Config(e.to_string()),
    }
}

fn cmd_train_policy(
    ctx: &Ctx,
    algo: Algo,
    reward: RewardArg,
    prm: Option<&Path>,
    pairs: Option<&Path>,
    out: &Path,
    metrics_path: &Path,
) -> Result<(), CliError> {
    let shape = &ctx.cfg.policy;
    let (reward_fn, vocab_size): (Box<dyn RewardFn>, usize) = match reward {
        RewardArg::Scripted => (Box::new(ScriptedReward { token: shape.reward_token }), shape.vocab_size),
        RewardArg::Prm => {
            let (Some(prm), Some(pairs)) = (prm, pairs) else {
                return Err(CliError::Config("--reward prm needs --prm and --pairs".into()));
            };
            let model =
                load_checkpoint::<RewardModel>(prm, "reward_model").map_err(|e| CliError::Config(e.to_string()))?.model;
            let records: Vec<PrmPairRecord> = ctx.read(pairs)?;
            let vocab = step_vocabulary(&records);
            if vocab.is_empty() {
                return Err(CliError::Empty(format!("{} holds no steps", pairs.display())));
            }
            let n = vocab.len();
            (Box::new(PrmReward { model, vocab }), n)
        }
    };
    let policy = ToyPolicy::uniform(shape.num_inputs, vocab_size, shape.max_len);
    let outcome = train_loop(policy, reward_fn.as_ref(), &ctx.cfg.optim, algo).map_err(policy_error)?;
    let last = outcome.metrics.last().copied();
    let mut meta = Map::new();
    meta.insert("algo".into(), json!(algo));
    meta.insert("steps".into(), json!(ctx.cfg.optim.steps));
    meta.insert("seed".into(), json!(ctx.cfg.optim.seed));
    meta.insert("final_mean_reward".into(), last.map_or(Value::Null, |m| json!(m.mean_reward)));
    meta.insert("max_tv_to_reference".into(), json!(outcome.policy.max_total_variation(&outcome.reference)));
    save_checkpoint(out, "policy", &outcome.policy, meta).map_err(|e| CliError::Config(e.to_string()))?;
    write_text(metrics_path, &metrics_csv(&outcome.metrics))?;
    snapshot(out, "train-policy", &ctx.cfg)?;
    match last {
        Some(m) => println!("final_mean_reward {} kl {}", m.mean_reward, m.kl),
        None => println!("no steps run"),
    }
    Ok(())
}

fn eval_error(e: EvalError) -> CliError {
    match e {
        EvalError::EmptyMask | EvalError::EmptyPredictions => CliError::Empty(e.to_string()),
        _ => CliError::Schema(e.to_string()),
    }
}

fn emit_report<T: Serialize>(report: &T, out: Option<&Path>, ctx: &Ctx) -> Result<(), CliError> {
    let text = to_json(report);
    print!("{text}");
    if let Some(out) = out {
        write_text(out, &text)?;
        snapshot(out, "eval", &ctx.cfg)?;
    }
    Ok(())
}

fn cmd_eval_accuracy(
    ctx: &Ctx,
    problems: Option<&Path>,
    predictions: Option<&Path>,
    from_logs: Option<&Path>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let problems = problems.ok_or_else(|| CliError::Config("--mode accuracy needs --problems".into()))?;
    let problems = unique_problems(ctx.read(problems)?)?;
    let preds: Vec<Prediction> = match (predictions, from_logs) {
        (Some(p), None) => ctx.read(p)?,
        (None, Some(l)) => {
            let logs: Vec<DebateLog> = ctx.read(l)?;
            logs.into_iter()
                .map(|log| Prediction { problem_id: log.problem_id, answer: log.summarizer_raw.unwrap_or_default() })
                .collect()
        }
        _ => return Err(CliError::Config("give exactly one of --predictions or --from-logs".into())),
    };
    let report = eval::accuracy_eval(&preds, &problems).map_err(eval_error)?;
    emit_report(&report, out, ctx)
}

fn token_spans(tokens: &TokenLogProbs) -> (Vec<(usize, usize)>, String) {
    let mut text = String::new();
    let spans = tokens
        .tokens
        .iter()
        .map(|t| {
            let start = text.len();
            text.push_str(&t.text);
            (start, text.len())
        })
        .collect();
    (spans, text)
}

fn cmd_eval_ppl(ctx: &Ctx, logprobs: Option<&Path>, rsft: Option<&Path>, out: Option<&Path>) -> Result<(), CliError> {
    let path = logprobs.ok_or_else(|| CliError::Config("--mode ppl needs --logprobs".into()))?;
    let seqs: Vec<TokenLogProbs> = ctx.read(path)?;
    let rsft: Option<Vec<RsftRecord>> = rsft.map(|p| ctx.read(p)).transpose()?;
    if let Some(r) = &rsft {
        if r.len() != seqs.len() {
            return Err(CliError::Schema(format!("{} logprob sequences but {} rsft records", seqs.len(), r.len())));
        }
    }
    let mut scored: Vec<(Vec<f64>, ReasoningMask)> = Vec::with_capacity(seqs.len());
    for (i, s) in seqs.iter().enumerate() {
        let lps: Vec<f64> = s.tokens.iter().map(|t| t.logprob).collect();
        let mask = match &rsft {
            None => ReasoningMask::full(lps.len()),
            Some(records) => {
                let rec = &records[i];
                if rec.problem_id != s.problem_id {
                    return Err(CliError::Schema(format!(
                        "line {}: logprobs for {:?} but rsft record for {:?}",
                        i + 1,
                        s.problem_id,
                        rec.problem_id
                    )));
                }
                let (spans, text) = token_spans(s);
                if text != rec.target {
                    return Err(CliError::Schema(format!("line {}: tokens do not spell the rsft target", i + 1)));
                }
                let [rs, re] = rec.token_spans.reasoning;
                let [a_s, a_e] = rec.token_spans.answer;
                eval::build_reasoning_mask((rs, re), (a_s, a_e), &spans, text.len()).map_err(eval_error)?
            }
        };
        scored.push((lps, mask));
    }
    let refs: Vec<(&[f64], &ReasoningMask)> = scored.iter().map(|(l, m)| (l.as_slice(), m)).collect();
    let report = eval::reasoning_perplexity(&refs, ctx.cfg.eval.averaging).map_err(eval_error)?;
    emit_report(&report, out, ctx)
}
