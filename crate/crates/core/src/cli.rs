//! Command-line front end: `train`, `eval-qa`, `eval-qg`, `generate`, `rank`.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::dual_trainer::{load_checkpoint, save_checkpoint, DualTrainer, Objective, TrainerConfig};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_qa, evaluate_qg, group_by_question, GenerationReport, RankingReport};
use crate::model::DualModel;
use crate::nn::ModelDims;
use crate::text_data::{load_tsv, tokenize, QAPair};

/// Everything a run needs. Serialized into every checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub checkpoint_dir: PathBuf,
    #[serde(flatten)]
    pub dims: ModelDims,
    #[serde(flatten)]
    pub trainer: TrainerConfig,
    pub beam: usize,
    pub max_len: usize,
    /// Epochs without dev MAP improvement before stopping; 0 disables early stopping.
    pub patience: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: None,
            dev: None,
            test: None,
            checkpoint_dir: PathBuf::from("checkpoints"),
            dims: ModelDims::default(),
            trainer: TrainerConfig::default(),
            beam: 5,
            max_len: 30,
            patience: 5,
        }
    }
}

impl RunConfig {
    /// Reads a JSON config; relative paths are taken relative to the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut config: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut config.train, &mut config.dev, &mut config.test].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if config.checkpoint_dir.is_relative() {
            config.checkpoint_dir = base.join(&config.checkpoint_dir);
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        self.trainer.validate()?;
        if self.beam == 0 || self.max_len == 0 {
            return Err(Error::Config("beam and max_len must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Parser)]
#[command(name = "dualqa", version, about = "Joint QA/QG training with a duality regularizer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Train both models from a config file.
    Train(TrainArgs),
    /// Rank candidate answers and report MAP, MRR and P@1 as JSON.
    EvalQa(EvalArgs),
    /// Greedy-decode questions for positive pairs and report BLEU-4 as JSON.
    EvalQg(EvalQgArgs),
    /// Emit the top-K questions for each answer line as `score<TAB>question`.
    Generate(GenerateArgs),
    /// Print each question's candidates in ranked order.
    Rank(EvalArgs),
}

/// Flags that override fields of the config file.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    #[arg(long)]
    pub lambda_q: Option<f64>,
    #[arg(long)]
    pub lambda_a: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub pool_batches: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub adadelta_rho: Option<f64>,
    #[arg(long)]
    pub adadelta_eps: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub lm_alpha: Option<f64>,
    #[arg(long)]
    pub embedding_dim: Option<usize>,
    #[arg(long)]
    pub qa_hidden: Option<usize>,
    #[arg(long)]
    pub qg_hidden: Option<usize>,
    #[arg(long)]
    pub attention_dim: Option<usize>,
    #[arg(long)]
    pub cooc_dim: Option<usize>,
    #[arg(long)]
    pub cooc_vocab: Option<usize>,
    #[arg(long)]
    pub vocab_size: Option<usize>,
    #[arg(long)]
    pub beam: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint_dir: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, c: &mut RunConfig) {
        fn set<T: Clone>(dst: &mut T, src: &Option<T>) {
            if let Some(v) = src {
                *dst = v.clone();
            }
        }
        let t = &mut c.trainer;
        set(&mut t.lambda_q, &self.lambda_q);
        set(&mut t.lambda_a, &self.lambda_a);
        set(&mut t.batch_size, &self.batch_size);
        set(&mut t.pool_batches, &self.pool_batches);
        set(&mut t.learning_rate, &self.learning_rate);
        set(&mut t.adadelta_rho, &self.adadelta_rho);
        set(&mut t.adadelta_eps, &self.adadelta_eps);
        set(&mut t.max_epochs, &self.max_epochs);
        set(&mut t.lm_alpha, &self.lm_alpha);
        let d = &mut c.dims;
        set(&mut d.embedding_dim, &self.embedding_dim);
        set(&mut d.qa_hidden, &self.qa_hidden);
        set(&mut d.qg_hidden, &self.qg_hidden);
        set(&mut d.attention_dim, &self.attention_dim);
        set(&mut d.cooc_dim, &self.cooc_dim);
        set(&mut d.cooc_vocab, &self.cooc_vocab);
        set(&mut d.vocab_size, &self.vocab_size);
        set(&mut c.beam, &self.beam);
        set(&mut c.max_len, &self.max_len);
        set(&mut c.patience, &self.patience);
        if self.train.is_some() {
            c.train = self.train.clone();
        }
        if self.dev.is_some() {
            c.dev = self.dev.clone();
        }
        if self.test.is_some() {
            c.test = self.test.clone();
        }
        set(&mut c.checkpoint_dir, &self.checkpoint_dir);
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalQgArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub max_len: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// One answer sentence per line.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub beam: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
}

/// Process exit status for an error: 1 usage/config, 2 data, 3 numerical.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidArgument(_) => 1,
        Error::NonFinite { .. } | Error::NonDeterministic { .. } | Error::BackwardTwice => 3,
        _ => 2,
    }
}

/// What `train` produced.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainSummary {
    pub epochs: usize,
    pub steps: usize,
    pub best_epoch: Option<usize>,
    pub best_dev_map: Option<f64>,
    pub final_checkpoint: PathBuf,
}

pub fn epoch_checkpoint(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("epoch-{epoch:03}.ckpt"))
}

pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const STEP_LOG: &str = "train_log.jsonl";

/// Runs joint training for up to `config.trainer.max_epochs` epochs.
///
/// Writes `epoch-NNN.ckpt` after every epoch, `final.ckpt` holding the best dev-MAP epoch (or
/// the last one without a dev set), and one JSON object per step to `train_log.jsonl`.
pub fn cmd_train(config: &RunConfig) -> Result<TrainSummary> {
    config.validate()?;
    let train_path = config
        .train
        .as_deref()
        .ok_or_else(|| Error::Config("no training file configured".into()))?;
    let train = load_tsv(train_path)?;
    let dev = config.dev.as_deref().map(load_tsv).transpose()?;
    let config_json = serde_json::to_value(config).map_err(|e| Error::Config(e.to_string()))?;

    let model = DualModel::<f64>::from_training_pairs(config.dims, &train, config.trainer.seed)?;
    let mut trainer = DualTrainer::new(model, &train, config.trainer.clone())?;

    let dir = &config.checkpoint_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let log_path = dir.join(STEP_LOG);
    let mut step_log = BufWriter::new(File::create(&log_path).map_err(|e| Error::io(&log_path, e))?);

    let mut best: Option<(f64, usize, crate::autodiff::ParamSet<f64>)> = None;
    let mut stale = 0;
    let mut epochs = 0;
    for epoch in 1..=config.trainer.max_epochs {
        let stats = trainer.fit_epoch(&train, epoch, Objective::Dual)?;
        for s in &stats {
            let line = serde_json::to_string(s).map_err(|e| Error::Config(e.to_string()))?;
            writeln!(step_log, "{line}").map_err(|e| Error::io(&log_path, e))?;
        }
        step_log.flush().map_err(|e| Error::io(&log_path, e))?;
        epochs = epoch;
        let n = stats.len().max(1) as f64;
        let mean = |f: fn(&crate::dual_trainer::StepStats) -> f64| stats.iter().map(f).sum::<f64>() / n;
        info!(
            "epoch {epoch}: qa_loss {:.4} qg_loss {:.4} dual_loss {:.4}",
            mean(|s| s.qa_loss),
            mean(|s| s.qg_loss.unwrap_or(f64::NAN)),
            mean(|s| s.dual_loss.unwrap_or(f64::NAN)),
        );
        save_checkpoint(
            &epoch_checkpoint(dir, epoch),
            &trainer.model,
            &trainer.question_lm,
            &trainer.answer_lm,
            &config_json,
        )?;

        if let Some(dev) = &dev {
            let report = evaluate_qa(&trainer.model, dev)?;
            info!("epoch {epoch}: dev map {:.4} mrr {:.4} p@1 {:.4}", report.map, report.mrr, report.p_at_1);
            if best.as_ref().is_none_or(|(m, _, _)| report.map > *m) {
                best = Some((report.map, epoch, trainer.model.params.clone()));
                stale = 0;
            } else {
                stale += 1;
                if config.patience > 0 && stale >= config.patience {
                    info!("dev MAP has not improved for {stale} epochs; stopping");
                    break;
                }
            }
        }
    }

    let final_path = dir.join(FINAL_CHECKPOINT);
    let (best_dev_map, best_epoch) = match best {
        Some((map, epoch, params)) => {
            let mut model = trainer.model.clone();
            model.params = params;
            save_checkpoint(&final_path, &model, &trainer.question_lm, &trainer.answer_lm, &config_json)?;
            (Some(map), Some(epoch))
        }
        None => {
            save_checkpoint(&final_path, &trainer.model, &trainer.question_lm, &trainer.answer_lm, &config_json)?;
            (None, None)
        }
    };
    Ok(TrainSummary {
        epochs,
        steps: trainer.steps_taken(),
        best_epoch,
        best_dev_map,
        final_checkpoint: final_path,
    })
}

/// Model and run config stored in a checkpoint.
pub fn load_model(path: &Path) -> Result<(DualModel<f64>, RunConfig)> {
    let ck = load_checkpoint::<f64>(path)?;
    let config: RunConfig = serde_json::from_value(ck.config.clone())
        .map_err(|e| Error::Checkpoint(format!("stored config: {e}")))?;
    let (model, _, _) = ck.into_model(config.dims)?;
    Ok((model, config))
}

pub fn cmd_eval_qa(checkpoint: &Path, data: &Path) -> Result<RankingReport> {
    let pairs = load_tsv(data)?;
    let (model, _) = load_model(checkpoint)?;
    let report = evaluate_qa(&model, &pairs)?;
    if report.num_skipped > 0 {
        warn!("{} questions without a positive answer were skipped", report.num_skipped);
    }
    Ok(report)
}

pub fn cmd_eval_qg(checkpoint: &Path, data: &Path, max_len: Option<usize>) -> Result<GenerationReport> {
    let pairs = load_tsv(data)?;
    let (model, config) = load_model(checkpoint)?;
    evaluate_qg(&model, &pairs, max_len.unwrap_or(config.max_len))
}

/// `(log_prob, question)` hypotheses, `beam` per non-blank input line.
pub fn cmd_generate(
    checkpoint: &Path,
    answers: &Path,
    beam: Option<usize>,
    max_len: Option<usize>,
) -> Result<Vec<Vec<(f64, String)>>> {
    let text = fs::read_to_string(answers).map_err(|e| Error::io(answers, e))?;
    let (model, config) = load_model(checkpoint)?;
    let k = beam.unwrap_or(config.beam);
    let max_len = max_len.unwrap_or(config.max_len);
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let answer = tokenize(line)?;
            Ok(model
                .generate(&answer, k, max_len)?
                .into_iter()
                .map(|(lp, words)| (lp, words.join(" ")))
                .collect())
        })
        .collect()
}

/// One ranked row of `rank` output.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankedRow {
    pub question_id: String,
    pub rank: usize,
    pub score: f64,
    pub label: u8,
    pub answer: String,
}

pub fn cmd_rank(checkpoint: &Path, data: &Path) -> Result<Vec<RankedRow>> {
    let pairs = load_tsv(data)?;
    let (model, _) = load_model(checkpoint)?;
    let mut rows = Vec::with_capacity(pairs.len());
    for group in group_by_question(&pairs) {
        let question = &group[0].question_tokens;
        let candidates: Vec<Vec<String>> = group.iter().map(|p: &&QAPair| p.answer_tokens.clone()).collect();
        let scores = model.score_candidates(question, &candidates)?;
        for (rank, i) in crate::metrics::rank_by_scores(&scores).into_iter().enumerate() {
            rows.push(RankedRow {
                question_id: group[i].question_id.clone(),
                rank: rank + 1,
                score: scores[i],
                label: group[i].label,
                answer: group[i].answer_tokens.join(" "),
            });
        }
    }
    Ok(rows)
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string(v).map_err(|e| Error::InvalidArgument(e.to_string()))
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<()> {
    let write_err = |e: std::io::Error| Error::io("<stdout>", e);
    match command {
        Command::Train(args) => {
            let mut config = RunConfig::load(&args.config)?;
            args.overrides.apply(&mut config);
            if let Some(seed) = args.seed {
                config.trainer.seed = seed;
            }
            let summary = cmd_train(&config)?;
            writeln!(out, "{}", to_json(&summary)?).map_err(write_err)
        }
        Command::EvalQa(args) => {
            let report = cmd_eval_qa(&args.checkpoint, &args.data)?;
            writeln!(out, "{}", to_json(&report)?).map_err(write_err)
        }
        Command::EvalQg(args) => {
            let report = cmd_eval_qg(&args.checkpoint, &args.data, args.max_len)?;
            writeln!(out, "{}", to_json(&report)?).map_err(write_err)
        }
        Command::Generate(args) => {
            for hyps in cmd_generate(&args.checkpoint, &args.data, args.beam, args.max_len)? {
                for (score, question) in hyps {
                    writeln!(out, "{score:.6}\t{question}").map_err(write_err)?;
                }
            }
            Ok(())
        }
        Command::Rank(args) => {
            for r in cmd_rank(&args.checkpoint, &args.data)? {
                writeln!(out, "{}\t{}\t{:.6}\t{}\t{}", r.question_id, r.rank, r.score, r.label, r.answer)
                    .map_err(write_err)?;
            }
            Ok(())
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns the exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
