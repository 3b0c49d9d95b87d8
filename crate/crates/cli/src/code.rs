use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Subcommand};
use ethnocode_core::coder::{
    self, ClassifierKind, CodeModel, CodeRunConfig, Prediction, Representation, Split, TrainConfig,
};
use ethnocode_core::corpus::{self, Corpus, TableConfig, UnitKey};
use ethnocode_core::embeddings::{self, UnitEmbeddings};
use ethnocode_core::textprep::TokenizedCorpus;
use serde::{Deserialize, Serialize};

use crate::common::{create_dir, CorpusArgs};
use crate::manifest::{write_json, Run};

pub const MODEL_DIR: &str = "model";
pub const SPLIT_FILE: &str = "split.json";

#[derive(Debug, Subcommand)]
pub enum CodeCommand {
    /// Stratified train/eval split of the labelled units for one code
    Split(SplitArgs),
    /// Train a classifier for one code
    Train(TrainArgs),
    /// Pick the threshold reaching a target recall on the eval split
    Tune(TuneArgs),
    /// Score uncoded units and build the review queue
    Apply(ApplyArgs),
    /// Reliability of the model on the eval split
    Eval(EvalArgs),
    /// Krippendorff's alpha between two label files
    Alpha(AlphaArgs),
}

fn parse_representation(s: &str) -> Result<Representation, String> {
    s.parse().map_err(|e: coder::CoderError| e.to_string())
}

fn parse_classifier(s: &str) -> Result<ClassifierKind, String> {
    s.parse().map_err(|e: coder::CoderError| e.to_string())
}

/// Classifier settings shared by `code train` and the pipeline.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoderArgs {
    /// bow, tfidf or unit_embedding
    #[arg(long, default_value = "tfidf", value_parser = parse_representation)]
    pub representation: Representation,
    /// logistic_regression or linear_svm
    #[arg(long, default_value = "logistic_regression", value_parser = parse_classifier)]
    pub classifier: ClassifierKind,
    #[arg(long, default_value_t = 2)]
    pub min_df: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub l2: f64,
    #[arg(long, default_value_t = 60)]
    pub epochs: usize,
    #[arg(long, default_value_t = 5.0)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// At most this many negatives per positive
    #[arg(long, default_value_t = 3.0)]
    pub max_negative_ratio: f64,
    /// Keep stop words in the features
    #[arg(long)]
    pub keep_stopwords: bool,
    /// Unit embeddings sidecar, for the unit_embedding representation
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

impl Default for CoderArgs {
    fn default() -> Self {
        let t = TrainConfig::default();
        let r = CodeRunConfig::default();
        CoderArgs {
            representation: r.representation,
            classifier: t.classifier,
            min_df: t.min_df,
            l2: t.l2,
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            max_negative_ratio: r.max_negative_ratio,
            keep_stopwords: false,
            embeddings: None,
        }
    }
}

impl CoderArgs {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            classifier: self.classifier,
            min_df: self.min_df,
            l2: self.l2,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            seed,
        }
    }

    pub fn run_config(
        &self,
        seed: u64,
        train_fraction: f64,
        target_recall: Option<f64>,
    ) -> CodeRunConfig {
        CodeRunConfig {
            representation: self.representation,
            train: self.train_config(seed),
            train_fraction,
            max_negative_ratio: self.max_negative_ratio,
            target_recall,
            stopwords: !self.keep_stopwords,
        }
    }

    pub fn load_embeddings(&self, corpus: &Corpus) -> Result<Option<UnitEmbeddings>> {
        load_embeddings(self.embeddings.as_deref(), corpus)
    }
}

pub fn load_embeddings(path: Option<&Path>, corpus: &Corpus) -> Result<Option<UnitEmbeddings>> {
    let Some(path) = path else { return Ok(None) };
    let e = embeddings::load_unit_embeddings(path, corpus, &path.display().to_string())?;
    if e.coverage.warning {
        eprintln!(
            "warning: only {} of {} units have an embedding",
            e.coverage.matched, e.coverage.corpus_units
        );
    }
    Ok(Some(e))
}

fn labels(corpus: &Corpus, code: &str) -> Result<BTreeMap<UnitKey, bool>> {
    if !corpus.codebook().contains(code) {
        return Err(coder::CoderError::UnknownCode(code.to_string()).into());
    }
    Ok(coder::labeled_units(corpus, code).into_iter().collect())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn with_labels(keys: &[UnitKey], labels: &BTreeMap<UnitKey, bool>) -> Result<Vec<(UnitKey, bool)>> {
    keys.iter()
        .map(|k| {
            labels
                .get(k)
                .map(|l| (k.clone(), *l))
                .ok_or_else(|| anyhow!("split unit {k} has no label in this corpus"))
        })
        .collect()
}

/// `(score, gold)` for every eval unit of `split`.
pub fn eval_scores(
    model: &CodeModel,
    split: &Split,
    labels: &BTreeMap<UnitKey, bool>,
    tokens: &TokenizedCorpus,
    emb: Option<&UnitEmbeddings>,
) -> Result<Vec<(f64, bool)>> {
    let gold = with_labels(&split.eval, labels)?;
    let scores = coder::score_units(model, &split.eval, tokens, emb)?;
    Ok(scores
        .into_iter()
        .zip(gold.into_iter().map(|(_, l)| l))
        .collect())
}

#[derive(Debug, Args, Serialize)]
pub struct SplitArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub code: String,
    #[arg(long, default_value_t = 0.25)]
    pub train_fraction: f64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn split(args: &SplitArgs, seed: u64) -> Result<()> {
    let corpus = args.corpus.load()?;
    let labels = labels(&corpus, &args.code)?;
    let labeled: Vec<(UnitKey, bool)> = labels.into_iter().collect();
    let split = coder::split_train_eval(&labeled, &args.code, args.train_fraction, seed)?;
    create_dir(&args.out)?;
    write_json(&args.out.join(SPLIT_FILE), &split)?;
    eprintln!("{} train, {} eval", split.train.len(), split.eval.len());
    Run::new("code split", Some(seed), args)
        .input(&args.corpus.corpus)
        .finish_dir(&args.out)
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub code: String,
    /// split.json from `code split`; a fresh split is drawn when absent
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, default_value_t = 0.25)]
    pub train_fraction: f64,
    /// Train on at most this many positives
    #[arg(long)]
    pub positives: Option<usize>,
    #[command(flatten)]
    pub coder: CoderArgs,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn train(args: &TrainArgs, seed: u64) -> Result<()> {
    let corpus = args.corpus.load()?;
    let labels = labels(&corpus, &args.code)?;
    let split: Split = match &args.split {
        Some(path) => read_json(path)?,
        None => {
            let labeled: Vec<(UnitKey, bool)> =
                labels.iter().map(|(k, l)| (k.clone(), *l)).collect();
            coder::split_train_eval(&labeled, &args.code, args.train_fraction, seed)?
        }
    };
    let pool = with_labels(&split.train, &labels)?;
    let train = coder::sample_training(&pool, args.positives, args.coder.max_negative_ratio, seed)?;
    let tokens = coder::prepare_tokens(&corpus, !args.coder.keep_stopwords);
    let emb = args.coder.load_embeddings(&corpus)?;
    let model = coder::train_classifier(
        &args.code,
        &train,
        args.coder.representation,
        &tokens,
        emb.as_ref(),
        &args.coder.train_config(seed),
        &split.id,
        !args.coder.keep_stopwords,
    )?;
    create_dir(&args.out)?;
    model.save(&args.out.join(MODEL_DIR))?;
    write_json(&args.out.join(SPLIT_FILE), &split)?;
    eprintln!(
        "trained on {} positives, {} negatives",
        model.meta.n_positive, model.meta.n_negative
    );
    let mut run = Run::new("code train", Some(seed), args);
    run.input(&args.corpus.corpus);
    run.inputs(args.split.iter())
        .inputs(args.coder.embeddings.iter());
    run.finish_dir(&args.out)
}

/// Model, split and scoring context shared by tune, apply and eval.
#[derive(Debug, Args, Serialize)]
pub struct ModelArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub corpus: CorpusArgs,
    /// Model directory written by `code train`
    #[arg(long)]
    pub model: PathBuf,
    /// Unit embeddings, when the model uses them
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

struct Loaded {
    corpus: Corpus,
    model: CodeModel,
    tokens: TokenizedCorpus,
    emb: Option<UnitEmbeddings>,
}

impl ModelArgs {
    fn load(&self) -> Result<Loaded> {
        let corpus = self.corpus.load()?;
        let model = CodeModel::load(&self.model)
            .with_context(|| format!("loading {}", self.model.display()))?;
        let tokens = coder::prepare_tokens(&corpus, model.meta.stopwords);
        let emb = load_embeddings(self.embeddings.as_deref(), &corpus)?;
        Ok(Loaded {
            corpus,
            model,
            tokens,
            emb,
        })
    }

    fn run(&self, command: &str, args: impl Serialize) -> Run {
        let mut run = Run::new(command, None, args);
        run.input(&self.corpus.corpus)
            .input(&self.model)
            .inputs(self.embeddings.iter());
        run
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TuneArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long, default_value_t = 0.95)]
    pub target_recall: f64,
    /// Receives the tuned model and threshold.json
    #[arg(long)]
    pub out: PathBuf,
}

pub fn tune(args: &TuneArgs) -> Result<()> {
    let mut l = args.model.load()?;
    let split: Split = read_json(&args.split)?;
    let labels = labels(&l.corpus, &l.model.code)?;
    let scored = eval_scores(&l.model, &split, &labels, &l.tokens, l.emb.as_ref())?;
    let choice = coder::tune_threshold(&scored, args.target_recall)?;
    l.model.threshold = choice.threshold;
    create_dir(&args.out)?;
    l.model.save(&args.out.join(MODEL_DIR))?;
    write_json(&args.out.join("threshold.json"), &choice)?;
    println!(
        "threshold {} recall {:.4} precision {:.4}",
        choice.threshold, choice.recall, choice.precision
    );
    let mut run = args.model.run("code tune", args);
    run.input(&args.split).finish_dir(&args.out)
}

#[derive(Debug, Args, Serialize)]
pub struct ApplyArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn write_prediction_file(predictions: &[Prediction], path: &Path) -> Result<()> {
    let file = fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
    coder::write_predictions(predictions, file)?;
    Ok(())
}

pub fn apply(args: &ApplyArgs) -> Result<()> {
    let mut l = args.model.load()?;
    let predictions = coder::apply_codes(&l.model, &l.corpus, &l.tokens, l.emb.as_ref())?;
    let queue = coder::build_review_queue(&predictions, &l.corpus, &l.model.code);
    let added = coder::record_predictions(&mut l.corpus, &predictions)?;
    create_dir(&args.out)?;
    write_prediction_file(&predictions, &args.out.join("predictions.csv"))?;
    write_json(&args.out.join("queue.json"), &queue)?;
    corpus::save_corpus(
        &l.corpus,
        &args.out.join("coded.csv"),
        &TableConfig::with_separator(args.model.corpus.separator),
    )?;
    eprintln!(
        "{} units scored, {} coded, {} queued for review",
        predictions.len(),
        added,
        queue.items.len()
    );
    args.model.run("code apply", args).finish_dir(&args.out)
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn print_report(r: &coder::ReliabilityReport) {
    let alpha = r
        .alpha
        .map_or_else(|| "undefined".to_string(), |a| format!("{a:.4}"));
    println!(
        "{}: alpha {alpha} precision {:.4} recall {:.4} f1 {:.4} (tp {} fp {} fn {} tn {})",
        r.code, r.precision, r.recall, r.f1, r.tp, r.fp, r.fn_, r.tn
    );
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let l = args.model.load()?;
    let split: Split = read_json(&args.split)?;
    let labels = labels(&l.corpus, &l.model.code)?;
    let scored = eval_scores(&l.model, &split, &labels, &l.tokens, l.emb.as_ref())?;
    let pairs: Vec<(bool, bool)> = scored
        .iter()
        .map(|(s, g)| (*s >= l.model.threshold, *g))
        .collect();
    let report = coder::evaluate(&l.model.code, &split.id, &pairs)?;
    print_report(&report);
    create_dir(&args.out)?;
    write_json(&args.out.join("report.json"), &report)?;
    let mut run = args.model.run("code eval", args);
    run.input(&args.split).finish_dir(&args.out)
}

#[derive(Debug, Args, Serialize)]
pub struct AlphaArgs {
    /// Labels of the first coder
    #[arg(long)]
    pub a: PathBuf,
    /// Labels of the second coder
    #[arg(long)]
    pub b: PathBuf,
    /// Code to compare when the inputs are corpus tables
    #[arg(long)]
    pub code: Option<String>,
    #[arg(long, default_value = "newline")]
    pub separator: corpus::CodeSeparator,
    /// Also write alpha.json here
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct AlphaReport {
    units: usize,
    disagreements: usize,
    alpha: f64,
}

fn truthy(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "y" => Some(true),
        "0" | "false" | "no" | "n" => Some(false),
        _ => None,
    }
}

/// Reads `Document,Reference,Label` rows, or a corpus table when `code`
/// is given.
pub fn read_labels(
    path: &Path,
    code: Option<&str>,
    separator: corpus::CodeSeparator,
) -> Result<BTreeMap<UnitKey, bool>> {
    let table =
        corpus::Table::read_path(path).with_context(|| format!("reading {}", path.display()))?;
    let col = |name: &str| table.headers.iter().position(|h| h.trim() == name);
    if let (Some(d), Some(r), Some(l)) = (col("Document"), col("Reference"), col("Label")) {
        let mut out = BTreeMap::new();
        for (i, row) in table.rows.iter().enumerate() {
            let line = i + 2;
            let reference = row[r]
                .trim()
                .parse()
                .map_err(|_| anyhow!("{}:{line}: bad reference `{}`", path.display(), row[r]))?;
            let label = truthy(&row[l])
                .ok_or_else(|| anyhow!("{}:{line}: bad label `{}`", path.display(), row[l]))?;
            if out
                .insert(UnitKey::new(row[d].trim(), reference), label)
                .is_some()
            {
                bail!("{}:{line}: duplicate unit", path.display());
            }
        }
        return Ok(out);
    }
    let Some(code) = code else {
        bail!(
            "{} has no Label column; pass --code to compare corpus tables",
            path.display()
        );
    };
    let c = corpus::import_table(&table, &TableConfig::with_separator(separator))?;
    Ok(c.units()
        .iter()
        .map(|u| (u.key(), u.codes.contains(code)))
        .collect())
}

pub fn alpha(args: &AlphaArgs) -> Result<()> {
    let a = read_labels(&args.a, args.code.as_deref(), args.separator)?;
    let b = read_labels(&args.b, args.code.as_deref(), args.separator)?;
    if a.keys().ne(b.keys()) {
        let only_a = a.keys().filter(|k| !b.contains_key(k)).count();
        let only_b = b.keys().filter(|k| !a.contains_key(k)).count();
        bail!("label files cover different units ({only_a} only in --a, {only_b} only in --b)");
    }
    let (x, y): (Vec<bool>, Vec<bool>) = a.iter().map(|(k, v)| (*v, b[k])).unzip();
    let alpha = coder::krippendorff_alpha(&x, &y)?;
    println!("{alpha}");
    if let Some(out) = &args.out {
        create_dir(out)?;
        let report = AlphaReport {
            units: x.len(),
            disagreements: x.iter().zip(&y).filter(|(p, q)| p != q).count(),
            alpha,
        };
        write_json(&out.join("alpha.json"), &report)?;
        Run::new("code alpha", None, args)
            .input(&args.a)
            .input(&args.b)
            .finish_dir(out)?;
    }
    Ok(())
}
