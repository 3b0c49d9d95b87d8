//! Hybrid coding: per-code binary classifiers trained on human-coded units,
//! recall-oriented thresholds, machine coding of the remaining units,
//! reliability statistics and the second-pass review queue.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CodeOrigin, Corpus, CorpusError, UnitKey};
use crate::embeddings::UnitEmbeddings;
use crate::rng;
use crate::textprep::{StopwordList, TokenizedCorpus};

#[derive(Debug, Error)]
pub enum CoderError {
    #[error("too few examples on the {side} side: {positives} positive, {negatives} negative")]
    TooFewExamples {
        side: &'static str,
        positives: usize,
        negatives: usize,
    },
    #[error("no embedding for unit {0}")]
    MissingEmbedding(UnitKey),
    #[error("labels contain a single class")]
    DegenerateLabels,
    #[error("evaluation set has no positives")]
    NoPositives,
    #[error("evaluation set is empty")]
    EmptyEval,
    #[error("label sequences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("alpha is undefined when every label is the same")]
    UndefinedAlpha,
    #[error("{0} queue item(s) still pending")]
    IncompleteReview(usize),
    #[error("unknown code `{0}`")]
    UnknownCode(String),
    #[error("unit {0} is not in the corpus")]
    UnknownUnit(UnitKey),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CoderError>;

/// Units with a trustworthy label for `code`: every human-coded unit, plus
/// units a reviewer has accepted or rejected. Machine codes are not labels.
pub fn labeled_units(corpus: &Corpus, code: &str) -> Vec<(UnitKey, bool)> {
    corpus
        .units()
        .iter()
        .filter_map(|u| {
            let key = u.key();
            let origin = corpus.code_origin(&key, code);
            let negative = corpus.is_explicit_negative(&key, code);
            match origin {
                Some(CodeOrigin::Human) if u.is_human_coded() => Some((key, true)),
                Some(CodeOrigin::Review) => Some((key, true)),
                _ if negative => Some((key, false)),
                _ if u.is_human_coded() => Some((key, false)),
                _ => None,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub id: String,
    pub train: Vec<UnitKey>,
    pub eval: Vec<UnitKey>,
}

fn count(labels: &BTreeMap<&UnitKey, bool>, keys: &[UnitKey]) -> (usize, usize) {
    let p = keys.iter().filter(|k| labels[k]).count();
    (p, keys.len() - p)
}

/// Stratified train/eval split. Each side receives `round(fraction * n)`
/// of the positives and of the negatives, clamped so both sides keep one
/// of each when `0 < fraction < 1`.
pub fn split_train_eval(labeled: &[(UnitKey, bool)], code: &str, train_fraction: f64, seed: u64) -> Result<Split> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(CoderError::InvalidParameter(format!("train fraction {train_fraction} outside [0, 1]")));
    }
    let mut rng = rng::seeded(seed);
    let mut train = Vec::new();
    let mut eval = Vec::new();
    for class in [true, false] {
        let mut keys: Vec<UnitKey> = labeled.iter().filter(|(_, l)| *l == class).map(|(k, _)| k.clone()).collect();
        keys.shuffle(&mut rng);
        let n = keys.len();
        let mut take = (train_fraction * n as f64).round() as usize;
        if train_fraction > 0.0 && train_fraction < 1.0 && n >= 2 {
            take = take.clamp(1, n - 1);
        }
        let rest = keys.split_off(take.min(n));
        train.extend(keys);
        eval.extend(rest);
    }
    train.sort();
    eval.sort();
    let labels: BTreeMap<&UnitKey, bool> = labeled.iter().map(|(k, l)| (k, *l)).collect();
    for (side, keys) in [("train", &train), ("eval", &eval)] {
        let (positives, negatives) = count(&labels, keys);
        if positives == 0 || negatives == 0 {
            return Err(CoderError::TooFewExamples { side, positives, negatives });
        }
    }
    Ok(Split {
        id: format!("{code}|{train_fraction}|{seed}"),
        train,
        eval,
    })
}

/// Draws the training set: at most `positives` positives (all when `None`)
/// and at most `max_negative_ratio` negatives per positive.
pub fn sample_training(
    labeled: &[(UnitKey, bool)],
    positives: Option<usize>,
    max_negative_ratio: f64,
    seed: u64,
) -> Result<Vec<(UnitKey, bool)>> {
    if max_negative_ratio < 1.0 {
        return Err(CoderError::InvalidParameter("negative ratio must be at least 1".into()));
    }
    let mut rng = rng::seeded(seed);
    let mut pos: Vec<&(UnitKey, bool)> = labeled.iter().filter(|(_, l)| *l).collect();
    let mut neg: Vec<&(UnitKey, bool)> = labeled.iter().filter(|(_, l)| !*l).collect();
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    if let Some(p) = positives {
        if p > pos.len() {
            return Err(CoderError::TooFewExamples {
                side: "train",
                positives: pos.len(),
                negatives: neg.len(),
            });
        }
        pos.truncate(p);
    }
    let cap = (pos.len() as f64 * max_negative_ratio).floor() as usize;
    neg.truncate(cap);
    if pos.is_empty() || neg.is_empty() {
        return Err(CoderError::TooFewExamples {
            side: "train",
            positives: pos.len(),
            negatives: neg.len(),
        });
    }
    let mut out: Vec<(UnitKey, bool)> = pos.into_iter().chain(neg).cloned().collect();
    out.sort();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    Bow,
    Tfidf,
    UnitEmbedding,
}

impl std::str::FromStr for Representation {
    type Err = CoderError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bow" => Ok(Representation::Bow),
            "tfidf" => Ok(Representation::Tfidf),
            "unit_embedding" | "embedding" => Ok(Representation::UnitEmbedding),
            _ => Err(CoderError::InvalidParameter(format!("unknown representation `{s}`"))),
        }
    }
}

/// Sparse feature row: `(column, value)` sorted by column.
pub type SparseRow = Vec<(usize, f64)>;

pub fn dot(w: &[f64], x: &SparseRow) -> f64 {
    x.iter().map(|(j, v)| w[*j] * v).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Featurizer {
    pub representation: Representation,
    /// Column names: terms for bow/tfidf, `d0..` for embeddings.
    pub terms: Vec<String>,
    /// Inverse document frequency per term (tfidf only; 1.0 otherwise).
    pub idf: Vec<f64>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

impl Featurizer {
    /// Learns the vocabulary (and idf) from training documents given as
    /// stem sequences, keeping terms found in at least `min_df` of them.
    pub fn fit(representation: Representation, docs: &[&[String]], min_df: usize) -> Self {
        let mut df: BTreeMap<&str, usize> = BTreeMap::new();
        for d in docs {
            let distinct: BTreeSet<&str> = d.iter().map(String::as_str).collect();
            for t in distinct {
                *df.entry(t).or_default() += 1;
            }
        }
        let n = docs.len() as f64;
        df.retain(|_, c| *c >= min_df);
        let terms: Vec<String> = df.keys().map(|t| t.to_string()).collect();
        let idf = df
            .values()
            .map(|&c| match representation {
                Representation::Tfidf => ((1.0 + n) / (1.0 + c as f64)).ln() + 1.0,
                _ => 1.0,
            })
            .collect();
        Featurizer::from_parts(representation, terms, idf)
    }

    pub fn for_embeddings(dim: usize) -> Self {
        Featurizer::from_parts(
            Representation::UnitEmbedding,
            (0..dim).map(|i| format!("d{i}")).collect(),
            vec![1.0; dim],
        )
    }

    pub fn from_parts(representation: Representation, terms: Vec<String>, idf: Vec<f64>) -> Self {
        let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Featurizer {
            representation,
            terms,
            idf,
            index,
        }
    }

    pub fn dim(&self) -> usize {
        self.terms.len()
    }

    /// Counts (bow) or L2-normalised tf-idf over known terms.
    pub fn transform_tokens(&self, stems: &[String]) -> SparseRow {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for s in stems {
            if let Some(&j) = self.index.get(s) {
                *counts.entry(j).or_default() += 1.0;
            }
        }
        let mut row: SparseRow = counts.into_iter().collect();
        if self.representation == Representation::Tfidf {
            for (j, v) in row.iter_mut() {
                *v *= self.idf[*j];
            }
            let norm = row.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|(_, v)| *v /= norm);
            }
        }
        row
    }

    pub fn transform_units(
        &self,
        keys: &[UnitKey],
        tokens: &TokenizedCorpus,
        embeddings: Option<&UnitEmbeddings>,
    ) -> Result<Vec<SparseRow>> {
        keys.iter()
            .map(|k| match self.representation {
                Representation::UnitEmbedding => {
                    let v = embeddings
                        .and_then(|e| e.vectors.get(k))
                        .ok_or_else(|| CoderError::MissingEmbedding(k.clone()))?;
                    if v.len() != self.dim() {
                        return Err(CoderError::InvalidParameter(format!(
                            "embedding for {k} has {} values, model expects {}",
                            v.len(),
                            self.dim()
                        )));
                    }
                    Ok(v.iter().copied().enumerate().collect())
                }
                _ => {
                    let unit = tokens.get(k).ok_or_else(|| CoderError::UnknownUnit(k.clone()))?;
                    let stems: Vec<String> = unit.tokens.iter().map(|t| t.stem.clone()).collect();
                    Ok(self.transform_tokens(&stems))
                }
            })
            .collect()
    }
}

/// Tokenises a corpus for coding, optionally removing the built-in stop
/// words.
pub fn prepare_tokens(corpus: &Corpus, stopwords: bool) -> TokenizedCorpus {
    let t = TokenizedCorpus::from_corpus(corpus);
    if stopwords {
        t.remove_stopwords(&StopwordList::builtin())
    } else {
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    LogisticRegression,
    LinearSvm,
}

impl std::str::FromStr for ClassifierKind {
    type Err = CoderError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic_regression" | "lr" => Ok(ClassifierKind::LogisticRegression),
            "linear_svm" | "svm" => Ok(ClassifierKind::LinearSvm),
            _ => Err(CoderError::InvalidParameter(format!("unknown classifier `{s}`"))),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn l2_term(w: &[f64], l2: f64) -> f64 {
    0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>()
}

/// Mean log-loss plus `l2/2 ‖w‖²`. The bias is not penalised.
pub fn log_loss(w: &[f64], b: f64, x: &[SparseRow], y: &[bool], l2: f64) -> f64 {
    let n = x.len().max(1) as f64;
    let data: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, &yi)| {
            let m = dot(w, xi) + b;
            if yi {
                softplus(-m)
            } else {
                softplus(m)
            }
        })
        .sum();
    data / n + l2_term(w, l2)
}

/// Gradient of [`log_loss`] with respect to `(w, b)`.
pub fn log_loss_grad(w: &[f64], b: f64, x: &[SparseRow], y: &[bool], l2: f64) -> (Vec<f64>, f64) {
    let n = x.len().max(1) as f64;
    let mut gw: Vec<f64> = w.iter().map(|v| l2 * v).collect();
    let mut gb = 0.0;
    for (xi, &yi) in x.iter().zip(y) {
        let g = (sigmoid(dot(w, xi) + b) - f64::from(u8::from(yi))) / n;
        for (j, v) in xi {
            gw[*j] += g * v;
        }
        gb += g;
    }
    (gw, gb)
}

fn sign(y: bool) -> f64 {
    if y {
        1.0
    } else {
        -1.0
    }
}

/// Mean hinge loss with labels mapped to ±1, plus `l2/2 ‖w‖²`.
pub fn hinge_loss(w: &[f64], b: f64, x: &[SparseRow], y: &[bool], l2: f64) -> f64 {
    let n = x.len().max(1) as f64;
    let data: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, &yi)| (1.0 - sign(yi) * (dot(w, xi) + b)).max(0.0))
        .sum();
    data / n + l2_term(w, l2)
}

/// A subgradient of [`hinge_loss`]; zero is taken at the kink.
pub fn hinge_subgradient(w: &[f64], b: f64, x: &[SparseRow], y: &[bool], l2: f64) -> (Vec<f64>, f64) {
    let n = x.len().max(1) as f64;
    let mut gw: Vec<f64> = w.iter().map(|v| l2 * v).collect();
    let mut gb = 0.0;
    for (xi, &yi) in x.iter().zip(y) {
        let s = sign(yi);
        if s * (dot(w, xi) + b) < 1.0 {
            for (j, v) in xi {
                gw[*j] -= s * v / n;
            }
            gb -= s / n;
        }
    }
    (gw, gb)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub classifier: ClassifierKind,
    /// Vocabulary floor for bow/tfidf features.
    pub min_df: usize,
    pub l2: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            classifier: ClassifierKind::LogisticRegression,
            min_df: 2,
            l2: 1e-4,
            epochs: 60,
            learning_rate: 5.0,
            batch_size: 32,
            seed: 42,
        }
    }
}

/// Mini-batch gradient descent from zero weights with a linearly decaying
/// step size; the seed drives the per-epoch shuffle.
pub fn fit_linear(x: &[SparseRow], y: &[bool], dim: usize, config: &TrainConfig) -> Result<(Vec<f64>, f64)> {
    if !y.iter().any(|v| *v) || y.iter().all(|v| *v) {
        return Err(CoderError::DegenerateLabels);
    }
    if config.batch_size == 0 || config.learning_rate <= 0.0 {
        return Err(CoderError::InvalidParameter("batch size and learning rate must be positive".into()));
    }
    let mut rng = rng::seeded(config.seed);
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..x.len()).collect();
    let mut bx: Vec<SparseRow> = Vec::with_capacity(config.batch_size);
    let mut by: Vec<bool> = Vec::with_capacity(config.batch_size);
    let total = (config.epochs * x.len().div_ceil(config.batch_size)).max(1) as f64;
    let mut step = 0usize;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            bx.clear();
            by.clear();
            for &i in chunk {
                bx.push(x[i].clone());
                by.push(y[i]);
            }
            let (gw, gb) = match config.classifier {
                ClassifierKind::LogisticRegression => log_loss_grad(&w, b, &bx, &by, config.l2),
                ClassifierKind::LinearSvm => hinge_subgradient(&w, b, &bx, &by, config.l2),
            };
            // linear decay to a small floor
            let lr = config.learning_rate * (1.0 - step as f64 / total).max(1e-3);
            step += 1;
            for (wj, gj) in w.iter_mut().zip(&gw) {
                *wj -= lr * gj;
            }
            b -= lr * gb;
        }
    }
    Ok((w, b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub n_positive: usize,
    pub n_negative: usize,
    pub seed: u64,
    pub split_id: String,
    pub config: TrainConfig,
    pub stopwords: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeModel {
    pub code: String,
    pub featurizer: Featurizer,
    pub weights: Vec<f64>,
    pub bias: f64,
    /// On the (0, 1) score scale; SVM margins pass through a logistic link.
    pub threshold: f64,
    pub meta: TrainingMeta,
}

impl CodeModel {
    pub fn representation(&self) -> Representation {
        self.featurizer.representation
    }

    pub fn classifier(&self) -> ClassifierKind {
        self.meta.config.classifier
    }

    pub fn score(&self, x: &SparseRow) -> f64 {
        sigmoid(dot(&self.weights, x) + self.bias)
    }

    /// Writes `model.json` (metadata) and `weights.csv` (term, idf, weight;
    /// the bias is the row named by an empty term).
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let meta = serde_json::json!({
            "code": self.code,
            "representation": self.featurizer.representation,
            "classifier": self.meta.config.classifier,
            "threshold": self.threshold,
            "dim": self.weights.len(),
            "training": self.meta,
        });
        fs::write(dir.join("model.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_path(dir.join("weights.csv"))?;
        w.write_record(["term", "idf", "weight"])?;
        w.write_record(["", "", &self.bias.to_string()])?;
        for ((t, idf), wt) in self.featurizer.terms.iter().zip(&self.featurizer.idf).zip(&self.weights) {
            w.write_record([t.as_str(), &idf.to_string(), &wt.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Meta {
            code: String,
            representation: Representation,
            threshold: f64,
            dim: usize,
            training: TrainingMeta,
        }
        let meta: Meta = serde_json::from_str(&fs::read_to_string(dir.join("model.json"))?)?;
        let mut r = csv::Reader::from_path(dir.join("weights.csv"))?;
        let parse = |s: &str| s.parse::<f64>().map_err(|_| CoderError::Format(format!("bad number `{s}`")));
        let mut bias = None;
        let (mut terms, mut idf, mut weights) = (Vec::new(), Vec::new(), Vec::new());
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != 3 {
                return Err(CoderError::Format("weights.csv rows need 3 fields".into()));
            }
            if rec[0].is_empty() && bias.is_none() {
                bias = Some(parse(&rec[2])?);
                continue;
            }
            terms.push(rec[0].to_string());
            idf.push(parse(&rec[1])?);
            weights.push(parse(&rec[2])?);
        }
        if weights.len() != meta.dim {
            return Err(CoderError::Format(format!("expected {} weights, found {}", meta.dim, weights.len())));
        }
        Ok(CodeModel {
            code: meta.code,
            featurizer: Featurizer::from_parts(meta.representation, terms, idf),
            weights,
            bias: bias.ok_or_else(|| CoderError::Format("missing bias row".into()))?,
            threshold: meta.threshold,
            meta: meta.training,
        })
    }
}

/// Fits a model for `code` on the labelled `train` units.
pub fn train_classifier(
    code: &str,
    train: &[(UnitKey, bool)],
    representation: Representation,
    tokens: &TokenizedCorpus,
    embeddings: Option<&UnitEmbeddings>,
    config: &TrainConfig,
    split_id: &str,
    stopwords: bool,
) -> Result<CodeModel> {
    let keys: Vec<UnitKey> = train.iter().map(|(k, _)| k.clone()).collect();
    let y: Vec<bool> = train.iter().map(|(_, l)| *l).collect();
    let featurizer = match representation {
        Representation::UnitEmbedding => {
            let dim = embeddings.map(|e| e.dim).ok_or_else(|| {
                CoderError::MissingEmbedding(keys.first().cloned().unwrap_or_else(|| UnitKey::new("", 0)))
            })?;
            Featurizer::for_embeddings(dim)
        }
        _ => {
            let stems: Vec<Vec<String>> = keys
                .iter()
                .map(|k| {
                    tokens
                        .get(k)
                        .map(|u| u.tokens.iter().map(|t| t.stem.clone()).collect())
                        .ok_or_else(|| CoderError::UnknownUnit(k.clone()))
                })
                .collect::<Result<_>>()?;
            let refs: Vec<&[String]> = stems.iter().map(Vec::as_slice).collect();
            Featurizer::fit(representation, &refs, config.min_df)
        }
    };
    let x = featurizer.transform_units(&keys, tokens, embeddings)?;
    let (weights, bias) = fit_linear(&x, &y, featurizer.dim(), config)?;
    let n_positive = y.iter().filter(|v| **v).count();
    Ok(CodeModel {
        code: code.to_string(),
        featurizer,
        weights,
        bias,
        threshold: 0.5,
        meta: TrainingMeta {
            n_positive,
            n_negative: y.len() - n_positive,
            seed: config.seed,
            split_id: split_id.to_string(),
            config: config.clone(),
            stopwords,
        },
    })
}

/// Scores of `keys` under `model`.
pub fn score_units(
    model: &CodeModel,
    keys: &[UnitKey],
    tokens: &TokenizedCorpus,
    embeddings: Option<&UnitEmbeddings>,
) -> Result<Vec<f64>> {
    Ok(model
        .featurizer
        .transform_units(keys, tokens, embeddings)?
        .iter()
        .map(|x| model.score(x))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice {
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
    pub predicted_positive: usize,
}

fn precision_recall(scored: &[(f64, bool)], threshold: f64) -> (f64, f64, usize) {
    let positives = scored.iter().filter(|(_, l)| *l).count();
    let predicted = scored.iter().filter(|(s, _)| *s >= threshold).count();
    let tp = scored.iter().filter(|(s, l)| *l && *s >= threshold).count();
    let precision = if predicted == 0 { 1.0 } else { tp as f64 / predicted as f64 };
    let recall = if positives == 0 { 1.0 } else { tp as f64 / positives as f64 };
    (precision, recall, predicted)
}

/// The largest threshold whose recall on `scored` reaches `target_recall`
/// (a unit is predicted positive when its score is at least the
/// threshold). A target of 0 yields 1.0.
pub fn tune_threshold(scored: &[(f64, bool)], target_recall: f64) -> Result<ThresholdChoice> {
    if !(0.0..=1.0).contains(&target_recall) {
        return Err(CoderError::InvalidParameter(format!("target recall {target_recall} outside [0, 1]")));
    }
    let mut pos: Vec<f64> = scored.iter().filter(|(_, l)| *l).map(|(s, _)| *s).collect();
    if pos.is_empty() {
        return Err(CoderError::NoPositives);
    }
    pos.sort_by(|a, b| b.total_cmp(a));
    let threshold = if target_recall == 0.0 {
        1.0
    } else {
        let need = ((target_recall * pos.len() as f64) - 1e-9).ceil().max(1.0) as usize;
        pos[need.min(pos.len()) - 1]
    };
    let (precision, recall, predicted_positive) = precision_recall(scored, threshold);
    Ok(ThresholdChoice {
        threshold,
        recall,
        precision,
        predicted_positive,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub unit: UnitKey,
    pub code: String,
    pub score: f64,
    pub predicted: bool,
}

/// Scores every unit that no human has coded.
pub fn apply_codes(
    model: &CodeModel,
    corpus: &Corpus,
    tokens: &TokenizedCorpus,
    embeddings: Option<&UnitEmbeddings>,
) -> Result<Vec<Prediction>> {
    let keys: Vec<UnitKey> = corpus
        .units()
        .iter()
        .filter(|u| !u.is_human_coded())
        .map(|u| u.key())
        .collect();
    let scores = score_units(model, &keys, tokens, embeddings)?;
    Ok(keys
        .into_iter()
        .zip(scores)
        .map(|(unit, score)| Prediction {
            unit,
            code: model.code.clone(),
            score,
            predicted: score >= model.threshold,
        })
        .collect())
}

/// Adds machine-origin codes for positive predictions. Returns how many
/// codes were added; existing assignments are untouched.
pub fn record_predictions(corpus: &mut Corpus, predictions: &[Prediction]) -> Result<usize> {
    let mut added = 0;
    for p in predictions.iter().filter(|p| p.predicted) {
        if corpus.assign_code(&p.unit, &p.code, CodeOrigin::Machine)? {
            added += 1;
        }
    }
    Ok(added)
}

pub fn write_predictions<W: Write>(predictions: &[Prediction], writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(writer);
    w.write_record(["Document", "Reference", "Code", "Score", "Predicted"])?;
    for p in predictions {
        w.write_record([
            p.unit.doc_id.as_str(),
            &p.unit.reference.to_string(),
            &p.code,
            &p.score.to_string(),
            if p.predicted { "1" } else { "0" },
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_predictions<R: Read>(reader: R) -> Result<Vec<Prediction>> {
    let mut r = csv::Reader::from_reader(reader);
    let bad = |m: String| CoderError::Format(m);
    r.records()
        .map(|rec| {
            let rec = rec?;
            if rec.len() != 5 {
                return Err(bad("predictions rows need 5 fields".into()));
            }
            Ok(Prediction {
                unit: UnitKey::new(&rec[0], rec[1].parse().map_err(|_| bad(format!("bad reference `{}`", &rec[1])))?),
                code: rec[2].to_string(),
                score: rec[3].parse().map_err(|_| bad(format!("bad score `{}`", &rec[3])))?,
                predicted: &rec[4] == "1",
            })
        })
        .collect()
}

/// Krippendorff's alpha for two coders assigning binary labels to the same
/// units (nominal metric, no missing values). With `n = 2N` pairable
/// values, `n0`/`n1` the pooled class counts and `D` the number of units
/// on which the coders disagree, `α = 1 − (n − 1)·D / (n0·n1)`.
pub fn krippendorff_alpha(a: &[bool], b: &[bool]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(CoderError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(CoderError::InvalidParameter("alpha needs at least 2 units".into()));
    }
    let n = 2 * a.len();
    let n1 = a.iter().chain(b).filter(|v| **v).count();
    let n0 = n - n1;
    if n0 == 0 || n1 == 0 {
        return Err(CoderError::UndefinedAlpha);
    }
    let d = a.iter().zip(b).filter(|(x, y)| x != y).count();
    Ok(1.0 - ((n - 1) as f64 * d as f64) / (n0 as f64 * n1 as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityReport {
    pub code: String,
    pub eval_id: String,
    /// `None` when every label in the pool is the same.
    pub alpha: Option<f64>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    /// Set when precision is 1.0 by convention (no predicted positives).
    pub precision_by_convention: bool,
    /// Set when recall is 1.0 by convention (no gold positives).
    pub recall_by_convention: bool,
}

/// Confusion counts and reliability of machine labels against gold, given
/// as `(machine, gold)` pairs.
pub fn evaluate(code: &str, eval_id: &str, pairs: &[(bool, bool)]) -> Result<ReliabilityReport> {
    if pairs.is_empty() {
        return Err(CoderError::EmptyEval);
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for &(m, g) in pairs {
        match (m, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let precision_by_convention = tp + fp == 0;
    let recall_by_convention = tp + fn_ == 0;
    let precision = if precision_by_convention { 1.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if recall_by_convention { 1.0 } else { tp as f64 / (tp + fn_) as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let (machine, gold): (Vec<bool>, Vec<bool>) = pairs.iter().copied().unzip();
    let alpha = match krippendorff_alpha(&machine, &gold) {
        Ok(a) => Some(a),
        Err(CoderError::UndefinedAlpha | CoderError::InvalidParameter(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(ReliabilityReport {
        code: code.to_string(),
        eval_id: eval_id.to_string(),
        alpha,
        precision,
        recall,
        f1,
        tp,
        fp,
        fn_,
        tn,
        precision_by_convention,
        recall_by_convention,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    #[default]
    Pending,
    Accept,
    Reject,
}

impl std::str::FromStr for Decision {
    type Err = CoderError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pending" => Ok(Decision::Pending),
            "accept" => Ok(Decision::Accept),
            "reject" => Ok(Decision::Reject),
            _ => Err(CoderError::InvalidParameter(format!("unknown decision `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueItem {
    pub unit: UnitKey,
    pub score: f64,
    pub decision: Decision,
    pub reviewer: Option<String>,
    pub timestamp: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewQueue {
    pub code: String,
    pub items: Vec<QueueItem>,
}

impl ReviewQueue {
    pub fn pending(&self) -> usize {
        self.items.iter().filter(|i| i.decision == Decision::Pending).count()
    }

    pub fn position(&self, unit: &UnitKey) -> Option<usize> {
        self.items.iter().position(|i| &i.unit == unit)
    }
}

/// Predicted positives for `code` that no human has coded, highest score
/// first (ties by unit key).
pub fn build_review_queue(predictions: &[Prediction], corpus: &Corpus, code: &str) -> ReviewQueue {
    let mut items: Vec<QueueItem> = predictions
        .iter()
        .filter(|p| p.predicted && p.code == code)
        .filter(|p| {
            corpus.unit(&p.unit).is_some_and(|u| !u.is_human_coded())
                && corpus.code_origin(&p.unit, code) != Some(CodeOrigin::Human)
        })
        .map(|p| QueueItem {
            unit: p.unit.clone(),
            score: p.score,
            decision: Decision::Pending,
            reviewer: None,
            timestamp: None,
        })
        .collect();
    items.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.unit.cmp(&b.unit)));
    ReviewQueue {
        code: code.to_string(),
        items,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeReport {
    pub code: String,
    pub accepted: usize,
    pub rejected: usize,
    /// Share of queued predictions the reviewer accepted.
    pub raw_precision: f64,
    /// Precision of the surviving machine codes, treating accepts as true
    /// positives: 1.0, and flagged when nothing survived.
    pub post_review_precision: f64,
    pub precision_by_convention: bool,
}

/// Folds a fully decided queue into the corpus: accepts become
/// review-origin codes, rejects remove any machine code and become
/// explicit negatives. Human codes are never touched.
pub fn merge_review(queue: &ReviewQueue, corpus: &mut Corpus) -> Result<MergeReport> {
    let pending = queue.pending();
    if pending > 0 {
        return Err(CoderError::IncompleteReview(pending));
    }
    let (mut accepted, mut rejected) = (0, 0);
    for item in &queue.items {
        if corpus.unit(&item.unit).is_none() {
            return Err(CoderError::UnknownUnit(item.unit.clone()));
        }
        match item.decision {
            Decision::Accept => {
                corpus.assign_code(&item.unit, &queue.code, CodeOrigin::Review)?;
                accepted += 1;
            }
            Decision::Reject => {
                if corpus.code_origin(&item.unit, &queue.code) != Some(CodeOrigin::Human) {
                    corpus.remove_code(&item.unit, &queue.code)?;
                    corpus.mark_negative(&item.unit, &queue.code)?;
                }
                rejected += 1;
            }
            Decision::Pending => unreachable!("checked above"),
        }
    }
    let total = accepted + rejected;
    Ok(MergeReport {
        code: queue.code.clone(),
        accepted,
        rejected,
        raw_precision: if total == 0 { 1.0 } else { accepted as f64 / total as f64 },
        post_review_precision: 1.0,
        precision_by_convention: accepted == 0,
    })
}

/// Predictions with every rejected queue item turned negative.
pub fn apply_review(predictions: &[Prediction], queue: &ReviewQueue) -> Vec<Prediction> {
    let rejected: BTreeSet<&UnitKey> = queue
        .items
        .iter()
        .filter(|i| i.decision == Decision::Reject)
        .map(|i| &i.unit)
        .collect();
    predictions
        .iter()
        .map(|p| Prediction {
            predicted: p.predicted && !(p.code == queue.code && rejected.contains(&p.unit)),
            ..p.clone()
        })
        .collect()
}

/// Settings for [`run_code`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CodeRunConfig {
    pub representation: Representation,
    pub train: TrainConfig,
    pub train_fraction: f64,
    pub max_negative_ratio: f64,
    /// Tune the threshold on the eval split to reach this recall.
    pub target_recall: Option<f64>,
    pub stopwords: bool,
}

impl Default for CodeRunConfig {
    fn default() -> Self {
        CodeRunConfig {
            representation: Representation::Tfidf,
            train: TrainConfig::default(),
            train_fraction: 0.25,
            max_negative_ratio: 3.0,
            target_recall: None,
            stopwords: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodeRun {
    pub model: CodeModel,
    pub split: Split,
    pub threshold: Option<ThresholdChoice>,
    pub report: ReliabilityReport,
    pub predictions: Vec<Prediction>,
    pub queue: ReviewQueue,
}

/// Split, train, optionally tune, evaluate, and score the uncoded units.
pub fn run_code(
    corpus: &Corpus,
    tokens: &TokenizedCorpus,
    code: &str,
    config: &CodeRunConfig,
    embeddings: Option<&UnitEmbeddings>,
) -> Result<CodeRun> {
    if !corpus.codebook().contains(code) {
        return Err(CoderError::UnknownCode(code.to_string()));
    }
    let labeled = labeled_units(corpus, code);
    let split = split_train_eval(&labeled, code, config.train_fraction, config.train.seed)?;
    let labels: BTreeMap<&UnitKey, bool> = labeled.iter().map(|(k, l)| (k, *l)).collect();
    let train_pool: Vec<(UnitKey, bool)> = split.train.iter().map(|k| (k.clone(), labels[k])).collect();
    let train = sample_training(&train_pool, None, config.max_negative_ratio, config.train.seed)?;
    let mut model = train_classifier(
        code,
        &train,
        config.representation,
        tokens,
        embeddings,
        &config.train,
        &split.id,
        config.stopwords,
    )?;
    let eval_scores = score_units(&model, &split.eval, tokens, embeddings)?;
    let scored: Vec<(f64, bool)> = eval_scores.iter().copied().zip(split.eval.iter().map(|k| labels[k])).collect();
    let threshold = match config.target_recall {
        Some(r) => {
            let t = tune_threshold(&scored, r)?;
            model.threshold = t.threshold;
            Some(t)
        }
        None => None,
    };
    let pairs: Vec<(bool, bool)> = scored.iter().map(|(s, g)| (*s >= model.threshold, *g)).collect();
    let report = evaluate(code, &split.id, &pairs)?;
    let predictions = apply_codes(&model, corpus, tokens, embeddings)?;
    let queue = build_review_queue(&predictions, corpus, code);
    Ok(CodeRun {
        model,
        split,
        threshold,
        report,
        predictions,
        queue,
    })
}
