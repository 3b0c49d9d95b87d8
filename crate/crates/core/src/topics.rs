//! Latent Dirichlet allocation by collapsed Gibbs sampling.
//!
//! Token-topic assignments are resampled one token at a time from
//! `p(z = k) ∝ (n_dk + α)(n_kw + β) / (n_k + Vβ)`. The first half of the
//! iterations is treated as burn-in and the reported `phi`/`theta` are
//! smoothed estimates from the final sampler state.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error)]
pub enum TopicError {
    #[error("corpus has an empty vocabulary")]
    EmptyVocabulary,
    #[error("K = {k} is invalid for a vocabulary of {vocab} words")]
    InvalidK { k: usize, vocab: usize },
    #[error("iterations must be at least 1")]
    NoIterations,
    #[error("alpha and beta must be positive")]
    InvalidPrior,
    #[error("topic {0} not found")]
    NotFound(usize),
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdaConfig {
    pub k: usize,
    /// Document-topic prior; defaults to `50 / K`.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl LdaConfig {
    pub fn new(k: usize) -> Self {
        LdaConfig {
            k,
            alpha: None,
            beta: 0.01,
            iterations: 500,
            seed: 42,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(50.0 / self.k.max(1) as f64)
    }
}

/// Metadata written alongside the phi/theta tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicMeta {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    pub iterations: usize,
    pub burn_in: usize,
    /// Which sampler state the estimates come from.
    pub estimate_state: String,
    pub documents: usize,
    pub vocabulary: usize,
    pub tokens: usize,
    pub log_likelihood: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicModel {
    pub meta: TopicMeta,
    pub vocab: Vec<String>,
    pub doc_ids: Vec<String>,
    /// K x V topic-word probabilities.
    pub phi: Vec<Vec<f64>>,
    /// D x K document-topic probabilities.
    pub theta: Vec<Vec<f64>>,
}

struct GibbsState {
    k: usize,
    v: usize,
    alpha: f64,
    beta: f64,
    docs: Vec<Vec<usize>>,
    z: Vec<Vec<usize>>,
    n_dk: Vec<Vec<usize>>,
    n_kw: Vec<Vec<usize>>,
    n_k: Vec<usize>,
}

impl GibbsState {
    fn init(docs: Vec<Vec<usize>>, k: usize, v: usize, alpha: f64, beta: f64, rng: &mut rng::Rng) -> Self {
        let mut state = GibbsState {
            k,
            v,
            alpha,
            beta,
            z: Vec::with_capacity(docs.len()),
            n_dk: vec![vec![0; k]; docs.len()],
            n_kw: vec![vec![0; v]; k],
            n_k: vec![0; k],
            docs,
        };
        for (d, doc) in state.docs.iter().enumerate() {
            let mut zd = Vec::with_capacity(doc.len());
            for &w in doc {
                let t = rng.random_range(0..k);
                state.n_dk[d][t] += 1;
                state.n_kw[t][w] += 1;
                state.n_k[t] += 1;
                zd.push(t);
            }
            state.z.push(zd);
        }
        state
    }

    fn sweep(&mut self, rng: &mut rng::Rng) {
        let vbeta = self.v as f64 * self.beta;
        let mut weights = vec![0.0; self.k];
        for d in 0..self.docs.len() {
            for i in 0..self.docs[d].len() {
                let w = self.docs[d][i];
                let old = self.z[d][i];
                self.n_dk[d][old] -= 1;
                self.n_kw[old][w] -= 1;
                self.n_k[old] -= 1;

                let mut total = 0.0;
                for (t, weight) in weights.iter_mut().enumerate() {
                    *weight = (self.n_dk[d][t] as f64 + self.alpha)
                        * (self.n_kw[t][w] as f64 + self.beta)
                        / (self.n_k[t] as f64 + vbeta);
                    total += *weight;
                }
                let mut u = rng.random::<f64>() * total;
                let mut new = self.k - 1;
                for (t, weight) in weights.iter().enumerate() {
                    if u < *weight {
                        new = t;
                        break;
                    }
                    u -= weight;
                }

                self.z[d][i] = new;
                self.n_dk[d][new] += 1;
                self.n_kw[new][w] += 1;
                self.n_k[new] += 1;
            }
        }
    }

    /// Joint log p(w, z) with phi and theta integrated out.
    fn log_likelihood(&self) -> f64 {
        let lg = libm::lgamma;
        let (k, v) = (self.k as f64, self.v as f64);
        let mut ll = k * (lg(v * self.beta) - v * lg(self.beta));
        for t in 0..self.k {
            for w in 0..self.v {
                ll += lg(self.n_kw[t][w] as f64 + self.beta);
            }
            ll -= lg(self.n_k[t] as f64 + v * self.beta);
        }
        ll += self.docs.len() as f64 * (lg(k * self.alpha) - k * lg(self.alpha));
        for (d, doc) in self.docs.iter().enumerate() {
            for t in 0..self.k {
                ll += lg(self.n_dk[d][t] as f64 + self.alpha);
            }
            ll -= lg(doc.len() as f64 + k * self.alpha);
        }
        ll
    }

    fn assigned_tokens(&self) -> usize {
        self.n_k.iter().sum()
    }
}

fn build_vocab(docs: &[Vec<String>]) -> (Vec<String>, Vec<Vec<usize>>) {
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in docs {
        for w in doc {
            index.entry(w.as_str()).or_insert(0);
        }
    }
    let vocab: Vec<String> = index.keys().map(|w| w.to_string()).collect();
    for (i, slot) in index.values_mut().enumerate() {
        *slot = i;
    }
    let ids = docs
        .iter()
        .map(|doc| doc.iter().map(|w| index[w.as_str()]).collect())
        .collect();
    (vocab, ids)
}

/// Fits LDA to pre-tokenized documents. Output is a pure function of the
/// input and `config` (the sampler is single-threaded and seeded).
pub fn fit_lda(
    docs: &[Vec<String>],
    doc_ids: &[String],
    config: &LdaConfig,
) -> Result<TopicModel, TopicError> {
    assert_eq!(docs.len(), doc_ids.len(), "one id per document");
    let (vocab, ids) = build_vocab(docs);
    if vocab.is_empty() {
        return Err(TopicError::EmptyVocabulary);
    }
    if config.k == 0 || config.k > vocab.len() {
        return Err(TopicError::InvalidK {
            k: config.k,
            vocab: vocab.len(),
        });
    }
    if config.iterations == 0 {
        return Err(TopicError::NoIterations);
    }
    let alpha = config.alpha();
    if !(alpha > 0.0 && config.beta > 0.0) {
        return Err(TopicError::InvalidPrior);
    }

    let mut rng = rng::seeded(config.seed);
    let tokens: usize = ids.iter().map(Vec::len).sum();
    let mut state = GibbsState::init(ids, config.k, vocab.len(), alpha, config.beta, &mut rng);
    let mut log_likelihood = Vec::with_capacity(config.iterations);
    for _ in 0..config.iterations {
        state.sweep(&mut rng);
        debug_assert_eq!(state.assigned_tokens(), tokens);
        log_likelihood.push(state.log_likelihood());
    }

    let (k, v) = (config.k, vocab.len());
    let vbeta = v as f64 * config.beta;
    let phi = (0..k)
        .map(|t| {
            let denom = state.n_k[t] as f64 + vbeta;
            normalize(
                (0..v)
                    .map(|w| (state.n_kw[t][w] as f64 + config.beta) / denom)
                    .collect(),
            )
        })
        .collect();
    let theta = state
        .docs
        .iter()
        .enumerate()
        .map(|(d, doc)| {
            let denom = doc.len() as f64 + k as f64 * alpha;
            normalize(
                (0..k)
                    .map(|t| (state.n_dk[d][t] as f64 + alpha) / denom)
                    .collect(),
            )
        })
        .collect();

    Ok(TopicModel {
        meta: TopicMeta {
            k,
            alpha,
            beta: config.beta,
            seed: config.seed,
            iterations: config.iterations,
            burn_in: config.iterations / 2,
            estimate_state: "final".into(),
            documents: docs.len(),
            vocabulary: v,
            tokens,
            log_likelihood,
        },
        vocab,
        doc_ids: doc_ids.to_vec(),
        phi,
        theta,
    })
}

// Dividing by the float sum absorbs rounding from the analytic denominators.
fn normalize(mut row: Vec<f64>) -> Vec<f64> {
    let s: f64 = row.iter().sum();
    for x in &mut row {
        *x /= s;
    }
    row
}

impl TopicModel {
    /// The `n` most probable words of a topic; ties go to the
    /// lexicographically smaller word.
    pub fn top_words(&self, topic: usize, n: usize) -> Result<Vec<(String, f64)>, TopicError> {
        let row = self.phi.get(topic).ok_or(TopicError::NotFound(topic))?;
        let mut ranked: Vec<(usize, f64)> = row.iter().copied().enumerate().collect();
        ranked.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.vocab[a.0].cmp(&self.vocab[b.0]))
        });
        Ok(ranked
            .into_iter()
            .take(n)
            .map(|(w, p)| (self.vocab[w].clone(), p))
            .collect())
    }

    /// Most probable topic of each document.
    pub fn dominant_topics(&self) -> Vec<usize> {
        self.theta
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                    .map(|(i, _)| i)
                    .unwrap_or(0)
            })
            .collect()
    }

    /// Writes `model.json`, `phi.csv` and `theta.csv` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), TopicError> {
        fs::create_dir_all(dir)?;
        let mut meta = fs::File::create(dir.join("model.json"))?;
        serde_json::to_writer_pretty(&mut meta, &self.meta)?;
        meta.write_all(b"\n")?;

        let mut w = csv::Writer::from_path(dir.join("phi.csv"))?;
        let mut header = vec!["topic".to_string()];
        header.extend(self.vocab.iter().cloned());
        w.write_record(&header)?;
        for (t, row) in self.phi.iter().enumerate() {
            let mut rec = vec![t.to_string()];
            rec.extend(row.iter().map(|p| p.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("theta.csv"))?;
        let mut header = vec!["document".to_string()];
        header.extend((0..self.meta.k).map(|t| format!("topic_{t}")));
        w.write_record(&header)?;
        for (d, row) in self.theta.iter().enumerate() {
            let mut rec = vec![self.doc_ids[d].clone()];
            rec.extend(row.iter().map(|p| p.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self, TopicError> {
        let meta: TopicMeta = serde_json::from_reader(fs::File::open(dir.join("model.json"))?)?;
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| TopicError::Format(format!("bad probability `{s}`")))
        };

        let mut r = csv::Reader::from_path(dir.join("phi.csv"))?;
        let vocab: Vec<String> = r.headers()?.iter().skip(1).map(str::to_string).collect();
        let mut phi = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            phi.push(rec.iter().skip(1).map(parse).collect::<Result<Vec<_>, _>>()?);
        }

        let mut r = csv::Reader::from_path(dir.join("theta.csv"))?;
        let mut doc_ids = Vec::new();
        let mut theta = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            doc_ids.push(rec.get(0).unwrap_or_default().to_string());
            theta.push(rec.iter().skip(1).map(parse).collect::<Result<Vec<_>, _>>()?);
        }
        if phi.len() != meta.k || phi.iter().any(|r| r.len() != vocab.len()) {
            return Err(TopicError::Format("phi shape does not match metadata".into()));
        }
        Ok(TopicModel {
            meta,
            vocab,
            doc_ids,
            phi,
            theta,
        })
    }
}
