//! Word vectors: skip-gram with negative sampling, external vector files,
//! truncated SVD projection, k-means and cosine neighbours.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, UnitKey};
use crate::rng;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("vocabulary has {0} word(s); at least 2 are needed")]
    InsufficientVocabulary(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("vector file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("matrix rank is below the target dimension {0}")]
    RankDeficient(usize),
    #[error("k = {k} exceeds the {points} points")]
    InvalidK { k: usize, points: usize },
    #[error("`{0}` not in vocabulary")]
    NotFound(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EmbeddingError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VectorSource {
    Trained,
    Loaded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordVectors {
    pub dim: usize,
    pub words: Vec<String>,
    pub vocab: BTreeMap<String, usize>,
    pub matrix: Vec<Vec<f64>>,
    pub source: VectorSource,
}

impl WordVectors {
    pub fn from_rows(rows: Vec<(String, Vec<f64>)>, source: VectorSource) -> Result<Self> {
        let dim = rows.first().map(|r| r.1.len()).unwrap_or(0);
        let mut words = Vec::with_capacity(rows.len());
        let mut vocab = BTreeMap::new();
        let mut matrix = Vec::with_capacity(rows.len());
        for (i, (word, v)) in rows.into_iter().enumerate() {
            if v.len() != dim {
                return Err(EmbeddingError::Format {
                    line: i + 1,
                    message: format!("expected {dim} values, found {}", v.len()),
                });
            }
            if vocab.insert(word.clone(), i).is_some() {
                return Err(EmbeddingError::Format {
                    line: i + 1,
                    message: format!("duplicate word `{word}`"),
                });
            }
            words.push(word);
            matrix.push(v);
        }
        Ok(WordVectors {
            dim,
            words,
            vocab,
            matrix,
            source,
        })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vocab.get(word).map(|&i| self.matrix[i].as_slice())
    }

    /// Writes the whitespace-separated text format: `count dim` header, then
    /// `word v1 .. vd` per row.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        writeln!(w, "{} {}", self.len(), self.dim)?;
        for (word, row) in self.words.iter().zip(&self.matrix) {
            write!(w, "{word}")?;
            for x in row {
                write!(w, " {x}")?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn parse_header(line: Option<std::io::Result<String>>) -> Result<(usize, usize)> {
    let line = line.ok_or_else(|| EmbeddingError::Format {
        line: 1,
        message: "empty file".into(),
    })??;
    let fields: Vec<&str> = line.split_whitespace().collect();
    let bad = || EmbeddingError::Format {
        line: 1,
        message: format!("header must be `<count> <dim>`, found `{line}`"),
    };
    if fields.len() != 2 {
        return Err(bad());
    }
    let count = fields[0].parse().map_err(|_| bad())?;
    let dim = fields[1].parse().map_err(|_| bad())?;
    Ok((count, dim))
}

fn parse_values(fields: &[&str], line: usize) -> Result<Vec<f64>> {
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| EmbeddingError::Format {
                    line,
                    message: format!("`{f}` is not a finite number"),
                })
        })
        .collect()
}

/// Reads a word-vector file.
pub fn load_vectors(path: &Path) -> Result<WordVectors> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut lines = reader.lines();
    let (count, dim) = parse_header(lines.next())?;
    if dim < 2 {
        return Err(EmbeddingError::Format {
            line: 1,
            message: format!("dimension {dim} < 2"),
        });
    }
    let mut rows = Vec::with_capacity(count);
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != dim + 1 {
            return Err(EmbeddingError::Format {
                line: line_no,
                message: format!("expected a word and {dim} values, found {} fields", fields.len()),
            });
        }
        let values = parse_values(&fields[1..], line_no)?;
        if values.iter().all(|x| *x == 0.0) {
            return Err(EmbeddingError::Format {
                line: line_no,
                message: format!("all-zero vector for `{}`", fields[0]),
            });
        }
        rows.push((fields[0].to_string(), values));
    }
    if rows.len() != count {
        return Err(EmbeddingError::Format {
            line: 1,
            message: format!("header announces {count} rows, file has {}", rows.len()),
        });
    }
    let mut v = WordVectors::from_rows(rows, VectorSource::Loaded)?;
    v.dim = dim;
    Ok(v)
}

/// Per-unit vectors computed outside this toolkit.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitEmbeddings {
    pub dim: usize,
    pub vectors: BTreeMap<UnitKey, Vec<f64>>,
    pub provenance: String,
    pub coverage: Coverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub matched: usize,
    pub corpus_units: usize,
    pub unmatched: Vec<UnitKey>,
    /// Rows naming units that are not in the corpus; dropped on load.
    pub extraneous: usize,
    /// Set when fewer than 90% of corpus units have a vector.
    pub warning: bool,
}

impl Coverage {
    pub fn fraction(&self) -> f64 {
        if self.corpus_units == 0 {
            1.0
        } else {
            self.matched as f64 / self.corpus_units as f64
        }
    }
}

/// Reads a unit-embedding sidecar (`count dim` header, then
/// `doc_id reference v1 .. vd`) and aligns it with `corpus`.
pub fn load_unit_embeddings(path: &Path, corpus: &Corpus, provenance: &str) -> Result<UnitEmbeddings> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut lines = reader.lines();
    let (_, dim) = parse_header(lines.next())?;
    let mut vectors = BTreeMap::new();
    let mut extraneous = 0;
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != dim + 2 {
            return Err(EmbeddingError::Format {
                line: line_no,
                message: format!("expected doc, reference and {dim} values, found {} fields", fields.len()),
            });
        }
        let reference = fields[1].parse().map_err(|_| EmbeddingError::Format {
            line: line_no,
            message: format!("bad reference `{}`", fields[1]),
        })?;
        let key = UnitKey::new(fields[0], reference);
        let values = parse_values(&fields[2..], line_no)?;
        if corpus.unit(&key).is_some() {
            vectors.insert(key, values);
        } else {
            extraneous += 1;
        }
    }
    let unmatched: Vec<UnitKey> = corpus
        .units()
        .iter()
        .map(|u| u.key())
        .filter(|k| !vectors.contains_key(k))
        .collect();
    let corpus_units = corpus.len();
    let matched = vectors.len();
    let coverage = Coverage {
        matched,
        corpus_units,
        unmatched,
        extraneous,
        warning: corpus_units > 0 && (matched as f64) < 0.9 * corpus_units as f64,
    };
    Ok(UnitEmbeddings {
        dim,
        vectors,
        provenance: provenance.to_string(),
        coverage,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgnsConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub min_count: usize,
    /// Frequent-word subsampling threshold (word2vec `t`); `None` disables.
    pub subsample: Option<f64>,
}

impl Default for SgnsConfig {
    fn default() -> Self {
        SgnsConfig {
            dim: 50,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            seed: 42,
            min_count: 1,
            subsample: None,
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Cumulative unigram^0.75 distribution for drawing negatives.
struct NoiseTable {
    cdf: Vec<f64>,
}

impl NoiseTable {
    fn new(counts: &[usize]) -> Self {
        let mut acc = 0.0;
        let cdf = counts
            .iter()
            .map(|&c| {
                acc += (c as f64).powf(0.75);
                acc
            })
            .collect();
        NoiseTable { cdf }
    }

    fn sample(&self, rng: &mut rng::Rng) -> usize {
        let u = rng.random::<f64>() * self.cdf[self.cdf.len() - 1];
        self.cdf.partition_point(|c| *c <= u).min(self.cdf.len() - 1)
    }
}

/// Trains skip-gram vectors with negative sampling. Single-threaded; the
/// result depends only on the input and `config`.
pub fn train_sgns(sentences: &[Vec<String>], config: &SgnsConfig) -> Result<WordVectors> {
    if config.dim < 2 {
        return Err(EmbeddingError::InvalidParameter(format!("dim {} < 2", config.dim)));
    }
    if config.window < 1 {
        return Err(EmbeddingError::InvalidParameter("window must be at least 1".into()));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for s in sentences {
        for w in s {
            *counts.entry(w.as_str()).or_default() += 1;
        }
    }
    counts.retain(|_, c| *c >= config.min_count.max(1));
    if counts.len() < 2 {
        return Err(EmbeddingError::InsufficientVocabulary(counts.len()));
    }
    let words: Vec<String> = counts.keys().map(|w| w.to_string()).collect();
    let vocab: BTreeMap<String, usize> = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
    let freq: Vec<usize> = counts.values().copied().collect();
    let total: usize = freq.iter().sum();
    let noise = NoiseTable::new(&freq);

    let ids: Vec<Vec<usize>> = sentences
        .iter()
        .map(|s| s.iter().filter_map(|w| vocab.get(w).copied()).collect())
        .collect();

    let mut rng = rng::seeded(config.seed);
    let dim = config.dim;
    let v = words.len();
    let mut input: Vec<Vec<f64>> = (0..v)
        .map(|_| (0..dim).map(|_| (rng.random::<f64>() - 0.5) / dim as f64).collect())
        .collect();
    let mut output = vec![vec![0.0; dim]; v];

    let keep_prob: Option<Vec<f64>> = config.subsample.map(|t| {
        freq.iter()
            .map(|&c| {
                let f = c as f64 / total as f64;
                ((t / f).sqrt() + t / f).min(1.0)
            })
            .collect()
    });

    let total_steps = (config.epochs * total).max(1) as f64;
    let mut step = 0usize;
    let mut grad = vec![0.0; dim];
    for _ in 0..config.epochs {
        for sentence in &ids {
            let kept: Vec<usize> = match &keep_prob {
                Some(p) => sentence.iter().copied().filter(|&w| rng.random::<f64>() < p[w]).collect(),
                None => sentence.clone(),
            };
            for (pos, &center) in kept.iter().enumerate() {
                let lr = (config.learning_rate * (1.0 - step as f64 / total_steps)).max(config.learning_rate * 1e-4);
                step += 1;
                let lo = pos.saturating_sub(config.window);
                let hi = (pos + config.window + 1).min(kept.len());
                for (ctx_pos, &context) in kept.iter().enumerate().take(hi).skip(lo) {
                    if ctx_pos == pos {
                        continue;
                    }
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    for n in 0..=config.negatives {
                        let (target, label) = if n == 0 {
                            (context, 1.0)
                        } else {
                            let t = noise.sample(&mut rng);
                            if t == context {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let dot: f64 = input[center].iter().zip(&output[target]).map(|(a, b)| a * b).sum();
                        let g = (label - sigmoid(dot)) * lr;
                        for d in 0..dim {
                            grad[d] += g * output[target][d];
                            output[target][d] += g * input[center][d];
                        }
                    }
                    for d in 0..dim {
                        input[center][d] += grad[d];
                    }
                }
            }
        }
    }

    Ok(WordVectors {
        dim,
        words,
        vocab,
        matrix: input,
        source: VectorSource::Trained,
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}

/// The `n` words most cosine-similar to `word`, excluding itself. Ties are
/// broken lexicographically.
pub fn neighbors(vectors: &WordVectors, word: &str, n: usize) -> Result<Vec<(String, f64)>> {
    let query = vectors
        .get(word)
        .ok_or_else(|| EmbeddingError::NotFound(word.to_string()))?;
    let mut scored: Vec<(&String, f64)> = vectors
        .words
        .iter()
        .zip(&vectors.matrix)
        .filter(|(w, _)| w.as_str() != word)
        .map(|(w, v)| (w, cosine(query, v)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Ok(scored
        .into_iter()
        .take(n)
        .map(|(w, s)| (w.clone(), s))
        .collect())
}

/// Rank-k truncated SVD of a row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdProjection {
    /// `U_k Σ_k`: one row of `k` coordinates per input row.
    pub coords: Vec<Vec<f64>>,
    /// All singular values, descending.
    pub singular_values: Vec<f64>,
    /// Top-k right singular vectors, each of length `dim`.
    pub components: Vec<Vec<f64>>,
}

impl SvdProjection {
    /// `U_k Σ_k V_kᵀ`.
    pub fn reconstruct(&self) -> Vec<Vec<f64>> {
        let dim = self.components.first().map(Vec::len).unwrap_or(0);
        self.coords
            .iter()
            .map(|c| {
                (0..dim)
                    .map(|j| c.iter().zip(&self.components).map(|(x, v)| x * v[j]).sum())
                    .collect()
            })
            .collect()
    }
}

/// Thin SVD by one-sided Jacobi rotations of the columns. Returns
/// `(U Σ columns, singular values, V)` sorted by descending singular value;
/// `U Σ` is stored column-major as `dim` vectors of length `rows`.
fn jacobi_svd(rows: &[Vec<f64>], dim: usize) -> (Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>) {
    let n = rows.len();
    let mut cols: Vec<Vec<f64>> = (0..dim).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
    let mut v: Vec<Vec<f64>> = (0..dim)
        .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..dim {
            for q in p + 1..dim {
                let alpha: f64 = cols[p].iter().map(|x| x * x).sum();
                let beta: f64 = cols[q].iter().map(|x| x * x).sum();
                let gamma: f64 = cols[p].iter().zip(&cols[q]).map(|(a, b)| a * b).sum();
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..n {
                    let (a, b) = (cols[p][i], cols[q][i]);
                    cols[p][i] = c * a - s * b;
                    cols[q][i] = s * a + c * b;
                }
                for i in 0..dim {
                    let (a, b) = (v[i][p], v[i][q]);
                    v[i][p] = c * a - s * b;
                    v[i][q] = s * a + c * b;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let sigma: Vec<f64> = cols.iter().map(|c| norm(c)).collect();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]).then(a.cmp(&b)));
    let us = order.iter().map(|&j| cols[j].clone()).collect();
    let s = order.iter().map(|&j| sigma[j]).collect();
    let vt = order.iter().map(|&j| (0..dim).map(|i| v[i][j]).collect()).collect();
    (us, s, vt)
}

/// Projects rows onto their top `target_dim` singular directions (no
/// centring). Each output column is signed so that its largest-magnitude
/// entry is positive.
pub fn project_svd(rows: &[Vec<f64>], target_dim: usize) -> Result<SvdProjection> {
    let dim = rows.first().map(Vec::len).unwrap_or(0);
    if target_dim == 0 || target_dim >= dim {
        return Err(EmbeddingError::InvalidParameter(format!(
            "target dimension {target_dim} must be in 1..{dim}"
        )));
    }
    if rows.iter().any(|r| r.len() != dim) {
        return Err(EmbeddingError::InvalidParameter("ragged matrix".into()));
    }
    let (us, sigma, vt) = jacobi_svd(rows, dim);
    let top = sigma[0];
    if top == 0.0 || sigma[target_dim - 1] <= 1e-12 * top {
        return Err(EmbeddingError::RankDeficient(target_dim));
    }
    let mut columns: Vec<Vec<f64>> = us.into_iter().take(target_dim).collect();
    let mut components: Vec<Vec<f64>> = vt.into_iter().take(target_dim).collect();
    for (col, comp) in columns.iter_mut().zip(components.iter_mut()) {
        let pivot = col
            .iter()
            .copied()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
            .map(|(_, x)| x)
            .unwrap_or(0.0);
        if pivot < 0.0 {
            col.iter_mut().for_each(|x| *x = -*x);
            comp.iter_mut().for_each(|x| *x = -*x);
        }
    }
    let coords = (0..rows.len())
        .map(|i| columns.iter().map(|c| c[i]).collect())
        .collect();
    Ok(SvdProjection {
        coords,
        singular_values: sigma,
        components,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub wcss: f64,
    /// WCSS after every assignment step.
    pub wcss_trace: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// k-means with k-means++ seeding and Lloyd iterations until the
/// assignment stops changing or `max_iters` is reached.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iters: usize) -> Result<KMeansResult> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(EmbeddingError::InvalidK { k, points: n });
    }
    let mut rng = rng::seeded(seed);
    let mut chosen = BTreeSet::new();
    let first = rng.random_range(0..n);
    chosen.insert(first);
    let mut centroids = vec![points[first].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, d) in d2.iter().enumerate() {
                if u < *d {
                    pick = i;
                    break;
                }
                u -= d;
            }
            pick
        } else {
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.insert(pick);
        centroids.push(points[pick].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &points[pick]));
        }
    }

    let mut assignments = vec![usize::MAX; n];
    let mut trace = Vec::new();
    let mut iterations = 0;
    let dim = points[0].len();
    loop {
        let mut changed = false;
        let mut wcss = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(p, &centroids);
            wcss += d;
            if assignments[i] != c {
                assignments[i] = c;
                changed = true;
            }
        }
        trace.push(wcss);
        if !changed || iterations >= max_iters {
            break;
        }
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut sizes = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assignments) {
            sizes[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            if sizes[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / sizes[c] as f64).collect();
            }
        }
        for c in 0..k {
            if sizes[c] == 0 {
                // move an empty centroid onto the worst-served point
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq_dist(&points[a], &centroids[assignments[a]])
                            .total_cmp(&sq_dist(&points[b], &centroids[assignments[b]]))
                            .then(b.cmp(&a))
                    })
                    .unwrap_or(0);
                centroids[c] = points[far].clone();
            }
        }
    }
    Ok(KMeansResult {
        wcss: *trace.last().unwrap_or(&0.0),
        assignments,
        centroids,
        wcss_trace: trace,
        iterations,
    })
}

/// One point of the 2-D map export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapPoint {
    pub word: String,
    pub x: f64,
    pub y: f64,
    pub cluster: usize,
    pub label_me: bool,
}

/// Combines 2-D coordinates and clusters; flags the 10% of points farthest
/// from the overall centroid for labelling.
pub fn map_points(words: &[String], coords: &[Vec<f64>], clusters: &[usize]) -> Vec<MapPoint> {
    let n = words.len();
    if n == 0 {
        return Vec::new();
    }
    let cx = coords.iter().map(|c| c[0]).sum::<f64>() / n as f64;
    let cy = coords.iter().map(|c| c[1]).sum::<f64>() / n as f64;
    let mut by_distance: Vec<usize> = (0..n).collect();
    let dist = |i: usize| (coords[i][0] - cx).powi(2) + (coords[i][1] - cy).powi(2);
    by_distance.sort_by(|&a, &b| dist(b).total_cmp(&dist(a)).then_with(|| words[a].cmp(&words[b])));
    let labelled: BTreeSet<usize> = by_distance.into_iter().take((n as f64 * 0.1).ceil() as usize).collect();
    (0..n)
        .map(|i| MapPoint {
            word: words[i].clone(),
            x: coords[i][0],
            y: coords[i][1],
            cluster: clusters[i],
            label_me: labelled.contains(&i),
        })
        .collect()
}

/// The `n` words nearest to each centroid.
pub fn central_words(vectors: &WordVectors, result: &KMeansResult, n: usize) -> Vec<Vec<String>> {
    result
        .centroids
        .iter()
        .enumerate()
        .map(|(c, centroid)| {
            let mut members: Vec<(f64, &String)> = vectors
                .words
                .iter()
                .zip(&vectors.matrix)
                .zip(&result.assignments)
                .filter(|(_, &a)| a == c)
                .map(|((w, v), _)| (sq_dist(v, centroid), w))
                .collect();
            members.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
            members.into_iter().take(n).map(|(_, w)| w.clone()).collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wv(rows: &[(&str, &[f64])]) -> WordVectors {
        WordVectors::from_rows(
            rows.iter().map(|(w, v)| (w.to_string(), v.to_vec())).collect(),
            VectorSource::Loaded,
        )
        .unwrap()
    }

    #[test]
    fn duplicate_vectors_are_nearest() {
        let v = wv(&[("w1", &[1.0, 2.0]), ("w2", &[1.0, 2.0]), ("w3", &[-2.0, 1.0])]);
        assert_eq!(neighbors(&v, "w1", 1).unwrap()[0].0, "w2");
        assert!(matches!(neighbors(&v, "zzz", 1), Err(EmbeddingError::NotFound(_))));
    }

    #[test]
    fn orthogonal_vectors_tie_lexicographically() {
        let v = wv(&[("c", &[0.0, 0.0, 1.0]), ("a", &[1.0, 0.0, 0.0]), ("b", &[0.0, 1.0, 0.0]), ("q", &[0.0, 0.0, 0.0])]);
        let n = neighbors(&v, "c", 3).unwrap();
        assert_eq!(n.iter().map(|x| x.0.as_str()).collect::<Vec<_>>(), ["a", "b", "q"]);
        assert!(n.iter().all(|x| x.1 == 0.0));
    }

    #[test]
    fn vector_file_formats() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.txt");
        fs::write(&p, "3 4\na 1 0 0 0\nb 0 1 0 0\nc 0 0 1 0.5\n").unwrap();
        let v = load_vectors(&p).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.dim, 4);
        let out = dir.path().join("o.txt");
        v.write(&out).unwrap();
        assert_eq!(load_vectors(&out).unwrap(), v);

        fs::write(&p, "2 4\na 1 0 0 0\nb 0 1 0 0 1\n").unwrap();
        assert!(matches!(load_vectors(&p), Err(EmbeddingError::Format { line: 3, .. })));
        fs::write(&p, "2 4\na 1 0 0 0\n").unwrap();
        assert!(matches!(load_vectors(&p), Err(EmbeddingError::Format { .. })));
    }

    #[test]
    fn unit_embedding_coverage_warning() {
        use crate::corpus::{DocumentMeta, Unit};
        let docs = BTreeMap::from([("d".to_string(), DocumentMeta::from_doc_id("d"))]);
        let units = (0..196).map(|i| Unit::new("d", i, "x")).collect();
        let corpus = Corpus::new(docs, units, BTreeSet::new()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("u.txt");
        let mut f = fs::File::create(&p).unwrap();
        writeln!(f, "151 2").unwrap();
        for i in 0..150 {
            writeln!(f, "d {i} 0.5 {i}").unwrap();
        }
        writeln!(f, "other 0 1 1").unwrap();
        drop(f);
        let u = load_unit_embeddings(&p, &corpus, "bert-base").unwrap();
        assert_eq!(u.coverage.matched, 150);
        assert_eq!(u.coverage.unmatched.len(), 46);
        assert_eq!(u.coverage.extraneous, 1);
        assert!(u.coverage.warning);
    }

    #[test]
    fn svd_rejects_bad_targets() {
        let rows = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]];
        assert!(matches!(project_svd(&rows, 3), Err(EmbeddingError::InvalidParameter(_))));
        let flat = vec![vec![1.0, 1.0, 1.0], vec![2.0, 2.0, 2.0]];
        assert!(matches!(project_svd(&flat, 2), Err(EmbeddingError::RankDeficient(2))));
    }

    #[test]
    fn svd_of_scaled_orthogonal_rows() {
        // rows are 3e1, 2e2, 1e3: singular values are exactly 3, 2, 1
        let rows = vec![vec![3.0, 0.0, 0.0], vec![0.0, 2.0, 0.0], vec![0.0, 0.0, 1.0]];
        let p = project_svd(&rows, 2).unwrap();
        for (s, e) in p.singular_values.iter().zip([3.0, 2.0, 1.0]) {
            assert!((s - e).abs() < 1e-12);
        }
        assert_eq!(p.coords, vec![vec![3.0, 0.0], vec![0.0, 2.0], vec![0.0, 0.0]]);
    }

    #[test]
    fn kmeans_k_equals_n() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![5.0, 5.0], vec![1.0, 0.0]];
        let r = kmeans(&pts, 4, 3, 100).unwrap();
        assert_eq!(r.wcss, 0.0);
        assert!(matches!(kmeans(&pts, 5, 1, 10), Err(EmbeddingError::InvalidK { .. })));
    }

    #[test]
    fn sgns_needs_two_words() {
        let s = vec![vec!["a".to_string(), "a".to_string()]];
        assert!(matches!(
            train_sgns(&s, &SgnsConfig::default()),
            Err(EmbeddingError::InsufficientVocabulary(1))
        ));
    }

    #[test]
    fn map_flags_ten_percent() {
        let words: Vec<String> = (0..20).map(|i| format!("w{i:02}")).collect();
        let coords: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 0.0]).collect();
        let pts = map_points(&words, &coords, &vec![0; 20]);
        let flagged: Vec<&str> = pts.iter().filter(|p| p.label_me).map(|p| p.word.as_str()).collect();
        assert_eq!(flagged, ["w00", "w19"]);
    }
}
