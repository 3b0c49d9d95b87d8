use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use clap::{Args, Subcommand};
use ethnocode_core::embeddings::{self, KMeansResult, SgnsConfig, WordVectors};
use serde::{Deserialize, Serialize};

use crate::common::{create_dir, load_corpus, CorpusArgs, PrepArgs};
use crate::manifest::{write_json, Run};

pub const VECTORS_FILE: &str = "vectors.txt";

#[derive(Debug, Subcommand)]
pub enum EmbedCommand {
    /// Train skip-gram vectors on the corpus
    Train(TrainArgs),
    /// Load pretrained word vectors or a unit-embedding sidecar
    Load(LoadArgs),
    /// Project vectors to a few dimensions by truncated SVD
    Project(ProjectArgs),
    /// k-means clusters of the vectors, with a 2-D map
    Cluster(ClusterArgs),
    /// Nearest neighbours of a word by cosine similarity
    Neighbors(NeighborsArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgnsArgs {
    #[arg(long, default_value_t = 50)]
    pub dim: usize,
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    #[arg(long, default_value_t = 5)]
    pub negatives: usize,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.025)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 1)]
    pub min_count: usize,
    /// Frequent-word subsampling threshold
    #[arg(long)]
    pub subsample: Option<f64>,
}

impl Default for SgnsArgs {
    fn default() -> Self {
        let d = SgnsConfig::default();
        SgnsArgs {
            dim: d.dim,
            window: d.window,
            negatives: d.negatives,
            epochs: d.epochs,
            learning_rate: d.learning_rate,
            min_count: d.min_count,
            subsample: d.subsample,
        }
    }
}

impl SgnsArgs {
    pub fn config(&self, seed: u64) -> SgnsConfig {
        SgnsConfig {
            dim: self.dim,
            window: self.window,
            negatives: self.negatives,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            seed,
            min_count: self.min_count,
            subsample: self.subsample,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub prep: PrepArgs,
    #[command(flatten)]
    pub sgns: SgnsArgs,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn train(args: &TrainArgs, seed: u64) -> Result<()> {
    let corpus = args.corpus.load()?;
    let (tokens, _) = args.prep.prepare(&corpus)?;
    let vectors = embeddings::train_sgns(&tokens.unit_stems(), &args.sgns.config(seed))?;
    create_dir(&args.out)?;
    vectors.write(&args.out.join(VECTORS_FILE))?;
    eprintln!("{} words, dimension {}", vectors.len(), vectors.dim);
    Run::new("embed train", Some(seed), args)
        .input(&args.corpus.corpus)
        .inputs(&args.prep.files())
        .finish_dir(&args.out)
}

#[derive(Debug, Args, Serialize)]
pub struct LoadArgs {
    /// Word vectors in text format (`count dim` header optional)
    #[arg(long, conflicts_with = "units")]
    pub vectors: Option<PathBuf>,
    /// Unit embeddings (`doc_id reference v1 .. vd`), aligned with --corpus
    #[arg(long, requires = "corpus")]
    pub units: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, default_value = "newline")]
    pub separator: ethnocode_core::corpus::CodeSeparator,
    /// Free-text note on where the unit vectors came from
    #[arg(long, default_value = "external")]
    pub provenance: String,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn load(args: &LoadArgs) -> Result<()> {
    create_dir(&args.out)?;
    let mut run = Run::new("embed load", None, args);
    match (&args.vectors, &args.units, &args.corpus) {
        (Some(path), None, _) => {
            let vectors = embeddings::load_vectors(path)?;
            vectors.write(&args.out.join(VECTORS_FILE))?;
            eprintln!("{} words, dimension {}", vectors.len(), vectors.dim);
            run.input(path);
        }
        (None, Some(path), Some(corpus_path)) => {
            let corpus = load_corpus(corpus_path, args.separator)?;
            let units = embeddings::load_unit_embeddings(path, &corpus, &args.provenance)?;
            if units.coverage.warning {
                eprintln!(
                    "warning: only {} of {} units have a vector",
                    units.coverage.matched, units.coverage.corpus_units
                );
            }
            write_json(&args.out.join("coverage.json"), &units.coverage)?;
            run.input(path).input(corpus_path);
        }
        _ => bail!("give either --vectors or --units with --corpus"),
    }
    run.finish_dir(&args.out)
}

fn write_coords(path: &Path, words: &[String], coords: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_path(path)?;
    let dims = coords.first().map_or(0, Vec::len);
    let mut header = vec!["word".to_string()];
    header.extend((1..=dims).map(|i| format!("dim{i}")));
    w.write_record(&header)?;
    for (word, row) in words.iter().zip(coords) {
        let mut rec = vec![word.clone()];
        rec.extend(row.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct ProjectArgs {
    #[arg(long)]
    pub vectors: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn project(args: &ProjectArgs) -> Result<()> {
    let vectors = embeddings::load_vectors(&args.vectors)?;
    let svd = embeddings::project_svd(&vectors.matrix, args.dim)?;
    create_dir(&args.out)?;
    write_coords(&args.out.join("coords.csv"), &vectors.words, &svd.coords)?;
    write_json(&args.out.join("singular_values.json"), &svd.singular_values)?;
    Run::new("embed project", None, args)
        .input(&args.vectors)
        .finish_dir(&args.out)
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KMeansArgs {
    #[arg(long, default_value_t = 8)]
    pub k: usize,
    #[arg(long, default_value_t = 100)]
    pub max_iters: usize,
    /// Central words listed per cluster
    #[arg(long, default_value_t = 10)]
    pub top: usize,
}

impl Default for KMeansArgs {
    fn default() -> Self {
        KMeansArgs {
            k: 8,
            max_iters: 100,
            top: 10,
        }
    }
}

#[derive(Serialize)]
struct ClusterSummary<'a> {
    k: usize,
    wcss: f64,
    iterations: usize,
    central_words: &'a [Vec<String>],
}

/// Writes clusters.csv, clusters.json and, when the vectors have more than
/// two dimensions, map.csv.
pub fn write_clusters(
    vectors: &WordVectors,
    args: &KMeansArgs,
    seed: u64,
    dir: &Path,
) -> Result<KMeansResult> {
    let result = embeddings::kmeans(&vectors.matrix, args.k, seed, args.max_iters)?;
    let central = embeddings::central_words(vectors, &result, args.top);
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_path(dir.join("clusters.csv"))?;
    w.write_record(["word", "cluster"])?;
    for (word, c) in vectors.words.iter().zip(&result.assignments) {
        w.write_record([word.as_str(), &c.to_string()])?;
    }
    w.flush()?;
    write_json(
        &dir.join("clusters.json"),
        &ClusterSummary {
            k: args.k,
            wcss: result.wcss,
            iterations: result.iterations,
            central_words: &central,
        },
    )?;
    if vectors.dim > 2 {
        let svd = embeddings::project_svd(&vectors.matrix, 2)?;
        let points = embeddings::map_points(&vectors.words, &svd.coords, &result.assignments);
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_path(dir.join("map.csv"))?;
        for p in points {
            w.serialize(p)?;
        }
        w.flush()?;
    }
    Ok(result)
}

#[derive(Debug, Args, Serialize)]
pub struct ClusterArgs {
    #[arg(long)]
    pub vectors: PathBuf,
    #[command(flatten)]
    pub kmeans: KMeansArgs,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cluster(args: &ClusterArgs, seed: u64) -> Result<()> {
    let vectors = embeddings::load_vectors(&args.vectors)?;
    create_dir(&args.out)?;
    let result = write_clusters(&vectors, &args.kmeans, seed, &args.out)?;
    eprintln!(
        "k={} wcss={:.4} after {} iterations",
        args.kmeans.k, result.wcss, result.iterations
    );
    Run::new("embed cluster", Some(seed), args)
        .input(&args.vectors)
        .finish_dir(&args.out)
}

#[derive(Debug, Args, Serialize)]
pub struct NeighborsArgs {
    #[arg(long)]
    pub vectors: PathBuf,
    #[arg(long)]
    pub word: String,
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    /// Also write neighbors.csv here
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn neighbors(args: &NeighborsArgs) -> Result<()> {
    let vectors = embeddings::load_vectors(&args.vectors)?;
    let near = embeddings::neighbors(&vectors, &args.word, args.n)?;
    for (w, s) in &near {
        println!("{w}\t{s:.6}");
    }
    if let Some(out) = &args.out {
        create_dir(out)?;
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_path(out.join("neighbors.csv"))?;
        w.write_record(["word", "cosine"])?;
        for (word, s) in &near {
            w.write_record([word.as_str(), &s.to_string()])?;
        }
        w.flush()?;
        Run::new("embed neighbors", None, args)
            .input(&args.vectors)
            .finish_dir(out)?;
    }
    Ok(())
}
