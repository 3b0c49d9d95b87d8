//! `pipeline run`: every analysis stage from one TOML file.
//!
//! Relative paths in the config resolve against the config file's
//! directory. Sections that are absent are skipped; `[coding]` needs at
//! least one human-coded code in the corpus.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use ethnocode_core::coder::{self, CodeRun, Prediction};
use ethnocode_core::corpus::{self, CodeSeparator, Corpus, TableConfig};
use ethnocode_core::embeddings;
use ethnocode_core::heatmap::{self, CellMode, Palette};
use ethnocode_core::semnet;
use ethnocode_core::topics::LdaConfig;
use ethnocode_review::ProjectConfig;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::code::{self as code_cmd, CoderArgs};
use crate::common::{create_dir, load_corpus, slug, write_graph, PrepArgs};
use crate::embed::{self, KMeansArgs, SgnsArgs};
use crate::heatmap::{self as heatmap_cmd, ClusterOptions};
use crate::manifest::{write_json, Run};
use crate::semnet::{self as semnet_cmd, NetworkArgs, PolicyArgs, SeedOptions};
use crate::topics::{self as topics_cmd, Level};

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Pipeline configuration (TOML)
    pub config: PathBuf,
    /// Artifact directory; overrides `out` in the config
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Unit table
    pub corpus: PathBuf,
    #[serde(default)]
    pub separator: CodeSeparator,
    /// Artifact directory
    #[serde(default = "default_out")]
    pub out: PathBuf,
    pub seed: Option<u64>,
    #[serde(default)]
    pub prep: PrepArgs,
    pub topics: Option<TopicsSection>,
    pub embeddings: Option<EmbeddingsSection>,
    pub semnet: Option<SemnetSection>,
    pub heatmap: Option<HeatmapSection>,
    pub coding: Option<CodingSection>,
}

fn default_out() -> PathBuf {
    PathBuf::from("artifacts")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopicsSection {
    pub k: usize,
    pub alpha: Option<f64>,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default)]
    pub level: Level,
    #[serde(default = "default_top")]
    pub top: usize,
}

fn default_beta() -> f64 {
    0.01
}

fn default_iterations() -> usize {
    500
}

fn default_top() -> usize {
    10
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingsSection {
    pub sgns: SgnsArgs,
    pub clusters: KMeansArgs,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SemnetSection {
    pub network: NetworkArgs,
    pub prune: Option<PolicyArgs>,
    pub collapse: bool,
    /// Seed-word network; with `expand_from_embeddings` the seeds gain
    /// neighbours from the vectors trained in `[embeddings]`.
    pub seed: Option<SeedOptions>,
    pub expand_from_embeddings: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatmapSection {
    /// Row attributes; empty means every code
    pub attributes: Vec<String>,
    pub mode: CellMode,
    pub cluster: ClusterOptions,
    pub palette: Palette,
}

impl Default for HeatmapSection {
    fn default() -> Self {
        HeatmapSection {
            attributes: Vec::new(),
            mode: CellMode::Binary,
            cluster: ClusterOptions::default(),
            palette: Palette::Blues,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodingSection {
    /// Codes to model; empty means every code in the codebook
    pub codes: Vec<String>,
    pub train_fraction: f64,
    pub target_recall: Option<f64>,
    pub classifier: CoderArgs,
    /// Name of the review project written under `review/`
    pub review_project: String,
}

impl Default for CodingSection {
    fn default() -> Self {
        CodingSection {
            codes: Vec::new(),
            train_fraction: 0.25,
            target_recall: Some(0.95),
            classifier: CoderArgs::default(),
            review_project: "review".into(),
        }
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn label(p: &Path) -> String {
    p.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

pub fn read_config(path: &Path) -> Result<Config> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn stage(name: &str) {
    eprintln!("[{name}]");
}

pub fn run(args: &RunArgs, cli_seed: Option<u64>) -> Result<()> {
    let config = read_config(&args.config)?;
    let base = args
        .config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let seed = cli_seed
        .or(config.seed)
        .unwrap_or(crate::common::DEFAULT_SEED);
    let out = match &args.out {
        Some(o) => o.clone(),
        None => resolve(&base, &config.out),
    };
    let corpus_path = resolve(&base, &config.corpus);
    let mut prep = config.prep.clone();
    prep.stopwords = prep.stopwords.map(|p| resolve(&base, &p));

    let mut run = Run::new("pipeline run", Some(seed), &config);
    run.input_named(&corpus_path, &label(&config.corpus));
    if let (Some(abs), Some(rel)) = (&prep.stopwords, &config.prep.stopwords) {
        run.input_named(abs, &label(rel));
    }

    if out.exists() {
        fs::remove_dir_all(&out).with_context(|| format!("clearing {}", out.display()))?;
    }
    create_dir(&out)?;
    let corpus = load_corpus(&corpus_path, config.separator)?;
    let table = TableConfig::with_separator(config.separator);
    corpus::save_corpus(&corpus, &out.join("corpus.csv"), &table)?;

    let mut unit_topics = None;
    if let Some(t) = &config.topics {
        stage("topics");
        let dir = out.join("topics");
        create_dir(&dir)?;
        let lda = LdaConfig {
            k: t.k,
            alpha: t.alpha,
            beta: t.beta,
            iterations: t.iterations,
            seed,
        };
        let model = topics_cmd::fit_model(&corpus, &prep, &lda, t.level)?;
        model.write_dir(&dir)?;
        topics_cmd::write_top_words(&model, t.top, &dir.join("top_words.csv"))?;
        if t.level == Level::Unit {
            unit_topics = Some(heatmap_cmd::unit_topics(&model)?);
        }
    }

    let mut vectors_path = None;
    if let Some(e) = &config.embeddings {
        stage("embeddings");
        let dir = out.join("embeddings");
        create_dir(&dir)?;
        let (tokens, _) = prep.prepare(&corpus)?;
        let vectors = embeddings::train_sgns(&tokens.unit_stems(), &e.sgns.config(seed))?;
        let path = dir.join(embed::VECTORS_FILE);
        vectors.write(&path)?;
        embed::write_clusters(&vectors, &e.clusters, seed, &dir)?;
        vectors_path = Some(path);
    }

    if let Some(s) = &config.semnet {
        stage("semnet");
        let dir = out.join("semnet");
        create_dir(&dir)?;
        let mut network = s.network.clone();
        network.annotations = network.annotations.map(|p| resolve(&base, &p));
        if let (Some(abs), Some(rel)) = (&network.annotations, &s.network.annotations) {
            run.input_named(abs, &label(rel));
        }
        let tokens = network.tokens(&corpus, &prep)?;
        let graph = semnet::build_cooccurrence(&tokens, network.scope, &network.filter()?);
        write_graph(&graph, &dir, "graph")?;
        let graph = match &s.prune {
            Some(p) => {
                let pruned = semnet::prune(&graph, p.policy()?);
                write_graph(&pruned, &dir, "pruned")?;
                pruned
            }
            None => graph,
        };
        semnet_cmd::write_communities(&graph, s.collapse, &dir)?;
        if let Some(seed_opts) = &s.seed {
            let seed_dir = dir.join("seedword");
            create_dir(&seed_dir)?;
            let mut opts = seed_opts.clone();
            if let (Some(abs), Some(rel)) = (
                opts.vectors.as_ref().map(|p| resolve(&base, p)),
                &seed_opts.vectors,
            ) {
                run.input_named(&abs, &label(rel));
                opts.vectors = Some(abs);
            }
            let trained = if s.expand_from_embeddings {
                match &vectors_path {
                    Some(p) => Some(p.as_path()),
                    None => bail!("semnet.expand_from_embeddings needs an [embeddings] section"),
                }
            } else {
                None
            };
            semnet_cmd::seed_network(&tokens, &opts, &network, trained, &seed_dir)?;
        }
    }

    if let Some(h) = &config.heatmap {
        stage("heatmap");
        let dir = out.join("heatmap");
        create_dir(&dir)?;
        let attrs = heatmap_cmd::attributes(&corpus, &h.attributes)?;
        let m = heatmap::build_matrix(&corpus, &attrs, h.mode, unit_topics.as_ref())?;
        heatmap_cmd::write_matrix(&m, &dir.join(heatmap_cmd::MATRIX_FILE))?;
        heatmap_cmd::render_into(&m, &h.cluster, h.palette, &dir)?;
    }

    if let Some(c) = &config.coding {
        stage("coding");
        let emb_path = c.classifier.embeddings.as_ref().map(|p| resolve(&base, p));
        if let (Some(abs), Some(rel)) = (&emb_path, &c.classifier.embeddings) {
            run.input_named(abs, &label(rel));
        }
        coding(&corpus, c, seed, emb_path.as_deref(), &table, &out)?;
    }

    run.finish_dir(&out)?;
    println!("artifacts written to {}", out.display());
    Ok(())
}

#[derive(Serialize)]
struct ReliabilityRow<'a> {
    code: &'a str,
    alpha: Option<f64>,
    precision: f64,
    recall: f64,
    f1: f64,
    tp: usize,
    fp: usize,
    #[serde(rename = "fn")]
    fn_: usize,
    tn: usize,
    threshold: f64,
    train_positives: usize,
    train_negatives: usize,
    queued: usize,
}

fn coding(
    corpus: &Corpus,
    section: &CodingSection,
    seed: u64,
    emb_path: Option<&Path>,
    table: &TableConfig,
    out: &Path,
) -> Result<()> {
    let codes: Vec<String> = if section.codes.is_empty() {
        corpus.codebook().iter().cloned().collect()
    } else {
        section.codes.clone()
    };
    let config = section
        .classifier
        .run_config(seed, section.train_fraction, section.target_recall);
    let tokens = coder::prepare_tokens(corpus, config.stopwords);
    let emb = code_cmd::load_embeddings(emb_path, corpus)?;
    let runs: Vec<CodeRun> = codes
        .par_iter()
        .map(|code| {
            coder::run_code(corpus, &tokens, code, &config, emb.as_ref())
                .with_context(|| format!("coding `{code}`"))
        })
        .collect::<Result<_>>()?;

    let dir = out.join("coding");
    let mut all: Vec<Prediction> = Vec::new();
    let mut rows = Vec::new();
    for r in &runs {
        let code_dir = dir.join(slug(&r.model.code));
        create_dir(&code_dir)?;
        r.model.save(&code_dir.join(code_cmd::MODEL_DIR))?;
        write_json(&code_dir.join(code_cmd::SPLIT_FILE), &r.split)?;
        write_json(&code_dir.join("report.json"), &r.report)?;
        if let Some(t) = &r.threshold {
            write_json(&code_dir.join("threshold.json"), t)?;
        }
        code_cmd::write_prediction_file(&r.predictions, &code_dir.join("predictions.csv"))?;
        write_json(&code_dir.join("queue.json"), &r.queue)?;
        code_cmd::print_report(&r.report);
        rows.push(ReliabilityRow {
            code: &r.model.code,
            alpha: r.report.alpha,
            precision: r.report.precision,
            recall: r.report.recall,
            f1: r.report.f1,
            tp: r.report.tp,
            fp: r.report.fp,
            fn_: r.report.fn_,
            tn: r.report.tn,
            threshold: r.model.threshold,
            train_positives: r.model.meta.n_positive,
            train_negatives: r.model.meta.n_negative,
            queued: r.queue.items.len(),
        });
        all.extend(r.predictions.iter().cloned());
    }
    code_cmd::write_prediction_file(&all, &dir.join("predictions.csv"))?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_path(dir.join("reliability.csv"))?;
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush()?;
    let mut coded = corpus.clone();
    coder::record_predictions(&mut coded, &all)?;
    corpus::save_corpus(&coded, &dir.join("coded.csv"), table)?;

    let project = out.join("review").join(&section.review_project);
    create_dir(&project)?;
    corpus::save_corpus(corpus, &project.join("corpus.csv"), table)?;
    code_cmd::write_prediction_file(&all, &project.join("predictions.csv"))?;
    let embeddings = match emb_path {
        Some(p) => {
            fs::copy(p, project.join("embeddings.txt"))?;
            Some("embeddings.txt".to_string())
        }
        None => None,
    };
    let project_config = ProjectConfig {
        table: table.clone(),
        codes: Some(codes),
        coder: config,
        embeddings,
        ..ProjectConfig::default()
    };
    write_json(
        &project.join(ethnocode_review::project::CONFIG_FILE),
        &project_config,
    )?;
    Ok(())
}
