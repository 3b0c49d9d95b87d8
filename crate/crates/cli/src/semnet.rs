use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use clap::{ArgGroup, Args, Subcommand};
use ethnocode_core::corpus::Corpus;
use ethnocode_core::embeddings;
use ethnocode_core::semnet::{self, Communities, PrunePolicy, Scope, SemanticGraph};
use ethnocode_core::textprep::{self, AnnotationSource, TokenizedCorpus};
use serde::{Deserialize, Serialize};

use crate::common::{
    create_dir, split_list, write_graph, CorpusArgs, FilterArg, FormatArg, PrepArgs,
};
use crate::manifest::{write_json, Run};

#[derive(Debug, Subcommand)]
pub enum SemnetCommand {
    /// Co-occurrence network of the whole vocabulary
    Build(BuildArgs),
    /// Network grown outward from seed words
    Seed(SeedArgs),
    /// Drop weak edges or nodes
    Prune(PruneArgs),
    /// Louvain communities, optionally collapsed to one node each
    Communities(CommunitiesArgs),
    /// Convert a graph to CSV, GraphML or DOT
    Export(ExportArgs),
}

/// Token selection shared by `build` and `seed`.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkArgs {
    /// sentence, unit or document
    #[arg(long, default_value = "unit", value_parser = parse_scope)]
    pub scope: Scope,
    #[arg(long, value_enum, default_value = "all")]
    pub filter: FilterArg,
    /// Stems kept by the custom filter (comma separated)
    #[arg(long = "keep")]
    pub keep: Vec<String>,
    /// POS/entity sidecar CSV overriding the builtin lexicon
    #[arg(long)]
    pub annotations: Option<PathBuf>,
}

impl Default for NetworkArgs {
    fn default() -> Self {
        NetworkArgs {
            scope: Scope::Unit,
            filter: FilterArg::All,
            keep: Vec::new(),
            annotations: None,
        }
    }
}

fn parse_scope(s: &str) -> Result<Scope, String> {
    s.parse().map_err(|e: semnet::SemnetError| e.to_string())
}

impl NetworkArgs {
    pub fn tokens(&self, corpus: &Corpus, prep: &PrepArgs) -> Result<TokenizedCorpus> {
        let (tokens, _) = prep.prepare(corpus)?;
        let rows;
        let source = match &self.annotations {
            Some(path) => {
                rows = textprep::read_sidecar(path)?;
                AnnotationSource::Sidecar(&rows)
            }
            None => AnnotationSource::BuiltinLexicon,
        };
        Ok(textprep::annotate(&tokens, source)?)
    }

    pub fn filter(&self) -> Result<semnet::TokenFilter> {
        self.filter.build(&split_list(&self.keep))
    }

    pub fn files(&self) -> Vec<PathBuf> {
        self.annotations.iter().cloned().collect()
    }
}

#[derive(Debug, Args, Serialize)]
pub struct BuildArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub prep: PrepArgs,
    #[command(flatten)]
    pub network: NetworkArgs,
    #[arg(long)]
    pub out: PathBuf,
}

fn summary(g: &SemanticGraph) {
    eprintln!("{} nodes, {} edges", g.nodes.len(), g.edges.len());
}

pub fn build(args: &BuildArgs) -> Result<()> {
    let corpus = args.corpus.load()?;
    let tokens = args.network.tokens(&corpus, &args.prep)?;
    let graph = semnet::build_cooccurrence(&tokens, args.network.scope, &args.network.filter()?);
    summary(&graph);
    write_graph(&graph, &args.out, "graph")?;
    Run::new("semnet build", None, args)
        .input(&args.corpus.corpus)
        .inputs(&args.prep.files())
        .inputs(&args.network.files())
        .finish_dir(&args.out)
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedOptions {
    /// Seed words (comma separated or repeated)
    #[arg(long = "seeds", required = true)]
    pub seeds: Vec<String>,
    #[arg(long, default_value_t = 2)]
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    /// Minimum co-occurrence count for admission
    #[arg(long, default_value_t = 2)]
    #[serde(default = "default_threshold")]
    pub threshold: u64,
    /// Word vectors used to add neighbours of each seed
    #[arg(long)]
    #[serde(default)]
    pub vectors: Option<PathBuf>,
    /// Neighbours added per seed when --vectors is given
    #[arg(long, default_value_t = 3)]
    #[serde(default = "default_expand")]
    pub expand: usize,
}

fn default_rounds() -> usize {
    2
}

fn default_threshold() -> u64 {
    2
}

fn default_expand() -> usize {
    3
}

/// Builds the seed-word network and writes graph files, rounds.json and
/// seeds.json into `dir`. `vectors` overrides the vectors path option.
pub fn seed_network(
    tokens: &TokenizedCorpus,
    options: &SeedOptions,
    network: &NetworkArgs,
    vectors: Option<&Path>,
    dir: &Path,
) -> Result<SemanticGraph> {
    let mut seeds = split_list(&options.seeds);
    if let Some(path) = vectors.or(options.vectors.as_deref()) {
        let v = embeddings::load_vectors(path)?;
        let stems: Vec<String> = seeds.iter().map(|s| textprep::stem(s)).collect();
        let expanded = semnet::expand_seeds(&stems, &v, options.expand)?;
        write_json(&dir.join("seeds.json"), &expanded)?;
        seeds = expanded.into_iter().map(|e| e.word).collect();
    } else {
        write_json(&dir.join("seeds.json"), &seeds)?;
    }
    let (graph, rounds) = semnet::build_seedword(
        tokens,
        &seeds,
        options.rounds,
        network.scope,
        options.threshold,
        &network.filter()?,
    )?;
    write_json(&dir.join("rounds.json"), &rounds)?;
    write_graph(&graph, dir, "graph")?;
    Ok(graph)
}

#[derive(Debug, Args, Serialize)]
pub struct SeedArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub prep: PrepArgs,
    #[command(flatten)]
    pub network: NetworkArgs,
    #[command(flatten)]
    pub seed: SeedOptions,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn seed(args: &SeedArgs) -> Result<()> {
    let corpus = args.corpus.load()?;
    let tokens = args.network.tokens(&corpus, &args.prep)?;
    create_dir(&args.out)?;
    let graph = seed_network(&tokens, &args.seed, &args.network, None, &args.out)?;
    summary(&graph);
    Run::new("semnet seed", None, args)
        .input(&args.corpus.corpus)
        .inputs(&args.prep.files())
        .inputs(&args.network.files())
        .inputs(&args.seed.vectors.iter().cloned().collect::<Vec<_>>())
        .finish_dir(&args.out)
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, Default)]
#[command(group(ArgGroup::new("policy").required(true)))]
#[serde(deny_unknown_fields)]
pub struct PolicyArgs {
    /// Keep edges of at least this weight
    #[arg(long, group = "policy")]
    pub min_weight: Option<u64>,
    /// Keep the heaviest K edges
    #[arg(long, group = "policy")]
    pub top_edges: Option<usize>,
    /// Keep the K nodes of highest weighted degree
    #[arg(long, group = "policy")]
    pub top_nodes: Option<usize>,
}

impl PolicyArgs {
    pub fn policy(&self) -> Result<PrunePolicy> {
        Ok(match (self.min_weight, self.top_edges, self.top_nodes) {
            (Some(w), None, None) => PrunePolicy::MinWeight(w),
            (None, Some(k), None) => PrunePolicy::TopKEdges(k),
            (None, None, Some(k)) => PrunePolicy::TopKNodesByStrength(k),
            _ => bail!("give exactly one of min_weight, top_edges, top_nodes"),
        })
    }
}

#[derive(Debug, Args, Serialize)]
pub struct PruneArgs {
    /// GraphML file
    #[arg(long)]
    pub graph: PathBuf,
    #[command(flatten)]
    pub policy: PolicyArgs,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn prune(args: &PruneArgs) -> Result<()> {
    let graph = semnet::read_graph(&args.graph)?;
    let pruned = semnet::prune(&graph, args.policy.policy()?);
    summary(&pruned);
    write_graph(&pruned, &args.out, "graph")?;
    Run::new("semnet prune", None, args)
        .input(&args.graph)
        .finish_dir(&args.out)
}

/// Writes communities.csv and communities.json, the graph with cluster
/// attributes, and optionally the collapsed cluster graph.
pub fn write_communities(graph: &SemanticGraph, collapse: bool, dir: &Path) -> Result<Communities> {
    let communities = semnet::detect_communities(graph)?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_path(dir.join("communities.csv"))?;
    w.write_record(["node", "cluster"])?;
    for (node, c) in &communities.clusters {
        w.write_record([node.as_str(), &c.to_string()])?;
    }
    w.flush()?;
    write_json(&dir.join("communities.json"), &communities)?;
    let mut labelled = graph.clone();
    labelled.set_clusters(&communities.clusters);
    write_graph(&labelled, dir, "clustered")?;
    if collapse {
        let collapsed = semnet::collapse_clusters(graph, &communities.clusters)?;
        write_graph(&collapsed, dir, "collapsed")?;
    }
    Ok(communities)
}

#[derive(Debug, Args, Serialize)]
pub struct CommunitiesArgs {
    #[arg(long)]
    pub graph: PathBuf,
    /// Also write the graph with one node per community
    #[arg(long)]
    pub collapse: bool,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn communities(args: &CommunitiesArgs) -> Result<()> {
    let graph = semnet::read_graph(&args.graph)?;
    create_dir(&args.out)?;
    let c = write_communities(&graph, args.collapse, &args.out)?;
    eprintln!("{} communities, modularity {:.6}", c.count, c.modularity);
    Run::new("semnet communities", None, args)
        .input(&args.graph)
        .finish_dir(&args.out)
}

#[derive(Debug, Args, Serialize)]
pub struct ExportArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, value_enum)]
    pub format: FormatArg,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn export(args: &ExportArgs) -> Result<()> {
    let graph = semnet::read_graph(&args.graph)?;
    create_dir(&args.out)?;
    let path = args.out.join(format!("graph.{}", args.format.extension()));
    semnet::export_graph(&graph, args.format.format(), &path)?;
    Run::new("semnet export", None, args)
        .input(&args.graph)
        .finish_dir(&args.out)
}
