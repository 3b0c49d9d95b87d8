//! Word co-occurrence networks: construction under the co-occurrence and
//! seed-word designs, pruning, Louvain communities, cluster collapse and
//! export.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use quick_xml::events::{BytesDecl, BytesEnd, BytesStart, BytesText, Event};
use quick_xml::{Reader, Writer};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embeddings::{self, WordVectors};
use crate::textprep::{self, Entity, Pos, TokenizedCorpus};

#[derive(Debug, Error)]
pub enum SemnetError {
    #[error("none of the seeds occur in the corpus")]
    SeedsAbsent,
    #[error("no seed is in the vector vocabulary")]
    NotFound,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("partition does not cover node `{0}`")]
    InvalidPartition(String),
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("graph format: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SemnetError>;

/// Co-occurrence window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Sentence,
    Unit,
    Document,
}

impl std::str::FromStr for Scope {
    type Err = SemnetError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sentence" => Ok(Scope::Sentence),
            "unit" => Ok(Scope::Unit),
            "document" => Ok(Scope::Document),
            _ => Err(SemnetError::InvalidParameter(format!("unknown scope `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenFilter {
    All,
    NounsAdjectives,
    VerbsAdverbs,
    EntitiesOnly,
    /// Keep only these stems.
    Custom(BTreeSet<String>),
}

impl TokenFilter {
    fn keeps(&self, t: &textprep::Token) -> bool {
        match self {
            TokenFilter::All => true,
            TokenFilter::NounsAdjectives => matches!(t.pos, Pos::Noun | Pos::Adj),
            TokenFilter::VerbsAdverbs => matches!(t.pos, Pos::Verb | Pos::Adv),
            TokenFilter::EntitiesOnly => t.entity != Entity::None,
            TokenFilter::Custom(set) => set.contains(&t.stem),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Design {
    Cooccurrence {
        scope: Scope,
    },
    Seedword {
        seeds: Vec<String>,
        rounds: usize,
        scope: Scope,
        threshold: u64,
    },
    Clusters,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NodeAttrs {
    pub frequency: u64,
    pub pos: Pos,
    pub entity: Entity,
    pub cluster: Option<usize>,
    /// Weight inside a collapsed cluster.
    pub intra_weight: Option<u64>,
}

/// Undirected weighted graph. Edge keys are ordered pairs `(a, b)` with
/// `a < b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemanticGraph {
    pub nodes: BTreeMap<String, NodeAttrs>,
    pub edges: BTreeMap<(String, String), u64>,
    pub design: Design,
}

fn pair(a: &str, b: &str) -> (String, String) {
    if a < b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

impl SemanticGraph {
    pub fn empty(design: Design) -> Self {
        SemanticGraph {
            nodes: BTreeMap::new(),
            edges: BTreeMap::new(),
            design,
        }
    }

    pub fn weight(&self, a: &str, b: &str) -> u64 {
        self.edges.get(&pair(a, b)).copied().unwrap_or(0)
    }

    pub fn total_weight(&self) -> u64 {
        self.edges.values().sum()
    }

    pub fn strength(&self) -> BTreeMap<&str, u64> {
        let mut s: BTreeMap<&str, u64> = self.nodes.keys().map(|k| (k.as_str(), 0)).collect();
        for ((a, b), w) in &self.edges {
            *s.get_mut(a.as_str()).expect("endpoint") += w;
            *s.get_mut(b.as_str()).expect("endpoint") += w;
        }
        s
    }

    fn drop_isolated(&mut self) {
        let connected: BTreeSet<String> = self
            .edges
            .keys()
            .flat_map(|(a, b)| [a.clone(), b.clone()])
            .collect();
        self.nodes.retain(|k, _| connected.contains(k));
    }

    /// Writes community ids into the node attributes.
    pub fn set_clusters(&mut self, clusters: &BTreeMap<String, usize>) {
        for (k, attrs) in self.nodes.iter_mut() {
            attrs.cluster = clusters.get(k).copied();
        }
    }
}

/// Distinct stems of each scope instance.
fn scope_sets(corpus: &TokenizedCorpus, scope: Scope, filter: &TokenFilter) -> Vec<BTreeSet<String>> {
    let mut out: Vec<BTreeSet<String>> = Vec::new();
    let mut last_doc: Option<&str> = None;
    for unit in &corpus.units {
        let kept = unit.tokens.iter().filter(|t| filter.keeps(t));
        match scope {
            Scope::Unit => out.push(kept.map(|t| t.stem.clone()).collect()),
            Scope::Sentence => {
                let mut by_sentence: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
                for t in kept {
                    by_sentence.entry(t.sentence).or_default().insert(t.stem.clone());
                }
                out.extend(by_sentence.into_values());
            }
            Scope::Document => {
                if last_doc != Some(unit.key.doc_id.as_str()) {
                    out.push(BTreeSet::new());
                    last_doc = Some(unit.key.doc_id.as_str());
                }
                out.last_mut().expect("pushed").extend(kept.map(|t| t.stem.clone()));
            }
        }
    }
    out
}

fn pair_counts(sets: &[BTreeSet<String>]) -> BTreeMap<(String, String), u64> {
    let mut counts = BTreeMap::new();
    for set in sets {
        let items: Vec<&String> = set.iter().collect();
        for i in 0..items.len() {
            for j in i + 1..items.len() {
                *counts.entry((items[i].clone(), items[j].clone())).or_insert(0) += 1;
            }
        }
    }
    counts
}

/// Frequency and the most frequent POS and entity class per stem.
fn node_attributes(corpus: &TokenizedCorpus, filter: &TokenFilter) -> BTreeMap<String, NodeAttrs> {
    let mut freq: BTreeMap<&str, u64> = BTreeMap::new();
    let mut pos: BTreeMap<&str, BTreeMap<Pos, u64>> = BTreeMap::new();
    let mut ent: BTreeMap<&str, BTreeMap<Entity, u64>> = BTreeMap::new();
    for t in corpus.units.iter().flat_map(|u| &u.tokens).filter(|t| filter.keeps(t)) {
        *freq.entry(&t.stem).or_default() += 1;
        *pos.entry(&t.stem).or_default().entry(t.pos).or_default() += 1;
        if t.entity != Entity::None {
            *ent.entry(&t.stem).or_default().entry(t.entity).or_default() += 1;
        }
    }
    fn majority<K: Copy + Ord>(m: Option<&BTreeMap<K, u64>>, default: K) -> K {
        m.and_then(|m| {
            m.iter()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                .map(|(k, _)| *k)
        })
        .unwrap_or(default)
    }
    freq.iter()
        .map(|(stem, f)| {
            (
                stem.to_string(),
                NodeAttrs {
                    frequency: *f,
                    pos: majority(pos.get(stem), Pos::Unk),
                    entity: majority(ent.get(stem), Entity::None),
                    cluster: None,
                    intra_weight: None,
                },
            )
        })
        .collect()
}

/// Every pair of distinct surviving stems gains one unit of weight per scope
/// instance they share.
pub fn build_cooccurrence(corpus: &TokenizedCorpus, scope: Scope, filter: &TokenFilter) -> SemanticGraph {
    SemanticGraph {
        nodes: node_attributes(corpus, filter),
        edges: pair_counts(&scope_sets(corpus, scope, filter)),
        design: Design::Cooccurrence { scope },
    }
}

/// Nodes admitted by one expansion round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub admitted: usize,
    pub total: usize,
}

/// Grows a network outward from `seeds`. Round 1 admits the seeds present in
/// the corpus plus every word co-occurring with one of them at least
/// `threshold` times; later rounds expand from the previous round's
/// admissions. Edges are the pairs of admitted words whose weight reaches
/// the threshold. `u64::MAX` acts as an infinite threshold.
pub fn build_seedword(
    corpus: &TokenizedCorpus,
    seeds: &[String],
    rounds: usize,
    scope: Scope,
    threshold: u64,
    filter: &TokenFilter,
) -> Result<(SemanticGraph, Vec<RoundReport>)> {
    if rounds == 0 {
        return Err(SemnetError::InvalidParameter("rounds must be at least 1".into()));
    }
    if seeds.is_empty() {
        return Err(SemnetError::InvalidParameter("no seeds given".into()));
    }
    if threshold == 0 {
        return Err(SemnetError::InvalidParameter("threshold must be at least 1".into()));
    }
    let attrs = node_attributes(corpus, filter);
    let counts = pair_counts(&scope_sets(corpus, scope, filter));
    let mut adjacency: BTreeMap<&str, Vec<(&str, u64)>> = BTreeMap::new();
    for ((a, b), w) in &counts {
        if *w >= threshold {
            adjacency.entry(a).or_default().push((b, *w));
            adjacency.entry(b).or_default().push((a, *w));
        }
    }
    let seed_stems: BTreeSet<String> = seeds.iter().map(|s| textprep::stem(s)).collect();
    let mut admitted: BTreeSet<String> = seed_stems
        .into_iter()
        .filter(|s| attrs.contains_key(s))
        .collect();
    if admitted.is_empty() {
        return Err(SemnetError::SeedsAbsent);
    }
    let mut frontier = admitted.clone();
    let mut reports = Vec::with_capacity(rounds);
    for round in 1..=rounds {
        let mut fresh = BTreeSet::new();
        for f in &frontier {
            for (n, _) in adjacency.get(f.as_str()).map(Vec::as_slice).unwrap_or(&[]) {
                if !admitted.contains(*n) {
                    fresh.insert(n.to_string());
                }
            }
        }
        admitted.extend(fresh.iter().cloned());
        reports.push(RoundReport {
            round,
            admitted: fresh.len(),
            total: admitted.len(),
        });
        frontier = fresh;
    }
    let edges = counts
        .into_iter()
        .filter(|((a, b), w)| *w >= threshold && admitted.contains(a) && admitted.contains(b))
        .collect();
    let nodes = attrs.into_iter().filter(|(k, _)| admitted.contains(k)).collect();
    let graph = SemanticGraph {
        nodes,
        edges,
        design: Design::Seedword {
            seeds: seeds.to_vec(),
            rounds,
            scope,
            threshold,
        },
    };
    Ok((graph, reports))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpandedSeed {
    pub word: String,
    pub original: bool,
}

/// Adds the `n_per_seed` nearest neighbours of every in-vocabulary seed.
/// Originals come first, in input order; additions follow in seed order.
pub fn expand_seeds(seeds: &[String], vectors: &WordVectors, n_per_seed: usize) -> Result<Vec<ExpandedSeed>> {
    if !seeds.iter().any(|s| vectors.get(s).is_some()) {
        return Err(SemnetError::NotFound);
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for s in seeds {
        if seen.insert(s.clone()) {
            out.push(ExpandedSeed {
                word: s.clone(),
                original: true,
            });
        }
    }
    for s in seeds {
        let Ok(near) = embeddings::neighbors(vectors, s, n_per_seed) else {
            continue;
        };
        for (w, _) in near {
            if seen.insert(w.clone()) {
                out.push(ExpandedSeed { word: w, original: false });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrunePolicy {
    MinWeight(u64),
    TopKEdges(usize),
    TopKNodesByStrength(usize),
}

/// Applies `policy`, then drops isolated nodes.
pub fn prune(graph: &SemanticGraph, policy: PrunePolicy) -> SemanticGraph {
    let mut g = graph.clone();
    match policy {
        PrunePolicy::MinWeight(w) => g.edges.retain(|_, x| *x >= w),
        PrunePolicy::TopKEdges(k) => {
            let mut ranked: Vec<(&(String, String), &u64)> = graph.edges.iter().collect();
            ranked.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
            g.edges = ranked.into_iter().take(k).map(|(p, w)| (p.clone(), *w)).collect();
        }
        PrunePolicy::TopKNodesByStrength(k) => {
            let mut ranked: Vec<(&str, u64)> = graph.strength().into_iter().collect();
            ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
            let keep: BTreeSet<String> = ranked.into_iter().take(k).map(|(n, _)| n.to_string()).collect();
            g.edges.retain(|(a, b), _| keep.contains(a) && keep.contains(b));
        }
    }
    g.drop_isolated();
    g
}

/// Newman modularity of a partition, with weights.
pub fn modularity(graph: &SemanticGraph, clusters: &BTreeMap<String, usize>) -> f64 {
    let m = graph.total_weight() as f64;
    if m == 0.0 {
        return 0.0;
    }
    let mut internal: BTreeMap<usize, f64> = BTreeMap::new();
    let mut total: BTreeMap<usize, f64> = BTreeMap::new();
    for ((a, b), w) in &graph.edges {
        let (ca, cb) = (clusters[a], clusters[b]);
        let w = *w as f64;
        *total.entry(ca).or_default() += w;
        *total.entry(cb).or_default() += w;
        if ca == cb {
            *internal.entry(ca).or_default() += w;
        }
    }
    total
        .iter()
        .map(|(c, tot)| internal.get(c).copied().unwrap_or(0.0) / m - (tot / (2.0 * m)).powi(2))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Communities {
    pub clusters: BTreeMap<String, usize>,
    pub count: usize,
    pub modularity: f64,
}

/// Weighted graph at one Louvain level. `self_loops[i]` is the weight
/// already internal to node `i`.
struct Level {
    adj: Vec<BTreeMap<usize, f64>>,
    self_loops: Vec<f64>,
}

impl Level {
    fn degree(&self, i: usize) -> f64 {
        self.adj[i].values().sum::<f64>() + 2.0 * self.self_loops[i]
    }

    /// Local moving phase. Returns a compact community id per node and
    /// whether any node moved.
    fn local_moves(&self, two_m: f64) -> (Vec<usize>, bool) {
        let n = self.adj.len();
        let k: Vec<f64> = (0..n).map(|i| self.degree(i)).collect();
        let mut comm: Vec<usize> = (0..n).collect();
        let mut tot = k.clone();
        let mut moved_any = false;
        for _pass in 0..1000 {
            let mut moved = false;
            for i in 0..n {
                let old = comm[i];
                let mut links: BTreeMap<usize, f64> = BTreeMap::new();
                for (j, w) in &self.adj[i] {
                    *links.entry(comm[*j]).or_default() += w;
                }
                tot[old] -= k[i];
                let gain = |c: usize, links: &BTreeMap<usize, f64>| {
                    links.get(&c).copied().unwrap_or(0.0) - tot[c] * k[i] / two_m
                };
                let mut best = old;
                let mut best_gain = gain(old, &links);
                for &c in links.keys() {
                    let g = gain(c, &links);
                    if g > best_gain + 1e-12 {
                        best = c;
                        best_gain = g;
                    }
                }
                tot[best] += k[i];
                comm[i] = best;
                if best != old {
                    moved = true;
                }
            }
            if !moved {
                break;
            }
            moved_any = true;
        }
        let mut renumber = BTreeMap::new();
        let compact = comm
            .iter()
            .map(|c| {
                let next = renumber.len();
                *renumber.entry(*c).or_insert(next)
            })
            .collect();
        (compact, moved_any)
    }

    fn aggregate(&self, comm: &[usize]) -> Level {
        let count = comm.iter().max().map_or(0, |m| m + 1);
        let mut adj = vec![BTreeMap::new(); count];
        let mut self_loops = vec![0.0; count];
        for (i, row) in self.adj.iter().enumerate() {
            self_loops[comm[i]] += self.self_loops[i];
            for (j, w) in row {
                let (ci, cj) = (comm[i], comm[*j]);
                if ci == cj {
                    // each internal edge is seen from both ends
                    self_loops[ci] += w / 2.0;
                } else {
                    *adj[ci].entry(cj).or_insert(0.0) += w;
                }
            }
        }
        Level { adj, self_loops }
    }
}

/// Louvain modularity maximisation. Nodes are visited in lexicographic
/// order, so the result is deterministic. Cluster 0 holds the
/// lexicographically first node.
pub fn detect_communities(graph: &SemanticGraph) -> Result<Communities> {
    if graph.nodes.is_empty() {
        return Err(SemnetError::EmptyGraph);
    }
    let names: Vec<&String> = graph.nodes.keys().collect();
    let index: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let mut adj = vec![BTreeMap::new(); names.len()];
    for ((a, b), w) in &graph.edges {
        let (i, j) = (index[a.as_str()], index[b.as_str()]);
        adj[i].insert(j, *w as f64);
        adj[j].insert(i, *w as f64);
    }
    let mut level = Level {
        adj,
        self_loops: vec![0.0; names.len()],
    };
    let two_m = 2.0 * graph.total_weight() as f64;
    let mut membership: Vec<usize> = (0..names.len()).collect();
    if two_m > 0.0 {
        loop {
            let (comm, moved) = level.local_moves(two_m);
            if !moved {
                break;
            }
            for m in membership.iter_mut() {
                *m = comm[*m];
            }
            level = level.aggregate(&comm);
        }
    }
    let mut renumber = BTreeMap::new();
    let clusters: BTreeMap<String, usize> = names
        .iter()
        .zip(&membership)
        .map(|(n, c)| {
            let next = renumber.len();
            ((*n).clone(), *renumber.entry(*c).or_insert(next))
        })
        .collect();
    let modularity = modularity(graph, &clusters);
    Ok(Communities {
        count: renumber.len(),
        clusters,
        modularity,
    })
}

pub fn cluster_node_name(id: usize) -> String {
    format!("cluster_{id}")
}

/// One node per cluster. Crossing weights are summed into inter-cluster
/// edges; internal weight is kept as `intra_weight`.
pub fn collapse_clusters(graph: &SemanticGraph, clusters: &BTreeMap<String, usize>) -> Result<SemanticGraph> {
    for n in graph.nodes.keys() {
        if !clusters.contains_key(n) {
            return Err(SemnetError::InvalidPartition(n.clone()));
        }
    }
    let mut nodes: BTreeMap<String, NodeAttrs> = BTreeMap::new();
    for (n, attrs) in &graph.nodes {
        let id = clusters[n];
        let entry = nodes.entry(cluster_node_name(id)).or_insert_with(|| NodeAttrs {
            cluster: Some(id),
            intra_weight: Some(0),
            ..NodeAttrs::default()
        });
        entry.frequency += attrs.frequency;
    }
    let mut edges = BTreeMap::new();
    for ((a, b), w) in &graph.edges {
        let (ca, cb) = (clusters[a], clusters[b]);
        if ca == cb {
            *nodes
                .get_mut(&cluster_node_name(ca))
                .expect("cluster node")
                .intra_weight
                .get_or_insert(0) += w;
        } else {
            *edges
                .entry(pair(&cluster_node_name(ca), &cluster_node_name(cb)))
                .or_insert(0) += w;
        }
    }
    Ok(SemanticGraph {
        nodes,
        edges,
        design: Design::Clusters,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphFormat {
    EdgeListCsv,
    Graphml,
    Dot,
}

impl GraphFormat {
    pub fn for_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "csv" => Some(GraphFormat::EdgeListCsv),
            "graphml" => Some(GraphFormat::Graphml),
            "dot" | "gv" => Some(GraphFormat::Dot),
            _ => None,
        }
    }
}

pub fn write_edge_list<W: Write>(graph: &SemanticGraph, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(writer);
    w.write_record(["source", "target", "weight"])?;
    for ((a, b), weight) in &graph.edges {
        w.write_record([a.as_str(), b.as_str(), &weight.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn xml_err<E: std::fmt::Display>(e: E) -> SemnetError {
    SemnetError::Format(e.to_string())
}

const GRAPHML_KEYS: [(&str, &str, &str); 7] = [
    ("design", "graph", "string"),
    ("frequency", "node", "long"),
    ("pos", "node", "string"),
    ("entity", "node", "string"),
    ("cluster", "node", "long"),
    ("intra_weight", "node", "long"),
    ("weight", "edge", "long"),
];

pub fn to_graphml(graph: &SemanticGraph) -> Result<String> {
    let mut w = Writer::new_with_indent(Vec::new(), b' ', 2);
    w.write_event(Event::Decl(BytesDecl::new("1.0", Some("UTF-8"), None)))
        .map_err(xml_err)?;
    w.write_event(Event::Start(
        BytesStart::new("graphml").with_attributes([("xmlns", "http://graphml.graphdrawing.org/xmlns")]),
    ))
    .map_err(xml_err)?;
    for (id, domain, ty) in GRAPHML_KEYS {
        w.write_event(Event::Empty(BytesStart::new("key").with_attributes([
            ("id", id),
            ("for", domain),
            ("attr.name", id),
            ("attr.type", ty),
        ])))
        .map_err(xml_err)?;
    }
    w.write_event(Event::Start(
        BytesStart::new("graph").with_attributes([("id", "G"), ("edgedefault", "undirected")]),
    ))
    .map_err(xml_err)?;
    let data = |w: &mut Writer<Vec<u8>>, key: &str, value: &str| -> Result<()> {
        w.write_event(Event::Start(BytesStart::new("data").with_attributes([("key", key)])))
            .map_err(xml_err)?;
        w.write_event(Event::Text(BytesText::new(value))).map_err(xml_err)?;
        w.write_event(Event::End(BytesEnd::new("data"))).map_err(xml_err)?;
        Ok(())
    };
    let design = serde_json::to_string(&graph.design).map_err(xml_err)?;
    data(&mut w, "design", &design)?;
    for (id, a) in &graph.nodes {
        w.write_event(Event::Start(BytesStart::new("node").with_attributes([("id", id.as_str())])))
            .map_err(xml_err)?;
        data(&mut w, "frequency", &a.frequency.to_string())?;
        data(&mut w, "pos", &a.pos.to_string())?;
        data(&mut w, "entity", &a.entity.to_string())?;
        if let Some(c) = a.cluster {
            data(&mut w, "cluster", &c.to_string())?;
        }
        if let Some(iw) = a.intra_weight {
            data(&mut w, "intra_weight", &iw.to_string())?;
        }
        w.write_event(Event::End(BytesEnd::new("node"))).map_err(xml_err)?;
    }
    for ((s, t), weight) in &graph.edges {
        w.write_event(Event::Start(
            BytesStart::new("edge").with_attributes([("source", s.as_str()), ("target", t.as_str())]),
        ))
        .map_err(xml_err)?;
        data(&mut w, "weight", &weight.to_string())?;
        w.write_event(Event::End(BytesEnd::new("edge"))).map_err(xml_err)?;
    }
    w.write_event(Event::End(BytesEnd::new("graph"))).map_err(xml_err)?;
    w.write_event(Event::End(BytesEnd::new("graphml"))).map_err(xml_err)?;
    let mut out = String::from_utf8(w.into_inner()).map_err(xml_err)?;
    out.push('\n');
    Ok(out)
}

enum Owner {
    Graph,
    Node(String),
    Edge(String, String),
}

/// Reads GraphML written by [`to_graphml`].
pub fn from_graphml(text: &str) -> Result<SemanticGraph> {
    let mut reader = Reader::from_str(text);
    reader.config_mut().trim_text(true);
    let mut design = None;
    let mut nodes = BTreeMap::new();
    let mut edges = BTreeMap::new();
    let mut owner = Owner::Graph;
    let mut key: Option<String> = None;
    let mut edge_weight = None;
    let attr = |e: &BytesStart, name: &str| -> Result<String> {
        let a = e
            .try_get_attribute(name)
            .map_err(xml_err)?
            .ok_or_else(|| SemnetError::Format(format!("missing attribute `{name}`")))?;
        Ok(a.unescape_value().map_err(xml_err)?.into_owned())
    };
    loop {
        match reader.read_event().map_err(xml_err)? {
            Event::Start(e) | Event::Empty(e) => match e.name().as_ref() {
                b"node" => {
                    let id = attr(&e, "id")?;
                    nodes.insert(id.clone(), NodeAttrs::default());
                    owner = Owner::Node(id);
                }
                b"edge" => {
                    owner = Owner::Edge(attr(&e, "source")?, attr(&e, "target")?);
                    edge_weight = None;
                }
                b"data" => key = Some(attr(&e, "key")?),
                _ => {}
            },
            Event::Text(t) => {
                let value = t.unescape().map_err(xml_err)?.into_owned();
                let Some(k) = key.as_deref() else { continue };
                let num = || value.parse::<u64>().map_err(xml_err);
                match &owner {
                    Owner::Graph if k == "design" => {
                        design = Some(serde_json::from_str(&value).map_err(xml_err)?)
                    }
                    Owner::Node(id) => {
                        let a = nodes.get_mut(id).expect("node inserted");
                        match k {
                            "frequency" => a.frequency = num()?,
                            "pos" => a.pos = value.parse().map_err(xml_err)?,
                            "entity" => a.entity = value.parse().map_err(xml_err)?,
                            "cluster" => a.cluster = Some(num()? as usize),
                            "intra_weight" => a.intra_weight = Some(num()?),
                            _ => {}
                        }
                    }
                    Owner::Edge(..) if k == "weight" => edge_weight = Some(num()?),
                    _ => {}
                }
            }
            Event::End(e) => match e.name().as_ref() {
                b"data" => key = None,
                b"node" => owner = Owner::Graph,
                b"edge" => {
                    if let Owner::Edge(s, t) = &owner {
                        let w = edge_weight.ok_or_else(|| SemnetError::Format("edge without weight".into()))?;
                        edges.insert(pair(s, t), w);
                    }
                    owner = Owner::Graph;
                }
                _ => {}
            },
            Event::Eof => break,
            _ => {}
        }
    }
    for (a, b) in edges.keys() {
        if !nodes.contains_key(a) || !nodes.contains_key(b) {
            return Err(SemnetError::Format(format!("edge {a}--{b} names a missing node")));
        }
    }
    Ok(SemanticGraph {
        nodes,
        edges,
        design: design.ok_or_else(|| SemnetError::Format("missing design".into()))?,
    })
}

fn dot_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

pub fn to_dot(graph: &SemanticGraph) -> String {
    let mut out = String::from("graph G {\n");
    for (id, a) in &graph.nodes {
        out.push_str(&format!("  {} [frequency={}", dot_quote(id), a.frequency));
        if let Some(c) = a.cluster {
            out.push_str(&format!(", cluster={c}"));
        }
        if let Some(iw) = a.intra_weight {
            out.push_str(&format!(", intra_weight={iw}"));
        }
        out.push_str("];\n");
    }
    for ((s, t), w) in &graph.edges {
        out.push_str(&format!("  {} -- {} [weight={w}];\n", dot_quote(s), dot_quote(t)));
    }
    out.push_str("}\n");
    out
}

pub fn export_graph(graph: &SemanticGraph, format: GraphFormat, path: &Path) -> Result<()> {
    match format {
        GraphFormat::EdgeListCsv => write_edge_list(graph, fs::File::create(path)?),
        GraphFormat::Graphml => Ok(fs::write(path, to_graphml(graph)?)?),
        GraphFormat::Dot => Ok(fs::write(path, to_dot(graph))?),
    }
}

pub fn read_graph(path: &Path) -> Result<SemanticGraph> {
    from_graphml(&fs::read_to_string(path)?)
}
