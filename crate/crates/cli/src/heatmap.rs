use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Subcommand, ValueEnum};
use ethnocode_core::corpus::{Corpus, UnitKey};
use ethnocode_core::heatmap::{
    self, Attribute, AttributeMatrix, Axis, CellMode, Dendrogram, Metric, Palette,
};
use ethnocode_core::topics::TopicModel;
use serde::{Deserialize, Serialize};

use crate::common::{create_dir, split_list, CorpusArgs, LinkageArg, MetricArg};
use crate::manifest::{write_json, Run};

pub const MATRIX_FILE: &str = "matrix.csv";

#[derive(Debug, Subcommand)]
pub enum HeatmapCommand {
    /// Attribute-by-respondent matrix
    Build(BuildArgs),
    /// Hierarchical clustering of matrix rows or columns
    Cluster(ClusterArgs),
    /// SVG heatmap ordered by the dendrograms
    Render(RenderArgs),
}

fn parse_mode(s: &str) -> Result<CellMode, String> {
    s.parse().map_err(|e: heatmap::HeatmapError| e.to_string())
}

fn parse_palette(s: &str) -> Result<Palette, String> {
    s.parse().map_err(|e: heatmap::HeatmapError| e.to_string())
}

/// Dominant topic per unit from a model fitted at unit level.
pub fn unit_topics(model: &TopicModel) -> Result<BTreeMap<UnitKey, usize>> {
    model
        .doc_ids
        .iter()
        .zip(model.dominant_topics())
        .map(|(id, t)| {
            let key: UnitKey = id.parse().map_err(|_| {
                anyhow::anyhow!(
                    "topic model document `{id}` is not a unit key; fit with --level unit"
                )
            })?;
            Ok((key, t))
        })
        .collect()
}

/// Parses attribute specs; an empty list means every code in the codebook.
pub fn attributes(corpus: &Corpus, specs: &[String]) -> Result<Vec<Attribute>> {
    let specs = split_list(specs);
    if specs.is_empty() {
        return Ok(corpus
            .codebook()
            .iter()
            .map(|c| Attribute::Code(c.clone()))
            .collect());
    }
    specs.iter().map(|s| Ok(s.parse()?)).collect()
}

pub fn write_matrix(m: &AttributeMatrix, path: &Path) -> Result<()> {
    let file = fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
    m.write_csv(file)?;
    Ok(())
}

pub fn read_matrix(path: &Path, mode: CellMode) -> Result<AttributeMatrix> {
    let file = fs::File::open(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(AttributeMatrix::read_csv(file, mode)?)
}

#[derive(Debug, Args, Serialize)]
pub struct BuildArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub corpus: CorpusArgs,
    /// Row attributes: `code:NAME`, `meta:KEY[=VALUE]`, `topic:N` or a bare code
    #[arg(long = "attr")]
    pub attributes: Vec<String>,
    /// binary, count or proportion
    #[arg(long, default_value = "binary", value_parser = parse_mode)]
    pub mode: CellMode,
    /// Unit-level topic model directory, for `topic:` rows
    #[arg(long)]
    pub topics: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn build(args: &BuildArgs) -> Result<()> {
    let corpus = args.corpus.load()?;
    let topics = match &args.topics {
        Some(dir) => Some(unit_topics(&TopicModel::read_dir(dir)?)?),
        None => None,
    };
    let attrs = attributes(&corpus, &args.attributes)?;
    let m = heatmap::build_matrix(&corpus, &attrs, args.mode, topics.as_ref())?;
    create_dir(&args.out)?;
    write_matrix(&m, &args.out.join(MATRIX_FILE))?;
    eprintln!(
        "{} attributes x {} respondents",
        m.rows.len(),
        m.columns.len()
    );
    let mut run = Run::new("heatmap build", None, args);
    run.input(&args.corpus.corpus);
    if let Some(dir) = &args.topics {
        run.input(dir);
    }
    run.finish_dir(&args.out)
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum AxisArg {
    Rows,
    Columns,
    Both,
}

impl AxisArg {
    fn axes(self) -> Vec<(Axis, &'static str)> {
        match self {
            AxisArg::Rows => vec![(Axis::Rows, "rows")],
            AxisArg::Columns => vec![(Axis::Columns, "columns")],
            AxisArg::Both => vec![(Axis::Rows, "rows"), (Axis::Columns, "columns")],
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterOptions {
    #[arg(long, value_enum, default_value = "average")]
    pub linkage: LinkageArg,
    /// Defaults to Jaccard for binary matrices, Euclidean otherwise
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,
    /// Also write flat clusters from cutting the tree into K groups
    #[arg(long)]
    pub cut: Option<usize>,
}

impl Default for ClusterOptions {
    fn default() -> Self {
        ClusterOptions {
            linkage: LinkageArg::Average,
            metric: None,
            cut: None,
        }
    }
}

impl ClusterOptions {
    pub fn metric(&self, mode: CellMode) -> Metric {
        self.metric
            .map_or_else(|| Metric::default_for(mode), Into::into)
    }
}

/// Writes `<name>_dendrogram.json`, `<name>.nwk` and, with a cut,
/// `<name>_clusters.csv`.
pub fn write_dendrogram(
    m: &AttributeMatrix,
    axis: Axis,
    name: &str,
    opts: &ClusterOptions,
    dir: &Path,
) -> Result<Dendrogram> {
    let d = heatmap::cluster_axis(m, axis, opts.linkage.into(), opts.metric(m.mode))?;
    write_json(&dir.join(format!("{name}_dendrogram.json")), &d.to_json())?;
    fs::write(dir.join(format!("{name}.nwk")), d.to_newick() + "\n")?;
    if let Some(k) = opts.cut {
        let labels = d.cut(k)?;
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_path(dir.join(format!("{name}_clusters.csv")))?;
        w.write_record(["item", "cluster"])?;
        for (item, c) in d.items.iter().zip(labels) {
            w.write_record([item.as_str(), &c.to_string()])?;
        }
        w.flush()?;
    }
    Ok(d)
}

#[derive(Debug, Args, Serialize)]
pub struct ClusterArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    /// Cell mode the matrix was built with
    #[arg(long, default_value = "binary", value_parser = parse_mode)]
    pub mode: CellMode,
    #[arg(long, value_enum, default_value = "both")]
    pub axis: AxisArg,
    #[command(flatten)]
    pub options: ClusterOptions,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cluster(args: &ClusterArgs) -> Result<()> {
    let m = read_matrix(&args.matrix, args.mode)?;
    create_dir(&args.out)?;
    for (axis, name) in args.axis.axes() {
        write_dendrogram(&m, axis, name, &args.options, &args.out)?;
    }
    Run::new("heatmap cluster", None, args)
        .input(&args.matrix)
        .finish_dir(&args.out)
}

/// Clusters both axes and writes heatmap.svg and the reordered heatmap.csv.
pub fn render_into(
    m: &AttributeMatrix,
    opts: &ClusterOptions,
    palette: Palette,
    dir: &Path,
) -> Result<()> {
    let order = |axis: Axis, name: &str, n: usize| -> Result<Vec<usize>> {
        if n < 2 {
            return Ok((0..n).collect());
        }
        Ok(write_dendrogram(m, axis, name, opts, dir)?.leaf_order())
    };
    let rows = order(Axis::Rows, "rows", m.rows.len())?;
    let cols = order(Axis::Columns, "columns", m.columns.len())?;
    let r = heatmap::render_heatmap(m, &rows, &cols, palette)?;
    fs::write(dir.join("heatmap.svg"), r.svg)?;
    fs::write(dir.join("heatmap.csv"), r.csv)?;
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct RenderArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long, default_value = "binary", value_parser = parse_mode)]
    pub mode: CellMode,
    #[command(flatten)]
    pub options: ClusterOptions,
    /// greys, blues or reds
    #[arg(long, default_value = "blues", value_parser = parse_palette)]
    pub palette: Palette,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn render(args: &RenderArgs) -> Result<()> {
    let m = read_matrix(&args.matrix, args.mode)?;
    create_dir(&args.out)?;
    render_into(&m, &args.options, args.palette, &args.out)?;
    Run::new("heatmap render", None, args)
        .input(&args.matrix)
        .finish_dir(&args.out)
}
