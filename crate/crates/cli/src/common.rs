use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use ethnocode_core::corpus::{self, CodeSeparator, Corpus, TableConfig};
use ethnocode_core::heatmap;
use ethnocode_core::semnet::{self, GraphFormat, SemanticGraph, TokenFilter};
use ethnocode_core::textprep::{self, PrepConfig, StopwordList, TokenizedCorpus};
use serde::{Deserialize, Serialize};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Args, Serialize)]
pub struct CorpusArgs {
    /// Unit table (CSV, or TSV by extension)
    #[arg(long)]
    pub corpus: PathBuf,
    /// How several codes share the Codes cell: newline, comma or colon
    #[arg(long, default_value = "newline")]
    pub separator: CodeSeparator,
}

impl CorpusArgs {
    pub fn load(&self) -> Result<Corpus> {
        load_corpus(&self.corpus, self.separator)
    }
}

pub fn load_corpus(path: &Path, separator: CodeSeparator) -> Result<Corpus> {
    corpus::load_corpus(path, &TableConfig::with_separator(separator))
        .with_context(|| format!("loading {}", path.display()))
}

/// Text preparation for the exploratory analyses.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepArgs {
    /// Keep stop words
    #[arg(long)]
    pub keep_stopwords: bool,
    /// Additional stop-word file (one word per line, `#` comments)
    #[arg(long, value_name = "FILE")]
    pub stopwords: Option<PathBuf>,
    /// Use only the stop-word file, not the built-in list
    #[arg(long, requires = "stopwords")]
    pub replace_stopwords: bool,
    /// Merge adjacent pairs seen at least MIN times with PMI of at least PMI
    #[arg(long, value_name = "MIN:PMI", value_parser = parse_phrases)]
    pub phrases: Option<(usize, f64)>,
}

fn parse_phrases(s: &str) -> Result<(usize, f64), String> {
    let (a, b) = s.split_once(':').ok_or("expected MIN:PMI")?;
    Ok((
        a.parse().map_err(|_| "bad MIN")?,
        b.parse().map_err(|_| "bad PMI")?,
    ))
}

impl PrepArgs {
    pub fn config(&self) -> Result<PrepConfig> {
        let builtin = if self.keep_stopwords {
            StopwordList::empty()
        } else {
            StopwordList::builtin()
        };
        let stopwords = match &self.stopwords {
            Some(path) => {
                let custom = StopwordList::from_path(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                if self.replace_stopwords {
                    custom
                } else {
                    builtin.merge(&custom)
                }
            }
            None => builtin,
        };
        Ok(PrepConfig {
            stopwords,
            phrases: self.phrases,
        })
    }

    pub fn prepare(&self, corpus: &Corpus) -> Result<(TokenizedCorpus, BTreeSet<String>)> {
        Ok(textprep::prepare(corpus, &self.config()?))
    }

    pub fn files(&self) -> Vec<PathBuf> {
        self.stopwords.iter().cloned().collect()
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum FilterArg {
    All,
    NounsAdjectives,
    VerbsAdverbs,
    EntitiesOnly,
    Custom,
}

impl FilterArg {
    pub fn build(self, words: &[String]) -> Result<TokenFilter> {
        Ok(match self {
            FilterArg::All => TokenFilter::All,
            FilterArg::NounsAdjectives => TokenFilter::NounsAdjectives,
            FilterArg::VerbsAdverbs => TokenFilter::VerbsAdverbs,
            FilterArg::EntitiesOnly => TokenFilter::EntitiesOnly,
            FilterArg::Custom => {
                if words.is_empty() {
                    bail!("the custom filter needs --keep words");
                }
                TokenFilter::Custom(words.iter().map(|w| textprep::stem(w)).collect())
            }
        })
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum LinkageArg {
    Single,
    Complete,
    Average,
}

impl From<LinkageArg> for heatmap::Linkage {
    fn from(l: LinkageArg) -> Self {
        match l {
            LinkageArg::Single => heatmap::Linkage::Single,
            LinkageArg::Complete => heatmap::Linkage::Complete,
            LinkageArg::Average => heatmap::Linkage::Average,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum MetricArg {
    Euclidean,
    Jaccard,
}

impl From<MetricArg> for heatmap::Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Euclidean => heatmap::Metric::Euclidean,
            MetricArg::Jaccard => heatmap::Metric::Jaccard,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum FormatArg {
    Csv,
    Graphml,
    Dot,
}

impl FormatArg {
    pub fn format(self) -> GraphFormat {
        match self {
            FormatArg::Csv => GraphFormat::EdgeListCsv,
            FormatArg::Graphml => GraphFormat::Graphml,
            FormatArg::Dot => GraphFormat::Dot,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            FormatArg::Csv => "csv",
            FormatArg::Graphml => "graphml",
            FormatArg::Dot => "dot",
        }
    }
}

/// Writes `graph.graphml` and `edges.csv` into `dir`.
pub fn write_graph(graph: &SemanticGraph, dir: &Path, stem: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    semnet::export_graph(
        graph,
        GraphFormat::Graphml,
        &dir.join(format!("{stem}.graphml")),
    )?;
    semnet::export_graph(
        graph,
        GraphFormat::EdgeListCsv,
        &dir.join(format!("{stem}_edges.csv")),
    )?;
    Ok(())
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// File-system friendly name for a code.
pub fn slug(name: &str) -> String {
    let mut s = String::new();
    for c in name.chars() {
        if c.is_alphanumeric() {
            s.extend(c.to_lowercase());
        } else if !s.ends_with('-') {
            s.push('-');
        }
    }
    let s = s.trim_matches('-').to_string();
    if s.is_empty() {
        "code".into()
    } else {
        s
    }
}

/// Splits comma-separated list arguments.
pub fn split_list(items: &[String]) -> Vec<String> {
    items
        .iter()
        .flat_map(|s| s.split(','))
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}
