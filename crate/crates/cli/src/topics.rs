use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::{Args, Subcommand, ValueEnum};
use ethnocode_core::corpus::Corpus;
use ethnocode_core::textprep::TokenizedCorpus;
use ethnocode_core::topics::{fit_lda, LdaConfig, TopicModel};
use serde::{Deserialize, Serialize};

use crate::common::{create_dir, CorpusArgs, PrepArgs};
use crate::manifest::Run;

#[derive(Debug, Subcommand)]
pub enum TopicsCommand {
    /// Fit an LDA model by collapsed Gibbs sampling
    Fit(FitArgs),
    /// Print the top words of each topic
    Show(ShowArgs),
}

#[derive(Debug, Clone, Copy, Default, ValueEnum, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    /// One LDA document per corpus document
    #[default]
    Document,
    /// One LDA document per unit (needed for topic heatmap rows)
    Unit,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub prep: PrepArgs,
    #[arg(long)]
    pub k: usize,
    /// Document-topic prior (default 50/K)
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, default_value_t = 0.01)]
    pub beta: f64,
    #[arg(long, default_value_t = 500)]
    pub iterations: usize,
    #[arg(long, value_enum, default_value = "document")]
    pub level: Level,
    /// Words per topic in top_words.csv
    #[arg(long, default_value_t = 10)]
    pub top: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// LDA input documents at the requested level.
pub fn documents(tokens: &TokenizedCorpus, level: Level) -> (Vec<String>, Vec<Vec<String>>) {
    match level {
        Level::Document => tokens.document_stems().into_iter().unzip(),
        Level::Unit => tokens
            .units
            .iter()
            .map(|u| {
                (
                    u.key.to_string(),
                    u.tokens.iter().map(|t| t.stem.clone()).collect(),
                )
            })
            .unzip(),
    }
}

pub fn fit_model(
    corpus: &Corpus,
    prep: &PrepArgs,
    config: &LdaConfig,
    level: Level,
) -> Result<TopicModel> {
    let (tokens, _) = prep.prepare(corpus)?;
    let (ids, docs) = documents(&tokens, level);
    Ok(fit_lda(&docs, &ids, config)?)
}

pub fn write_top_words(model: &TopicModel, n: usize, path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_path(path)?;
    w.write_record(["topic", "rank", "word", "probability"])?;
    for t in 0..model.meta.k {
        for (rank, (word, p)) in model.top_words(t, n)?.into_iter().enumerate() {
            w.write_record([t.to_string(), (rank + 1).to_string(), word, p.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn fit(args: &FitArgs, seed: u64) -> Result<()> {
    let corpus = args.corpus.load()?;
    let config = LdaConfig {
        k: args.k,
        alpha: args.alpha,
        beta: args.beta,
        iterations: args.iterations,
        seed,
    };
    let model = fit_model(&corpus, &args.prep, &config, args.level)?;
    create_dir(&args.out)?;
    model.write_dir(&args.out)?;
    write_top_words(&model, args.top, &args.out.join("top_words.csv"))?;
    print_topics(&model, args.top)?;
    Run::new("topics fit", Some(seed), args)
        .input(&args.corpus.corpus)
        .inputs(&args.prep.files())
        .finish_dir(&args.out)
}

#[derive(Debug, Args, Serialize)]
pub struct ShowArgs {
    /// Directory written by `topics fit`
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    /// Also write top_words.csv here
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn print_topics(model: &TopicModel, n: usize) -> Result<()> {
    for t in 0..model.meta.k {
        let words: Vec<String> = model.top_words(t, n)?.into_iter().map(|(w, _)| w).collect();
        println!("topic {t}: {}", words.join(" "));
    }
    Ok(())
}

pub fn show(args: &ShowArgs) -> Result<()> {
    let model = TopicModel::read_dir(&args.model)?;
    print_topics(&model, args.n)?;
    if let Some(out) = &args.out {
        create_dir(out)?;
        write_top_words(&model, args.n, &out.join("top_words.csv"))?;
        Run::new("topics show", None, args)
            .input(&args.model)
            .finish_dir(out)?;
    }
    Ok(())
}
