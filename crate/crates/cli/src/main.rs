mod code;
mod common;
mod embed;
mod heatmap;
mod manifest;
mod pipeline;
mod review;
mod semnet;
mod table;
mod topics;

use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use crate::common::DEFAULT_SEED;

/// Qualitative coding toolkit: corpus tables, exploratory text analysis,
/// supervised coding and second-pass review.
#[derive(Debug, Parser)]
#[command(name = "ethnocode", version)]
struct Cli {
    /// Seed for every random choice (default 42)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel stages
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a unit table from a directory of field-note files
    Ingest(table::IngestArgs),
    /// Rewrite a unit table, optionally with another code separator
    ExportTable(table::ExportArgs),
    /// Convert a QDA spreadsheet export into a unit table
    ImportTable(table::ImportArgs),
    /// Topic models
    #[command(subcommand)]
    Topics(topics::TopicsCommand),
    /// Word embeddings
    #[command(subcommand)]
    Embed(embed::EmbedCommand),
    /// Semantic networks
    #[command(subcommand)]
    Semnet(semnet::SemnetCommand),
    /// Attribute heatmaps
    #[command(subcommand)]
    Heatmap(heatmap::HeatmapCommand),
    /// Supervised coding
    #[command(subcommand)]
    Code(code::CodeCommand),
    /// Review service
    #[command(subcommand)]
    Review(review::ReviewCommand),
    /// End-to-end runs from a config file
    #[command(subcommand)]
    Pipeline(PipelineCommand),
}

#[derive(Debug, Subcommand)]
enum PipelineCommand {
    /// Run every configured stage
    Run(pipeline::RunArgs),
}

fn dispatch(cli: &Cli) -> Result<()> {
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    match &cli.command {
        Command::Ingest(a) => table::ingest(a, cli.seed),
        Command::ExportTable(a) => table::export(a, cli.seed),
        Command::ImportTable(a) => table::import(a, cli.seed),
        Command::Topics(c) => match c {
            topics::TopicsCommand::Fit(a) => topics::fit(a, seed),
            topics::TopicsCommand::Show(a) => topics::show(a),
        },
        Command::Embed(c) => match c {
            embed::EmbedCommand::Train(a) => embed::train(a, seed),
            embed::EmbedCommand::Load(a) => embed::load(a),
            embed::EmbedCommand::Project(a) => embed::project(a),
            embed::EmbedCommand::Cluster(a) => embed::cluster(a, seed),
            embed::EmbedCommand::Neighbors(a) => embed::neighbors(a),
        },
        Command::Semnet(c) => match c {
            semnet::SemnetCommand::Build(a) => semnet::build(a),
            semnet::SemnetCommand::Seed(a) => semnet::seed(a),
            semnet::SemnetCommand::Prune(a) => semnet::prune(a),
            semnet::SemnetCommand::Communities(a) => semnet::communities(a),
            semnet::SemnetCommand::Export(a) => semnet::export(a),
        },
        Command::Heatmap(c) => match c {
            heatmap::HeatmapCommand::Build(a) => heatmap::build(a),
            heatmap::HeatmapCommand::Cluster(a) => heatmap::cluster(a),
            heatmap::HeatmapCommand::Render(a) => heatmap::render(a),
        },
        Command::Code(c) => match c {
            code::CodeCommand::Split(a) => code::split(a, seed),
            code::CodeCommand::Train(a) => code::train(a, seed),
            code::CodeCommand::Tune(a) => code::tune(a),
            code::CodeCommand::Apply(a) => code::apply(a),
            code::CodeCommand::Eval(a) => code::eval(a),
            code::CodeCommand::Alpha(a) => code::alpha(a),
        },
        Command::Review(review::ReviewCommand::Serve(a)) => review::serve(a, cli.threads),
        Command::Pipeline(PipelineCommand::Run(a)) => pipeline::run(a, cli.seed),
    }
}

/// Variant name from a derived `Debug` rendering.
fn variant<E: std::fmt::Debug>(e: &E) -> String {
    let s = format!("{e:?}");
    s.chars()
        .take_while(|c| c.is_alphanumeric() || *c == '_')
        .collect()
}

/// `module::Variant` for the first typed error in the chain.
fn error_class(err: &anyhow::Error) -> String {
    use ethnocode_core::coder::CoderError;
    use ethnocode_core::corpus::CorpusError;
    use ethnocode_core::embeddings::EmbeddingError;
    use ethnocode_core::heatmap::HeatmapError;
    use ethnocode_core::semnet::SemnetError;
    use ethnocode_core::textprep::TextError;
    use ethnocode_core::topics::TopicError;
    use ethnocode_review::ProjectError;
    for cause in err.chain() {
        macro_rules! try_class {
            ($module:literal, $ty:ident) => {
                match cause.downcast_ref::<$ty>() {
                    Some($ty::Io(io)) => return format!("io::{:?}", io.kind()),
                    Some(e) => return format!("{}::{}", $module, variant(e)),
                    None => {}
                }
            };
        }
        try_class!("corpus", CorpusError);
        try_class!("textprep", TextError);
        try_class!("topics", TopicError);
        try_class!("embeddings", EmbeddingError);
        try_class!("semnet", SemnetError);
        try_class!("heatmap", HeatmapError);
        try_class!("coder", CoderError);
        try_class!("review", ProjectError);
        if cause.downcast_ref::<toml::de::Error>().is_some() {
            return "config::Invalid".into();
        }
        if let Some(e) = cause.downcast_ref::<std::io::Error>() {
            return format!("io::{:?}", e.kind());
        }
    }
    "error".into()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = format!("{e:#}").replace(['\n', '\r'], " ");
            eprintln!("{}: {message}", error_class(&e));
            ExitCode::FAILURE
        }
    }
}
