use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use ethnocode_core::corpus::{self, CodeSeparator, ColumnNames, Granularity, Table, TableConfig};
use serde::Serialize;

use crate::common::{create_dir, CorpusArgs};
use crate::manifest::Run;

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GranularityArg {
    Paragraph,
    Document,
}

#[derive(Debug, Args, Serialize)]
pub struct IngestArgs {
    /// Directory of `<id>_<YYYYMMDD>_<initials>.txt` files
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "paragraph")]
    pub granularity: GranularityArg,
    #[arg(long, default_value = "newline")]
    pub separator: CodeSeparator,
    /// Output table (`.tsv` for tab-separated)
    #[arg(long)]
    pub out: PathBuf,
}

fn ensure_parent(path: &std::path::Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => create_dir(p),
        _ => Ok(()),
    }
}

pub fn ingest(args: &IngestArgs, seed: Option<u64>) -> Result<()> {
    let granularity = match args.granularity {
        GranularityArg::Paragraph => Granularity::Paragraph,
        GranularityArg::Document => Granularity::Document,
    };
    let c = corpus::ingest_directory(&args.input, granularity)
        .with_context(|| format!("ingesting {}", args.input.display()))?;
    ensure_parent(&args.out)?;
    corpus::save_corpus(&c, &args.out, &TableConfig::with_separator(args.separator))?;
    eprintln!("{} documents, {} units", c.documents().len(), c.len());
    Run::new("ingest", seed, args)
        .input(&args.input)
        .finish_file(&args.out)
}

#[derive(Debug, Args, Serialize)]
pub struct ExportArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub corpus: CorpusArgs,
    /// Code separator of the written table
    #[arg(long, default_value = "newline")]
    pub to_separator: CodeSeparator,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn export(args: &ExportArgs, seed: Option<u64>) -> Result<()> {
    let c = args.corpus.load()?;
    ensure_parent(&args.out)?;
    corpus::save_corpus(
        &c,
        &args.out,
        &TableConfig::with_separator(args.to_separator),
    )?;
    Run::new("export-table", seed, args)
        .input(&args.corpus.corpus)
        .finish_file(&args.out)
}

#[derive(Debug, Args, Serialize)]
pub struct ImportArgs {
    /// Spreadsheet export from a QDA tool (CSV or TSV)
    #[arg(long)]
    pub table: PathBuf,
    #[arg(long, default_value = "newline")]
    pub separator: CodeSeparator,
    #[arg(long, default_value = "Document")]
    pub document_column: String,
    #[arg(long, default_value = "Reference")]
    pub reference_column: String,
    #[arg(long, default_value = "Speaker")]
    pub speaker_column: String,
    #[arg(long, default_value = "Section")]
    pub section_column: String,
    #[arg(long, default_value = "Codes")]
    pub codes_column: String,
    #[arg(long, default_value = "Quotation Content")]
    pub text_column: String,
    /// Code separator of the written table
    #[arg(long, default_value = "newline")]
    pub to_separator: CodeSeparator,
    /// Canonical unit table to write
    #[arg(long)]
    pub out: PathBuf,
}

pub fn import(args: &ImportArgs, seed: Option<u64>) -> Result<()> {
    let config = TableConfig {
        separator: args.separator,
        columns: ColumnNames {
            document: args.document_column.clone(),
            reference: args.reference_column.clone(),
            speaker: args.speaker_column.clone(),
            section: args.section_column.clone(),
            codes: args.codes_column.clone(),
            text: args.text_column.clone(),
        },
    };
    let table = Table::read_path(&args.table)
        .with_context(|| format!("reading {}", args.table.display()))?;
    let c = corpus::import_table(&table, &config)?;
    ensure_parent(&args.out)?;
    corpus::save_corpus(
        &c,
        &args.out,
        &TableConfig::with_separator(args.to_separator),
    )?;
    eprintln!(
        "{} documents, {} units, {} codes",
        c.documents().len(),
        c.len(),
        c.codebook().len()
    );
    Run::new("import-table", seed, args)
        .input(&args.table)
        .finish_file(&args.out)
}
