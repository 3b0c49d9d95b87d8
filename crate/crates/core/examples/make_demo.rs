//! Writes the synthetic demo corpus used by `demo/demo.toml`.
//!
//! cargo run -p ethnocode-core --example make_demo -- demo

use std::path::PathBuf;

use ethnocode_core::corpus::{save_corpus, TableConfig};
use ethnocode_core::synth::demo_corpus;

pub const DOCUMENTS: usize = 16;
pub const UNITS_PER_DOC: usize = 20;
pub const SEED: u64 = 7;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "demo".into()));
    std::fs::create_dir_all(&dir)?;
    let corpus = demo_corpus(DOCUMENTS, UNITS_PER_DOC, SEED);
    let path = dir.join("corpus.csv");
    save_corpus(&corpus, &path, &TableConfig::default())?;
    eprintln!("wrote {} ({} units)", path.display(), corpus.len());
    Ok(())
}
