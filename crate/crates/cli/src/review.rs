use std::net::IpAddr;
use std::path::PathBuf;

use anyhow::{anyhow, Result};
use clap::{Args, Subcommand};
use ethnocode_review::ServeConfig;

#[derive(Debug, Subcommand)]
pub enum ReviewCommand {
    /// Serve the review API and UI for every project under --data-dir
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: IpAddr,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// One subdirectory per project
    #[arg(long)]
    pub data_dir: PathBuf,
    /// Built review UI bundle
    #[arg(long)]
    pub ui: Option<PathBuf>,
}

pub fn serve(args: &ServeArgs, threads: Option<usize>) -> Result<()> {
    let mut builder = tokio::runtime::Builder::new_multi_thread();
    if let Some(n) = threads {
        builder.worker_threads(n.max(1));
    }
    let runtime = builder.enable_all().build()?;
    let config = ServeConfig {
        bind: args.bind,
        port: args.port,
        data_dir: args.data_dir.clone(),
        ui_dir: args.ui.clone(),
    };
    runtime
        .block_on(ethnocode_review::serve(config))
        .map_err(|e| anyhow!(e))
}
