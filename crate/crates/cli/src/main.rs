//! `mvrs`: offline ingest/search/explain over an index file, segmentation
//! evaluation, and the HTTP server.
//!
//! Exit codes: 0 success, 1 user error (bad input, missing files, failed
//! videos), 2 internal error.

mod commands;
mod layout;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};
use mvrs_core::refseg::DEFAULT_CHUNK;
use mvrs_service::ServiceConfig;

#[derive(Parser)]
#[command(
    name = "mvrs",
    version,
    about = "Text-to-video retrieval and referring segmentation"
)]
struct Cli {
    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Index every video in a catalog.
    Ingest(IngestArgs),
    /// Rank indexed videos against a text query (TSV on stdout).
    Search(SearchArgs),
    /// Write a mask artifact for one video and a referring expression.
    Explain(ExplainArgs),
    /// Compare two mask artifacts: IoU, J, F, J&F.
    EvalSeg(EvalSegArgs),
    /// Run the HTTP API.
    Serve(ServeArgs),
}

#[derive(Args)]
pub struct IngestArgs {
    /// Catalog, one JSON video entry per line.
    #[arg(long)]
    catalog: PathBuf,
    /// Directory holding `<video_id>/*.pgm`.
    #[arg(long)]
    frames: PathBuf,
    #[arg(long)]
    index: PathBuf,
    /// Add to an existing index instead of replacing it.
    #[arg(long)]
    append: bool,
    /// Server config to take embedder/preprocess/ann settings from.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
pub struct SearchArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(short, long)]
    query: String,
    #[arg(short, default_value_t = 10)]
    k: usize,
    #[arg(long)]
    location: Option<String>,
    /// RFC 3339 lower bound on capture time.
    #[arg(long)]
    from: Option<DateTime<Utc>>,
    #[arg(long)]
    to: Option<DateTime<Utc>>,
    #[arg(long)]
    depth_min: Option<f64>,
    #[arg(long)]
    depth_max: Option<f64>,
    /// Comma-separated; matches when any tag is present.
    #[arg(long, value_delimiter = ',')]
    species: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    behavior: Vec<String>,
    /// Use the HNSW graph instead of the exact scan.
    #[arg(long)]
    ann: bool,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
pub struct ExplainArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    video: String,
    #[arg(short, long)]
    query: String,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, default_value_t = DEFAULT_CHUNK)]
    chunk: usize,
}

#[derive(Args)]
pub struct EvalSegArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
}

#[derive(Args)]
pub struct ServeArgs {
    #[arg(long)]
    config: PathBuf,
}

/// Marks an error as a bug rather than bad input (exit code 2).
#[derive(Debug)]
pub struct Internal;

impl fmt::Display for Internal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("internal error")
    }
}

fn serve(args: &ServeArgs) -> Result<()> {
    let cfg = ServiceConfig::load(&args.config)?;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| anyhow::Error::new(e).context(Internal))?;
    rt.block_on(async {
        let (listener, state) = mvrs_service::bind(cfg).await?;
        log::info!("listening on {}", listener.local_addr()?);
        mvrs_service::serve(listener, state).await?;
        Ok(())
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let default_level = match (cli.verbose, matches!(cli.command, Command::Serve(_))) {
        (0, false) => "warn",
        (0, true) | (1, _) => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(default_level))
        .init();

    let result = match &cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Search(a) => commands::search(a),
        Command::Explain(a) => commands::explain(a),
        Command::EvalSeg(a) => commands::eval_seg(a),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Internal>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
