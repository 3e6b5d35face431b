use std::io::Write;
use std::net::TcpListener;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::{Arc, Mutex};

use anyhow::{Context, Result};
use clap::Parser;
use mcl_cli::serve::{invalid_documents, serve, LogSink};
use mcl_core::server::ServerConfig;
use mcl_core::warehouse::Warehouse;
use mcl_parse::load_grammar;

/// Serve warehouse content over TCP.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// Warehouse snapshot; a missing file means an empty store.
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:7700")]
    listen: String,
    /// Grammar used to check stored Data documents at startup.
    #[arg(long)]
    grammar: Option<PathBuf>,
}

fn run(args: Args) -> Result<()> {
    let warehouse = match &args.store {
        Some(p) if p.exists() => {
            Warehouse::snapshot_load(p).with_context(|| format!("loading {}", p.display()))?
        }
        _ => Warehouse::new(),
    };
    let stdout = std::io::stdout();
    if let Some(path) = &args.grammar {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let grammar = load_grammar(&text).with_context(|| format!("grammar {}", path.display()))?;
        for (url, err) in invalid_documents(&warehouse, &grammar) {
            writeln!(stdout.lock(), "warning url={url} invalid document: {err}")?;
        }
    }
    let listener =
        TcpListener::bind(&args.listen).with_context(|| format!("binding {}", args.listen))?;
    writeln!(
        stdout.lock(),
        "listening on {} items={}",
        listener.local_addr()?,
        warehouse.len()
    )?;
    let log: LogSink = Arc::new(Mutex::new(stdout));
    serve(
        listener,
        warehouse.into_shared(),
        ServerConfig::default(),
        log,
    )?;
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mcl-server: {e:#}");
            ExitCode::FAILURE
        }
    }
}
