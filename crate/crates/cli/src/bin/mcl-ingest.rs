use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use mcl_cli::manifest::ingest_manifest;
use mcl_core::warehouse::Warehouse;

/// Add the files listed in a manifest to a warehouse snapshot.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// Snapshot to update; created when missing.
    #[arg(long)]
    store: PathBuf,
    /// JSON list of {"url", "media", "file"} entries.
    manifest: PathBuf,
}

fn run(args: Args) -> Result<()> {
    let mut warehouse = if args.store.exists() {
        Warehouse::snapshot_load(&args.store)
            .with_context(|| format!("loading {}", args.store.display()))?
    } else {
        Warehouse::new()
    };
    let ids = ingest_manifest(&mut warehouse, &args.manifest)?;
    warehouse
        .snapshot_save(&args.store)
        .with_context(|| format!("saving {}", args.store.display()))?;
    for (url, id) in ids {
        println!("{} {url}", id.to_hex());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mcl-ingest: {e:#}");
            ExitCode::FAILURE
        }
    }
}
