use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mcl_cli::profile::parse_profile;
use mcl_cli::stream::StreamConduit;
use mcl_core::client::{request_content, ClientConfig, ClientSession, Rendering};
use mcl_core::modloop::ModificationSpec;
use mcl_core::types::{DeviceProfile, LinkQuality, NetworkStatus};
use mcl_parse::load_grammar;

/// Fetch content from an mcl-server.
#[derive(Parser)]
#[command(version)]
struct Args {
    #[arg(long, default_value = "127.0.0.1:7700", global = true)]
    server: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fetch one item and display it.
    Fetch {
        url: String,
        /// key=value device profile.
        #[arg(long)]
        profile: Option<PathBuf>,
        /// Directory for Image and Voice output files.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Comma-separated kind:param transforms, e.g. truncate:100,strip_markup.
        #[arg(long)]
        modify: Option<ModificationSpec>,
        /// Grammar for Data documents.
        #[arg(long)]
        grammar: Option<PathBuf>,
        /// Reported link quality; defaults to the profile's connection class.
        #[arg(long, value_parser = parse_quality)]
        quality: Option<LinkQuality>,
    },
}

const EXIT_USAGE: u8 = 1;
/// Connection failures count as transport failures.
const EXIT_TRANSPORT: u8 = 5;

fn parse_quality(s: &str) -> Result<LinkQuality, String> {
    match s.to_ascii_lowercase().as_str() {
        "low" => Ok(LinkQuality::Low),
        "medium" => Ok(LinkQuality::Medium),
        "high" => Ok(LinkQuality::High),
        _ => Err(format!("unknown quality {s:?}")),
    }
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("mcl-client: {msg}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let Command::Fetch {
        url,
        profile,
        out,
        modify,
        grammar,
        quality,
    } = args.command;

    let profile = match profile {
        Some(p) => match std::fs::read_to_string(&p) {
            Ok(text) => match parse_profile(&text) {
                Ok(p) => p,
                Err(e) => return fail(EXIT_USAGE, format!("{}: {e}", p.display())),
            },
            Err(e) => return fail(EXIT_USAGE, format!("{}: {e}", p.display())),
        },
        None => DeviceProfile::default(),
    };
    let grammar = match grammar {
        Some(p) => match std::fs::read_to_string(&p)
            .map_err(|e| e.to_string())
            .and_then(|t| load_grammar(&t).map_err(|e| e.to_string()))
        {
            Ok(g) => Some(g),
            Err(e) => return fail(EXIT_USAGE, format!("{}: {e}", p.display())),
        },
        None => None,
    };
    let net = NetworkStatus::new(quality.unwrap_or(profile.connection_class));
    let conduit = match StreamConduit::connect(&args.server) {
        Ok(c) => c,
        Err(e) => {
            return fail(
                EXIT_TRANSPORT,
                format!("connecting to {}: {e}", args.server),
            )
        }
    };
    let mut session = ClientSession::new(conduit, ClientConfig::default());
    let shown = match request_content(
        &mut session,
        &url,
        profile,
        net,
        modify,
        grammar.as_ref(),
        Some(&out),
    ) {
        Ok(s) => s,
        Err(e) => {
            let code = e.exit_code();
            return fail(code as u8, e);
        }
    };
    let mut stdout = std::io::stdout().lock();
    let written = match shown.rendering {
        Rendering::Document { canonical, .. } => writeln!(stdout, "{canonical}"),
        Rendering::Text(text) => writeln!(stdout, "{text}"),
        Rendering::Points(points) => points
            .iter()
            .try_for_each(|(x, y)| writeln!(stdout, "{x},{y}")),
        Rendering::File { path, .. } => match path {
            Some(p) => writeln!(stdout, "{}", p.display()),
            None => Ok(()),
        },
    };
    match written {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(EXIT_USAGE, e),
    }
}
