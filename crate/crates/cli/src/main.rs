use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use serde_json::json;

use nhtopo_cli::commands::{self, Command};
use nhtopo_cli::config::RunConfig;
use nhtopo_cli::output::Format;

/// Figure-ready data for non-Hermitian open lattices.
#[derive(Debug, Parser)]
#[command(name = "nhtopo", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Worker threads for grid evaluation.
    #[arg(long, env = "NHTOPO_THREADS")]
    threads: Option<usize>,
}

/// Exit status when the run finished but some rows carry a flag.
const EXIT_FLAGGED: u8 = 2;

fn run(cli: &Cli) -> anyhow::Result<ExitCode> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global().context("cannot start thread pool")?;
    }
    let cfg = RunConfig::load(&cli.config)?;
    let doc = commands::run(cli.command, &cfg)?;
    let text = doc.emit(cli.format);
    match &cli.out {
        Some(path) => std::fs::write(path, &text).with_context(|| format!("cannot write {}", path.display()))?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    let flags = doc.flag_summary();
    if flags.is_empty() {
        return Ok(ExitCode::SUCCESS);
    }
    eprintln!("{}", json!({"status": "flagged", "command": cli.command.name(), "flagged": flags}));
    Ok(ExitCode::from(EXIT_FLAGGED))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            eprintln!("{}", json!({"status": "error", "command": cli.command.name(), "error": chain.join(": ")}));
            ExitCode::FAILURE
        }
    }
}
