use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hyperperiods_cli::{commands, CliError, RunConfig};

#[derive(Parser)]
#[command(name = "hyperperiods", version, about = "Generalized periods of Laplace eigenfunctions")]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for tables and reports.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Maass form cache directory.
    #[arg(long, global = true, env = "HYPERPERIODS_CACHE")]
    cache: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Locate Maass cusp forms in the configured brackets and cache them.
    Solve,
    /// Compute period tables, ratios, fits and density tables.
    Sweep,
    /// Run the acceptance suite.
    Verify,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            RunConfig::from_toml(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let out = cli.out.or_else(|| cfg.out.clone()).unwrap_or_else(|| "out".into());
    let cache = cli.cache.or_else(|| cfg.cache.clone()).unwrap_or_else(|| "cache".into());
    match cli.command {
        Command::Solve => {
            commands::solve(&cfg, &cache, &out)?;
        }
        Command::Sweep => {
            for path in commands::sweep(&cfg, &cache, &out)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Verify => {
            commands::verify(&cfg, &cache, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
