use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use parasob_cli::{cmd_apchar, cmd_battery, cmd_scan_k, cmd_verify, CliError, Context, Outcome, EXIT_BUDGET};

type Handler = fn(&Context) -> Result<Outcome, CliError>;

/// Weighted parabolic Sobolev-Poincaré verification runs.
#[derive(Parser)]
#[command(name = "parasob", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More output on stderr; repeat for per-run details.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Only errors on stderr.
    #[arg(short, long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Parabolic A_p characteristic of the configured weight.
    Apchar {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate the configured inequalities over the battery.
    Verify {
        #[arg(long)]
        config: PathBuf,
    },
    /// Largest admissible k for each configured budget.
    ScanK {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write the battery's field files and manifest.
    Battery {
        #[arg(long)]
        config: PathBuf,
    },
}

fn run(cli: &Cli) -> Result<Outcome, CliError> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let verbosity = if cli.quiet { 0 } else { 1 + cli.verbose };
    let (config, f): (&PathBuf, Handler) = match &cli.command {
        Command::Apchar { config } => (config, cmd_apchar),
        Command::Verify { config } => (config, cmd_verify),
        Command::ScanK { config } => (config, cmd_scan_k),
        Command::Battery { config } => (config, cmd_battery),
    };
    let ctx = Context::from_file(config, verbosity)?;
    if verbosity >= 2 {
        for (k, v) in parasob_cli::commands::describe(&ctx) {
            eprintln!("{k}: {v}");
        }
    }
    f(&ctx)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            if !cli.quiet {
                for f in &outcome.files {
                    eprintln!("wrote {}", f.display());
                }
            }
            if outcome.failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                for line in &outcome.failures {
                    eprintln!("FAIL {line}");
                }
                ExitCode::from(EXIT_BUDGET as u8)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
