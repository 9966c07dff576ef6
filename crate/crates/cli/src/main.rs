use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use schmidt_cli::config::{load_config, read_document};
use schmidt_cli::sweep::parse_values;
use schmidt_cli::{check, run, sweep, CliError};

#[derive(Parser)]
#[command(name = "schmidt", version, about = "Local energetics of bipartite pure states in the Schmidt frame")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides every random seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve, track and write energies, Schmidt spectra and a report.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the invariant checks; exits 4 if any fails.
    Check {
        #[arg(long)]
        config: PathBuf,
        /// Directory for report.json.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Repeat `run` over values of one parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Dotted path (`model.params.g`) or JSON pointer (`/grid/substep`).
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long)]
        values: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = load_config(&config, cli.seed).map_err(CliError::Config)?;
            let s = run::run(&cfg, &out)?;
            log::info!("wrote {} (max additivity residual {:e})", out.display(), s.additivity);
        }
        Command::Check { config, out } => {
            let cfg = load_config(&config, cli.seed).map_err(CliError::Config)?;
            check::check(&cfg, &out)?;
        }
        Command::Sweep { config, param, values, out } => {
            let doc = read_document(&config).map_err(CliError::Config)?;
            sweep::sweep(&doc, cli.seed, &param, &parse_values(&values), &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
