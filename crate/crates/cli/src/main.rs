use std::path::PathBuf;
use std::process::ExitCode;

use chaos_core::harness::{
    read_report, run_gk, run_rows, write_gk_report, write_report, ExperimentConfig, OutputFormat, RunMode,
};
use chaos_core::ChaosError;
use clap::{Args, Parser, Subcommand, ValueEnum};

const EXIT_FLAGGED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "chaos", version, about = "Moment bounds for l_q-valued chaoses versus Monte Carlo")]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    global: GlobalArgs,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// JSON experiment configuration (defaults when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, env = "THREADS")]
    threads: Option<usize>,
    /// Output format, overriding the configuration.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Output file (stdout when omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Deterministic bound terms only.
    Bound,
    /// Monte Carlo moments only.
    Simulate,
    /// Bounds against Monte Carlo moments (default).
    Verify,
    /// One-index moments against the dual-ball norm.
    Gk,
    /// Re-serialize stored rows.
    Report {
        /// CSV or JSON file written by an earlier run.
        input: PathBuf,
    },
}

fn exit_code(err: &ChaosError) -> u8 {
    match err {
        ChaosError::Io { .. } => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}

fn run(cli: Cli) -> Result<bool, ChaosError> {
    let g = cli.global;
    let mut cfg = match &g.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(n) = g.threads {
        if n == 0 {
            return Err(ChaosError::Config("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| ChaosError::Config(format!("thread pool: {e}")))?;
    }
    let format = match g.format {
        Some(Format::Csv) => OutputFormat::Csv,
        Some(Format::Json) => OutputFormat::Json,
        None => cfg.output.format,
    };
    let out = g.out.or_else(|| cfg.output.path.as_ref().map(PathBuf::from));

    let mode = match cli.command.unwrap_or(Command::Verify) {
        Command::Bound => RunMode::Bound,
        Command::Simulate => RunMode::Simulate,
        Command::Verify => RunMode::Verify,
        Command::Gk => {
            let rows = run_gk(&cfg)?;
            write_gk_report(&rows, format, out.as_deref())?;
            return Ok(rows.iter().any(|r| r.is_flagged()));
        }
        Command::Report { input } => {
            let rows = read_report(&input)?;
            write_report(&rows, format, out.as_deref())?;
            return Ok(false);
        }
    };
    let rows = run_rows(&cfg, mode)?;
    write_report(&rows, format, out.as_deref())?;
    Ok(rows.iter().any(|r| r.is_flagged()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(EXIT_FLAGGED),
        Err(e) => {
            eprintln!("chaos: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
