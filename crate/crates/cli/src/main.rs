use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use distopt_cli::commands::{self, Format};
use distopt_cli::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "distopt", version, about = "Find the participation crossing of a content distribution and classify extensions past it")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Grow the preferred sequence to its crossing and write a run report
    Optimize {
        #[arg(long, required_unless_present = "batch", conflicts_with = "batch")]
        input: Option<PathBuf>,
        /// Report path, or the output directory with --batch
        #[arg(long)]
        output: Option<PathBuf>,
        /// csv also writes <output>.crossing.csv and <output>.thresholds.csv
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        /// Run every *.json instance in this directory
        #[arg(long)]
        batch: Option<PathBuf>,
    },
    /// Classify extending the crossing by one named point
    Analyze {
        #[arg(long)]
        input: PathBuf,
        /// Candidate point id; defaults to the instance's candidate
        #[arg(long)]
        r2: Option<String>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Build and certify a carveout for the probe block or a named point
    Carveout {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        r2: Option<String>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write a seeded random instance
    Gen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        size: usize,
        /// uniform, underserved, saturated or scenario:<verdict>
        #[arg(long, default_value = "uniform")]
        profile: String,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the brute-force and finite-difference verifiers
    OracleCheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = distopt::thresholds::DEFAULT_IOTA)]
        iota: f64,
        /// Also compare the optimizer against exhaustive search on this instance
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let code = match cli.command {
        Command::Optimize { input, output, format, batch } => match (batch, input) {
            (Some(dir), _) => {
                let out = output.ok_or_else(|| CliError::Usage("--batch needs --output <dir>".into()))?;
                commands::cmd_batch(&dir, &out, format)?.code()
            }
            (None, Some(input)) => commands::cmd_optimize(&input, output.as_deref(), format)?.code(),
            (None, None) => return Err(CliError::Usage("--input is required".into())),
        },
        Command::Analyze { input, r2, output } => commands::cmd_analyze(&input, r2.as_deref(), output.as_deref())?.code(),
        Command::Carveout { input, r2, output } => commands::cmd_carveout(&input, r2.as_deref(), output.as_deref())?.code(),
        Command::Gen { seed, size, profile, output } => commands::cmd_gen(seed, size, &profile, output.as_deref())?.code(),
        Command::OracleCheck { seed, samples, iota, input, output } => {
            if commands::cmd_oracle_check(seed, samples, iota, input.as_deref(), output.as_deref())? {
                0
            } else {
                eprintln!("oracle check found mismatches");
                1
            }
        }
    };
    Ok(code)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("DISTOPT_LOG").unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
