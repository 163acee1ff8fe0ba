use std::path::PathBuf;
use std::process::ExitCode;

use cascade_risk::scenario::{
    run_profile, run_sequence, run_sweep, run_validate, write_records, OutputFormat, ScenarioConfig,
    OUT_DIR_ENV,
};
use cascade_risk::Error;
use clap::{Parser, ValueEnum};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Profile,
    Sweep,
    Sequence,
    Validate,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

/// Cascading-failure risk in delayed stochastic consensus networks.
///
/// Exit codes: 0 success, 2 configuration error, 3 numerical or ill-posed
/// problem, 4 validation check failed.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    command: Command,
    config: PathBuf,
    /// Output directory.
    #[arg(long, env = OUT_DIR_ENV, default_value = ".")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Overrides `simulation.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

fn fail(e: &Error) -> ExitCode {
    let report = serde_json::json!({ "error": e.exit_code(), "errors": e.messages() });
    eprintln!("{report}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let format = match cli.format {
        Format::Csv => OutputFormat::Csv,
        Format::Json => OutputFormat::Json,
    };
    let run = || -> Result<(Vec<_>, bool), Error> {
        let (cfg, base) = ScenarioConfig::load(&cli.config)?;
        let prepared = cfg.prepare(&base)?;
        let records = match cli.command {
            Command::Profile => vec![run_profile(&prepared)?],
            Command::Sweep => run_sweep(&prepared)?,
            Command::Sequence => vec![run_sequence(&prepared)?],
            Command::Validate => vec![run_validate(&prepared, cli.seed, Some(&cli.out))?],
        };
        let ok = records.iter().all(|r| r.passed != Some(false));
        Ok((records, ok))
    };
    match run() {
        Ok((records, ok)) => match write_records(&records, &cli.out, format) {
            Ok(path) => {
                println!("{}", path.display());
                if ok { ExitCode::SUCCESS } else { ExitCode::from(4) }
            }
            Err(e) => fail(&e),
        },
        Err(e) => fail(&e),
    }
}
