use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use illusion_cli::format::float_text;
use illusion_cli::{run_scenario, sweep, verify_files, CliError, Options, RunArtifacts};

/// Run, sweep and verify robot illusion scenarios.
#[derive(Debug, Parser)]
#[command(name = "illusion", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    config: PathBuf,
    /// Output directory (overrides the config and ILLUSION_OUT_DIR).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Seed override.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and verify its witness.
    Run(RunArgs),
    /// Run a scenario over seeded trials.
    Sweep(RunArgs),
    /// Recheck a witness against a pair of traces.
    Verify { witness: PathBuf, traces: PathBuf },
}

impl RunArgs {
    fn options(&self) -> Options {
        Options {
            out: self
                .out
                .clone()
                .or_else(|| std::env::var_os("ILLUSION_OUT_DIR").map(PathBuf::from)),
            jobs: self.jobs,
            seed: self.seed,
        }
    }
}

fn summarise(artifacts: &RunArtifacts) {
    let verdict = if artifacts.pass { "pass" } else { "FAIL" };
    println!("{verdict}: artifacts in {}", artifacts.out_dir.display());
    for f in &artifacts.files {
        println!("  {}", f.display());
    }
}

fn verify(witness: &Path, traces: &Path) -> Result<(), CliError> {
    let report = verify_files(witness, traces)?;
    let worst = report.per_step_residual.iter().copied().fold(0.0, f64::max);
    let verdict = if report.pass { "pass" } else { "FAIL" };
    println!(
        "{verdict}: horizon {}, slowdown {}, worst residual {}",
        report.horizon,
        report.measured_slowdown,
        float_text(worst)
    );
    if report.pass {
        Ok(())
    } else {
        Err(CliError::VerificationFailed {
            first_failure: report.first_failure,
        })
    }
}

fn execute(command: &Command) -> Result<(), CliError> {
    let artifacts = match command {
        Command::Run(args) => run_scenario(&args.config, &args.options())?,
        Command::Sweep(args) => sweep(&args.config, &args.options())?,
        Command::Verify { witness, traces } => return verify(witness, traces),
    };
    summarise(&artifacts);
    artifacts.into_result().map(|_| ())
}

fn main() -> ExitCode {
    match execute(&Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
