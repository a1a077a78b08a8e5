use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use recloop::config::Arm;
use recloop::{oracle_check, run_experiment, run_pan_benchmark, write_csv, write_pan_csv, ExperimentConfig};

#[derive(Parser)]
#[command(name = "recloop", version, about = "Feedback-loop simulations for recommender training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the multi-step arms and write results.csv and summary.csv.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated subset of feedback,cafl,uniform,random_shadow.
        #[arg(long)]
        arms: Option<String>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the exposure benchmark from the [pan] section.
    PanBench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Enumerate tiny worlds and check the estimators against the exact objective.
    OracleCheck {
        #[arg(long, value_enum, default_value_t = Size::Small)]
        size: Size,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Size {
    Small,
    Full,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            arms,
            reps,
            seed,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(a) = arms {
                cfg.arms = a.split(',').map(Arm::parse).collect::<Result<_, _>>()?;
            }
            if let Some(r) = reps {
                cfg.replications = r;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let report = run_experiment(&cfg)?;
            for path in write_csv(&report, &out).context("writing results")? {
                println!("wrote {}", path.display());
            }
        }
        Command::PanBench { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = run_pan_benchmark(&cfg.pan, cfg.seed, cfg.ci)?;
            print!("{}", report.format_table());
            for path in write_pan_csv(&report, &out).context("writing results")? {
                println!("wrote {}", path.display());
            }
        }
        Command::OracleCheck { size, seed } => {
            let instances = match size {
                Size::Small => 20,
                Size::Full => 200,
            };
            let checks = oracle_check::run_suite(instances, seed);
            for c in &checks {
                println!("{c}");
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                bail!("{failed} oracle check(s) failed");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
