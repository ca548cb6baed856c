//! Command-line front end: `run`, `sweep` and `validate`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pfels::harness::{cli_run, cli_sweep, parse_values, Overrides, SweepAxis};
use pfels::validation::{run_suite, Scale};

#[derive(Parser)]
#[command(name = "pfels", version, about = "Private over-the-air federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write rounds.csv, summary.json and a manifest.
    Run {
        #[arg(long, env = "PFELS_CONFIG")]
        config: PathBuf,
        #[arg(long, env = "PFELS_SEED")]
        seed: Option<u64>,
        #[arg(long, env = "PFELS_OUT")]
        out: Option<PathBuf>,
    },
    /// Run one experiment per value of a config axis.
    Sweep {
        #[arg(long, env = "PFELS_CONFIG")]
        config: PathBuf,
        #[arg(long, env = "PFELS_AXIS", value_enum)]
        axis: SweepAxis,
        /// Comma-separated, e.g. `0.1,0.3,1`.
        #[arg(long, env = "PFELS_VALUES")]
        values: String,
        #[arg(long, env = "PFELS_SEED")]
        seed: Option<u64>,
        #[arg(long, env = "PFELS_OUT")]
        out: Option<PathBuf>,
    },
    /// Run the oracle and invariant suite and print a pass/fail table.
    Validate {
        #[arg(long, env = "PFELS_SCALE", value_enum, default_value = "quick")]
        scale: Scale,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed, out } => cli_run(&config, &Overrides { seed, out }).map(|a| {
            println!("wrote {}", a.rounds_csv.display());
            println!("wrote {}", a.summary_json.display());
            println!("wrote {}", a.manifest_json.display());
            true
        }),
        Command::Sweep {
            config,
            axis,
            values,
            seed,
            out,
        } => parse_values(&values)
            .and_then(|values| cli_sweep(&config, axis, &values, &Overrides { seed, out }))
            .map(|rows| {
                for row in rows {
                    println!(
                        "{} = {}: loss {:.6}, energy {:.6e}, subcarriers {}",
                        axis.as_str(),
                        row.value,
                        row.summary.final_train_loss,
                        row.summary.total_energy,
                        row.summary.subcarriers_total
                    );
                }
                true
            }),
        Command::Validate { scale } => {
            let outcomes = run_suite(scale);
            for o in &outcomes {
                println!("{}", o.line());
            }
            let failed: Vec<_> = outcomes.iter().filter(|o| !o.passed).map(|o| o.name).collect();
            if failed.is_empty() {
                println!("all {} checks passed", outcomes.len());
            } else {
                eprintln!("failed: {}", failed.join(", "));
            }
            Ok(failed.is_empty())
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
