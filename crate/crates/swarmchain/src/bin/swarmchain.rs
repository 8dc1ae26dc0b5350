//! Thin CLI over the swarmchain library. Exit codes: 0 ok, 1 runtime
//! failure, 2 bad input.

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use swarmchain::commands::{cmd_bench, cmd_calibrate, cmd_run, CmdError};

#[derive(Parser)]
#[command(name = "swarmchain", version, about = "Blockchain-mediated swarm collaboration simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its report set.
    Run {
        /// Scenario file path.
        #[arg(long)]
        scenario: PathBuf,
        /// Master seed; everything in the run derives from it.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of epochs to simulate.
        #[arg(long, default_value_t = 10)]
        epochs: u64,
        /// Output directory (default: $SWARMCHAIN_OUT or ./out).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit density models from a calibration CSV.
    Calibrate {
        /// CSV with header feature_class,channels,x,points.
        #[arg(long)]
        points: PathBuf,
        /// Where to write the model file (default: alongside the CSV).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Live-hash on this host and report consistency ratios.
    Bench {
        /// Puzzle difficulty in leading zero bits.
        #[arg(long, default_value_t = 16)]
        difficulty: u32,
        /// Seconds to hash; 0 skips hashing.
        #[arg(long, default_value_t = 2.0)]
        duration: f64,
        /// Worker lanes for hashing.
        #[arg(long, default_value_t = 1)]
        lanes: usize,
        /// Latency CSV (node_id,hash_rate,task,latency_s).
        #[arg(long)]
        latencies: Option<PathBuf>,
    },
}

fn default_out() -> PathBuf {
    std::env::var_os("SWARMCHAIN_OUT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn run(cli: Cli) -> Result<(), CmdError> {
    match cli.command {
        Command::Run {
            scenario,
            seed,
            epochs,
            out,
        } => {
            let out = out.unwrap_or_else(default_out);
            let report = cmd_run(&scenario, seed, epochs, &out)?;
            print!("{}", report.render());
            if report.checks.iter().any(|(_, ok)| !ok) {
                return Err(CmdError::Runtime("a run self-check failed".into()));
            }
            Ok(())
        }
        Command::Calibrate { points, out } => {
            let report = cmd_calibrate(&points, out.as_deref())?;
            print!("{}", report.render());
            Ok(())
        }
        Command::Bench {
            difficulty,
            duration,
            lanes,
            latencies,
        } => {
            let report = cmd_bench(difficulty, duration, lanes, latencies.as_deref())?;
            print!("{}", report.render());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
