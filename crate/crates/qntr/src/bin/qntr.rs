use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qntr::cli;

#[derive(Parser)]
#[command(name = "qntr", about = "Limited-memory quasi-Newton trust-region training toolkit")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a training job described by a JSON config file.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Fuzz the trust-region subproblem solvers against a dense oracle.
    Fuzz {
        #[arg(long)]
        kind: String,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare the analytic gradient with finite differences.
    CheckGrad {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print header facts about an IDX image/label pair.
    IdxInfo {
        image_path: PathBuf,
        label_path: PathBuf,
    },
}

fn main() -> ExitCode {
    let args = Args::parse();
    let code = match args.command {
        Command::Train { config } => match cli::run(&config) {
            Ok(summary) => {
                println!(
                    "run complete: {} iterations recorded, outcome {:?}",
                    summary.report.records.len(),
                    summary.report.outcome
                );
                if let Some(r) = summary.report.records.last() {
                    println!(
                        "final train loss {}{}",
                        r.train_loss,
                        r.train_acc.map(|a| format!(", train accuracy {a:.2}%")).unwrap_or_default()
                    );
                }
                println!("metrics: {}", summary.metrics_path.display());
                cli::EXIT_OK
            }
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
        Command::Fuzz { kind, count, seed } => cli::fuzz(&kind, count, seed),
        Command::CheckGrad { config } => match cli::check_grad(&config) {
            Ok(code) => code,
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
        Command::IdxInfo { image_path, label_path } => match cli::idx_info(&image_path, &label_path) {
            Ok(code) => code,
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
    };
    ExitCode::from(code as u8)
}
