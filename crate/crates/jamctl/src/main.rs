use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use jamctl::{commands, exit_codes};

#[derive(Parser)]
#[command(
    name = "jamctl",
    about = "Radar anti-jamming laboratory: dataset synthesis, jamming recognition, and DQN/SARSA waveform decision experiments"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize a labeled jamming dataset directory.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Train the jamming recognizer on a dataset directory.
    TrainRecognizer {
        #[command(flatten)]
        common: Common,
        /// Dataset directory (defaults to the config's dataset.dir).
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Train DQN and SARSA against the jammer game with oracle labels.
    TrainAgent {
        #[command(flatten)]
        common: Common,
        /// Jammer behavior: AJ, RFTJ, RDFTJ, I, II or III.
        #[arg(long)]
        strategy: Option<String>,
    },
    /// Closed loop: the trained recognizer classifies one synthesized echo
    /// per CPI to drive the decision agents.
    ClosedLoop {
        #[command(flatten)]
        common: Common,
        /// Recognizer checkpoint from train-recognizer.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Bypass the recognizer and use ground-truth labels.
        #[arg(long)]
        oracle_labels: bool,
        #[arg(long)]
        strategy: Option<String>,
    },
    /// Recompute metrics and reward statistics from a finished run.
    Report {
        #[command(flatten)]
        common: Common,
        /// Run directory (defaults to the config's out_dir).
        #[arg(long)]
        run: Option<PathBuf>,
    },
}

fn init_thread_pool() {
    if let Ok(v) = std::env::var("JAMLAB_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), jamctl::CmdError> {
    match cli.cmd {
        Cmd::GenData { common } => {
            let r = commands::cmd_gen_data(&common.config, common.seed, common.out.as_deref())?;
            println!(
                "dataset: {} scenes (AJ {}, RFTJ {}, RDFTJ {}) -> {}",
                r.scenes,
                r.histogram[0],
                r.histogram[1],
                r.histogram[2],
                r.dir.display()
            );
        }
        Cmd::TrainRecognizer { common, dataset } => {
            let r = commands::cmd_train_recognizer(
                &common.config,
                common.seed,
                dataset.as_deref(),
                common.out.as_deref(),
            )?;
            println!(
                "recognizer: {} epochs, final validation OA {:.4}, test OA {:.4}",
                r.epochs_run, r.final_val_oa, r.test_oa
            );
            println!("checkpoint: {}", r.checkpoint.display());
        }
        Cmd::TrainAgent { common, strategy } => {
            let r = commands::run_rl(
                &common.config,
                common.seed,
                common.out.as_deref(),
                strategy.as_deref(),
                true,
                None,
            )?;
            print_rl(&r);
        }
        Cmd::ClosedLoop {
            common,
            checkpoint,
            oracle_labels,
            strategy,
        } => {
            let r = commands::run_rl(
                &common.config,
                common.seed,
                common.out.as_deref(),
                strategy.as_deref(),
                oracle_labels,
                checkpoint.as_deref(),
            )?;
            print_rl(&r);
        }
        Cmd::Report { common, run } => {
            let r = commands::cmd_report(&common.config, run.as_deref(), common.out.as_deref())?;
            for (k, v) in &r.rows {
                println!("{k}: {v}");
            }
            if let Some(oa) = r.test_oa {
                println!("test_oa: {oa:.4}");
            }
            println!("report -> {}", r.out_dir.display());
        }
    }
    Ok(())
}

fn print_rl(r: &commands::RlReport) {
    for (k, v) in &r.summary {
        println!("{k}: {v}");
    }
    println!(
        "final 50-episode moving average: dqn {:.2}, sarsa {:.2}",
        r.dqn_final_ma, r.sarsa_final_ma
    );
    println!("traces -> {}", r.out_dir.display());
}

fn main() -> ExitCode {
    init_thread_pool();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::from(exit_codes::OK as u8),
        Err(e) => {
            eprintln!("jamctl: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
