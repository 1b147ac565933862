use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use twostream_core::config::ExperimentConfig;
use twostream_core::error::Result;
use twostream_core::experiment;
use twostream_core::nn::HeadKind;
use twostream_core::train::InitMode;

#[derive(Parser)]
#[command(name = "twostream", version, about = "Two-stream self-supervised pretraining on synthetic video")]
struct Cli {
    /// JSON experiment config; defaults are used for missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Dotted override such as `pretrain.seed=3`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Init {
    Random,
    SelfSupervised,
}

#[derive(Clone, Copy, ValueEnum)]
enum Head {
    Pretext,
    Downstream,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus, video split and pretext datasets.
    GenData,
    /// Warm-start the spatial tower, then train on the pretext task.
    Pretrain,
    /// Train the downstream classifier from one motion-tower initialization.
    Finetune {
        #[arg(long, value_enum)]
        init: Init,
        /// Fine-tuning seed; defaults to the first entry of `seeds`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint and print the report as JSON.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "downstream")]
        head: Head,
    },
    /// Compare two fine-tuning runs (baseline first).
    Report {
        run_a: PathBuf,
        run_b: PathBuf,
        /// Output directory; defaults to `<run_b>/../report`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// gen-data, pretrain, both arms for every seed, then the report.
    Reproduce,
    /// Print the fully resolved config.
    ShowConfig,
}

fn run(cli: Cli) -> Result<()> {
    let config = ExperimentConfig::load(cli.config.as_deref(), &cli.overrides)?;
    match cli.command {
        Command::GenData => {
            let s = experiment::cmd_gen_data(&config)?;
            println!(
                "corpus: {} videos ({} train, {} held out)",
                s.split.train.len() + s.split.heldout.len(),
                s.split.train.len(),
                s.split.heldout.len()
            );
            println!("pretext train class counts: {:?}", s.train.class_counts);
            println!("pretext held-out class counts: {:?}", s.heldout.class_counts);
        }
        Command::Pretrain => {
            let s = experiment::cmd_pretrain(&config)?;
            if let Some(w) = &s.warmstart.warning {
                eprintln!("warning: {w}");
            }
            println!("initial loss: {:.4}", s.initial_loss);
            println!("held-out pretext accuracy: {:.4}", s.heldout_report.overall_accuracy);
        }
        Command::Finetune { init, seed } => {
            let init = match init {
                Init::Random => InitMode::Random,
                Init::SelfSupervised => InitMode::SelfSupervised,
            };
            let s = experiment::cmd_finetune(&config, init, seed.unwrap_or(config.seeds[0]))?;
            println!("{}: accuracy {:.4}", s.dir.display(), s.report.overall_accuracy);
        }
        Command::Eval { checkpoint, head } => {
            let head = match head {
                Head::Pretext => HeadKind::Pretext,
                Head::Downstream => HeadKind::Downstream,
            };
            let report = experiment::cmd_eval(&config, &checkpoint, head)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Report { run_a, run_b, out } => {
            let out = out.unwrap_or_else(|| run_b.parent().unwrap_or(&run_b).join("report"));
            let r = experiment::cmd_report(&run_a, &run_b, &out)?;
            print!("{}", r.table.to_text());
        }
        Command::Reproduce => {
            let s = experiment::cmd_reproduce(&config)?;
            print!("{}", s.table.to_text());
        }
        Command::ShowConfig => print!("{}", config.to_json()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
