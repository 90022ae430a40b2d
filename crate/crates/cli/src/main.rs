use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use eegart_cli::commands::{self, parse_kind, parse_profile, TrainArgs};
use eegart_cli::service::{self, DEFAULT_PORT};

#[derive(Parser)]
#[command(name = "eegart", version, about = "Single-channel EEG artifact detection and localization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus with ground-truth labels.
    Synth {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a corpus directory.
    Train {
        #[arg(long)]
        arch: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "toy")]
        profile: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        max_epochs: Option<usize>,
        #[arg(long)]
        patience: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Score every epoch of a recording.
    Detect {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        rec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Refuse weights of any other kind.
        #[arg(long)]
        arch: Option<String>,
    },
    /// Artifact intervals from attention maps.
    Localize {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        rec: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score detection reports against labels.
    Eval {
        #[arg(long)]
        reports: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        plots: Option<PathBuf>,
    },
    /// Local review service.
    Serve {
        #[arg(long, default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long)]
        data: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { spec, seed, out } => {
            let ids = commands::synth(spec.as_deref(), seed, &out)?;
            println!("wrote {} recordings to {}", ids.len(), out.display());
        }
        Command::Train { arch, data, profile, seed, out, max_epochs, patience, batch_size, lr } => {
            let args = TrainArgs {
                arch: parse_kind(&arch)?,
                data,
                profile: parse_profile(&profile)?,
                seed,
                out,
                max_epochs,
                patience,
                batch_size,
                lr,
            };
            let summary = commands::train(&args)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Detect { weights, rec, out, arch } => {
            let arch = arch.as_deref().map(parse_kind).transpose()?;
            let rows = commands::detect(&weights, &rec, &out, arch)?;
            let flagged = rows.iter().filter(|r| r.flagged).count();
            println!("{} epochs, {flagged} flagged -> {}", rows.len(), out.display());
        }
        Command::Localize { weights, rec, threshold, out } => {
            let rows = commands::localize_cmd(&weights, &rec, threshold, &out)?;
            let n: usize = rows.iter().map(|r| r.intervals.len()).sum();
            println!("{} epochs, {n} intervals -> {}", rows.len(), out.display());
        }
        Command::Eval { reports, labels, out, plots } => {
            let report = commands::eval(&reports, &labels, &out, plots.as_deref())?;
            println!("auc {:.4}  best threshold {:.2}  se {:.3}  sp {:.3}", report.auc, report.best.threshold, report.best.se, report.best.sp);
        }
        Command::Serve { port, data } => service::serve(port, &data)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
