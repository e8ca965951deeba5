use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use oad_oam::commands::{self, Common};
use oad_oam::CliError;

/// Online action detection with object-aware attention.
#[derive(Parser)]
#[command(name = "oad-oam", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON config file merged over the defaults.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set train.steps=500`. Repeatable.
    #[arg(long = "set", value_name = "K=V")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

impl From<CommonArgs> for Common {
    fn from(a: CommonArgs) -> Self {
        Common {
            config: a.config,
            set: a.set,
            seed: a.seed,
            out: a.out,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset.
    GenData {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Train a model and write a checkpoint.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Dataset directory (overrides `data.path`).
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
    },
    /// Evaluate a checkpoint and write a report.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
    },
    /// Causal per-snippet predictions for one video, as JSON lines.
    Stream {
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "PATH")]
        features: PathBuf,
        #[arg(long, value_name = "PATH")]
        detections: Option<PathBuf>,
    },
    /// Compare analytic and finite-difference gradients.
    Gradcheck {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, hide = true, value_name = "MODE/GROUP")]
        inject_fault: Option<String>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut err = io::stderr();
    match cli.command {
        Command::GenData { common } => commands::gen_data(&common.into(), &mut out).map(drop),
        Command::Train { common, data } => commands::train(&common.into(), data.as_deref(), &mut out, &mut err).map(drop),
        Command::Eval { common, checkpoint, data } => {
            commands::eval(&common.into(), &checkpoint, data.as_deref(), &mut out, &mut err).map(drop)
        }
        Command::Stream {
            checkpoint,
            features,
            detections,
        } => commands::stream(&checkpoint, &features, detections.as_deref(), &mut out, &mut err),
        Command::Gradcheck { common, inject_fault } => commands::gradcheck(&common.into(), inject_fault.as_deref(), &mut out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        // A closed stdout (e.g. piped into `head`) ends the run quietly.
        Err(CliError::Io { ref source, .. }) if source.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            let _ = io::stdout().flush();
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
