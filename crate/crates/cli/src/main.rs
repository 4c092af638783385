mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use error::CliError;

#[derive(Parser)]
#[command(name = "modl", version, about = "Conditional unrolled MRI reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Run configuration: a JSON file or one of the shipped presets.
#[derive(Args, Clone, Debug)]
#[group(required = true, multiple = false)]
pub struct ConfigArgs {
    /// Path to a run configuration (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Name of a shipped preset (desk-small, paper-shape).
    #[arg(long)]
    pub preset: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Ada,
    Joint,
    Individual,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the synthetic multi-coil dataset.
    GenData {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// Replace an existing output directory.
        #[arg(long)]
        force: bool,
    },
    /// Two-stage training of one model.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Setting to train on in individual mode, e.g. T2-3T.
        #[arg(long)]
        setting: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// PSNR/SSIM of checkpoints and the zero-filled baseline on the test split.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        /// `NAME=CHECKPOINT_DIR`, repeatable.
        #[arg(long = "model", required = true)]
        models: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct one acquisition to a magnitude PNG.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        subject: u64,
        /// True setting of the acquisition, e.g. T1-3T.
        #[arg(long)]
        setting: String,
        #[arg(long)]
        acceleration: f64,
        /// Setting fed to a conditional model (defaults to the true one).
        #[arg(long)]
        fed: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train conditional models over MLP widths with one setting held out.
    SweepMlp {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train conditional and joint models over the number of training subjects.
    SweepData {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Lambda as a function of acceleration for every setting.
    LambdaCurve {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Paired signed-rank tests on the per-image PSNR written by `eval`.
    Compare {
        /// `images.csv` from an eval run.
        #[arg(long)]
        images: PathBuf,
        /// Compare only this pair (both flags required together).
        #[arg(long, requires = "b")]
        a: Option<String>,
        #[arg(long, requires = "a")]
        b: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenData { config, out, force } => commands::gen_data(&config, &out, force),
        Command::Train { config, data, mode, setting, out } => commands::train(&config, &data, mode, setting.as_deref(), &out),
        Command::Eval { config, data, models, out } => commands::eval(&config, &data, &models, &out),
        Command::Infer { model, data, subject, setting, acceleration, fed, out } => {
            commands::infer(&model, &data, subject, &setting, acceleration, fed.as_deref(), &out)
        }
        Command::SweepMlp { config, data, out } => commands::sweep_mlp(&config, &data, &out),
        Command::SweepData { config, data, out } => commands::sweep_data(&config, &data, &out),
        Command::LambdaCurve { config, model, out } => commands::lambda_curve(&config, &model, &out),
        Command::Compare { images, a, b, out } => commands::compare(&images, a.zip(b), &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
