mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Beauty-conditioned face generation pipeline.
#[derive(Parser, Debug)]
#[command(name = "facegen", version)]
pub struct Cli {
    /// TOML file with `seed`, `[raters]`, `[gan]`, `[inversion]` and `[metrics]` sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    pub force: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic rated corpus.
    Synth(SynthArgs),
    /// Train one predictor per rater.
    TrainRaters(TrainRatersArgs),
    /// Label a directory of images with a rater ensemble.
    Label(LabelArgs),
    /// Train the conditional progressive GAN.
    TrainGan(TrainGanArgs),
    /// Render a grid of beauty sweeps, one latent per row.
    Grid(GridArgs),
    /// Invert an image and re-render it at higher beauty levels.
    Beautify(BeautifyArgs),
    /// Compute realism metrics against a real corpus.
    Evaluate(EvaluateArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    /// Number of simulated raters K.
    #[arg(long, default_value_t = 8)]
    pub raters: usize,
    #[arg(long, default_value_t = 0.05)]
    pub noise_sd: f64,
    #[arg(long, default_value_t = 32)]
    pub resolution: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainRatersArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct LabelArgs {
    #[arg(long)]
    pub ensemble: PathBuf,
    /// Directory of PNG images; ids are the file stems.
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainGanArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from this checkpoint instead of a fresh initialization.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Stop once this many steps have completed.
    #[arg(long)]
    pub until_step: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub steps_per_stage: Option<u64>,
    #[arg(long)]
    pub fade_in_steps: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub g_lr: Option<f64>,
    #[arg(long)]
    pub d_lr: Option<f64>,
    #[arg(long)]
    pub lambda_cond: Option<f64>,
    #[arg(long)]
    pub lambda_gp: Option<f64>,
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
}

#[derive(Args, Debug)]
pub struct GridArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub rows: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.3, 0.5, 0.7, 0.9])]
    pub betas: Vec<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct BeautifyArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.2, 0.3, 0.4])]
    pub deltas: Vec<f64>,
    /// Rater ensemble whose trunk supplies the feature term; without it the
    /// loss is pixel-only.
    #[arg(long)]
    pub raters: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Generate the fake set from this checkpoint.
    #[arg(long, conflicts_with = "fake", required_unless_present = "fake")]
    pub checkpoint: Option<PathBuf>,
    /// Use the PNGs in this directory as the fake set.
    #[arg(long)]
    pub fake: Option<PathBuf>,
    /// Real corpus directory.
    #[arg(long)]
    pub real: PathBuf,
    #[arg(long, default_value_t = 256)]
    pub n_fake: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Command failure, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<facegen::Error> for Failure {
    fn from(e: facegen::Error) -> Self {
        use facegen::Error as E;
        let msg = e.to_string();
        match e {
            _ if e.is_numerical() => Failure::Numerical(msg),
            E::Config(_) | E::Input(_) | E::Range(_) => Failure::Usage(msg),
            _ => Failure::Data(msg),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message().replace('\n', " "));
            ExitCode::from(f.code())
        }
    }
}
