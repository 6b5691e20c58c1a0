//! `qgf`: seeded, file-in/file-out pipelines over the market-data, indicator,
//! feature, model and metric libraries.

pub mod commands;
pub mod error;
pub mod gradsuite;
pub mod io;
pub mod manifest;
pub mod plot;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub use error::CliError;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Parser, Serialize)]
#[command(name = "qgf", version, about = "Indicator features, sequence GAN training and evaluation")]
pub struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Suppress the JSON summary on stdout.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Validate a price CSV (local or fetched) and write it in canonical form.
    Ingest(IngestArgs),
    /// Compute the indicator feature matrix.
    Indicators(IndicatorsArgs),
    /// Binary trend labels for a horizon.
    Label(LabelArgs),
    /// Recursive feature elimination with a logistic probe.
    Select(SelectArgs),
    /// Randomized PCA of a feature table.
    Reduce(ReduceArgs),
    /// Train a GAN or a recurrent autoencoder baseline.
    Train(TrainArgs),
    /// Sample sequences from a checkpoint.
    Generate(GenerateArgs),
    /// Compare real and generated sequences.
    Evaluate(EvaluateArgs),
    /// Finite-difference check of every differentiable kernel.
    Gradcheck(GradcheckArgs),
    /// Line plot of one or more CSV files as SVG.
    Plot(PlotArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Indicators(_) => "indicators",
            Command::Label(_) => "label",
            Command::Select(_) => "select",
            Command::Reduce(_) => "reduce",
            Command::Train(_) => "train",
            Command::Generate(_) => "generate",
            Command::Evaluate(_) => "evaluate",
            Command::Gradcheck(_) => "gradcheck",
            Command::Plot(_) => "plot",
        }
    }
}

#[derive(Debug, Args, Serialize)]
#[command(group(ArgGroup::new("source").required(true).args(["input", "fetch_url"])))]
pub struct IngestArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// URL with a `{symbol}` placeholder; http(s) or file.
    #[arg(long)]
    pub fetch_url: Option<String>,
    /// Defaults to the input file stem.
    #[arg(long)]
    pub symbol: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VrArg {
    Printed,
    Standard,
}

#[derive(Debug, Args, Serialize)]
pub struct IndicatorsArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Append `label_n{N}`: the trend label N bars after each row.
    #[arg(long)]
    pub label_horizon: Option<usize>,
    #[arg(long, value_enum, default_value_t = VrArg::Printed)]
    pub vr_convention: VrArg,
}

#[derive(Debug, Args, Serialize)]
pub struct LabelArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub horizon: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SelectArgs {
    #[arg(long)]
    pub features: PathBuf,
    /// Output of `label`. Without it the features file must carry a
    /// `label_n{N}` column.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub keep: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ReduceArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub components: usize,
    #[arg(long, default_value_t = qgf_core::features::DEFAULT_OVERSAMPLE)]
    pub oversample: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelArg {
    Gan,
    RnnAe,
    RnnVae,
    LstmAe,
    LstmVae,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GLossArg {
    Minimax,
    Nonsaturating,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub model: ModelArg,
    /// Price CSV, sequence CSV, or a directory of either.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = qgf_models::gan::FULL_SEQ_LEN)]
    pub seq_len: usize,
    /// Step between windows cut from price files.
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    #[arg(long, default_value_t = 100)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub lr: f64,
    /// Hidden width; 90 for the GAN, 64 for baselines when omitted.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Baseline latent width; 16 when omitted.
    #[arg(long)]
    pub latent: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub noise_dim: usize,
    #[arg(long, default_value_t = 0.4)]
    pub dropout: f64,
    #[arg(long, default_value_t = 1)]
    pub d_steps: usize,
    #[arg(long, value_enum, default_value_t = GLossArg::Minimax)]
    pub g_loss: GLossArg,
    /// Checkpoint directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub count: usize,
    /// Sequence length; defaults to the trained length.
    #[arg(long)]
    pub len: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PairingArg {
    Paired,
    Concatenated,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    /// Sequence CSV, or a price CSV cut into non-overlapping close windows
    /// of the generated length.
    #[arg(long)]
    pub real: PathBuf,
    #[arg(long)]
    pub generated: PathBuf,
    #[arg(long, value_enum, default_value_t = PairingArg::Paired)]
    pub pairing: PairingArg,
    /// Standardize every sequence on both sides before comparing.
    #[arg(long)]
    pub standardize: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct GradcheckArgs {
    /// Seeds per kernel, starting at `--seed`.
    #[arg(long, default_value_t = 50)]
    pub seeds: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct PlotArgs {
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    #[arg(long, default_value = "")]
    pub title: String,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code. Errors go to stderr as one JSON line.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => {
                    let rendered = e.render().to_string();
                    let first = rendered.lines().next().unwrap_or("usage error").to_string();
                    eprintln!("{}", CliError::Usage(first).to_json());
                    2
                }
            };
        }
    };
    let argv: Vec<String> = argv
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    match commands::execute(&cli, argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
