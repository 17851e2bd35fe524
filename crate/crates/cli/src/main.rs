//! `hpm`: generate a synthetic corpus, train policy models, forecast and run
//! the ablation study.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hpm_core::{AblationMode, Error};

#[derive(Parser)]
#[command(name = "hpm", version, about = "Human policy models for trajectory forecasting at signalized intersections")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a corpus of episodes and write it with a manifest.
    Generate(GenerateArgs),
    /// Train one policy model on the corpus training split.
    Train(TrainArgs),
    /// Forecast one snippet with a trained model.
    Forecast(ForecastArgs),
    /// Run the four-model ablation on the corpus test split.
    Ablate(AblateArgs),
}

#[derive(Args)]
pub struct GenerateArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    All,
    Nofv,
    Notl,
    Nofvtl,
}

impl From<ModeArg> for AblationMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::All => AblationMode::All,
            ModeArg::Nofv => AblationMode::NoFV,
            ModeArg::Notl => AblationMode::NoTL,
            ModeArg::Nofvtl => AblationMode::NoFVTL,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HeadArg {
    Det,
    Mdn,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Corpus directory written by `generate`.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Weight file to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    pub mode: ModeArg,
    #[arg(long, value_enum, default_value = "det")]
    pub head: HeadArg,
    /// Mixture components for `--head mdn`.
    #[arg(long)]
    pub components: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub max_samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training log path (default: weight file with `.log` appended).
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Args)]
pub struct ForecastArgs {
    #[arg(long)]
    pub weights: PathBuf,
    /// Corpus directory holding the episode.
    #[arg(long, conflicts_with = "snippet_file")]
    pub corpus: Option<PathBuf>,
    /// Forecast origin as `episode:step`.
    #[arg(long, requires = "corpus")]
    pub snippet: Option<String>,
    /// Standalone snippet (JSON) instead of a corpus reference.
    #[arg(long)]
    pub snippet_file: Option<PathBuf>,
    /// Prediction horizon in seconds.
    #[arg(long, default_value_t = 5.0)]
    pub horizon: f64,
    /// Forecast the front vehicle with this model (no FV input).
    #[arg(long, conflicts_with = "oracle_fv")]
    pub fv_weights: Option<PathBuf>,
    /// Feed the recorded front-vehicle trajectory.
    #[arg(long)]
    pub oracle_fv: bool,
    /// Sampled rollouts (mixture models only).
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write per-step position densities next to the output.
    #[arg(long)]
    pub density: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// The four deterministic weight files, one per mode, in any order.
    #[arg(long, num_args = 1.., required = true)]
    pub models: Vec<PathBuf>,
    /// Report directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub max_per_scenario: Option<usize>,
    /// Split seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = config::RunConfig::load(cli.config.as_deref()).and_then(|cfg| match cli.command {
        Command::Generate(a) => commands::generate(cfg, a),
        Command::Train(a) => commands::train(cfg, a),
        Command::Forecast(a) => commands::forecast(cfg, a),
        Command::Ablate(a) => commands::ablate(cfg, a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Divergence { .. } => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}
