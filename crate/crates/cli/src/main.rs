mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Traffic congestion classification from optical-flow motion traces and
/// EMD features.
#[derive(Debug, Parser)]
#[command(name = "floemd", version, about)]
pub struct Cli {
    /// Flat `key = value` pipeline config; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// RNG seed for every stochastic step [default: 0]
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Override one config key, e.g. `--set train.lr=5e-4` (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    /// Log verbosity on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic three-regime dataset with manifest and config.
    Synth(SynthArgs),
    /// Dense optical flow between consecutive sampled frames of one clip.
    Flow(FlowArgs),
    /// Motion trace (four descriptor series) of one clip as CSV.
    Trace(TraceArgs),
    /// IMF dump of one trace series.
    Emd(EmdArgs),
    /// EMD feature vectors for every manifest clip.
    Featurize(FeaturizeArgs),
    /// Train the classifier on a manifest's train split.
    Train(TrainArgs),
    /// Evaluate a trained model on one split and emit a JSON report.
    Eval(EvalArgs),
    /// Train one model per IMF count and report accuracies.
    SweepImfs(SweepImfsArgs),
    /// Train one model per descriptor subset and report accuracies.
    SweepDesc(SweepDescArgs),
    /// Run flow-guided attention on random maps, export the spatial map
    /// and print a gradient check.
    AttnDemo(AttnDemoArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory for `clips/`, `manifest.csv` and `pipeline.conf`.
    #[arg(long)]
    pub out: PathBuf,
    /// Total clips, split evenly over the three regimes.
    #[arg(long, default_value_t = 300)]
    pub clips: usize,
    /// Distinct scenes; splits are scene-disjoint.
    #[arg(long, default_value_t = 20)]
    pub scenes: usize,
    /// Rendered frame side length.
    #[arg(long, default_value_t = 64)]
    pub frame_size: usize,
    /// Frames per clip [default: 16]
    #[arg(long)]
    pub frames: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FrameSource {
    /// Directory of numbered PGM/PNG frames.
    #[arg(long, value_name = "DIR")]
    pub frames: PathBuf,
    /// Frames sampled from the directory [default: 16]
    #[arg(long)]
    pub frames_per_clip: Option<usize>,
    /// Side length frames are resized to [default: 224]
    #[arg(long)]
    pub frame_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FlowArgs {
    #[command(flatten)]
    pub source: FrameSource,
    /// Output directory; receives `flow_NNN.flo` per step.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    #[command(flatten)]
    pub source: FrameSource,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EmdArgs {
    /// Trace CSV as written by `trace`.
    #[arg(long)]
    pub trace: PathBuf,
    /// IMFs to extract [default: 4]
    #[arg(long)]
    pub n_imfs: Option<usize>,
    /// Series to decompose: mu_m, sigma_m, mu_d or sigma_d.
    #[arg(long, default_value = "mu_m")]
    pub series: String,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// Dataset manifest CSV (`clip_id,frame_dir,label,split`).
    #[arg(long)]
    pub manifest: PathBuf,
    /// IMFs per descriptor series [default: 4]
    #[arg(long)]
    pub n_imfs: Option<usize>,
    /// Descriptor subset, `all`, `magnitude`, `direction` or a comma list such as `mu_m,sigma_d` [default: all]
    #[arg(long)]
    pub descriptors: Option<String>,
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Model parameter file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch training log CSV.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Training epochs [default: 100]
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Model parameter file written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Split to evaluate: train, val or test.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Output JSON; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepImfsArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Comma-separated IMF counts.
    #[arg(long, default_value = "2,3,4,5,6", value_delimiter = ',')]
    pub n_list: Vec<usize>,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepDescArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AttnDemoArgs {
    /// Spatial attention map as binary PGM.
    #[arg(long)]
    pub out: PathBuf,
    /// RGB feature channels.
    #[arg(long, default_value_t = 8)]
    pub channels: usize,
    /// Flow feature channels.
    #[arg(long, default_value_t = 8)]
    pub flow_channels: usize,
    /// Feature map height and width.
    #[arg(long, default_value_t = 8)]
    pub size: usize,
    /// Channel-MLP reduction ratio.
    #[arg(long, default_value_t = 4)]
    pub reduction: usize,
    /// Central-difference step for the gradient check.
    #[arg(long, default_value_t = 1e-5)]
    pub fd_step: f64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
