mod commands;
mod runconfig;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use audiodist::metrics::DEFAULT_ALPHA;

/// Embedding-domain audio quality distances, tonal synthesis and MUSHRA
/// correlation analysis.
#[derive(Parser, Debug)]
#[command(name = "audiodist")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute log-mel embeddings of WAV files and write them as .npy.
    Embed(EmbedArgs),
    /// Distance between two embedding files or corpus directories.
    Dist(DistArgs),
    /// Render synthetic tonal excerpts.
    Synth(SynthArgs),
    /// Compose mini-batches mixing real audio and tonal excerpts.
    Batch(BatchArgs),
    /// Correlate distances with MUSHRA scores.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
pub struct EmbedArgs {
    /// WAV files, or directories whose *.wav files are used.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, short)]
    pub out: PathBuf,
    /// TOML file with mel settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Required input sample rate. Default: each file's own rate.
    #[arg(long)]
    pub sample_rate: Option<u32>,
    #[arg(long)]
    pub n_fft: Option<usize>,
    #[arg(long)]
    pub hop: Option<usize>,
    #[arg(long)]
    pub n_mels: Option<usize>,
    #[arg(long)]
    pub f_min: Option<f64>,
    #[arg(long)]
    pub f_max: Option<f64>,
    #[arg(long)]
    pub log_floor: Option<f64>,
    /// Use this channel of multichannel files instead of downmixing.
    #[arg(long)]
    pub channel: Option<u16>,
    #[arg(long, value_enum, default_value_t = DtypeArg::F32)]
    pub dtype: DtypeArg,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum DtypeArg {
    F32,
    F64,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum DistMetric {
    Fad,
    FadInf,
    Mmd,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SigmaMode {
    Median,
    Fixed,
}

#[derive(Args, Debug)]
pub struct DistArgs {
    #[arg(long, value_enum)]
    pub metric: DistMetric,
    /// Reference embeddings: a .npy file or a directory of them.
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// Test embeddings: a .npy file or a directory of them.
    #[arg(long)]
    pub test: PathBuf,
    /// Expected embedding dimension.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, value_enum, default_value_t = SigmaMode::Median)]
    pub sigma_mode: SigmaMode,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    /// MMD at the median bandwidth and at σ ∈ {1, 10, 100, 1000, 10000}.
    #[arg(long)]
    pub sweep: bool,
    /// Use at most this many evenly strided frames per set for MMD.
    #[arg(long)]
    pub frame_cap: Option<usize>,
    /// Ridge ε added to both covariances (FAD).
    #[arg(long, default_value_t = 0.0)]
    pub ridge: f64,
    /// Subsample sizes for FAD∞, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    pub draws: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// TOML synthesis config; omitted fields take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write 16-bit PCM instead of 32-bit float.
    #[arg(long)]
    pub pcm16: bool,
}

#[derive(Args, Debug)]
pub struct BatchArgs {
    /// Real-audio pool: a directory of WAV files or a text file with one path per line.
    #[arg(long)]
    pub pool: Option<PathBuf>,
    /// TOML synthesis config recorded for the tonal entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 48)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.33)]
    pub tonal_fraction: f64,
    #[arg(long, default_value_t = 1)]
    pub batches: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output JSON-lines file, one batch per line.
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum FormatArg {
    Json,
    Csv,
    Svg,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Manifest JSON; relative embedding paths resolve against its directory.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    /// CSV with columns item_id,condition_id,score merged into the manifest.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Metric to evaluate: fad, fad-inf, mmd, mmd:<sigma>, or sweep. Repeatable.
    #[arg(long = "metric")]
    pub metrics: Vec<String>,
    /// TOML file with [[metrics]] tables (label, config).
    #[arg(long)]
    pub metrics_config: Option<PathBuf>,
    /// Keep hidden-reference conditions in the correlation.
    #[arg(long)]
    pub include_hidden_ref: bool,
    /// Average distances and scores per condition before correlating.
    #[arg(long)]
    pub per_condition: bool,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "json,csv,svg")]
    pub formats: Vec<FormatArg>,
}

fn version() -> String {
    format!(
        "{} (report schema {}, NPY write {}.{})",
        env!("CARGO_PKG_VERSION"),
        audiodist::SCHEMA_VERSION,
        audiodist::embedding::npy::WRITE_VERSION.0,
        audiodist::embedding::npy::WRITE_VERSION.1,
    )
}

/// The error chain joined with ": ", skipping causes already quoted by the
/// message before them.
pub(crate) fn describe(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if msg.contains(&text) {
            continue;
        }
        if !msg.is_empty() {
            msg.push_str(": ");
        }
        msg.push_str(&text);
    }
    msg
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let matches = Cli::command().version(version()).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Embed(a) => commands::embed(a, cli.threads),
        Command::Dist(a) => commands::dist(a, cli.threads),
        Command::Synth(a) => commands::synth(a, cli.threads),
        Command::Batch(a) => commands::batch(a, cli.threads),
        Command::Eval(a) => commands::eval(a, cli.threads),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
