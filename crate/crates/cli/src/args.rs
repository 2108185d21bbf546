use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use emf_core::evaluation::{DEFAULT_FOLDS, DEFAULT_FPR_CAP};
use emf_core::ocsvm::{SvmParams, DEFAULT_NU, DEFAULT_TOL};
use emf_core::ranking::DEFAULT_BINS;
use emf_core::trace::{DEFAULT_BASELINE_MS, DEFAULT_K_SIGMA};

#[derive(Debug, Parser)]
#[command(name = "emf", version, about = "Fingerprint devices from emission spectral traces")]
pub struct Cli {
    /// Suppress progress messages on standard error.
    #[arg(long, short, global = true, env = "EMF_QUIET")]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a device profile from recorded traces and store it.
    Train(TrainArgs),
    /// Score one trace against every stored profile.
    Classify(ClassifyArgs),
    /// Write a labeled synthetic corpus.
    Synth(SynthArgs),
    /// Extract feature vectors from traces into a CSV table.
    Extract(ExtractArgs),
    /// Cross-validate per-class models and select thresholds.
    Evaluate(EvaluateArgs),
    /// Rank features by mutual information with the class label.
    Rank(RankArgs),
    /// Export the normalized color-band grid of one trace.
    Heatmap(HeatmapArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Instrument {
    Hackrf,
    Fsw8,
}

impl Instrument {
    pub fn name(self) -> &'static str {
        match self {
            Instrument::Hackrf => "hackrf",
            Instrument::Fsw8 => "fsw8",
        }
    }
}

/// Trace interpretation, alignment and region layout.
#[derive(Debug, Clone, Args)]
pub struct LayoutArgs {
    /// Receiver preset assumed when a trace has no header.
    #[arg(long, value_enum, env = "EMF_INSTRUMENT", default_value_t = Instrument::Hackrf)]
    pub instrument: Instrument,

    /// Observation window after the onset; defaults to 1080 ms for hackrf
    /// and 3350 ms for fsw8.
    #[arg(long, env = "EMF_WINDOW_MS")]
    pub window_ms: Option<f64>,

    #[arg(long, env = "EMF_TIME_SPLITS", default_value_t = 4)]
    pub time_splits: usize,

    #[arg(long, env = "EMF_FREQ_SPLITS", default_value_t = 15)]
    pub freq_splits: usize,

    /// Leading noise-floor span used by onset detection.
    #[arg(long, env = "EMF_BASELINE_MS", default_value_t = DEFAULT_BASELINE_MS)]
    pub baseline_ms: f64,

    #[arg(long, env = "EMF_K_SIGMA", default_value_t = DEFAULT_K_SIGMA)]
    pub k_sigma: f64,

    /// Start the window at the first sample instead of the detected onset.
    #[arg(long)]
    pub no_align: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SvmArgs {
    #[arg(long, env = "EMF_NU", default_value_t = DEFAULT_NU)]
    pub nu: f64,

    /// Fixed RBF width; overrides the data-derived default.
    #[arg(long, env = "EMF_GAMMA")]
    pub gamma: Option<f64>,

    /// Multiplier on the data-derived default width.
    #[arg(long, env = "EMF_GAMMA_SCALE", default_value_t = 1.0)]
    pub gamma_scale: f64,

    #[arg(long, env = "EMF_TOL", default_value_t = DEFAULT_TOL)]
    pub tol: f64,
}

impl SvmArgs {
    pub fn params(&self) -> SvmParams {
        SvmParams {
            nu: self.nu,
            gamma: self.gamma,
            gamma_scale: self.gamma_scale,
            tol: self.tol,
            max_iter: None,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Trace files, or directories searched for `*.csv`.
    #[arg(required = true)]
    pub traces: Vec<PathBuf>,

    #[arg(long)]
    pub label: String,

    #[arg(long, env = "EMF_REGISTRY", default_value = "profiles")]
    pub registry: PathBuf,

    /// Overwrite an existing profile with the same label.
    #[arg(long)]
    pub replace: bool,

    #[command(flatten)]
    pub layout: LayoutArgs,

    #[command(flatten)]
    pub svm: SvmArgs,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    pub trace: PathBuf,

    #[arg(long, env = "EMF_REGISTRY", default_value = "profiles")]
    pub registry: PathBuf,

    /// Common decision threshold.
    #[arg(long, env = "EMF_THRESHOLD", allow_negative_numbers = true)]
    pub threshold: Option<f64>,

    /// `threshold.<label>=<value>` lines, e.g. an evaluation summary.
    /// Labels missing from the file use `--threshold` (default 0).
    #[arg(long, env = "EMF_THRESHOLDS")]
    pub thresholds: Option<PathBuf>,

    /// Only this profile decides the verdict.
    #[arg(long)]
    pub strict_label: Option<String>,

    #[command(flatten)]
    pub layout: LayoutArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Seventeen device models on the SDR, 1080 ms window.
    Brand,
    /// Fifteen units of one model on the analyzer, 3350 ms window.
    Units,
    /// One base firmware plus six modified builds.
    Firmware,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, env = "EMF_PRESET", default_value_t = Preset::Brand)]
    pub preset: Preset,

    #[arg(long, env = "EMF_SEED", default_value_t = 0)]
    pub seed: u64,

    #[arg(long)]
    pub traces_per_class: Option<usize>,

    /// Keep only the first N classes.
    #[arg(long)]
    pub classes: Option<usize>,

    #[arg(long, env = "EMF_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,

    #[arg(long, env = "EMF_OUT")]
    pub out: PathBuf,

    #[command(flatten)]
    pub layout: LayoutArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// A feature table written by `extract`, or trace files/directories.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,

    #[arg(long, env = "EMF_FOLDS", default_value_t = DEFAULT_FOLDS)]
    pub folds: usize,

    #[arg(long, env = "EMF_SEED", default_value_t = 0)]
    pub seed: u64,

    #[arg(long, env = "EMF_FPR_CAP", default_value_t = DEFAULT_FPR_CAP)]
    pub fpr_cap: f64,

    /// Evaluate at this fixed common threshold instead of selecting one.
    #[arg(long, allow_negative_numbers = true, conflicts_with = "per_class")]
    pub threshold: Option<f64>,

    /// Select one threshold per class.
    #[arg(long)]
    pub per_class: bool,

    /// Ranking written by `rank`; only its features are used.
    #[arg(long)]
    pub features: Option<PathBuf>,

    /// Evaluate the top k ranked features for each k (requires --features).
    #[arg(long, value_delimiter = ',', requires = "features")]
    pub top_k: Vec<usize>,

    /// Measure decision latency with models trained on every sample.
    #[arg(long)]
    pub timing: bool,

    /// Output directory for summary.txt, scores.csv, sweep.csv and topk.csv.
    #[arg(long, env = "EMF_OUT")]
    pub out: Option<PathBuf>,

    #[command(flatten)]
    pub layout: LayoutArgs,

    #[command(flatten)]
    pub svm: SvmArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Mim,
    Jmi,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,

    #[arg(long, value_enum, env = "EMF_METHOD", default_value_t = Method::Mim)]
    pub method: Method,

    /// Number of features to keep; all by default.
    #[arg(long)]
    pub k: Option<usize>,

    #[arg(long, env = "EMF_BINS", default_value_t = DEFAULT_BINS)]
    pub bins: usize,

    #[arg(long, env = "EMF_OUT")]
    pub out: PathBuf,

    #[command(flatten)]
    pub layout: LayoutArgs,
}

#[derive(Debug, Args)]
pub struct HeatmapArgs {
    pub trace: PathBuf,

    #[arg(long, env = "EMF_OUT")]
    pub out: PathBuf,

    /// Render the whole trace instead of the aligned window.
    #[arg(long)]
    pub full: bool,

    #[command(flatten)]
    pub layout: LayoutArgs,
}
