use std::f64::consts::PI;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use posetraj::data::Mode;
use posetraj::model::Ablation;
use posetraj::presets::Preset;

#[derive(Debug, Parser)]
#[command(name = "posetraj", version, about = "Human pose and trajectory forecasting")]
pub struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true, env = "POSETRAJ_THREADS")]
    pub threads: Option<usize>,

    /// Seed for model init, shuffling, generation and perturbation.
    #[arg(long, global = true, env = "POSETRAJ_SEED")]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a raw joint-position table into a sequence file.
    #[cfg(feature = "convert")]
    Convert(ConvertArgs),
    /// Write synthetic walking sequences.
    Generate(GenerateArgs),
    /// Apply one random rigid transform to each sequence.
    Perturb(PerturbArgs),
    /// Train a model on a directory of sequences.
    Train(TrainArgs),
    /// Forecast from an observed segment of one sequence.
    Predict(PredictArgs),
    /// Report ADE/FDE of a checkpoint over a directory of sequences.
    Eval(EvalArgs),
    /// Evaluate under translated, rotated and combined copies of the test set.
    Ablate(AblateArgs),
    /// Time single forward passes.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    H36m,
    Cmu,
    Darko,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::H36m => Preset::H36m,
            PresetArg::Cmu => Preset::Cmu,
            PresetArg::Darko => Preset::Darko,
        }
    }
}

// variant names mirror the flag values
#[allow(clippy::enum_variant_names)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AblationArg {
    #[value(name = "no_gat")]
    NoGat,
    #[value(name = "no_relative_attn")]
    NoRelativeAttn,
    #[value(name = "no_shared_attn")]
    NoSharedAttn,
    #[value(name = "no_cross_attn")]
    NoCrossAttn,
}

pub fn ablation_from(flags: &[AblationArg]) -> Ablation {
    let mut a = Ablation::default();
    for f in flags {
        match f {
            AblationArg::NoGat => a.no_gat = true,
            AblationArg::NoRelativeAttn => a.no_relative_attn = true,
            AblationArg::NoSharedAttn => a.no_shared_attn = true,
            AblationArg::NoCrossAttn => a.no_cross_attn = true,
        }
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Straight,
    Wavy,
    Deviating,
    Run,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Straight => Mode::Straight,
            ModeArg::Wavy => Mode::Wavy,
            ModeArg::Deviating => Mode::Deviating,
            ModeArg::Run => Mode::Run,
        }
    }
}

#[cfg(feature = "convert")]
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SkeletonArg {
    H36m17,
    Cmu31,
    Darko30,
}

#[cfg(feature = "convert")]
#[derive(Debug, Args)]
pub struct ConvertArgs {
    /// Delimited table, one frame per row, x y z per joint.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Dataset preset; fixes the skeleton and the output frame rate.
    #[arg(long, env = "POSETRAJ_PRESET", value_enum)]
    pub preset: Option<PresetArg>,
    /// Skeleton layout, overriding the preset's.
    #[arg(long, value_enum)]
    pub skeleton: Option<SkeletonArg>,
    /// Units of the raw values: m, cm or mm.
    #[arg(long, default_value = "m")]
    pub units: String,
    /// Vertical axis of the raw data: y or z.
    #[arg(long, default_value = "z")]
    pub up: String,
    #[arg(long)]
    pub source_fps: f64,
    /// Output frame rate (default: the preset's).
    #[arg(long)]
    pub target_fps: Option<f64>,
    /// Source joint index for each output joint, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub joint_map: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub count: usize,
    /// Path modes, cycled over the generated files.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "straight,wavy,deviating,run")]
    pub modes: Vec<ModeArg>,
    /// Seconds per sequence.
    #[arg(long, default_value_t = 6.0)]
    pub duration: f64,
    /// Frame rate preset (the generator always uses the 17-joint layout).
    #[arg(long, env = "POSETRAJ_PRESET", value_enum, default_value = "h36m")]
    pub preset: PresetArg,
    #[arg(long)]
    pub fps: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    /// A sequence file or a directory of them.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Planar translation range per axis, meters.
    #[arg(long, default_value_t = 10.0)]
    pub max_translation: f64,
    /// Yaw range, radians.
    #[arg(long, default_value_t = PI)]
    pub max_yaw: f64,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub ffn: Option<usize>,
    #[arg(long)]
    pub j_dim: Option<usize>,
    #[arg(long)]
    pub gat_heads: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Frames between the two root positions that define the heading.
    #[arg(long, env = "POSETRAJ_DELTA")]
    pub delta: Option<usize>,
    #[arg(long)]
    pub input_len: Option<usize>,
    #[arg(long)]
    pub output_len: Option<usize>,
    /// Train and predict in raw global coordinates.
    #[arg(long, env = "POSETRAJ_NO_TRANSFORM")]
    pub no_transform: bool,
    /// Remove a model component (repeatable).
    #[arg(long, value_enum, value_delimiter = ',', env = "POSETRAJ_ABLATION")]
    pub ablation: Vec<AblationArg>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory of training sequences.
    #[arg(long)]
    pub data: PathBuf,
    /// Directory of validation sequences; the best epoch on it is kept.
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// Output directory for checkpoints, log and manifest.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, env = "POSETRAJ_PRESET", value_enum, default_value = "h36m")]
    pub preset: PresetArg,
    /// TOML file with training settings, keyed by field name.
    #[arg(long, env = "POSETRAJ_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub grad_clip: Option<f64>,
    /// Frames between consecutive training windows.
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Predicted sequence file; a JSON report is written beside it.
    #[arg(long)]
    pub out: PathBuf,
    /// First observed frame (default: the last `input_len` frames).
    #[arg(long)]
    pub start: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    /// JSON report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Evaluate with canonicalization switched off.
    #[arg(long, env = "POSETRAJ_NO_TRANSFORM")]
    pub no_transform: bool,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
    #[arg(long, default_value_t = 10.0)]
    pub max_translation: f64,
    #[arg(long, default_value_t = PI)]
    pub max_yaw: f64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Checkpoint to time; without one an untrained preset model is used.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, env = "POSETRAJ_PRESET", value_enum, default_value = "h36m")]
    pub preset: PresetArg,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
}
