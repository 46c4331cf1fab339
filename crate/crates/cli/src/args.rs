use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use kfh::data::Task;
use kfh::io::{parse_q, QValue};
use kfh::net::Optimizer;
use kfh::AggMode;
use serde::{Serialize, Serializer};

#[derive(Debug, Parser)]
#[command(
    name = "kfh",
    version,
    about = "Random-forest graph coarsening toolkit"
)]
pub struct Cli {
    /// Master seed; every subcommand is deterministic given it.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,

    /// Repeat for more log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(untagged)]
pub enum Command {
    /// Generate a synthetic graph-classification dataset as JSON lines.
    GenData(GenDataArgs),
    /// Sample a rooted spanning forest, optionally rebooted to a smaller q.
    SampleForest(SampleForestArgs),
    /// Build a coarsening hierarchy for a graph (directory) or dataset (JSONL).
    Hierarchy(HierarchyArgs),
    /// Evaluate the q-selection objective on a grid.
    SelectQ(SelectQArgs),
    /// Expected coarse sizes and cost model for a graph.
    Estimate(EstimateArgs),
    /// Train a multi-resolution classifier.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenData(_) => "gen-data",
            Command::SampleForest(_) => "sample-forest",
            Command::Hierarchy(_) => "hierarchy",
            Command::SelectQ(_) => "select-q",
            Command::Estimate(_) => "estimate",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
        }
    }
}

/// One q value; accepts `inf`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Q(pub f64);

impl FromStr for Q {
    type Err = kfh::Error;

    fn from_str(s: &str) -> kfh::Result<Self> {
        parse_q(s).map(Q)
    }
}

impl Serialize for Q {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        QValue(self.0).serialize(s)
    }
}

pub fn q_values(qs: &[Q]) -> Vec<f64> {
    qs.iter().map(|q| q.0).collect()
}

#[derive(Debug, Args, Serialize)]
pub struct GenDataArgs {
    #[arg(long)]
    pub task: Task,
    #[arg(long, default_value_t = 200)]
    pub n_graphs: usize,
    #[arg(long, default_value_t = 30)]
    pub min_nodes: usize,
    #[arg(long, default_value_t = 120)]
    pub max_nodes: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SampleForestArgs {
    /// Graph file: JSON record or edge list.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub q: Q,
    /// Reboot the sampled forest to this smaller q and write that instead.
    #[arg(long)]
    pub reboot: Option<Q>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct HierarchyArgs {
    /// Graph or dataset file.
    #[arg(long)]
    pub input: PathBuf,
    /// Strictly decreasing q values, e.g. `inf,2.0`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub q: Vec<Q>,
    #[arg(long, default_value = "mean")]
    pub agg: AggMode,
    /// Multiply node features by this factor before coarsening.
    #[arg(long, default_value_t = 1.0)]
    pub feature_scale: f64,
    /// A `.jsonl` path writes one hierarchy per input graph; anything else is
    /// a directory holding a single hierarchy.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SelectQArgs {
    /// Graph or dataset file; datasets average the curves.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub phi: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub grid_min: f64,
    #[arg(long, default_value_t = 1e3)]
    pub grid_max: f64,
    #[arg(long, default_value_t = 61)]
    pub grid_points: usize,
    /// Curve CSV; the summary goes next to it with a `.json` extension.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EstimateArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub q: Q,
    /// Hidden width used by the cost model.
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    /// Message-passing layers per level.
    #[arg(long, default_value_t = 4)]
    pub layers: usize,
    #[arg(long, default_value_t = 2)]
    pub linear_per_layer: usize,
    #[arg(long, default_value_t = 1)]
    pub levels: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// Where graphs come from: raw data plus coarsening options, or prebuilt
/// hierarchies.
#[derive(Debug, Args, Serialize)]
pub struct SourceArgs {
    /// Labelled dataset; hierarchies are built inline.
    #[arg(
        long,
        conflicts_with = "hierarchies",
        required_unless_present = "hierarchies"
    )]
    pub data: Option<PathBuf>,
    /// JSONL written by `kfh hierarchy`.
    #[arg(long)]
    pub hierarchies: Option<PathBuf>,
    /// q sequence for inline construction; must match prebuilt hierarchies.
    #[arg(long, value_delimiter = ',')]
    pub q: Vec<Q>,
    #[arg(long, default_value = "mean")]
    pub agg: AggMode,
    /// Node feature multiplier applied before inline construction.
    #[arg(long, default_value_t = 1.0)]
    pub feature_scale: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Message-passing layers per q value, e.g. `4,2`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub layers: Vec<usize>,
    #[arg(long, default_value_t = 2)]
    pub mlp_layers: usize,
    #[arg(long, default_value_t = 2)]
    pub linear_per_layer: usize,
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    /// Number of classes; defaults to the largest label plus one.
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long, default_value = "adamw")]
    pub optimizer: Optimizer,
    #[arg(long, default_value_t = 0.005)]
    pub lr: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    #[arg(long, default_value_t = 0.001)]
    pub min_delta: f64,
    /// Run every epoch and keep the final parameters.
    #[arg(long)]
    pub fixed_epochs: bool,
    #[arg(long, default_value_t = 0.7)]
    pub train_frac: f64,
    #[arg(long, default_value_t = 0.15)]
    pub val_frac: f64,
    /// Run directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// `split.json` from a training run; without it every graph is scored.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, default_value = "test", requires = "split")]
    pub subset: Subset,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    Train,
    Val,
    Test,
}
