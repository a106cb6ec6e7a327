use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sigpep_core::seqio::OrganismGroup;

use crate::inputs::{EmbeddingSpec, GroupMode};

#[derive(Debug, Parser)]
#[command(name = "sigpep", version, about = "Signal peptide type and cleavage-site prediction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on annotated records; writes checkpoint, log and manifest.
    Train(TrainArgs),
    /// Predict type and cleavage site for every sequence of a FASTA file.
    Predict(PredictArgs),
    /// Score a checkpoint against annotated records.
    Eval(EvalArgs),
    /// Stream a FASTA file through the model and keep confident, novel signal peptides.
    Screen(ScreenArgs),
    /// Write synthetic inputs for trying the other commands.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct EmbeddingArgs {
    /// Per-sequence embeddings (TSV or binary table); absent ids use zeros.
    #[arg(long, value_name = "PATH", conflicts_with = "stub_embeddings")]
    pub embeddings: Option<PathBuf>,
    /// Deterministic pseudo-embeddings derived from each id and this seed.
    #[arg(long, value_name = "SEED")]
    pub stub_embeddings: Option<u64>,
}

impl EmbeddingArgs {
    pub fn spec(&self) -> EmbeddingSpec {
        EmbeddingSpec::from_flags(self.embeddings.as_deref(), self.stub_embeddings)
    }
}

fn parse_group(s: &str) -> Result<OrganismGroup, String> {
    s.parse()
}

#[derive(Debug, Args)]
pub struct GroupArgs {
    /// Organism group for every sequence, overriding header groups.
    #[arg(long, value_parser = parse_group, value_name = "GROUP")]
    pub group: Option<OrganismGroup>,
    /// Feed the all-zero group vector whatever the headers say.
    #[arg(long, conflicts_with = "group")]
    pub no_group: bool,
}

impl GroupArgs {
    pub fn mode(&self) -> GroupMode {
        GroupMode::from_flags(self.group, self.no_group)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training config (JSON); omitted fields take their defaults.
    #[arg(long, value_name = "PATH", required_unless_present = "from_manifest")]
    pub config: Option<PathBuf>,
    /// Annotated training records.
    #[arg(long, value_name = "PATH", required_unless_present = "from_manifest")]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub embeddings: EmbeddingArgs,
    /// Repeat the run recorded in a manifest; inputs must hash as recorded.
    #[arg(long, value_name = "PATH", conflicts_with_all = ["config", "data", "embeddings", "stub_embeddings"])]
    pub from_manifest: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long, value_name = "PATH")]
    pub checkpoint: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub fasta: PathBuf,
    #[command(flatten)]
    pub embeddings: EmbeddingArgs,
    #[command(flatten)]
    pub groups: GroupArgs,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    /// Output TSV; standard output when omitted.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "PATH")]
    pub checkpoint: PathBuf,
    /// Annotated records with gold types and cleavage sites.
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    #[command(flatten)]
    pub embeddings: EmbeddingArgs,
    /// Feed the all-zero group vector instead of each record's group.
    #[arg(long)]
    pub no_group: bool,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScreenArgs {
    #[arg(long, value_name = "PATH")]
    pub checkpoint: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub fasta: PathBuf,
    #[command(flatten)]
    pub embeddings: EmbeddingArgs,
    #[command(flatten)]
    pub groups: GroupArgs,
    /// Known signal peptides (FASTA); sequences starting with one are excluded.
    #[arg(long, value_name = "PATH")]
    pub known_sps: Option<PathBuf>,
    /// Minimum probability of the predicted type.
    #[arg(long, default_value_t = 0.5)]
    pub min_prob: f32,
    /// Drop exact repeats of earlier candidates.
    #[arg(long)]
    pub dedup: bool,
    /// Keep sequences whose header names no organism group.
    #[arg(long)]
    pub keep_ungrouped: bool,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    /// Also write every prediction, in input order.
    #[arg(long)]
    pub write_predictions: bool,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SimulateKind {
    /// 8 annotated records of each of four signal types.
    Toy,
    /// 1390 annotated records with a long-tailed type distribution.
    Imbalanced,
    /// Plain FASTA for screening, plus a known-signal-peptide FASTA.
    Screen,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(value_enum)]
    pub kind: SimulateKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of screening sequences.
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}
