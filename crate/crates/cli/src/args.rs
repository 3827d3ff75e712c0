use std::path::PathBuf;

use bodyregion::decision::{Selection, DEFAULT_TAU};
use bodyregion::mllm::Projection;
use bodyregion::taxonomy::Modality;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "bodyregion", version, about = "Body region detection for CT/MR label maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Label a batch of scans (one JSON record per scan)
    Classify(ClassifyArgs),
    /// Score predictions against ground truth
    Evaluate(EvaluateArgs),
    /// Dump the measurements and edge report of one label map
    Inspect(InspectArgs),
    /// Write the three-view composite image of an intensity volume
    RenderViews(RenderArgs),
    /// Write the prompt that would be sent to the model
    BuildPrompt(PromptArgs),
    /// Taxonomy utilities
    Taxonomy(TaxonomyCommand),
    /// Synthetic phantom utilities
    Phantom(PhantomCommand),
}

#[derive(Debug, Clone, Args)]
pub struct TaxonomyArgs {
    #[arg(long, default_value = "ct")]
    pub modality: Modality,
    /// Override file layered on the builtin taxonomy
    #[arg(long, value_name = "FILE")]
    pub taxonomy: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    MaxScore,
    ThresholdAll,
}

impl From<PolicyArg> for Selection {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::MaxScore => Selection::MaxScore,
            PolicyArg::ThresholdAll => Selection::ThresholdAll,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Rules,
    MllmPlain,
    MllmSegAware,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProjectionArg {
    MidSlice,
    Max,
    Mean,
}

impl From<ProjectionArg> for Projection {
    fn from(p: ProjectionArg) -> Self {
        match p {
            ProjectionArg::MidSlice => Projection::MidSlice,
            ProjectionArg::Max => Projection::Max,
            ProjectionArg::Mean => Projection::Mean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PromptModeArg {
    Plain,
    SegAware,
}

/// `center,width`
pub fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (c, w) = s.split_once(',').ok_or("expected CENTER,WIDTH")?;
    let c: f64 = c.trim().parse().map_err(|e| format!("center: {e}"))?;
    let w: f64 = w.trim().parse().map_err(|e| format!("width: {e}"))?;
    if w.is_nan() || w <= 0.0 {
        return Err("width must be positive".into());
    }
    Ok((c, w))
}

#[derive(Debug, Clone, Args)]
pub struct ClassifyArgs {
    /// Label maps (rules mode) or intensity images (MLLM modes); directories
    /// are scanned for .nii and .nii.gz files
    pub inputs: Vec<PathBuf>,
    #[command(flatten)]
    pub taxonomy: TaxonomyArgs,
    #[arg(long, value_enum, default_value = "rules")]
    pub mode: ModeArg,
    #[arg(long, value_enum, default_value = "max-score")]
    pub policy: PolicyArg,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f64,
    #[arg(long, default_value_t = bodyregion::analysis::DEFAULT_MIN_VOXELS)]
    pub min_voxels: u64,
    /// CT display window for rendering, CENTER,WIDTH
    #[arg(long, value_parser = parse_window)]
    pub window: Option<(f64, f64)>,
    /// Directory of label maps matched to intensity inputs by file name
    /// (segmentation-aware mode)
    #[arg(long, value_name = "DIR")]
    pub labels_dir: Option<PathBuf>,
    /// Offline model: largest-extent, image-digest or fixed:TEXT
    #[arg(long, value_name = "STRATEGY")]
    pub mock: Option<String>,
    /// OpenAI-compatible endpoint base URL
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Environment variable holding the API token
    #[arg(long)]
    pub token_env: Option<String>,
    #[arg(long, default_value_t = 60)]
    pub timeout: u64,
    #[arg(long, default_value_t = 3)]
    pub retries: u32,
    /// Worker threads (also the bound on in-flight model requests)
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Output directory for results.jsonl, summary.json and transcripts;
    /// records go to stdout when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Predictions: CSV with scan_id,label columns or JSONL records
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground truth in the same formats
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct InspectArgs {
    pub input: PathBuf,
    #[command(flatten)]
    pub taxonomy: TaxonomyArgs,
    #[arg(long, default_value_t = bodyregion::analysis::DEFAULT_MIN_VOXELS)]
    pub min_voxels: u64,
    /// Report file; stdout when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RenderArgs {
    pub input: PathBuf,
    #[arg(long, default_value = "ct")]
    pub modality: Modality,
    #[arg(long, value_parser = parse_window)]
    pub window: Option<(f64, f64)>,
    #[arg(long, value_enum, default_value = "mid-slice")]
    pub projection: ProjectionArg,
    #[arg(long, default_value_t = bodyregion::mllm::render::DEFAULT_PANEL_HEIGHT)]
    pub height: usize,
    /// PNG file to write
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct PromptArgs {
    #[command(flatten)]
    pub taxonomy: TaxonomyArgs,
    #[arg(long, value_enum, default_value = "plain")]
    pub mode: PromptModeArg,
    /// Label map supplying the evidence block (seg-aware mode)
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, default_value_t = bodyregion::mllm::DEFAULT_VISIBILITY_PERCENT)]
    pub visibility: u32,
    /// Prompt text file; stdout when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TaxonomyCommand {
    #[command(subcommand)]
    pub action: TaxonomyAction,
}

#[derive(Debug, Clone, Subcommand)]
pub enum TaxonomyAction {
    /// Print the active taxonomy in override-file syntax
    Dump(TaxonomyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct PhantomCommand {
    #[command(subcommand)]
    pub action: PhantomAction,
}

#[derive(Debug, Clone, Subcommand)]
pub enum PhantomAction {
    /// Write a seeded phantom corpus as NIfTI with its ground truth
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub taxonomy: TaxonomyArgs,
    #[arg(long, default_value_t = 12)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write constant-fill intensity images under images/
    #[arg(long)]
    pub intensity: bool,
    #[arg(long)]
    pub out: PathBuf,
}
