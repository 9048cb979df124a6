use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(
    name = "bnpirt",
    version,
    about = "Fit a Bayesian nonparametric item response model by slice-sampling MCMC"
)]
pub struct Cli {
    /// Log progress (-v) or sampler details (-vv) to stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the sampler and write samples, summaries and fit diagnostics.
    Fit(FitArgs),
    /// Generate a synthetic dichotomous data set with known parameters.
    Simulate(SimulateArgs),
    /// Recompute summaries, fit tables and plots from stored samples.
    Summarize(SummarizeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Dichotomous,
    Polytomous,
    Multidimensional,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Dichotomous => "dichotomous",
            ModelKind::Polytomous => "polytomous",
            ModelKind::Multidimensional => "multidimensional",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        <Self as ValueEnum>::from_str(s, true).ok()
    }
}

/// Output options shared by `fit` and `summarize`.
#[derive(Debug, Clone, Default, Args)]
pub struct ReportArgs {
    /// |residual| above which a cell is flagged as an outlier [default: 2].
    #[arg(long)]
    pub outlier_threshold: Option<f64>,
    /// Write box-plot and trace-plot SVGs.
    #[arg(long)]
    pub plots: bool,
    /// Add batch-means Monte Carlo half-width columns to the summary.
    #[arg(long)]
    pub mcci: bool,
    /// Comma-separated parameters for the trace file, or `all`
    /// [default: sigma_mu,sigma2,sigma_omega2].
    #[arg(long, value_name = "NAMES")]
    pub trace: Option<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct FitArgs {
    /// Flat TOML file of defaults; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Responses CSV with columns person,item,score.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Person covariates CSV with columns person,<name>,...
    #[arg(long)]
    pub covariates: Option<PathBuf>,
    /// Item dimensions CSV with columns item,dimension.
    #[arg(long)]
    pub dimensions: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// b_sigma_mu,v,a0,v_omega,a_omega [default: 1,10,1000,1,0.01].
    #[arg(long, value_name = "B,V,A0,VW,AW")]
    pub prior: Option<String>,
    /// Truncation tolerance of the mixture series [default: 1e-10].
    #[arg(long)]
    pub eps: Option<f64>,
    /// Independent chains, each with a seed derived from --seed.
    #[arg(long)]
    pub chains: Option<usize>,
    /// Output directory [default: out].
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub report: ReportArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 200)]
    pub persons: usize,
    #[arg(long, default_value_t = 10)]
    pub items: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "sim")]
    pub out: PathBuf,
    /// Draw the parameters from the prior given by --prior.
    #[arg(long, conflicts_with = "zeta")]
    pub from_prior: bool,
    /// b_sigma_mu,v,a0,v_omega,a_omega used with --from-prior.
    #[arg(long, value_name = "B,V,A0,VW,AW")]
    pub prior: Option<String>,
    /// Parameter file written by an earlier simulate run.
    #[arg(long)]
    pub zeta: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub ability_sd: f64,
    #[arg(long, default_value_t = 1.0)]
    pub difficulty_sd: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,
    #[arg(long, default_value_t = 0.5)]
    pub sigma_mu: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_omega2: f64,
    /// Set every mixture location to zero (normal-ogive Rasch model).
    #[arg(long)]
    pub zero_mu: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SummarizeArgs {
    /// Directory holding the samples and metadata files of a fit.
    #[arg(long)]
    pub run: PathBuf,
    /// Responses CSV; defaults to the path recorded in the metadata.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub covariates: Option<PathBuf>,
    #[arg(long)]
    pub dimensions: Option<PathBuf>,
    /// Output directory [default: the run directory].
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub report: ReportArgs,
}
