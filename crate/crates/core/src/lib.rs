//! Bayesian nonparametric item response model: an infinite location mixture
//! of normal-ogive response functions with covariate-dependent
//! ordered-probit mixture weights, fitted by latent-variable slice-sampling
//! Gibbs MCMC.
//!
//! The pipeline is [`design::ingest_csv`] → a design builder →
//! [`sampler::run_chain`] → the fit summaries in [`diagnostics`].

pub mod design;
pub mod diagnostics;
pub mod model;
pub mod normal;
pub mod sampler;
pub mod samples_io;
pub mod simulate;
pub mod slice;

pub use design::{ColumnLabel, DesignError, ItemResponseData, ObservationDesign};
pub use diagnostics::{DiagnosticsError, FitReport, PosteriorSummary};
pub use model::{
    MixtureWeightVector, ModelError, MuWindow, ParameterState, PriorConfig, DEFAULT_EPS,
};
pub use sampler::{run_chain, ChainConfig, ChainSamples, LatentState, Sampler, SamplerError};
