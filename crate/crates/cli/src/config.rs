//! Effective run configuration: flags, then the config file, then defaults.

use crate::args::{FitArgs, ModelKind, ReportArgs};
use crate::error::CliError;
use bnpirt::diagnostics::DEFAULT_OUTLIER_THRESHOLD;
use bnpirt::{ChainConfig, PriorConfig};
use serde::Deserialize;
use std::path::{Path, PathBuf};

/// Parameters traced when `--trace` is not given.
pub const DEFAULT_TRACE: [&str; 3] = ["sigma_mu", "sigma2", "sigma_omega2"];

/// Keys accepted in a `--config` file. Every value is a scalar.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub data: Option<PathBuf>,
    pub covariates: Option<PathBuf>,
    pub dimensions: Option<PathBuf>,
    pub model: Option<ModelKind>,
    pub iterations: Option<usize>,
    pub burnin: Option<usize>,
    pub thin: Option<usize>,
    pub seed: Option<u64>,
    pub prior: Option<String>,
    pub eps: Option<f64>,
    pub chains: Option<usize>,
    pub out: Option<PathBuf>,
    pub outlier_threshold: Option<f64>,
    pub plots: Option<bool>,
    pub mcci: Option<bool>,
    pub trace: Option<String>,
}

impl FileConfig {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOptions {
    pub outlier_threshold: f64,
    pub plots: bool,
    pub mcci: bool,
    /// Empty means every parameter.
    pub trace: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelKind,
    pub data: PathBuf,
    pub covariates: Option<PathBuf>,
    pub dimensions: Option<PathBuf>,
    pub out: PathBuf,
    pub chain: ChainConfig,
    pub chains: usize,
    pub report: ReportOptions,
}

pub fn parse_prior(s: &str) -> Result<PriorConfig, CliError> {
    let values: Vec<f64> = s
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("--prior value {v:?} is not a number")))
        })
        .collect::<Result<_, _>>()?;
    let [b, v, a0, vw, aw] = values[..] else {
        return Err(CliError::Usage(format!(
            "--prior needs five comma-separated values, got {}",
            values.len()
        )));
    };
    PriorConfig::new(b, v, a0, vw, aw).map_err(|e| CliError::Usage(e.to_string()))
}

pub fn parse_trace(s: Option<&str>) -> Vec<String> {
    match s.map(str::trim) {
        None => DEFAULT_TRACE.map(String::from).to_vec(),
        Some("all") => Vec::new(),
        Some(list) => list
            .split(',')
            .map(|n| n.trim().to_string())
            .filter(|n| !n.is_empty())
            .collect(),
    }
}

fn check_threshold(t: f64) -> Result<f64, CliError> {
    if t > 0.0 && t.is_finite() {
        Ok(t)
    } else {
        Err(CliError::Usage(format!(
            "--outlier-threshold must be positive, got {t}"
        )))
    }
}

impl ReportOptions {
    /// Flags over `fallback`.
    pub fn merge(args: &ReportArgs, fallback: &ReportOptions) -> Result<Self, CliError> {
        Ok(Self {
            outlier_threshold: check_threshold(
                args.outlier_threshold.unwrap_or(fallback.outlier_threshold),
            )?,
            plots: args.plots || fallback.plots,
            mcci: args.mcci || fallback.mcci,
            trace: if args.trace.is_some() {
                parse_trace(args.trace.as_deref())
            } else {
                fallback.trace.clone()
            },
        })
    }
}

impl RunConfig {
    pub fn resolve(args: &FitArgs) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(path) => FileConfig::read(path)?,
            None => FileConfig::default(),
        };
        let defaults = ChainConfig::default();
        let prior = match args.prior.as_deref().or(file.prior.as_deref()) {
            Some(s) => parse_prior(s)?,
            None => PriorConfig::default(),
        };
        let chain = ChainConfig {
            iterations: args
                .iterations
                .or(file.iterations)
                .unwrap_or(defaults.iterations),
            burn_in: args.burnin.or(file.burnin).unwrap_or(defaults.burn_in),
            thin: args.thin.or(file.thin).unwrap_or(defaults.thin),
            seed: args.seed.or(file.seed).unwrap_or(defaults.seed),
            prior,
            eps: args.eps.or(file.eps).unwrap_or(defaults.eps),
        };
        chain.validate()?;
        if !(chain.eps > 0.0 && chain.eps < 1.0) {
            return Err(CliError::Usage(format!(
                "--eps must lie in (0, 1), got {}",
                chain.eps
            )));
        }
        let chains = args.chains.or(file.chains).unwrap_or(1);
        if chains == 0 {
            return Err(CliError::Usage("--chains must be at least 1".into()));
        }
        let data = args
            .data
            .clone()
            .or(file.data)
            .ok_or_else(|| CliError::Usage("--data is required".into()))?;
        let file_report = ReportOptions {
            outlier_threshold: file.outlier_threshold.unwrap_or(DEFAULT_OUTLIER_THRESHOLD),
            plots: file.plots.unwrap_or(false),
            mcci: file.mcci.unwrap_or(false),
            trace: parse_trace(file.trace.as_deref()),
        };
        Ok(Self {
            model: args.model.or(file.model).unwrap_or(ModelKind::Dichotomous),
            data,
            covariates: args.covariates.clone().or(file.covariates),
            dimensions: args.dimensions.clone().or(file.dimensions),
            out: args
                .out
                .clone()
                .or(file.out)
                .unwrap_or_else(|| PathBuf::from("out")),
            chain,
            chains,
            report: ReportOptions::merge(&args.report, &file_report)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prior_needs_five_values() {
        assert_eq!(
            parse_prior("1,10,1000,1,0.01").unwrap(),
            PriorConfig::default()
        );
        assert!(matches!(parse_prior("1,2"), Err(CliError::Usage(_))));
        assert!(matches!(parse_prior("1,10,x,1,1"), Err(CliError::Usage(_))));
    }

    #[test]
    fn flags_override_file_override_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.toml");
        std::fs::write(
            &cfg,
            "data = \"r.csv\"\niterations = 500\nburnin = 100\nthin = 2\nmcci = true\n",
        )
        .unwrap();
        let args = FitArgs {
            config: Some(cfg),
            iterations: Some(300),
            ..Default::default()
        };
        let run = RunConfig::resolve(&args).unwrap();
        assert_eq!(run.chain.iterations, 300);
        assert_eq!(run.chain.thin, 2);
        assert_eq!(run.chain.burn_in, 100);
        assert_eq!(run.chain.prior, PriorConfig::default());
        assert!(run.report.mcci);
        assert_eq!(run.data, PathBuf::from("r.csv"));
    }

    #[test]
    fn unknown_config_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.toml");
        std::fs::write(&cfg, "itterations = 5\n").unwrap();
        assert!(matches!(FileConfig::read(&cfg), Err(CliError::Usage(_))));
    }

    #[test]
    fn trace_list_parsing() {
        assert_eq!(parse_trace(None).len(), 3);
        assert!(parse_trace(Some("all")).is_empty());
        assert_eq!(
            parse_trace(Some("b[1], sigma2")),
            vec!["b[1]".to_string(), "sigma2".to_string()]
        );
    }
}
