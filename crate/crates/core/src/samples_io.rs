//! Samples CSV and its metadata sidecar.
//!
//! The samples file has one row per stored draw and the columns of
//! [`ChainSamples::parameter_names`]. A `mu[j]` cell is blank when `j` lay
//! outside that draw's window. Floats are written in shortest round-trip
//! form, so reading a file back reproduces the draws bit for bit.

use crate::model::{MuWindow, ParameterState, PriorConfig};
use crate::sampler::{ChainConfig, ChainSamples, SamplerStats};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SamplesIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("samples file: {0}")]
    Csv(#[from] csv::Error),
    #[error("samples file line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("metadata: {0}")]
    Metadata(String),
    #[error("samples do not match metadata: {0}")]
    Integrity(String),
}

/// Contents of the metadata sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub software: String,
    /// Seconds since the Unix epoch when the file was written.
    pub created_unix: u64,
    pub model: String,
    pub data: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariates: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimensions: Option<String>,
    pub chain: usize,
    /// Decimal string: TOML integers cannot hold every u64.
    pub seed: String,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub eps: f64,
    pub outlier_threshold: f64,
    /// Number of chains in the run this file belongs to.
    #[serde(default = "one")]
    pub chains: usize,
    #[serde(default)]
    pub mcci: bool,
    #[serde(default)]
    pub plots: bool,
    /// Parameters exported to the trace file; empty means all.
    #[serde(default)]
    pub trace: Vec<String>,
    pub stored_draws: usize,
    pub dimension: usize,
    pub mu_half_width: usize,
    pub prior: PriorConfig,
    pub stats: SamplerStats,
}

fn one() -> usize {
    1
}

impl RunMetadata {
    pub fn chain_config(&self) -> Result<ChainConfig, SamplesIoError> {
        let seed = self.seed.parse().map_err(|_| {
            SamplesIoError::Metadata(format!(
                "seed {:?} is not an unsigned 64-bit integer",
                self.seed
            ))
        })?;
        let config = ChainConfig {
            iterations: self.iterations,
            burn_in: self.burn_in,
            thin: self.thin,
            seed,
            prior: self.prior,
            eps: self.eps,
        };
        config
            .validate()
            .map_err(|e| SamplesIoError::Metadata(e.to_string()))?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String, SamplesIoError> {
        toml::to_string(self).map_err(|e| SamplesIoError::Metadata(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self, SamplesIoError> {
        toml::from_str(text).map_err(|e| SamplesIoError::Metadata(e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self, SamplesIoError> {
        let text = std::fs::read_to_string(path).map_err(|source| SamplesIoError::Io {
            path: path.into(),
            source,
        })?;
        Self::from_toml(&text)
    }
}

pub fn write_samples_csv<W: Write>(samples: &ChainSamples, out: W) -> Result<(), SamplesIoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(samples.parameter_names())?;
    for row in samples.scalar_rows() {
        w.write_record(
            row.iter()
                .map(|v| v.map(|v| v.to_string()).unwrap_or_default()),
        )?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Raw samples table: header and rows with blanks as `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplesTable {
    pub names: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

pub fn read_samples_csv<R: Read>(input: R) -> Result<SamplesTable, SamplesIoError> {
    let mut r = csv::Reader::from_reader(input);
    let names: Vec<String> = r.headers()?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let row = rec
            .iter()
            .map(|f| {
                if f.is_empty() {
                    Ok(None)
                } else {
                    f.parse::<f64>()
                        .map(Some)
                        .map_err(|_| SamplesIoError::Parse {
                            line,
                            message: format!("{f:?} is not a number"),
                        })
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(SamplesTable { names, rows })
}

fn mu_index(name: &str) -> Option<i64> {
    name.strip_prefix("mu[")?.strip_suffix(']')?.parse().ok()
}

/// Rebuilds [`ChainSamples`] from a samples table and its metadata,
/// checking that the two agree.
pub fn samples_from_table(
    table: &SamplesTable,
    meta: &RunMetadata,
) -> Result<ChainSamples, SamplesIoError> {
    let config = meta.chain_config()?;
    let d = meta.dimension;
    let h = meta.mu_half_width as i64;
    let expected_cols = 2 * d + 3 + (2 * h + 1) as usize;
    if table.names.len() != expected_cols {
        return Err(SamplesIoError::Integrity(format!(
            "{} columns, expected {expected_cols} for dimension {d} and mu half-width {h}",
            table.names.len()
        )));
    }
    if table.rows.len() != meta.stored_draws {
        return Err(SamplesIoError::Integrity(format!(
            "{} draws in the samples file, metadata records {}",
            table.rows.len(),
            meta.stored_draws
        )));
    }
    if meta.stored_draws != config.stored_draws() {
        return Err(SamplesIoError::Integrity(format!(
            "metadata records {} draws but its chain settings imply {}",
            meta.stored_draws,
            config.stored_draws()
        )));
    }
    let labels = &table.names[..d];
    for (k, l) in labels.iter().enumerate() {
        if table.names[d + k] != format!("omega:{l}") {
            return Err(SamplesIoError::Integrity(format!(
                "column {} should be omega:{l}",
                d + k + 1
            )));
        }
    }
    if table.names[2 * d..2 * d + 3] != ["sigma_mu", "sigma2", "sigma_omega2"] {
        return Err(SamplesIoError::Integrity(
            "missing sigma_mu, sigma2, sigma_omega2 columns".into(),
        ));
    }
    let mu_start = 2 * d + 3;
    for (k, j) in (-h..=h).enumerate() {
        if mu_index(&table.names[mu_start + k]) != Some(j) {
            return Err(SamplesIoError::Integrity(format!(
                "column {} should be mu[{j}]",
                mu_start + k + 1
            )));
        }
    }

    let mut draws = Vec::with_capacity(table.rows.len());
    for (n, row) in table.rows.iter().enumerate() {
        let missing =
            |c: usize| SamplesIoError::Integrity(format!("draw {n}: {} is blank", table.names[c]));
        let scalars: Vec<f64> = (0..mu_start)
            .map(|c| row[c].ok_or_else(|| missing(c)))
            .collect::<Result<_, _>>()?;
        let mu_cells = &row[mu_start..];
        let present: Vec<usize> = (0..mu_cells.len())
            .filter(|&k| mu_cells[k].is_some())
            .collect();
        let (first, last) = match (present.first(), present.last()) {
            (Some(&a), Some(&b)) => (a, b),
            _ => {
                return Err(SamplesIoError::Integrity(format!(
                    "draw {n} has no mu values"
                )))
            }
        };
        if present.len() != last - first + 1 || first + last != mu_cells.len() - 1 {
            return Err(SamplesIoError::Integrity(format!(
                "draw {n}: mu values do not form a symmetric window"
            )));
        }
        let mu = MuWindow::from_values(mu_cells[first..=last].iter().map(|v| v.unwrap()).collect())
            .map_err(|e| SamplesIoError::Integrity(format!("draw {n}: {e}")))?;
        draws.push(ParameterState {
            mu,
            beta: scalars[..d].to_vec(),
            beta_omega: scalars[d..2 * d].to_vec(),
            sigma_mu: scalars[2 * d],
            sigma2: scalars[2 * d + 1],
            sigma_omega2: scalars[2 * d + 2],
        });
    }
    Ok(ChainSamples {
        draws,
        config,
        column_labels: labels.to_vec(),
        stats: meta.stats,
    })
}

/// Reads a samples file and its sidecar.
pub fn load_samples(
    samples_path: &Path,
    metadata_path: &Path,
) -> Result<(ChainSamples, RunMetadata), SamplesIoError> {
    let meta = RunMetadata::read(metadata_path)?;
    let file = std::fs::File::open(samples_path).map_err(|source| SamplesIoError::Io {
        path: samples_path.into(),
        source,
    })?;
    let table = read_samples_csv(std::io::BufReader::new(file))?;
    Ok((samples_from_table(&table, &meta)?, meta))
}
