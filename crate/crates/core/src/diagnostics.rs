//! Posterior predictive checks, fit criteria and Monte Carlo summaries of a
//! stored chain.

use crate::design::ObservationDesign;
use crate::model::{self, ModelError};
use crate::sampler::ChainSamples;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};
use std::io::{self, Write};
use thiserror::Error;

/// Probabilities at which posterior quantiles are reported.
pub const SUMMARY_PROBS: [f64; 5] = [0.025, 0.25, 0.5, 0.75, 0.975];

pub const DEFAULT_OUTLIER_THRESHOLD: f64 = 2.0;
pub const DEFAULT_MCCI_LEVEL: f64 = 0.95;
/// Shortest chain accepted by the batch-means estimator.
pub const MIN_BATCH_CHAIN: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("no stored draws")]
    EmptySamples,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("residual undefined: predictive variance is zero")]
    UndefinedResidual,
    #[error("{0} is undefined")]
    UndefinedStatistic(String),
    #[error("chain of length {found} is too short; need at least {needed}")]
    InsufficientData { needed: usize, found: usize },
    #[error("models cannot be compared: {0}")]
    InvalidComparison(String),
    #[error("unknown parameter {name:?}; valid names: {}", valid.join(", "))]
    UnknownParameter { name: String, valid: Vec<String> },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Posterior predictive pmf, mean and variance of one binary response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Predictive {
    pub pmf1: f64,
    pub mean: f64,
    pub variance: f64,
}

impl Predictive {
    pub fn from_probability(p: f64) -> Self {
        Self {
            pmf1: p,
            mean: p,
            variance: p * (1.0 - p),
        }
    }
}

/// Averages the response probability of `x` over the stored draws. The
/// draws must cover the weight window of `x` (see
/// [`ChainSamples::cover_design`]).
pub fn posterior_predictive(
    x: &[f64],
    samples: &ChainSamples,
) -> Result<Predictive, DiagnosticsError> {
    let first = samples
        .draws
        .first()
        .ok_or(DiagnosticsError::EmptySamples)?;
    if x.len() != first.dimension() {
        return Err(DiagnosticsError::InvalidArgument(format!(
            "design vector has length {}, draws have dimension {}",
            x.len(),
            first.dimension()
        )));
    }
    let eps = samples.config.eps;
    let mut total = 0.0;
    for draw in &samples.draws {
        total += model::response_probability(x, draw, eps)?;
    }
    Ok(Predictive::from_probability(
        total / samples.draws.len() as f64,
    ))
}

/// `(u − mean)/√variance`.
pub fn residual_from_moments(u: u8, mean: f64, variance: f64) -> Option<f64> {
    if variance > 0.0 {
        Some((f64::from(u) - mean) / variance.sqrt())
    } else {
        None
    }
}

pub fn standardized_residual(
    u: u8,
    x: &[f64],
    samples: &ChainSamples,
) -> Result<f64, DiagnosticsError> {
    let p = posterior_predictive(x, samples)?;
    residual_from_moments(u, p.mean, p.variance).ok_or(DiagnosticsError::UndefinedResidual)
}

/// Observed responses next to their posterior predictive moments.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTable {
    pub cells: Vec<(usize, usize)>,
    pub responses: Vec<u8>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

impl PredictionTable {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Posterior predictive moments of every design row, in row order.
pub fn predict_design(
    design: &ObservationDesign,
    samples: &ChainSamples,
) -> Result<PredictionTable, DiagnosticsError> {
    if samples.is_empty() {
        return Err(DiagnosticsError::EmptySamples);
    }
    let preds: Vec<Predictive> = design
        .rows
        .par_iter()
        .map(|row| posterior_predictive(&row.x, samples))
        .collect::<Result<_, _>>()?;
    Ok(PredictionTable {
        cells: design.cells(),
        responses: design.rows.iter().map(|r| r.response).collect(),
        means: preds.iter().map(|p| p.mean).collect(),
        variances: preds.iter().map(|p| p.variance).collect(),
    })
}

fn criterion_parts(table: &PredictionTable) -> (f64, f64) {
    let gof = table
        .responses
        .iter()
        .zip(&table.means)
        .map(|(&u, &m)| (f64::from(u) - m).powi(2))
        .sum();
    let penalty = table.variances.iter().sum();
    (gof, penalty)
}

fn total_sum_of_squares(responses: &[u8]) -> f64 {
    let n = responses.len() as f64;
    let bar = responses.iter().map(|&u| f64::from(u)).sum::<f64>() / n;
    responses
        .iter()
        .map(|&u| (f64::from(u) - bar).powi(2))
        .sum()
}

/// `(gof, penalty, gof + penalty)`.
pub fn predictive_criterion(
    design: &ObservationDesign,
    samples: &ChainSamples,
) -> Result<(f64, f64, f64), DiagnosticsError> {
    let (gof, penalty) = criterion_parts(&predict_design(design, samples)?);
    Ok((gof, penalty, gof + penalty))
}

pub fn r_squared(
    design: &ObservationDesign,
    samples: &ChainSamples,
) -> Result<f64, DiagnosticsError> {
    let table = predict_design(design, samples)?;
    let tss = total_sum_of_squares(&table.responses);
    if !(tss > 0.0) {
        return Err(DiagnosticsError::UndefinedStatistic(
            "R² (responses have no variation)".into(),
        ));
    }
    Ok(1.0 - criterion_parts(&table).0 / tss)
}

/// Residual table and predictive fit criteria of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub label: String,
    pub table: PredictionTable,
    /// `None` where the predictive variance is zero.
    pub residuals: Vec<Option<f64>>,
    pub gof: f64,
    pub penalty: f64,
    pub criterion_d: f64,
    /// `None` when the responses have no variation.
    pub r_squared: Option<f64>,
    pub threshold: f64,
    pub outlier_cells: Vec<(usize, usize)>,
}

impl FitReport {
    pub fn from_table(
        label: impl Into<String>,
        table: PredictionTable,
        threshold: f64,
    ) -> Result<Self, DiagnosticsError> {
        if table.is_empty() {
            return Err(DiagnosticsError::InvalidArgument(
                "empty prediction table".into(),
            ));
        }
        if !(threshold > 0.0) {
            return Err(DiagnosticsError::InvalidArgument(format!(
                "outlier threshold must be positive, got {threshold}"
            )));
        }
        let residuals: Vec<Option<f64>> = (0..table.len())
            .map(|k| residual_from_moments(table.responses[k], table.means[k], table.variances[k]))
            .collect();
        let outlier_cells = residuals
            .iter()
            .zip(&table.cells)
            .filter(|(r, _)| r.is_some_and(|r| r.abs() > threshold))
            .map(|(_, &c)| c)
            .collect();
        let (gof, penalty) = criterion_parts(&table);
        let tss = total_sum_of_squares(&table.responses);
        let r_squared = (tss > 0.0).then(|| 1.0 - gof / tss);
        Ok(Self {
            label: label.into(),
            table,
            residuals,
            gof,
            penalty,
            criterion_d: gof + penalty,
            r_squared,
            threshold,
            outlier_cells,
        })
    }

    pub fn is_outlier(&self, k: usize) -> bool {
        self.residuals[k].is_some_and(|r| r.abs() > self.threshold)
    }
}

pub fn fit_report(
    label: impl Into<String>,
    design: &ObservationDesign,
    samples: &ChainSamples,
    threshold: f64,
) -> Result<FitReport, DiagnosticsError> {
    FitReport::from_table(label, predict_design(design, samples)?, threshold)
}

/// Indices of `reports` from best to worst: ascending D, then Gof, then label.
pub fn compare_models(reports: &[FitReport]) -> Result<Vec<usize>, DiagnosticsError> {
    if reports.len() < 2 {
        return Err(DiagnosticsError::InvalidComparison(format!(
            "need at least two reports, got {}",
            reports.len()
        )));
    }
    let mut reference = reports[0].table.cells.clone();
    reference.sort_unstable();
    for r in &reports[1..] {
        let mut cells = r.table.cells.clone();
        cells.sort_unstable();
        if cells != reference {
            return Err(DiagnosticsError::InvalidComparison(format!(
                "{:?} and {:?} were fitted to different cells",
                reports[0].label, r.label
            )));
        }
    }
    let mut order: Vec<usize> = (0..reports.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (&reports[a], &reports[b]);
        ra.criterion_d
            .total_cmp(&rb.criterion_d)
            .then(ra.gof.total_cmp(&rb.gof))
            .then_with(|| ra.label.cmp(&rb.label))
    });
    Ok(order)
}

/// Linear-interpolation sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty() && (0.0..=1.0).contains(&p));
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted_copy(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

/// Point estimate with the half-width of its Monte Carlo confidence interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mcci {
    pub estimate: f64,
    pub half_width: f64,
}

fn batches(chain: &[f64]) -> Result<(usize, usize), DiagnosticsError> {
    if chain.len() < MIN_BATCH_CHAIN {
        return Err(DiagnosticsError::InsufficientData {
            needed: MIN_BATCH_CHAIN,
            found: chain.len(),
        });
    }
    let count = (chain.len() as f64).sqrt().floor() as usize;
    Ok((count, chain.len() / count))
}

fn t_half_width(batch_values: &[f64], level: f64) -> f64 {
    let b = batch_values.len();
    let t = StudentsT::new(0.0, 1.0, (b - 1) as f64).expect("at least ten batches");
    let crit = t.inverse_cdf(0.5 + level / 2.0);
    crit * sample_sd(batch_values) / (b as f64).sqrt()
}

fn check_level(level: f64) -> Result<(), DiagnosticsError> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(DiagnosticsError::InvalidArgument(format!(
            "confidence level must lie in (0, 1), got {level}"
        )))
    }
}

/// Batch-means interval for the chain mean: ⌊√S⌋ equal consecutive batches
/// (the trailing remainder is dropped) and a Student-t half-width at
/// confidence `level`.
pub fn batch_means_mcci(chain: &[f64], level: f64) -> Result<Mcci, DiagnosticsError> {
    check_level(level)?;
    let (count, size) = batches(chain)?;
    let means: Vec<f64> = chain[..count * size].chunks_exact(size).map(mean).collect();
    Ok(Mcci {
        estimate: mean(chain),
        half_width: t_half_width(&means, level),
    })
}

/// Batch-means interval for the `p` quantile, using per-batch empirical
/// quantiles as the batch values.
pub fn batch_quantile_mcci(chain: &[f64], p: f64, level: f64) -> Result<Mcci, DiagnosticsError> {
    check_level(level)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(DiagnosticsError::InvalidArgument(format!(
            "quantile probability {p} outside [0, 1]"
        )));
    }
    let (count, size) = batches(chain)?;
    let qs: Vec<f64> = chain[..count * size]
        .chunks_exact(size)
        .map(|b| quantile_sorted(&sorted_copy(b), p))
        .collect();
    Ok(Mcci {
        estimate: quantile_sorted(&sorted_copy(chain), p),
        half_width: t_half_width(&qs, level),
    })
}

/// Half-widths for the mean and each of [`SUMMARY_PROBS`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McciHalfWidths {
    pub mean: f64,
    pub quantiles: [f64; 5],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSummary {
    pub name: String,
    /// Draws in which the parameter was materialized.
    pub count: usize,
    pub mean: f64,
    pub sd: f64,
    pub quantiles: [f64; 5],
    pub min: f64,
    pub max: f64,
    /// `None` when fewer than [`MIN_BATCH_CHAIN`] values are available.
    pub mcci: Option<McciHalfWidths>,
}

impl ParameterSummary {
    pub fn from_chain(name: impl Into<String>, chain: &[f64], level: f64) -> Option<Self> {
        if chain.is_empty() {
            return None;
        }
        let sorted = sorted_copy(chain);
        let quantiles = SUMMARY_PROBS.map(|p| quantile_sorted(&sorted, p));
        let mcci = batch_means_mcci(chain, level).ok().map(|m| McciHalfWidths {
            mean: m.half_width,
            quantiles: SUMMARY_PROBS
                .map(|p| batch_quantile_mcci(chain, p, level).map_or(f64::NAN, |q| q.half_width)),
        });
        Some(Self {
            name: name.into(),
            count: chain.len(),
            mean: mean(chain),
            sd: sample_sd(chain),
            quantiles,
            min: sorted[0],
            max: sorted[sorted.len() - 1],
            mcci,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub level: f64,
    pub parameters: Vec<ParameterSummary>,
}

impl PosteriorSummary {
    pub fn get(&self, name: &str) -> Option<&ParameterSummary> {
        self.parameters.iter().find(|p| p.name == name)
    }
}

/// Per-parameter summaries in [`ChainSamples::parameter_names`] order.
/// μ locations never materialized in any draw are skipped.
pub fn posterior_summary(
    samples: &ChainSamples,
    level: f64,
) -> Result<PosteriorSummary, DiagnosticsError> {
    if samples.is_empty() {
        return Err(DiagnosticsError::EmptySamples);
    }
    check_level(level)?;
    let names = samples.parameter_names();
    let rows = samples.scalar_rows();
    let parameters = names
        .into_par_iter()
        .enumerate()
        .filter_map(|(k, name)| {
            let chain: Vec<f64> = rows.iter().filter_map(|r| r[k]).collect();
            ParameterSummary::from_chain(name, &chain, level)
        })
        .collect();
    Ok(PosteriorSummary { level, parameters })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub draw: usize,
    pub parameter: String,
    pub value: Option<f64>,
}

/// Long-format trace, draw-major and in the requested name order. An empty
/// `names` exports every parameter.
pub fn trace_export(
    samples: &ChainSamples,
    names: &[String],
) -> Result<Vec<TraceRow>, DiagnosticsError> {
    let valid = samples.parameter_names();
    let columns: Vec<usize> = if names.is_empty() {
        (0..valid.len()).collect()
    } else {
        names
            .iter()
            .map(|n| {
                valid.iter().position(|v| v == n).ok_or_else(|| {
                    DiagnosticsError::UnknownParameter {
                        name: n.clone(),
                        valid: valid.clone(),
                    }
                })
            })
            .collect::<Result<_, _>>()?
    };
    let rows = samples.scalar_rows();
    let mut out = Vec::with_capacity(rows.len() * columns.len());
    for (draw, row) in rows.iter().enumerate() {
        for &c in &columns {
            out.push(TraceRow {
                draw,
                parameter: valid[c].clone(),
                value: row[c],
            });
        }
    }
    Ok(out)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Per-cell fit table. `person_ids`/`item_ids` translate dense indices back
/// to the ids of the input file.
pub fn write_fit_csv<W: Write>(
    report: &FitReport,
    person_ids: &[i64],
    item_ids: &[i64],
    out: W,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "person", "item", "u", "mean", "variance", "residual", "outlier",
    ])?;
    let t = &report.table;
    for k in 0..t.len() {
        let (p, i) = t.cells[k];
        w.write_record([
            person_ids[p].to_string(),
            item_ids[i].to_string(),
            t.responses[k].to_string(),
            t.means[k].to_string(),
            t.variances[k].to_string(),
            fmt_opt(report.residuals[k]),
            u8::from(report.is_outlier(k)).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Gof, Penalty, D and R² as `key = value` lines.
pub fn write_fit_stats<W: Write>(report: &FitReport, mut out: W) -> io::Result<()> {
    writeln!(out, "model = {}", report.label)?;
    writeln!(out, "cells = {}", report.table.len())?;
    writeln!(out, "gof = {}", report.gof)?;
    writeln!(out, "penalty = {}", report.penalty)?;
    writeln!(out, "criterion_d = {}", report.criterion_d)?;
    match report.r_squared {
        Some(r) => writeln!(out, "r_squared = {r}")?,
        None => writeln!(out, "r_squared = undefined")?,
    }
    writeln!(out, "outlier_threshold = {}", report.threshold)?;
    writeln!(out, "outliers = {}", report.outlier_cells.len())
}

/// One row per parameter; `with_mcci` appends the half-width columns.
pub fn write_summary_csv<W: Write>(
    summary: &PosteriorSummary,
    with_mcci: bool,
    out: W,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = [
        "parameter",
        "count",
        "mean",
        "sd",
        "q2.5",
        "q25",
        "q50",
        "q75",
        "q97.5",
        "min",
        "max",
    ]
    .map(String::from)
    .to_vec();
    if with_mcci {
        header.extend(
            [
                "mcci_mean",
                "mcci_q2.5",
                "mcci_q25",
                "mcci_q50",
                "mcci_q75",
                "mcci_q97.5",
            ]
            .map(String::from),
        );
    }
    w.write_record(&header)?;
    for p in &summary.parameters {
        let mut rec = vec![
            p.name.clone(),
            p.count.to_string(),
            p.mean.to_string(),
            p.sd.to_string(),
        ];
        rec.extend(p.quantiles.iter().map(f64::to_string));
        rec.extend([p.min.to_string(), p.max.to_string()]);
        if with_mcci {
            match &p.mcci {
                Some(m) => {
                    rec.push(m.mean.to_string());
                    rec.extend(m.quantiles.iter().map(f64::to_string));
                }
                None => rec.extend(std::iter::repeat_n(String::new(), 6)),
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_csv<W: Write>(rows: &[TraceRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["draw", "parameter", "value"])?;
    for r in rows {
        w.write_record([r.draw.to_string(), r.parameter.clone(), fmt_opt(r.value)])?;
    }
    w.flush()?;
    Ok(())
}
