//! Item-response data and the indicator design vectors built from it.
//!
//! Column layouts (0-based, `N` persons, `I` items):
//!
//! * dichotomous: `[1 | +1 at person p | −1 at item i]`, width `1 + N + I`
//! * polytomous: `[1 | person block | +1 at (item i, category u′)]` with the
//!   category block ordered category-major, width `1 + N + m*·I`
//! * multidimensional: the person block becomes `N·D` columns ordered
//!   dimension-major, `+1` at `(p, d_i)`
//!
//! Person covariates (and missing-value indicators) are appended last.

use log::warn;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DesignError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("duplicate response for person {person}, item {item}")]
    DuplicateCell { person: i64, item: i64 },
    #[error("{0}")]
    WrongBuilder(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observation {
    /// Dense person index, 0-based.
    pub person: usize,
    /// Dense item index, 0-based.
    pub item: usize,
    /// Raw score u′ in `0..=m_i`.
    pub score: u32,
}

/// Person-level covariates; `values[p][k]` is `None` when missing.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateTable {
    pub names: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemResponseData {
    /// Original identifier of each dense person index.
    pub person_ids: Vec<i64>,
    /// Original identifier of each dense item index.
    pub item_ids: Vec<i64>,
    pub observations: Vec<Observation>,
    /// Highest score `m_i` of each item.
    pub category_counts: Vec<u32>,
    pub covariates: Option<CovariateTable>,
    /// Measurement dimension `d_i ∈ 1..=D` of each item, when declared.
    pub dimension_map: Option<Vec<Option<usize>>>,
}

impl ItemResponseData {
    /// Data with identity identifiers `1..=N`, `1..=I` and `m_i` inferred
    /// from the observed maxima.
    pub fn from_observations(
        n_persons: usize,
        n_items: usize,
        observations: Vec<Observation>,
    ) -> Result<Self, DesignError> {
        let mut category_counts = vec![0u32; n_items];
        for o in &observations {
            if o.item >= n_items || o.person >= n_persons {
                return Err(DesignError::InvalidData(format!(
                    "observation ({}, {}) outside {n_persons} persons x {n_items} items",
                    o.person, o.item
                )));
            }
            category_counts[o.item] = category_counts[o.item].max(o.score);
        }
        let data = Self {
            person_ids: (1..=n_persons as i64).collect(),
            item_ids: (1..=n_items as i64).collect(),
            observations,
            category_counts,
            covariates: None,
            dimension_map: None,
        };
        data.validate()?;
        Ok(data)
    }

    pub fn n_persons(&self) -> usize {
        self.person_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn max_category(&self) -> u32 {
        self.category_counts.iter().copied().max().unwrap_or(0)
    }

    pub fn is_dichotomous(&self) -> bool {
        self.max_category() <= 1
    }

    pub fn validate(&self) -> Result<(), DesignError> {
        if self.person_ids.is_empty() || self.item_ids.is_empty() {
            return Err(DesignError::InvalidData("no persons or no items".into()));
        }
        if self.category_counts.len() != self.n_items() {
            return Err(DesignError::InvalidData(
                "category_counts length differs from item count".into(),
            ));
        }
        let mut seen = BTreeSet::new();
        for o in &self.observations {
            if o.person >= self.n_persons() || o.item >= self.n_items() {
                return Err(DesignError::InvalidData(format!(
                    "observation index ({}, {}) out of range",
                    o.person, o.item
                )));
            }
            if o.score > self.category_counts[o.item] {
                return Err(DesignError::InvalidData(format!(
                    "score {} of person {} on item {} exceeds m_i = {}",
                    o.score,
                    self.person_ids[o.person],
                    self.item_ids[o.item],
                    self.category_counts[o.item]
                )));
            }
            if !seen.insert((o.person, o.item)) {
                return Err(DesignError::DuplicateCell {
                    person: self.person_ids[o.person],
                    item: self.item_ids[o.item],
                });
            }
        }
        if let Some(cov) = &self.covariates {
            if cov.values.len() != self.n_persons() {
                return Err(DesignError::InvalidData(
                    "covariate rows do not align with persons".into(),
                ));
            }
            if cov.values.iter().any(|row| row.len() != cov.names.len()) {
                return Err(DesignError::InvalidData("ragged covariate table".into()));
            }
        }
        if let Some(dims) = &self.dimension_map {
            if dims.len() != self.n_items() {
                return Err(DesignError::InvalidData(
                    "dimension map does not align with items".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Role of one design column. Persons and items carry their original ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ColumnLabel {
    Intercept,
    Ability(i64),
    AbilityDim(i64, usize),
    Difficulty(i64),
    DifficultyCategory(i64, u32),
    Covariate(String),
    MissingIndicator(String),
}

impl fmt::Display for ColumnLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnLabel::Intercept => write!(f, "intercept"),
            ColumnLabel::Ability(p) => write!(f, "theta[{p}]"),
            ColumnLabel::AbilityDim(p, d) => write!(f, "theta[{p}:d{d}]"),
            ColumnLabel::Difficulty(i) => write!(f, "b[{i}]"),
            ColumnLabel::DifficultyCategory(i, u) => write!(f, "b[{i}:u{u}]"),
            ColumnLabel::Covariate(name) => write!(f, "{name}"),
            ColumnLabel::MissingIndicator(name) => write!(f, "Miss:{name}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignRow {
    pub person: usize,
    pub item: usize,
    /// Binary response `u = 1(u′ > 0)`.
    pub response: u8,
    /// Raw score u′.
    pub score: u32,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationDesign {
    pub rows: Vec<DesignRow>,
    pub column_labels: Vec<ColumnLabel>,
    pub dimension: usize,
    /// Non-fatal issues met while building (e.g. constant covariates).
    pub warnings: Vec<String>,
}

impl ObservationDesign {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn label_strings(&self) -> Vec<String> {
        self.column_labels.iter().map(ToString::to_string).collect()
    }

    /// Column indices holding the ability coefficients, in label order.
    pub fn ability_columns(&self) -> Vec<usize> {
        self.column_labels
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, ColumnLabel::Ability(_) | ColumnLabel::AbilityDim(..)))
            .map(|(k, _)| k)
            .collect()
    }

    /// `(person, item)` of every row, in row order.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        self.rows.iter().map(|r| (r.person, r.item)).collect()
    }
}

#[derive(Clone, Copy)]
enum PersonBlock {
    Unidimensional,
    Multidimensional(usize),
}

#[derive(Clone, Copy)]
enum ItemBlock {
    Signed,
    Categories(u32),
}

fn build(
    data: &ItemResponseData,
    persons: PersonBlock,
    items: ItemBlock,
) -> Result<ObservationDesign, DesignError> {
    data.validate()?;
    let n = data.n_persons();
    let n_items = data.n_items();
    let person_width = match persons {
        PersonBlock::Unidimensional => n,
        PersonBlock::Multidimensional(d) => n * d,
    };
    let item_width = match items {
        ItemBlock::Signed => n_items,
        ItemBlock::Categories(m) => m as usize * n_items,
    };
    let dimension = 1 + person_width + item_width;

    let mut labels = Vec::with_capacity(dimension);
    labels.push(ColumnLabel::Intercept);
    match persons {
        PersonBlock::Unidimensional => {
            labels.extend(data.person_ids.iter().map(|&p| ColumnLabel::Ability(p)))
        }
        PersonBlock::Multidimensional(dims) => {
            for d in 1..=dims {
                labels.extend(
                    data.person_ids
                        .iter()
                        .map(|&p| ColumnLabel::AbilityDim(p, d)),
                );
            }
        }
    }
    match items {
        ItemBlock::Signed => {
            labels.extend(data.item_ids.iter().map(|&i| ColumnLabel::Difficulty(i)))
        }
        ItemBlock::Categories(m) => {
            for u in 1..=m {
                labels.extend(
                    data.item_ids
                        .iter()
                        .map(|&i| ColumnLabel::DifficultyCategory(i, u)),
                );
            }
        }
    }

    let mut rows = Vec::with_capacity(data.observations.len());
    for o in &data.observations {
        let mut x = vec![0.0; dimension];
        x[0] = 1.0;
        let person_col = match persons {
            PersonBlock::Unidimensional => o.person,
            PersonBlock::Multidimensional(_) => {
                let d = data
                    .dimension_map
                    .as_ref()
                    .and_then(|m| m[o.item])
                    .ok_or_else(|| {
                        DesignError::InvalidData(format!(
                            "item {} has no dimension",
                            data.item_ids[o.item]
                        ))
                    })?;
                (d - 1) * n + o.person
            }
        };
        x[1 + person_col] = 1.0;
        match items {
            ItemBlock::Signed => x[1 + person_width + o.item] = -1.0,
            ItemBlock::Categories(_) => {
                if o.score > 0 {
                    x[1 + person_width + (o.score as usize - 1) * n_items + o.item] = 1.0;
                }
            }
        }
        rows.push(DesignRow {
            person: o.person,
            item: o.item,
            response: u8::from(o.score > 0),
            score: o.score,
            x,
        });
    }
    Ok(ObservationDesign {
        rows,
        column_labels: labels,
        dimension,
        warnings: Vec::new(),
    })
}

/// Base design: intercept, person indicator, negated item indicator.
pub fn build_dichotomous(data: &ItemResponseData) -> Result<ObservationDesign, DesignError> {
    if let Some((k, &m)) = data
        .category_counts
        .iter()
        .enumerate()
        .find(|(_, &m)| m > 1)
    {
        return Err(DesignError::WrongBuilder(format!(
            "item {} has {} score categories; use the polytomous design",
            data.item_ids[k],
            m + 1
        )));
    }
    build(data, PersonBlock::Unidimensional, ItemBlock::Signed)
}

/// Reference-category expansion: `u = 1(u′ > 0)` with an item-by-category
/// indicator for the observed score.
pub fn build_polytomous(data: &ItemResponseData) -> Result<ObservationDesign, DesignError> {
    build(
        data,
        PersonBlock::Unidimensional,
        ItemBlock::Categories(data.max_category().max(1)),
    )
}

/// Person-by-dimension ability columns; the item block follows the
/// dichotomous layout when every item is binary and the polytomous one
/// otherwise.
pub fn build_multidimensional(data: &ItemResponseData) -> Result<ObservationDesign, DesignError> {
    let dims = data.dimension_map.as_ref().ok_or_else(|| {
        DesignError::InvalidData("multidimensional design needs a dimension map".into())
    })?;
    let mut n_dims = 0;
    for (k, d) in dims.iter().enumerate() {
        match d {
            None => {
                return Err(DesignError::InvalidData(format!(
                    "item {} has no dimension",
                    data.item_ids[k]
                )));
            }
            Some(0) => {
                return Err(DesignError::InvalidData(format!(
                    "item {} has dimension 0",
                    data.item_ids[k]
                )));
            }
            Some(d) => n_dims = n_dims.max(*d),
        }
    }
    if n_dims > data.n_items() {
        return Err(DesignError::InvalidData(format!(
            "{n_dims} dimensions exceed {} items",
            data.n_items()
        )));
    }
    let items = if data.is_dichotomous() {
        ItemBlock::Signed
    } else {
        ItemBlock::Categories(data.max_category())
    };
    build(data, PersonBlock::Multidimensional(n_dims), items)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Appends the person covariates as the last columns.
///
/// Binary covariates stay 0/1; numeric ones are standardized. A missing
/// value is imputed (mode for binary, median for numeric) and flagged by a
/// `Miss:<name>` indicator column added after all covariates.
pub fn append_covariates(
    design: &ObservationDesign,
    data: &ItemResponseData,
) -> Result<ObservationDesign, DesignError> {
    let Some(table) = &data.covariates else {
        return Ok(design.clone());
    };
    if table.values.len() != data.n_persons() {
        return Err(DesignError::InvalidData(
            "covariate rows do not align with persons".into(),
        ));
    }
    let n = data.n_persons();
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(table.names.len());
    let mut indicators: Vec<(String, Vec<f64>)> = Vec::new();
    let mut warnings = design.warnings.clone();

    for (k, name) in table.names.iter().enumerate() {
        let raw: Vec<Option<f64>> = table.values.iter().map(|row| row[k]).collect();
        let mut observed: Vec<f64> = raw.iter().flatten().copied().collect();
        if observed.is_empty() {
            return Err(DesignError::InvalidData(format!(
                "covariate {name} has no observed values"
            )));
        }
        let binary = observed.iter().all(|&v| v == 0.0 || v == 1.0);
        let fill = if binary {
            let ones = observed.iter().filter(|&&v| v == 1.0).count();
            if 2 * ones > observed.len() {
                1.0
            } else {
                0.0
            }
        } else {
            median(&mut observed)
        };
        let mut column: Vec<f64> = raw.iter().map(|v| v.unwrap_or(fill)).collect();
        if raw.iter().any(Option::is_none) {
            indicators.push((
                name.clone(),
                raw.iter()
                    .map(|v| if v.is_none() { 1.0 } else { 0.0 })
                    .collect(),
            ));
        }
        if !binary {
            let mean = column.iter().sum::<f64>() / n as f64;
            let var = if n > 1 {
                column.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
            } else {
                0.0
            };
            if var > 0.0 {
                let sd = var.sqrt();
                column.iter_mut().for_each(|v| *v = (*v - mean) / sd);
            } else {
                let msg = format!("covariate {name} has zero variance; kept unstandardized");
                warn!("{msg}");
                warnings.push(msg);
            }
        }
        columns.push(column);
    }

    let mut out = design.clone();
    out.warnings = warnings;
    for name in &table.names {
        out.column_labels.push(ColumnLabel::Covariate(name.clone()));
    }
    for (name, _) in &indicators {
        out.column_labels
            .push(ColumnLabel::MissingIndicator(name.clone()));
    }
    out.dimension = out.column_labels.len();
    for row in &mut out.rows {
        row.x.extend(columns.iter().map(|c| c[row.person]));
        row.x.extend(indicators.iter().map(|(_, c)| c[row.person]));
    }
    Ok(out)
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> DesignError {
    DesignError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn open_csv(
    path: &Path,
    expected: &[&str],
) -> Result<(csv::Reader<std::fs::File>, Vec<String>), DesignError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => DesignError::Io {
                path: path.to_path_buf(),
                source,
            },
            other => parse_error(path, 1, format!("{other:?}")),
        })?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| parse_error(path, 1, e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if headers.len() < expected.len() || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(parse_error(
            path,
            1,
            format!(
                "expected header starting with `{}`, found `{}`",
                expected.join(","),
                headers.join(",")
            ),
        ));
    }
    Ok((reader, headers))
}

fn records<'a>(
    reader: &'a mut csv::Reader<std::fs::File>,
    path: &Path,
) -> impl Iterator<Item = Result<(u64, csv::StringRecord), DesignError>> + 'a {
    let path = path.to_path_buf();
    reader.records().map(move |r| {
        let rec = r.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(&path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        Ok((line, rec))
    })
}

fn parse_int(path: &Path, line: u64, field: &str, what: &str) -> Result<i64, DesignError> {
    field
        .parse::<i64>()
        .map_err(|_| parse_error(path, line, format!("{what} `{field}` is not an integer")))
}

/// Reads the responses CSV (`person,item,score`) plus optional covariate
/// (`person,<name>,…`) and dimension (`item,dimension`) files.
///
/// Person and item identifiers are reindexed densely in ascending order.
pub fn ingest_csv(
    responses: &Path,
    covariates: Option<&Path>,
    dimensions: Option<&Path>,
) -> Result<ItemResponseData, DesignError> {
    let (mut reader, headers) = open_csv(responses, &["person", "item", "score"])?;
    if headers.len() != 3 {
        return Err(parse_error(
            responses,
            1,
            "responses file must have exactly the columns person,item,score",
        ));
    }
    let mut raw = Vec::new();
    let mut seen = BTreeSet::new();
    for rec in records(&mut reader, responses) {
        let (line, rec) = rec?;
        if rec.len() != 3 {
            return Err(parse_error(
                responses,
                line,
                format!("expected 3 fields, found {}", rec.len()),
            ));
        }
        let person = parse_int(responses, line, &rec[0], "person")?;
        let item = parse_int(responses, line, &rec[1], "item")?;
        let score = parse_int(responses, line, &rec[2], "score")?;
        if score < 0 || score > u32::MAX as i64 {
            return Err(parse_error(
                responses,
                line,
                format!("score {score} is negative or too large"),
            ));
        }
        if !seen.insert((person, item)) {
            return Err(DesignError::DuplicateCell { person, item });
        }
        raw.push((person, item, score as u32));
    }
    if raw.is_empty() {
        return Err(DesignError::InvalidData(format!(
            "{} has no responses",
            responses.display()
        )));
    }

    let person_ids: Vec<i64> = raw
        .iter()
        .map(|r| r.0)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let item_ids: Vec<i64> = raw
        .iter()
        .map(|r| r.1)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let person_index: BTreeMap<i64, usize> = person_ids
        .iter()
        .enumerate()
        .map(|(k, &p)| (p, k))
        .collect();
    let item_index: BTreeMap<i64, usize> =
        item_ids.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let mut category_counts = vec![0u32; item_ids.len()];
    let observations: Vec<Observation> = raw
        .iter()
        .map(|&(p, i, s)| {
            let item = item_index[&i];
            category_counts[item] = category_counts[item].max(s);
            Observation {
                person: person_index[&p],
                item,
                score: s,
            }
        })
        .collect();

    let covariates = covariates
        .map(|path| read_covariates(path, &person_index))
        .transpose()?;
    let dimension_map = dimensions
        .map(|path| read_dimensions(path, &item_index))
        .transpose()?;

    let data = ItemResponseData {
        person_ids,
        item_ids,
        observations,
        category_counts,
        covariates,
        dimension_map,
    };
    data.validate()?;
    Ok(data)
}

fn read_covariates(
    path: &Path,
    person_index: &BTreeMap<i64, usize>,
) -> Result<CovariateTable, DesignError> {
    let (mut reader, headers) = open_csv(path, &["person"])?;
    let names: Vec<String> = headers[1..].to_vec();
    if names.iter().any(String::is_empty) {
        return Err(parse_error(path, 1, "empty covariate name"));
    }
    let mut values: Vec<Option<Vec<Option<f64>>>> = vec![None; person_index.len()];
    for rec in records(&mut reader, path) {
        let (line, rec) = rec?;
        if rec.len() != headers.len() {
            return Err(parse_error(
                path,
                line,
                format!("expected {} fields, found {}", headers.len(), rec.len()),
            ));
        }
        let person = parse_int(path, line, &rec[0], "person")?;
        let Some(&p) = person_index.get(&person) else {
            return Err(parse_error(
                path,
                line,
                format!("person {person} has no responses"),
            ));
        };
        if values[p].is_some() {
            return Err(parse_error(
                path,
                line,
                format!("duplicate covariate row for person {person}"),
            ));
        }
        let row = rec
            .iter()
            .skip(1)
            .map(|f| {
                if f.is_empty() {
                    Ok(None)
                } else {
                    f.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .map(Some)
                        .ok_or_else(|| {
                            parse_error(path, line, format!("covariate value `{f}` is not numeric"))
                        })
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        values[p] = Some(row);
    }
    let ids: Vec<i64> = person_index.keys().copied().collect();
    let values = values
        .into_iter()
        .enumerate()
        .map(|(p, row)| {
            row.ok_or_else(|| {
                DesignError::InvalidData(format!("person {} has no covariate row", ids[p]))
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CovariateTable { names, values })
}

fn read_dimensions(
    path: &Path,
    item_index: &BTreeMap<i64, usize>,
) -> Result<Vec<Option<usize>>, DesignError> {
    let (mut reader, headers) = open_csv(path, &["item", "dimension"])?;
    if headers.len() != 2 {
        return Err(parse_error(
            path,
            1,
            "dimensions file must have exactly the columns item,dimension",
        ));
    }
    let mut dims = vec![None; item_index.len()];
    for rec in records(&mut reader, path) {
        let (line, rec) = rec?;
        let item = parse_int(path, line, &rec[0], "item")?;
        let d = parse_int(path, line, &rec[1], "dimension")?;
        if d < 1 {
            return Err(parse_error(
                path,
                line,
                format!("dimension {d} must be at least 1"),
            ));
        }
        let Some(&i) = item_index.get(&item) else {
            return Err(parse_error(
                path,
                line,
                format!("item {item} has no responses"),
            ));
        };
        if dims[i].replace(d as usize).is_some() {
            return Err(parse_error(
                path,
                line,
                format!("duplicate dimension for item {item}"),
            ));
        }
    }
    Ok(dims)
}

/// Writes observations in the responses CSV layout using original ids.
pub fn write_responses_csv<W: Write>(data: &ItemResponseData, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["person", "item", "score"])?;
    for o in &data.observations {
        w.write_record([
            data.person_ids[o.person].to_string(),
            data.item_ids[o.item].to_string(),
            o.score.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
