//! Household records, CSV ingestion, synthetic generation and the pool/holdout split.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::seeding;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("validation error at line {line}: {message}")]
    Validation { line: u64, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroupId {
    pub label: String,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub id: u64,
    pub group: usize,
    pub features: Vec<f64>,
    /// Daily per-capita consumption in USD.
    pub consumption: f64,
}

impl Point {
    pub fn log_consumption(&self) -> f64 {
        self.consumption.ln()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Vec<Point>,
    feature_names: Vec<String>,
    groups: Vec<GroupId>,
}

impl Dataset {
    /// Builds a dataset after checking every invariant: unique ids, positive
    /// consumption, a fixed feature width and declared groups.
    pub fn new(
        points: Vec<Point>,
        feature_names: Vec<String>,
        groups: Vec<GroupId>,
    ) -> Result<Self, DatasetError> {
        if feature_names.is_empty() {
            return Err(DatasetError::Config("at least one feature is required".into()));
        }
        for (i, g) in groups.iter().enumerate() {
            if g.index != i {
                return Err(DatasetError::Config(format!(
                    "group `{}` has index {} but is declared at position {i}",
                    g.label, g.index
                )));
            }
        }
        let d = feature_names.len();
        let mut seen = HashSet::with_capacity(points.len());
        for (row, p) in points.iter().enumerate() {
            let line = row as u64 + 2;
            if !seen.insert(p.id) {
                return Err(DatasetError::Parse { line, message: format!("duplicate id {}", p.id) });
            }
            if p.features.len() != d {
                return Err(DatasetError::Parse {
                    line,
                    message: format!("expected {d} features, found {}", p.features.len()),
                });
            }
            if p.group >= groups.len() {
                return Err(DatasetError::Validation {
                    line,
                    message: format!("undeclared group index {}", p.group),
                });
            }
            if !(p.consumption > 0.0 && p.consumption.is_finite()) {
                return Err(DatasetError::Validation {
                    line,
                    message: format!("consumption must be positive and finite, got {}", p.consumption),
                });
            }
            if p.features.iter().any(|v| !v.is_finite()) {
                return Err(DatasetError::Validation { line, message: "non-finite feature value".into() });
            }
        }
        Ok(Self { points, feature_names, groups })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn groups(&self) -> &[GroupId] {
        &self.groups
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn dimensionality(&self) -> usize {
        self.feature_names.len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn ids(&self) -> Vec<u64> {
        self.points.iter().map(|p| p.id).collect()
    }

    /// Number of points in each group, indexed by group index.
    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.groups.len()];
        for p in &self.points {
            sizes[p.group] += 1;
        }
        sizes
    }

    /// Map from id to position in `points()`.
    pub fn index_by_id(&self) -> HashMap<u64, usize> {
        self.points.iter().enumerate().map(|(i, p)| (p.id, i)).collect()
    }
}

/// Column names that carry the non-feature fields. Every other column is a feature.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub id: String,
    pub group: String,
    pub consumption: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self { id: "id".into(), group: "group".into(), consumption: "consumption".into() }
    }
}

fn csv_err(e: csv::Error) -> DatasetError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => DatasetError::Io(io),
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => DatasetError::Parse {
            line,
            message: format!("ragged row: expected {expected_len} fields, found {len}"),
        },
        other => DatasetError::Parse { line, message: format!("{other:?}") },
    }
}

pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Dataset, DatasetError> {
    read_csv(File::open(path)?, schema)
}

pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<Dataset, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers().map_err(csv_err)?.clone();

    let mut names = HashSet::new();
    for h in header.iter() {
        if !names.insert(h) {
            return Err(DatasetError::Parse { line: 1, message: format!("duplicate column `{h}`") });
        }
    }
    let find = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| DatasetError::Parse {
            line: 1,
            message: format!("missing required column `{name}`"),
        })
    };
    let id_col = find(&schema.id)?;
    let group_col = find(&schema.group)?;
    let cons_col = find(&schema.consumption)?;
    let feature_cols: Vec<usize> =
        (0..header.len()).filter(|&c| c != id_col && c != group_col && c != cons_col).collect();
    if feature_cols.is_empty() {
        return Err(DatasetError::Parse { line: 1, message: "no feature columns".into() });
    }
    let feature_names = feature_cols.iter().map(|&c| header[c].to_string()).collect();

    let mut groups: Vec<GroupId> = Vec::new();
    let mut group_index: HashMap<String, usize> = HashMap::new();
    let mut points = Vec::new();
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let parse_f = |col: usize, what: &str| -> Result<f64, DatasetError> {
            rec[col].trim().parse::<f64>().map_err(|_| DatasetError::Parse {
                line,
                message: format!("invalid {what} `{}`", &rec[col]),
            })
        };
        let id_text = rec[id_col].trim();
        if id_text.is_empty() {
            return Err(DatasetError::Parse { line, message: "missing id".into() });
        }
        let id: u64 = id_text
            .parse()
            .map_err(|_| DatasetError::Parse { line, message: format!("invalid id `{id_text}`") })?;
        if !seen.insert(id) {
            return Err(DatasetError::Parse { line, message: format!("duplicate id {id}") });
        }
        let label = rec[group_col].to_string();
        let group = match group_index.get(&label) {
            Some(&g) => g,
            None => {
                let g = groups.len();
                groups.push(GroupId { label: label.clone(), index: g });
                group_index.insert(label, g);
                g
            }
        };
        let consumption = parse_f(cons_col, "consumption")?;
        if !(consumption > 0.0 && consumption.is_finite()) {
            return Err(DatasetError::Validation {
                line,
                message: format!("consumption must be positive, got {consumption}"),
            });
        }
        let features = feature_cols
            .iter()
            .map(|&c| parse_f(c, "feature"))
            .collect::<Result<Vec<_>, _>>()?;
        points.push(Point { id, group, features, consumption });
    }
    Dataset::new(points, feature_names, groups)
}

pub fn write_csv<W: Write>(dataset: &Dataset, writer: W) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string(), "group".to_string(), "consumption".to_string()];
    header.extend(dataset.feature_names.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for p in &dataset.points {
        row.clear();
        row.push(p.id.to_string());
        row.push(dataset.groups[p.group].label.clone());
        row.push(p.consumption.to_string());
        row.extend(p.features.iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(dataset: &Dataset, path: &Path) -> Result<(), DatasetError> {
    let f = std::io::BufWriter::new(File::create(path)?);
    write_csv(dataset, f)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticParams {
    pub n: usize,
    pub d: usize,
    pub n_groups: usize,
    pub noise_sd: f64,
    pub seed: u64,
}

/// The exact log-linear model a synthetic dataset was drawn from:
/// `ln(consumption) = intercept + coefficients · x + group_offsets[g] + noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratingModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub group_offsets: Vec<f64>,
}

impl GeneratingModel {
    pub fn log_mean(&self, features: &[f64], group: usize) -> f64 {
        let lin: f64 = self.coefficients.iter().zip(features).map(|(b, x)| b * x).sum();
        self.intercept + lin + self.group_offsets[group]
    }
}

pub fn generate_synthetic(params: SyntheticParams) -> Result<Dataset, DatasetError> {
    generate_synthetic_with_model(params).map(|(ds, _)| ds)
}

/// Draws features from group-shifted unit Gaussians and sets consumption to
/// the exponential of a linear score, so it is always positive.
pub fn generate_synthetic_with_model(
    params: SyntheticParams,
) -> Result<(Dataset, GeneratingModel), DatasetError> {
    let SyntheticParams { n, d, n_groups, noise_sd, seed } = params;
    if n_groups == 0 || n < n_groups {
        return Err(DatasetError::Config(format!("need n >= groups >= 1, got n={n}, groups={n_groups}")));
    }
    if d == 0 {
        return Err(DatasetError::Config("d must be at least 1".into()));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(DatasetError::Config(format!("noise_sd must be finite and >= 0, got {noise_sd}")));
    }

    let mut rng = seeding::rng_for(seed, &[0x5EED]);
    let mut normal = move || -> f64 { StandardNormal.sample(&mut rng) };

    let coef_scale = 0.6 / (d as f64).sqrt();
    let coefficients: Vec<f64> = (0..d).map(|_| normal() * coef_scale).collect();
    let group_offsets: Vec<f64> = (0..n_groups).map(|_| normal() * 0.3).collect();
    let group_means: Vec<Vec<f64>> =
        (0..n_groups).map(|_| (0..d).map(|_| normal() * 0.5).collect()).collect();
    let model = GeneratingModel {
        intercept: PovertyThreshold::default().value.ln() + 0.15,
        coefficients,
        group_offsets,
    };

    let mut points = Vec::with_capacity(n);
    for i in 0..n {
        let group = i % n_groups;
        let features: Vec<f64> = group_means[group].iter().map(|m| m + normal()).collect();
        let eps = normal();
        let log_c = model.log_mean(&features, group) + noise_sd * eps;
        points.push(Point { id: i as u64, group, features, consumption: log_c.exp() });
    }
    let feature_names = (0..d).map(|j| format!("f{j}")).collect();
    let groups = (0..n_groups).map(|g| GroupId { label: format!("region_{g}"), index: g }).collect();
    Ok((Dataset::new(points, feature_names, groups)?, model))
}

/// Partition of dataset ids into the label pool and the holdout set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSpec {
    /// Ascending.
    pub pool_ids: Vec<u64>,
    /// Ascending.
    pub holdout_ids: Vec<u64>,
    pub seed: u64,
}

pub const DEFAULT_POOL_FRACTION: f64 = 0.75;

/// Uniform-at-random partition with `round(fraction * N)` ids in the pool.
pub fn split(dataset: &Dataset, fraction: f64, seed: u64) -> Result<SplitSpec, DatasetError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(DatasetError::Config(format!("split fraction must lie in (0, 1), got {fraction}")));
    }
    let mut ids = dataset.ids();
    ids.sort_unstable();
    let pool_size = (fraction * ids.len() as f64).round() as usize;
    let mut rng = seeding::rng_for(seed, &[0x5917]);
    ids.shuffle(&mut rng);
    let mut pool_ids = ids[..pool_size].to_vec();
    let mut holdout_ids = ids[pool_size..].to_vec();
    pool_ids.sort_unstable();
    holdout_ids.sort_unstable();
    Ok(SplitSpec { pool_ids, holdout_ids, seed })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PovertyThreshold {
    pub value: f64,
}

impl PovertyThreshold {
    pub fn new(value: f64) -> Result<Self, DatasetError> {
        if value > 0.0 && value.is_finite() {
            Ok(Self { value })
        } else {
            Err(DatasetError::Config(format!("poverty threshold must be positive, got {value}")))
        }
    }

    pub fn log_value(&self) -> f64 {
        self.value.ln()
    }
}

impl Default for PovertyThreshold {
    /// International poverty line, USD/day.
    fn default() -> Self {
        Self { value: 1.90 }
    }
}

/// Poor means strictly below the line.
pub fn is_poor(consumption: f64, threshold: PovertyThreshold) -> bool {
    consumption < threshold.value
}
