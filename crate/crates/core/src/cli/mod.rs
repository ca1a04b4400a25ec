//! Command implementations behind the `acqsim` binary.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration or validation failure.

mod config;
mod tables;

pub use config::{parse_config, DatasetSource, ExperimentConfig};
pub use tables::{read_runs, write_aggregates, write_runs, RunsTable};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::dataset::{self, CsvSchema, Dataset, DatasetError, SyntheticParams};
use crate::metrics::Metric;
use crate::simulation::{self, RunRecord, SimError};
use crate::strategies::StrategyKind;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(_) | SimError::Dataset(DatasetError::Config(_)) => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn runtime(context: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{context}: {e}"))
}

/// Writes a synthetic dataset to `out`; returns a short description.
pub fn cmd_generate(params: SyntheticParams, out: &Path) -> Result<String, CliError> {
    let ds = dataset::generate_synthetic(params).map_err(|e| CliError::Config(e.to_string()))?;
    dataset::save_csv(&ds, out).map_err(|e| runtime(&format!("writing {}", out.display()), e))?;
    let sizes: Vec<String> =
        ds.groups().iter().zip(ds.group_sizes()).map(|(g, s)| format!("{}={s}", g.label)).collect();
    Ok(format!("N={} d={} groups: {}\n", ds.len(), ds.dimensionality(), sizes.join(" ")))
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub output_dir: PathBuf,
    pub runs: usize,
    pub aggregates: usize,
}

pub fn load_experiment_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, base).map(|(cfg, _)| cfg)
}

fn load_dataset(source: &DatasetSource) -> Result<Dataset, CliError> {
    match source {
        DatasetSource::Csv(p) => dataset::load_csv(p, &CsvSchema::default()).map_err(|e| match e {
            DatasetError::Io(io) => runtime(&format!("reading {}", p.display()), io),
            other => runtime(&p.display().to_string(), other),
        }),
        DatasetSource::Synthetic(params) => {
            dataset::generate_synthetic(*params).map_err(|e| CliError::Config(e.to_string()))
        }
    }
}

/// Runs every configured strategy and returns sorted records plus the
/// dataset's group labels. Repetitions run on a pool of `jobs` workers.
pub fn execute(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<(Vec<RunRecord>, Vec<String>), CliError> {
    let ds = load_dataset(&cfg.source)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder.build().map_err(|e| runtime("thread pool", e))?;
    let mut records = Vec::new();
    for &kind in &cfg.strategies {
        let sim = cfg.for_strategy(kind);
        records.extend(pool.install(|| simulation::run_experiment(&ds, &sim))?);
    }
    records.sort_by_key(|r| (r.strategy, r.repetition, r.budget));
    let labels = ds.groups().iter().map(|g| g.label.clone()).collect();
    Ok((records, labels))
}

/// Executes the experiment in `config_path` and writes `runs.csv` and
/// `aggregates.csv` into the output directory.
pub fn cmd_run(config_path: &Path, opts: &RunOptions) -> Result<RunOutput, CliError> {
    let text = fs::read_to_string(config_path)
        .map_err(|e| CliError::Config(format!("{}: {e}", config_path.display())))?;
    let (mut cfg, split_follows) = parse_config(&text, config_path.parent().unwrap_or(Path::new(".")))?;
    if let Some(seed) = opts.seed {
        cfg.set_seed(seed, split_follows);
    }
    if let Some(out) = &opts.out {
        cfg.output_dir = out.clone();
    }
    let (records, labels) = execute(&cfg, opts.jobs)?;
    let aggregates = simulation::aggregate(&records, &cfg.bootstrap, cfg.base.seed)?;

    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| runtime(&format!("creating {}", dir.display()), e))?;
    let mut runs_buf = Vec::new();
    write_runs(&records, &labels, &mut runs_buf)?;
    let mut agg_buf = Vec::new();
    write_aggregates(&aggregates, &mut agg_buf)?;
    fs::write(dir.join("runs.csv"), runs_buf).map_err(|e| runtime("writing runs.csv", e))?;
    fs::write(dir.join("aggregates.csv"), agg_buf).map_err(|e| runtime("writing aggregates.csv", e))?;
    Ok(RunOutput { output_dir: dir.clone(), runs: records.len(), aggregates: aggregates.len() })
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

/// Per strategy: mean of each metric at the final budget, and the first
/// budget whose mean Spearman reaches 95% of the final mean.
pub fn report(table: &RunsTable) -> Result<String, CliError> {
    if table.records.is_empty() {
        return Err(CliError::Runtime("runs file has no records".into()));
    }
    let mut by_strategy: BTreeMap<StrategyKind, Vec<&RunRecord>> = BTreeMap::new();
    for r in &table.records {
        by_strategy.entry(r.strategy).or_default().push(r);
    }
    let mut out = String::new();
    for (kind, recs) in by_strategy {
        let final_budget = recs.iter().map(|r| r.budget).max().expect("nonempty");
        let at_final: Vec<&&RunRecord> = recs.iter().filter(|r| r.budget == final_budget).collect();
        let reps = recs.iter().map(|r| r.repetition).collect::<std::collections::BTreeSet<_>>().len();
        writeln!(out, "strategy {kind}").unwrap();
        writeln!(out, "  repetitions {reps}, final budget {final_budget}").unwrap();
        for m in Metric::ALL {
            let vals: Vec<f64> = at_final.iter().filter_map(|r| r.metrics.get(m)).collect();
            let missing = at_final.len() - vals.len();
            writeln!(out, "  {:<20} {:>12}  (missing {missing})", m.name(), fmt_opt(mean(vals.into_iter()))).unwrap();
        }
        let mut budgets: Vec<usize> = recs.iter().map(|r| r.budget).collect();
        budgets.sort_unstable();
        budgets.dedup();
        let curve: Vec<(usize, Option<f64>)> = budgets
            .iter()
            .map(|&b| (b, mean(recs.iter().filter(|r| r.budget == b).filter_map(|r| r.metrics.spearman))))
            .collect();
        let reach = curve.last().and_then(|(_, f)| *f).and_then(|final_rho| {
            curve.iter().find(|(_, m)| m.is_some_and(|m| m >= 0.95 * final_rho)).map(|(b, _)| *b)
        });
        let reach = reach.map_or_else(|| "NA".to_string(), |b| b.to_string());
        writeln!(out, "  budget reaching 95% of final spearman: {reach}").unwrap();
    }
    Ok(out)
}

pub fn cmd_report(runs_path: &Path) -> Result<String, CliError> {
    let f = fs::File::open(runs_path).map_err(|e| runtime(&format!("reading {}", runs_path.display()), e))?;
    report(&read_runs(f)?)
}
