//! The incremental acquisition experiment.
//!
//! One simulation walks the budget schedule `S_1 < ... < S_T`. Round `t`
//! draws `S_t - S_{t-1}` new pool points using weights from round `t-1`'s
//! models (uniform in round 1), appends them to the acquired set, retrains on
//! the whole acquired set in id order, and scores the holdout. Sets are
//! nested across rounds, and the last round always trains on the full pool.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

use crate::dataset::{self, Dataset, DatasetError, PovertyThreshold, SplitSpec};
use crate::metrics::{self, GroupMetrics, Metric, MetricError, MetricsRecord, Predictions};
use crate::models::{
    cross_validate_depth, fit_forest, fit_logistic, fit_pca, ForestModel, ForestParams, LogisticConfig,
    LogisticModel, Matrix, ModelError, TrainingSet,
};
use crate::seeding;
use crate::strategies::{self, StrategyError, StrategyKind, WeightVector};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Undefined(#[from] MetricError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error("holdout id {0} reached a training set")]
    HoldoutLeak(u64),
}

// stream tags
const TAG_ROUND: u64 = 1;
const TAG_MODEL: u64 = 2;
const TAG_CV: u64 = 3;
const TAG_SPLIT: u64 = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    sizes: Vec<usize>,
}

impl Schedule {
    pub fn new(sizes: Vec<usize>) -> Result<Self, SimError> {
        if sizes.is_empty() || sizes[0] == 0 || sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SimError::Config(format!("schedule must be strictly increasing and positive: {sizes:?}")));
        }
        Ok(Self { sizes })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn last(&self) -> usize {
        *self.sizes.last().expect("schedule is nonempty")
    }
}

/// `round(exp(linspace(ln min_size, ln pool_size, num_points)))`, deduplicated.
pub fn make_log_schedule(pool_size: usize, num_points: usize, min_size: usize) -> Result<Schedule, SimError> {
    if min_size < 2 || pool_size <= min_size || num_points < 2 {
        return Err(SimError::Config(format!(
            "log schedule needs min_size >= 2, pool_size > min_size, num_points >= 2 \
             (got pool_size={pool_size}, num_points={num_points}, min_size={min_size})"
        )));
    }
    let (lo, hi) = ((min_size as f64).ln(), (pool_size as f64).ln());
    let step = (hi - lo) / (num_points - 1) as f64;
    let mut sizes: Vec<usize> = (0..num_points)
        .map(|i| if i + 1 == num_points { pool_size } else { (lo + step * i as f64).exp().round() as usize })
        .map(|s| s.clamp(min_size, pool_size))
        .collect();
    sizes.dedup();
    Schedule::new(sizes)
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleParams {
    pub points: usize,
    pub min_size: usize,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self { points: 20, min_size: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvParams {
    pub depths: Vec<usize>,
    pub folds: usize,
}

impl Default for CvParams {
    fn default() -> Self {
        Self { depths: vec![2, 4, 6, 8, 10, 12], folds: 3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub strategy: StrategyKind,
    pub repetitions: usize,
    pub schedule: ScheduleParams,
    pub forest: ForestParams,
    pub logistic: LogisticConfig,
    pub threshold: PovertyThreshold,
    /// Seeds acquisition, models and bootstrap.
    pub seed: u64,
    pub split_seed: u64,
    pub pool_fraction: f64,
    /// Redraw the pool/holdout split for every repetition.
    pub resplit_per_rep: bool,
    pub pca_k: Option<usize>,
    pub cv: Option<CvParams>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            strategy: StrategyKind::Uniform,
            repetitions: 50,
            schedule: ScheduleParams::default(),
            forest: ForestParams::default(),
            logistic: LogisticConfig::default(),
            threshold: PovertyThreshold::default(),
            seed: 0,
            split_seed: 0,
            pool_fraction: dataset::DEFAULT_POOL_FRACTION,
            resplit_per_rep: false,
            pca_k: None,
            cv: None,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.repetitions == 0 {
            return Err(SimError::Config("repetitions must be at least 1".into()));
        }
        self.forest.validate()?;
        if let Some(cv) = &self.cv {
            if cv.depths.is_empty() {
                return Err(SimError::Config("cv depth grid is empty".into()));
            }
            if cv.folds < 2 {
                return Err(SimError::Config("cv needs at least 2 folds".into()));
            }
        }
        if self.pca_k == Some(0) {
            return Err(SimError::Config("pca_k must be at least 1".into()));
        }
        Ok(())
    }

    pub fn split_for(&self, dataset: &Dataset, rep: usize) -> Result<SplitSpec, SimError> {
        let seed = if self.resplit_per_rep {
            seeding::derive_seed(self.split_seed, &[TAG_SPLIT, rep as u64])
        } else {
            self.split_seed
        };
        Ok(dataset::split(dataset, self.pool_fraction, seed)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub strategy: StrategyKind,
    pub repetition: usize,
    pub budget: usize,
    pub metrics: MetricsRecord,
    /// FNV-1a 64 over the sorted acquired ids.
    pub digest: u64,
}

/// Feature rows (after optional PCA) and targets, shared by every round of
/// every repetition that uses the same split.
pub struct PreparedData<'a> {
    dataset: &'a Dataset,
    split: SplitSpec,
    x: Matrix,
    log_y: Vec<f64>,
    position: std::collections::HashMap<u64, usize>,
    holdout: HashSet<u64>,
    holdout_x: Matrix,
    holdout_log_y: Vec<f64>,
    holdout_poor: Vec<bool>,
    holdout_groups: Vec<usize>,
    schedule: Schedule,
}

impl<'a> PreparedData<'a> {
    /// PCA, when requested, is fit on pool features only.
    pub fn new(dataset: &'a Dataset, split: SplitSpec, config: &SimulationConfig) -> Result<Self, SimError> {
        let position = dataset.index_by_id();
        let pool: HashSet<u64> = split.pool_ids.iter().copied().collect();
        let holdout: HashSet<u64> = split.holdout_ids.iter().copied().collect();
        if pool.len() + holdout.len() != dataset.len()
            || pool.iter().any(|id| holdout.contains(id) || !position.contains_key(id))
            || holdout.iter().any(|id| !position.contains_key(id))
        {
            return Err(SimError::Config("split does not partition the dataset ids".into()));
        }
        if split.holdout_ids.is_empty() {
            return Err(SimError::Config("holdout set is empty".into()));
        }
        let raw = Matrix::from_rows(&dataset.points().iter().map(|p| p.features.as_slice()).collect::<Vec<_>>());
        let x = match config.pca_k {
            Some(k) => {
                let pool_pos: Vec<usize> = split.pool_ids.iter().map(|id| position[id]).collect();
                fit_pca(&raw.select_rows(&pool_pos), k)?.transform(&raw)?
            }
            None => raw,
        };
        let log_y: Vec<f64> = dataset.points().iter().map(|p| p.log_consumption()).collect();
        let hpos: Vec<usize> = split.holdout_ids.iter().map(|id| position[id]).collect();
        let points = dataset.points();
        let schedule = make_log_schedule(split.pool_ids.len(), config.schedule.points, config.schedule.min_size)?;
        Ok(Self {
            dataset,
            holdout_x: x.select_rows(&hpos),
            holdout_log_y: hpos.iter().map(|&i| log_y[i]).collect(),
            holdout_poor: hpos.iter().map(|&i| dataset::is_poor(points[i].consumption, config.threshold)).collect(),
            holdout_groups: hpos.iter().map(|&i| points[i].group).collect(),
            split,
            x,
            log_y,
            position,
            holdout,
            schedule,
        })
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn split(&self) -> &SplitSpec {
        &self.split
    }

    fn rows(&self, ids: &[u64]) -> Vec<usize> {
        ids.iter().map(|id| self.position[id]).collect()
    }

    /// Fails if any id belongs to the holdout set.
    fn training_set(&self, ids: &[u64]) -> Result<TrainingSet, SimError> {
        if let Some(&leak) = ids.iter().find(|id| self.holdout.contains(id)) {
            return Err(SimError::HoldoutLeak(leak));
        }
        let rows = self.rows(ids);
        Ok(TrainingSet::new(ids.to_vec(), self.x.select_rows(&rows), rows.iter().map(|&r| self.log_y[r]).collect()))
    }

    fn evaluate(&self, forest: &ForestModel, threshold: PovertyThreshold) -> Result<MetricsRecord, SimError> {
        let preds = forest.predict(&self.holdout_x)?;
        let eval = Predictions {
            truth_log: &self.holdout_log_y,
            truth_poor: &self.holdout_poor,
            preds_log: &preds,
            groups: &self.holdout_groups,
        };
        Ok(metrics::evaluate(&eval, threshold, self.dataset.groups()))
    }
}

/// What the previous round left behind for the next round's weights.
struct RoundModels {
    forest: ForestModel,
    logistic: Option<LogisticModel>,
    groups: GroupMetrics,
}

fn next_weights(
    data: &PreparedData<'_>,
    kind: StrategyKind,
    prev: Option<&RoundModels>,
    remaining: &[u64],
) -> Result<WeightVector, SimError> {
    let Some(prev) = prev else { return Ok(strategies::uniform_weights(remaining)?) };
    let rows = data.rows(remaining);
    let wv = match kind {
        StrategyKind::Uniform => strategies::uniform_weights(remaining),
        StrategyKind::QueryByCommittee => strategies::qbc_weights(&prev.forest, remaining, &data.x.select_rows(&rows)),
        StrategyKind::MarginUncertainty => match &prev.logistic {
            Some(m) => strategies::margin_weights(m, remaining, &data.x.select_rows(&rows)),
            None => strategies::uniform_weights(remaining),
        },
        _ => {
            let groups: Vec<usize> = rows.iter().map(|&r| data.dataset.points()[r].group).collect();
            match strategies::group_weights(kind, &prev.groups, remaining, &groups) {
                Err(StrategyError::MissingGroupMetric(_)) => strategies::uniform_weights(remaining),
                other => other,
            }
        }
    };
    Ok(wv?)
}

/// Records plus the acquired id set (ascending) after every round.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub records: Vec<RunRecord>,
    pub acquired: Vec<Vec<u64>>,
}

pub fn run_single_simulation(
    dataset: &Dataset,
    split: &SplitSpec,
    config: &SimulationConfig,
    rep_index: usize,
) -> Result<Vec<RunRecord>, SimError> {
    config.validate()?;
    let data = PreparedData::new(dataset, split.clone(), config)?;
    Ok(simulate(&data, config, rep_index)?.records)
}

pub fn simulate(data: &PreparedData<'_>, config: &SimulationConfig, rep: usize) -> Result<SimulationTrace, SimError> {
    let sizes = data.schedule.sizes();
    if data.schedule.last() > data.split.pool_ids.len() {
        return Err(SimError::Config("schedule exceeds the label pool".into()));
    }
    let mut acquired: Vec<u64> = Vec::with_capacity(data.schedule.last());
    let mut remaining: Vec<u64> = data.split.pool_ids.clone();
    let mut prev: Option<RoundModels> = None;
    let mut trace = SimulationTrace { records: Vec::with_capacity(sizes.len()), acquired: Vec::new() };
    let tags = |tag: u64, t: usize| [tag, rep as u64, t as u64];

    for (t, &size) in sizes.iter().enumerate() {
        let k = size - acquired.len();
        let wv = next_weights(data, config.strategy, prev.as_ref(), &remaining)?;
        let mut rng = seeding::rng_for(config.seed, &tags(TAG_ROUND, t));
        let drawn = strategies::weighted_sample_without_replacement(&wv, k, &mut rng)?;
        let drawn_set: HashSet<u64> = drawn.iter().copied().collect();
        remaining.retain(|id| !drawn_set.contains(id));
        acquired.extend(drawn);
        acquired.sort_unstable();

        let train = data.training_set(&acquired)?;
        let mut params = config.forest.clone();
        if let Some(cv) = &config.cv {
            let cv_seed = seeding::derive_seed(config.seed, &tags(TAG_CV, t));
            if let Ok(out) = cross_validate_depth(&train, &params, &cv.depths, cv.folds, cv_seed) {
                params.max_depth = out.best_depth;
            }
        }
        let model_seed = seeding::derive_seed(config.seed, &tags(TAG_MODEL, t));
        let digest = seeding::id_set_digest(&acquired);
        let metrics = match fit_forest(&train, &params, model_seed) {
            Ok(forest) => {
                let record = data.evaluate(&forest, config.threshold)?;
                let last = t + 1 == sizes.len();
                let logistic = if config.strategy == StrategyKind::MarginUncertainty && !last {
                    let poor: Vec<bool> = data
                        .rows(train.ids())
                        .iter()
                        .map(|&r| dataset::is_poor(data.dataset.points()[r].consumption, config.threshold))
                        .collect();
                    fit_logistic(train.x(), &poor, &config.logistic).ok()
                } else {
                    None
                };
                prev = Some(RoundModels { forest, logistic, groups: record.groups.clone() });
                record
            }
            Err(ModelError::Training(_)) => {
                prev = None;
                MetricsRecord::missing()
            }
            Err(e) => return Err(e.into()),
        };
        trace.records.push(RunRecord { strategy: config.strategy, repetition: rep, budget: size, metrics, digest });
        trace.acquired.push(acquired.clone());
    }
    Ok(trace)
}

fn sort_records(records: &mut [RunRecord]) {
    records.sort_by_key(|r| (r.strategy, r.repetition, r.budget));
}

/// Runs every repetition on the current rayon pool. The output is sorted by
/// `(strategy, repetition, budget)` and does not depend on scheduling.
pub fn run_experiment(dataset: &Dataset, config: &SimulationConfig) -> Result<Vec<RunRecord>, SimError> {
    config.validate()?;
    let traces: Vec<SimulationTrace> = if config.resplit_per_rep {
        (0..config.repetitions)
            .into_par_iter()
            .map(|rep| {
                let data = PreparedData::new(dataset, config.split_for(dataset, rep)?, config)?;
                simulate(&data, config, rep)
            })
            .collect::<Result<_, _>>()?
    } else {
        let data = PreparedData::new(dataset, config.split_for(dataset, 0)?, config)?;
        (0..config.repetitions).into_par_iter().map(|rep| simulate(&data, config, rep)).collect::<Result<_, _>>()?
    };
    let mut records: Vec<RunRecord> = traces.into_iter().flat_map(|t| t.records).collect();
    sort_records(&mut records);
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceInterval {
    pub mean: f64,
    pub low: f64,
    pub high: f64,
}

/// Linear interpolation between order statistics at `p * (n - 1)`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile bootstrap interval for the mean.
pub fn bootstrap_ci(values: &[f64], resamples: usize, level: f64, seed: u64) -> Result<ConfidenceInterval, SimError> {
    if values.len() < 2 {
        return Err(MetricError::Undefined(format!("bootstrap needs at least 2 values, got {}", values.len())).into());
    }
    if resamples < 100 {
        return Err(SimError::Config(format!("bootstrap needs at least 100 resamples, got {resamples}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(SimError::Config(format!("confidence level must lie in (0, 1), got {level}")));
    }
    use rand::Rng;
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut rng = seeding::rng_for(seed, &[]);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    // the percentile band can miss the point estimate by rounding; widen to include it
    let low = percentile(&means, tail).min(mean);
    let high = percentile(&means, 1.0 - tail).max(mean);
    Ok(ConfidenceInterval { mean, low, high })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSummary {
    pub metric: Metric,
    pub mean: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub n_missing: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRecord {
    pub strategy: StrategyKind,
    pub budget: usize,
    pub metrics: Vec<MetricSummary>,
}

impl AggregateRecord {
    pub fn get(&self, metric: Metric) -> &MetricSummary {
        self.metrics.iter().find(|m| m.metric == metric).expect("every metric is summarized")
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapParams {
    pub resamples: usize,
    pub level: f64,
}

impl Default for BootstrapParams {
    fn default() -> Self {
        Self { resamples: 1000, level: 0.95 }
    }
}

/// One record per `(strategy, budget)`; each metric bootstrapped across
/// repetitions with missing values skipped and counted.
pub fn aggregate(records: &[RunRecord], params: &BootstrapParams, seed: u64) -> Result<Vec<AggregateRecord>, SimError> {
    let mut sorted: Vec<&RunRecord> = records.iter().collect();
    sorted.sort_by_key(|r| (r.strategy, r.budget, r.repetition));
    let mut out = Vec::new();
    for chunk in sorted.chunk_by(|a, b| a.strategy == b.strategy && a.budget == b.budget) {
        let (strategy, budget) = (chunk[0].strategy, chunk[0].budget);
        let mut summaries = Vec::with_capacity(Metric::ALL.len());
        for (mi, metric) in Metric::ALL.into_iter().enumerate() {
            let values: Vec<f64> = chunk.iter().filter_map(|r| r.metrics.get(metric)).collect();
            let n_missing = chunk.len() - values.len();
            let (mean, lo, hi) = match values.len() {
                0 => (None, None, None),
                1 => (Some(values[0]), Some(values[0]), Some(values[0])),
                _ => {
                    let s = seeding::derive_seed(seed, &[strategy as u64, budget as u64, mi as u64]);
                    let ci = bootstrap_ci(&values, params.resamples, params.level, s)?;
                    (Some(ci.mean), Some(ci.low), Some(ci.high))
                }
            };
            summaries.push(MetricSummary { metric, mean, ci_low: lo, ci_high: hi, n_missing });
        }
        out.push(AggregateRecord { strategy, budget, metrics: summaries });
    }
    Ok(out)
}
