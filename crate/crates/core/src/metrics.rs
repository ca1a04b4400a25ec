//! Holdout evaluation: regression, classification, per-group and fairness metrics.
//!
//! Undefined values (a single-class holdout, a zero denominator, a constant
//! prediction vector) are reported as `None` and never coerced to zero.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::dataset::{GroupId, PovertyThreshold};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("undefined metric: {0}")]
    Undefined(String),
}

fn undefined(msg: impl Into<String>) -> MetricError {
    MetricError::Undefined(msg.into())
}

/// Headline metrics, in output-column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    Spearman,
    Mse,
    Auroc,
    Accuracy,
    Precision,
    Recall,
    MinGroupAccuracy,
    MaxGroupMse,
    Add,
}

impl Metric {
    pub const ALL: [Metric; 9] = [
        Metric::Spearman,
        Metric::Mse,
        Metric::Auroc,
        Metric::Accuracy,
        Metric::Precision,
        Metric::Recall,
        Metric::MinGroupAccuracy,
        Metric::MaxGroupMse,
        Metric::Add,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Spearman => "spearman",
            Metric::Mse => "mse",
            Metric::Auroc => "auroc",
            Metric::Accuracy => "accuracy",
            Metric::Precision => "precision",
            Metric::Recall => "recall",
            Metric::MinGroupAccuracy => "min_group_accuracy",
            Metric::MaxGroupMse => "max_group_mse",
            Metric::Add => "add",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| format!("unknown metric `{s}`"))
    }
}

/// 1-based ranks; tied values share the mean of their rank span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j hold ranks i+1..=j
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson correlation of average ranks.
pub fn spearman_rho(truth: &[f64], preds: &[f64]) -> Result<f64, MetricError> {
    if truth.len() != preds.len() || truth.len() < 2 {
        return Err(undefined("spearman needs two equal-length vectors of length >= 2"));
    }
    pearson(&average_ranks(truth), &average_ranks(preds)).ok_or_else(|| undefined("spearman of a constant vector"))
}

pub fn mse(truth: &[f64], preds: &[f64]) -> Result<f64, MetricError> {
    if truth.is_empty() || truth.len() != preds.len() {
        return Err(undefined("mse needs two equal-length nonempty vectors"));
    }
    Ok(truth.iter().zip(preds).map(|(y, p)| (y - p).powi(2)).sum::<f64>() / truth.len() as f64)
}

/// Mann-Whitney AUROC: the chance a random positive scores above a random
/// negative, ties counting one half.
pub fn auroc(labels: &[bool], scores: &[f64]) -> Result<f64, MetricError> {
    if labels.len() != scores.len() {
        return Err(undefined("auroc needs equal-length labels and scores"));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(undefined("auroc with a single class"));
    }
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Positive class = poor.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn from_labels(truth: &[bool], predicted: &[bool]) -> Self {
        let mut c = Self::default();
        for (&t, &p) in truth.iter().zip(predicted) {
            c.add(t, p);
        }
        c
    }

    pub fn add(&mut self, truth: bool, predicted: bool) {
        match (truth, predicted) {
            (true, true) => self.tp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self { tp: self.tp + o.tp, tn: self.tn + o.tn, fp: self.fp + o.fp, fn_: self.fn_ + o.fn_ }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

pub fn classification_metrics(c: &ConfusionCounts) -> Result<ClassificationMetrics, MetricError> {
    let total = c.total();
    if total == 0 {
        return Err(undefined("classification metrics on zero points"));
    }
    let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
    Ok(ClassificationMetrics {
        accuracy: (c.tp + c.tn) as f64 / total as f64,
        precision: ratio(c.tp, c.tp + c.fp),
        recall: ratio(c.tp, c.tp + c.fn_),
    })
}

/// `(FP - FN) / N`, equal to predicted-poor share minus truly-poor share.
pub fn demographic_parity(c: &ConfusionCounts) -> f64 {
    (c.fp as f64 - c.fn_ as f64) / c.total() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupEntry {
    pub group: usize,
    pub n: u64,
    pub counts: ConfusionCounts,
    pub accuracy: f64,
    pub mse: f64,
    pub dp: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroupMetrics {
    /// Groups present in the evaluation set, ascending group index.
    pub entries: Vec<GroupEntry>,
    /// Declared groups with no evaluated point.
    pub absent: Vec<usize>,
}

impl GroupMetrics {
    pub fn get(&self, group: usize) -> Option<&GroupEntry> {
        self.entries.iter().find(|e| e.group == group)
    }
}

/// Truth and predictions for every evaluated point, in log-consumption space.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions<'a> {
    pub truth_log: &'a [f64],
    pub truth_poor: &'a [bool],
    pub preds_log: &'a [f64],
    pub groups: &'a [usize],
}

impl Predictions<'_> {
    pub fn predicted_poor(&self, threshold: PovertyThreshold) -> Vec<bool> {
        let cut = threshold.log_value();
        self.preds_log.iter().map(|&p| p < cut).collect()
    }
}

pub fn group_metrics(
    eval: &Predictions<'_>,
    threshold: PovertyThreshold,
    groups: &[GroupId],
) -> GroupMetrics {
    let predicted = eval.predicted_poor(threshold);
    let mut counts = vec![ConfusionCounts::default(); groups.len()];
    let mut sq = vec![0.0; groups.len()];
    for (i, &pred) in predicted.iter().enumerate() {
        let g = eval.groups[i];
        counts[g].add(eval.truth_poor[i], pred);
        sq[g] += (eval.truth_log[i] - eval.preds_log[i]).powi(2);
    }
    let mut out = GroupMetrics::default();
    for g in 0..groups.len() {
        let c = counts[g];
        let n = c.total();
        if n == 0 {
            out.absent.push(g);
            continue;
        }
        out.entries.push(GroupEntry {
            group: g,
            n,
            counts: c,
            accuracy: (c.tp + c.tn) as f64 / n as f64,
            mse: sq[g] / n as f64,
            dp: demographic_parity(&c),
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FairnessSummary {
    pub min_group_accuracy: f64,
    pub max_group_mse: f64,
    /// Sum of |DP_g| over groups.
    pub add: f64,
}

pub fn fairness_summaries(gm: &GroupMetrics) -> Result<FairnessSummary, MetricError> {
    if gm.entries.is_empty() {
        return Err(undefined("no groups to summarize"));
    }
    Ok(FairnessSummary {
        min_group_accuracy: gm.entries.iter().map(|e| e.accuracy).fold(f64::INFINITY, f64::min),
        max_group_mse: gm.entries.iter().map(|e| e.mse).fold(f64::NEG_INFINITY, f64::max),
        add: gm.entries.iter().map(|e| e.dp.abs()).sum(),
    })
}

/// The full panel for one evaluation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsRecord {
    pub spearman: Option<f64>,
    pub mse: Option<f64>,
    pub auroc: Option<f64>,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub min_group_accuracy: Option<f64>,
    pub max_group_mse: Option<f64>,
    pub add: Option<f64>,
    pub groups: GroupMetrics,
}

impl MetricsRecord {
    /// Every metric missing; used when the model could not be trained.
    pub fn missing() -> Self {
        Self::default()
    }

    pub fn get(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::Spearman => self.spearman,
            Metric::Mse => self.mse,
            Metric::Auroc => self.auroc,
            Metric::Accuracy => self.accuracy,
            Metric::Precision => self.precision,
            Metric::Recall => self.recall,
            Metric::MinGroupAccuracy => self.min_group_accuracy,
            Metric::MaxGroupMse => self.max_group_mse,
            Metric::Add => self.add,
        }
    }
}

/// Scores AUROC with `-prediction`, so lower predicted consumption ranks as poorer.
pub fn evaluate(eval: &Predictions<'_>, threshold: PovertyThreshold, groups: &[GroupId]) -> MetricsRecord {
    let predicted = eval.predicted_poor(threshold);
    let counts = ConfusionCounts::from_labels(eval.truth_poor, &predicted);
    let cls = classification_metrics(&counts).ok();
    let poverty_scores: Vec<f64> = eval.preds_log.iter().map(|p| -p).collect();
    let gm = group_metrics(eval, threshold, groups);
    let fair = fairness_summaries(&gm).ok();
    MetricsRecord {
        spearman: spearman_rho(eval.truth_log, eval.preds_log).ok(),
        mse: mse(eval.truth_log, eval.preds_log).ok(),
        auroc: auroc(eval.truth_poor, &poverty_scores).ok(),
        accuracy: cls.map(|c| c.accuracy),
        precision: cls.and_then(|c| c.precision),
        recall: cls.and_then(|c| c.recall),
        min_group_accuracy: fair.map(|f| f.min_group_accuracy),
        max_group_mse: fair.map(|f| f.max_group_mse),
        add: fair.map(|f| f.add),
        groups: gm,
    }
}
