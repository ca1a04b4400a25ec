//! Acquisition weights over the unlabeled pool, and the sampler that draws
//! the next batch from them.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::metrics::GroupMetrics;
use crate::models::{ForestModel, LogisticModel, Matrix, ModelError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StrategyError {
    #[error("the unlabeled pool is empty")]
    EmptyPool,
    #[error("no holdout metrics for group {0}")]
    MissingGroupMetric(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Uniform,
    #[serde(rename = "qbc")]
    QueryByCommittee,
    #[serde(rename = "margin")]
    MarginUncertainty,
    #[serde(rename = "accuracy")]
    AccuracyWeighted,
    #[serde(rename = "mse")]
    MseWeighted,
    #[serde(rename = "disparity")]
    DisparityWeighted,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::Uniform,
        StrategyKind::QueryByCommittee,
        StrategyKind::MarginUncertainty,
        StrategyKind::AccuracyWeighted,
        StrategyKind::MseWeighted,
        StrategyKind::DisparityWeighted,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Uniform => "uniform",
            StrategyKind::QueryByCommittee => "qbc",
            StrategyKind::MarginUncertainty => "margin",
            StrategyKind::AccuracyWeighted => "accuracy",
            StrategyKind::MseWeighted => "mse",
            StrategyKind::DisparityWeighted => "disparity",
        }
    }

    pub fn is_group_based(self) -> bool {
        matches!(
            self,
            StrategyKind::AccuracyWeighted | StrategyKind::MseWeighted | StrategyKind::DisparityWeighted
        )
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<_> = StrategyKind::ALL.iter().map(|k| k.name()).collect();
            format!("unknown strategy `{s}` (expected one of {})", names.join(", "))
        })
    }
}

/// Normalized sampling weights over pool ids.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    ids: Vec<u64>,
    weights: Vec<f64>,
}

impl WeightVector {
    /// Normalizes nonnegative raw weights; falls back to uniform when they
    /// sum to zero.
    pub fn from_raw(ids: Vec<u64>, raw: Vec<f64>) -> Result<Self, StrategyError> {
        if ids.is_empty() {
            return Err(StrategyError::EmptyPool);
        }
        if ids.len() != raw.len() {
            return Err(StrategyError::Config(format!("{} ids but {} weights", ids.len(), raw.len())));
        }
        if raw.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(StrategyError::Config("raw weights must be finite and nonnegative".into()));
        }
        let total: f64 = raw.iter().sum();
        if total <= 0.0 {
            return uniform_weights(&ids);
        }
        Ok(Self { ids, weights: raw.into_iter().map(|w| w / total).collect() })
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

pub fn uniform_weights(pool_ids: &[u64]) -> Result<WeightVector, StrategyError> {
    if pool_ids.is_empty() {
        return Err(StrategyError::EmptyPool);
    }
    let w = 1.0 / pool_ids.len() as f64;
    Ok(WeightVector { ids: pool_ids.to_vec(), weights: vec![w; pool_ids.len()] })
}

/// Weight each point by the population variance of the trees' predictions.
pub fn qbc_weights(forest: &ForestModel, pool_ids: &[u64], pool_x: &Matrix) -> Result<WeightVector, StrategyError> {
    if pool_ids.is_empty() {
        return Err(StrategyError::EmptyPool);
    }
    let per_tree = forest.per_tree_predictions(pool_x)?;
    WeightVector::from_raw(pool_ids.to_vec(), committee_variance(&per_tree))
}

/// Population variance (divide by T) down each column of a T x n matrix.
pub fn committee_variance(per_tree: &Matrix) -> Vec<f64> {
    let t = per_tree.rows() as f64;
    (0..per_tree.cols())
        .map(|i| {
            let mean = (0..per_tree.rows()).map(|r| per_tree.get(r, i)).sum::<f64>() / t;
            (0..per_tree.rows()).map(|r| (per_tree.get(r, i) - mean).powi(2)).sum::<f64>() / t
        })
        .collect()
}

pub const MARGIN_FLOOR: f64 = 1e-6;

/// `max(1 - 2|p - 0.5|, MARGIN_FLOOR)`
pub fn margin_raw_weight(p: f64) -> f64 {
    (1.0 - 2.0 * (p - 0.5).abs()).max(MARGIN_FLOOR)
}

pub fn margin_weights(
    logistic: &LogisticModel,
    pool_ids: &[u64],
    pool_x: &Matrix,
) -> Result<WeightVector, StrategyError> {
    if pool_ids.is_empty() {
        return Err(StrategyError::EmptyPool);
    }
    let p = logistic.predict_proba(pool_x)?;
    WeightVector::from_raw(pool_ids.to_vec(), p.into_iter().map(margin_raw_weight).collect())
}

/// Every member of a group gets the same raw weight: `1 - A_g`, `MSE_g` or `1 - DP_g`.
pub fn group_weights(
    kind: StrategyKind,
    metrics: &GroupMetrics,
    pool_ids: &[u64],
    pool_groups: &[usize],
) -> Result<WeightVector, StrategyError> {
    if pool_ids.is_empty() {
        return Err(StrategyError::EmptyPool);
    }
    let per_group = |g: usize| -> Result<f64, StrategyError> {
        let e = metrics.get(g).ok_or(StrategyError::MissingGroupMetric(g))?;
        Ok(match kind {
            StrategyKind::AccuracyWeighted => 1.0 - e.accuracy,
            StrategyKind::MseWeighted => e.mse,
            StrategyKind::DisparityWeighted => 1.0 - e.dp,
            other => return Err(StrategyError::Config(format!("`{other}` is not a group strategy"))),
        })
    };
    let raw = pool_groups.iter().map(|&g| per_group(g)).collect::<Result<Vec<_>, _>>()?;
    WeightVector::from_raw(pool_ids.to_vec(), raw)
}

/// Sequential draws proportional to the remaining weight, without
/// replacement. Once every positive-weight id is taken, the rest of the
/// draws are uniform over what is left.
pub fn weighted_sample_without_replacement<R: Rng + ?Sized>(
    wv: &WeightVector,
    k: usize,
    rng: &mut R,
) -> Result<Vec<u64>, StrategyError> {
    if k > wv.len() {
        return Err(StrategyError::Config(format!("cannot draw {k} ids from a pool of {}", wv.len())));
    }
    let mut ids = wv.ids.clone();
    let mut weights = wv.weights.clone();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let total: f64 = weights.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &w) in weights.iter().enumerate() {
                if w > 0.0 {
                    acc += w;
                    chosen = Some(i);
                    if target < acc {
                        break;
                    }
                }
            }
            // the fallback is the last positive entry, reached only through rounding
            chosen.expect("positive total implies a positive weight")
        } else {
            rng.random_range(0..ids.len())
        };
        out.push(ids.swap_remove(pick));
        weights.swap_remove(pick);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{ConfusionCounts, GroupEntry};
    use crate::models::TreeModel;
    use crate::seeding;
    use proptest::prelude::*;

    fn entry(group: usize, accuracy: f64, mse: f64, dp: f64) -> GroupEntry {
        GroupEntry { group, n: 10, counts: ConfusionCounts::default(), accuracy, mse, dp }
    }

    #[test]
    fn uniform_examples() {
        assert_eq!(uniform_weights(&[1, 2, 3, 4]).unwrap().weights(), &[0.25; 4]);
        assert_eq!(uniform_weights(&[9]).unwrap().weights(), &[1.0]);
        assert_eq!(uniform_weights(&[]), Err(StrategyError::EmptyPool));
    }

    #[test]
    fn qbc_degenerate_committee_is_uniform() {
        let f = ForestModel::from_trees(vec![TreeModel::constant(0.3); 4], 1).unwrap();
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0]]);
        let wv = qbc_weights(&f, &[5, 6, 7], &x).unwrap();
        assert_eq!(wv, uniform_weights(&[5, 6, 7]).unwrap());
    }

    #[test]
    fn committee_variance_is_population_variance() {
        let per_tree = Matrix::from_rows(&[[1.0, 2.0], [2.0, 2.0], [3.0, 2.0]]);
        let v = committee_variance(&per_tree);
        assert!((v[0] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(v[1], 0.0);
        let wv = WeightVector::from_raw(vec![0, 1], v).unwrap();
        assert_eq!(wv.weights(), &[1.0, 0.0]);
    }

    #[test]
    fn margin_examples() {
        assert_eq!(margin_raw_weight(0.5), 1.0);
        assert_eq!(margin_raw_weight(1.0), MARGIN_FLOOR);
        assert_eq!(margin_raw_weight(0.0), MARGIN_FLOOR);
        assert_eq!(margin_raw_weight(0.75), 0.5);
    }

    #[test]
    fn group_examples() {
        let gm = GroupMetrics { entries: vec![entry(0, 0.9, 0.0, 0.1), entry(1, 0.6, 0.0, -0.2)], absent: vec![] };
        let acc = group_weights(StrategyKind::AccuracyWeighted, &gm, &[10, 11], &[0, 1]).unwrap();
        assert!((acc.weights()[0] - 0.2).abs() < 1e-12 && (acc.weights()[1] - 0.8).abs() < 1e-12);

        let mse = group_weights(StrategyKind::MseWeighted, &gm, &[10, 11], &[0, 1]).unwrap();
        assert_eq!(mse, uniform_weights(&[10, 11]).unwrap());

        let dp = group_weights(StrategyKind::DisparityWeighted, &gm, &[10, 11], &[0, 1]).unwrap();
        assert!((dp.weights()[0] - 0.9 / 2.1).abs() < 1e-12);
        assert!((dp.weights()[1] - 1.2 / 2.1).abs() < 1e-12);

        assert_eq!(
            group_weights(StrategyKind::MseWeighted, &gm, &[10, 11], &[0, 2]),
            Err(StrategyError::MissingGroupMetric(2))
        );
        assert!(matches!(
            group_weights(StrategyKind::Uniform, &gm, &[10], &[0]),
            Err(StrategyError::Config(_))
        ));
    }

    #[test]
    fn same_group_points_get_identical_weight() {
        let gm = GroupMetrics { entries: vec![entry(0, 0.7, 1.3, 0.05), entry(1, 0.55, 0.4, -0.3)], absent: vec![] };
        for kind in [StrategyKind::AccuracyWeighted, StrategyKind::MseWeighted, StrategyKind::DisparityWeighted] {
            let wv = group_weights(kind, &gm, &[1, 2, 3, 4, 5], &[0, 1, 0, 1, 0]).unwrap();
            let w = wv.weights();
            assert!(w[0] == w[2] && w[2] == w[4]);
            assert!(w[1] == w[3]);
        }
    }

    #[test]
    fn sampler_examples() {
        let mut rng = seeding::rng_for(1, &[]);
        let point_mass = WeightVector::from_raw(vec![0, 1, 2], vec![1.0, 0.0, 0.0]).unwrap();
        for _ in 0..100 {
            assert_eq!(weighted_sample_without_replacement(&point_mass, 1, &mut rng).unwrap(), vec![0]);
        }
        let two = WeightVector::from_raw(vec![0, 1], vec![0.75, 0.25]).unwrap();
        let mut got = weighted_sample_without_replacement(&two, 2, &mut rng).unwrap();
        got.sort_unstable();
        assert_eq!(got, vec![0, 1]);
        assert!(weighted_sample_without_replacement(&two, 3, &mut rng).is_err());
    }

    #[test]
    fn sampler_falls_back_to_uniform_after_support_is_exhausted() {
        let mut rng = seeding::rng_for(2, &[]);
        let wv = WeightVector::from_raw(vec![10, 11, 12, 13], vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let got = weighted_sample_without_replacement(&wv, 3, &mut rng).unwrap();
        assert_eq!(got[0], 10);
        assert_eq!(got.len(), 3);
    }

    #[test]
    fn strategy_names_round_trip() {
        for k in StrategyKind::ALL {
            assert_eq!(k.name().parse::<StrategyKind>().unwrap(), k);
        }
        assert!("random-forest".parse::<StrategyKind>().is_err());
    }

    proptest! {
        #[test]
        fn normalization_is_scale_invariant(
            raw in proptest::collection::vec(0.0f64..10.0, 1..30),
            c in 1e-3f64..1e3,
        ) {
            let ids: Vec<u64> = (0..raw.len() as u64).collect();
            let a = WeightVector::from_raw(ids.clone(), raw.clone()).unwrap();
            let b = WeightVector::from_raw(ids, raw.iter().map(|w| w * c).collect()).unwrap();
            prop_assert!((a.weights().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(a.weights().iter().all(|&w| w >= 0.0));
            for (x, y) in a.weights().iter().zip(b.weights()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn qbc_is_shift_and_scale_invariant(
            preds in proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, 4), 3..6),
            shift in -10.0f64..10.0,
            scale in 0.1f64..10.0,
        ) {
            let t = preds.len();
            let base = Matrix::from_rows(&preds);
            let shifted = Matrix::from_rows(&preds.iter().map(|r| r.iter().map(|v| v + shift).collect::<Vec<_>>()).collect::<Vec<_>>());
            let scaled = Matrix::from_rows(&preds.iter().map(|r| r.iter().map(|v| v * scale).collect::<Vec<_>>()).collect::<Vec<_>>());
            prop_assert_eq!(base.rows(), t);
            let ids: Vec<u64> = (0..4).collect();
            let w0 = WeightVector::from_raw(ids.clone(), committee_variance(&base)).unwrap();
            let w1 = WeightVector::from_raw(ids.clone(), committee_variance(&shifted)).unwrap();
            let w2 = WeightVector::from_raw(ids, committee_variance(&scaled)).unwrap();
            for i in 0..4 {
                prop_assert!((w0.weights()[i] - w1.weights()[i]).abs() < 1e-9);
                prop_assert!((w0.weights()[i] - w2.weights()[i]).abs() < 1e-9);
            }
        }

        #[test]
        fn sampler_never_duplicates(
            raw in proptest::collection::vec(0.0f64..1.0, 1..40),
            k_frac in 0.0f64..1.0,
            seed in any::<u64>(),
        ) {
            let ids: Vec<u64> = (100..100 + raw.len() as u64).collect();
            let wv = WeightVector::from_raw(ids.clone(), raw).unwrap();
            let k = ((wv.len() as f64 * k_frac) as usize).max(1);
            let got = weighted_sample_without_replacement(&wv, k, &mut seeding::rng_for(seed, &[])).unwrap();
            let set: std::collections::HashSet<_> = got.iter().collect();
            prop_assert_eq!(set.len(), k);
            prop_assert!(got.iter().all(|id| ids.contains(id)));
        }
    }
}
