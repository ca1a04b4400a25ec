use rand::seq::SliceRandom;

use super::{fit_forest, ForestParams, ModelError, TrainingSet};
use crate::seeding;

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    pub best_depth: usize,
    /// `(depth, mean validation MSE)` in grid order.
    pub scores: Vec<(usize, f64)>,
}

/// K-fold CV over `max_depth`. Folds come from a seeded shuffle; every depth
/// sees the same folds and the same per-fold forest seed. Ties go to the
/// smallest depth.
pub fn cross_validate_depth(
    data: &TrainingSet,
    base: &ForestParams,
    depth_grid: &[usize],
    folds: usize,
    seed: u64,
) -> Result<CvOutcome, ModelError> {
    if depth_grid.is_empty() {
        return Err(ModelError::Config("depth grid is empty".into()));
    }
    if folds < 2 {
        return Err(ModelError::Config(format!("need at least 2 folds, got {folds}")));
    }
    let n = data.len();
    if n < folds {
        return Err(ModelError::Training(format!("{n} points cannot fill {folds} folds")));
    }
    if depth_grid.len() == 1 {
        return Ok(CvOutcome { best_depth: depth_grid[0], scores: vec![(depth_grid[0], f64::NAN)] });
    }

    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut seeding::rng_for(seed, &[0xCF]));
    let mut fold_of = vec![0; n];
    for (pos, &i) in perm.iter().enumerate() {
        fold_of[i] = pos % folds;
    }
    let splits: Vec<(TrainingSet, TrainingSet)> = (0..folds)
        .map(|f| {
            let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
            let valid: Vec<usize> = (0..n).filter(|&i| fold_of[i] == f).collect();
            (data.subset(&train), data.subset(&valid))
        })
        .collect();

    let mut scores = Vec::with_capacity(depth_grid.len());
    for &depth in depth_grid {
        let params = ForestParams { max_depth: depth, ..base.clone() };
        let mut total = 0.0;
        for (f, (train, valid)) in splits.iter().enumerate() {
            let forest = fit_forest(train, &params, seeding::derive_seed(seed, &[f as u64]))?;
            let pred = forest.predict(valid.x())?;
            let mse = pred.iter().zip(valid.y()).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / valid.len() as f64;
            total += mse;
        }
        scores.push((depth, total / folds as f64));
    }
    let mut best = 0;
    for i in 1..scores.len() {
        let better = scores[i].1 < scores[best].1;
        let tie_smaller = scores[i].1 == scores[best].1 && scores[i].0 < scores[best].0;
        if better || tie_smaller {
            best = i;
        }
    }
    Ok(CvOutcome { best_depth: scores[best].0, scores })
}
