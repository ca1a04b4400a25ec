//! Learners used inside the simulation: a random-forest regressor with
//! per-tree access, a logistic poverty classifier, PCA, and depth selection
//! by k-fold cross-validation.

mod cv;
mod forest;
mod logistic;
mod matrix;
mod pca;

pub use cv::{cross_validate_depth, CvOutcome};
pub use forest::{fit_forest, fit_tree, ForestModel, ForestParams, Node, TreeModel};
pub use logistic::{
    fit_logistic, fit_logistic_traced, poverty_labels, LogisticConfig, LogisticModel,
    LogisticObjective,
};
pub use matrix::{Matrix, TrainingSet};
pub use pca::{fit_pca, PcaTransform};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("training failed: {0}")]
    Training(String),
    #[error("shape mismatch: expected width {expected}, found {found}")]
    Shape { expected: usize, found: usize },
    #[error("training labels contain a single class")]
    DegenerateLabels,
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Mean computed as `x0 + Σ(xi - x0)/n`, which is exact when all values are equal.
pub(crate) fn stable_mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut it = values.into_iter();
    let Some(first) = it.next() else { return f64::NAN };
    let (mut acc, mut n) = (0.0, 1usize);
    for v in it {
        acc += v - first;
        n += 1;
    }
    first + acc / n as f64
}
