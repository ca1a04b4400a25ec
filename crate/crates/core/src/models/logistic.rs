use serde::Deserialize;

use super::{Matrix, ModelError};
use crate::dataset::{is_poor, PovertyThreshold};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticConfig {
    pub l2: f64,
    pub step: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self { l2: 1e-4, step: 0.1, max_iter: 500, tol: 1e-6 }
    }
}

/// Binary poverty labels, `true` = poor.
pub fn poverty_labels(consumption: &[f64], threshold: PovertyThreshold) -> Vec<bool> {
    consumption.iter().map(|&c| is_poor(c, threshold)).collect()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    /// Per standardized feature; zero for dropped features.
    coefficients: Vec<f64>,
    intercept: f64,
    means: Vec<f64>,
    /// Training sd per feature; 1.0 where the feature was dropped.
    sds: Vec<f64>,
    retained: Vec<bool>,
}

impl LogisticModel {
    pub fn new(
        coefficients: Vec<f64>,
        intercept: f64,
        means: Vec<f64>,
        sds: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let d = coefficients.len();
        if means.len() != d || sds.len() != d {
            return Err(ModelError::Config("coefficient, mean and sd lengths differ".into()));
        }
        if coefficients.iter().chain(&means).chain(std::iter::once(&intercept)).any(|v| !v.is_finite())
            || sds.iter().any(|&s| !(s > 0.0 && s.is_finite()))
        {
            return Err(ModelError::Config("non-finite parameters or non-positive sd".into()));
        }
        Ok(Self { coefficients, intercept, means, sds, retained: vec![true; d] })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn n_features(&self) -> usize {
        self.coefficients.len()
    }

    pub fn retained(&self) -> &[bool] {
        &self.retained
    }

    /// `[coefficients..., intercept]`
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.coefficients.clone();
        p.push(self.intercept);
        p
    }

    /// Same standardization, opposite sign on every parameter.
    pub fn negated(&self) -> Self {
        Self {
            coefficients: self.coefficients.iter().map(|c| -c).collect(),
            intercept: -self.intercept,
            ..self.clone()
        }
    }

    pub fn standardize(&self, x: &Matrix) -> Result<Matrix, ModelError> {
        x.check_width(self.n_features())?;
        let mut z = x.clone();
        for i in 0..z.rows() {
            for (j, v) in z.row_mut(i).iter_mut().enumerate() {
                *v = if self.retained[j] { (*v - self.means[j]) / self.sds[j] } else { 0.0 };
            }
        }
        Ok(z)
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Vec<f64>, ModelError> {
        let z = self.standardize(x)?;
        Ok(z.iter_rows().map(|r| sigmoid(linear(&self.coefficients, self.intercept, r))).collect())
    }
}

fn linear(w: &[f64], b: f64, row: &[f64]) -> f64 {
    b + w.iter().zip(row).map(|(a, x)| a * x).sum::<f64>()
}

/// Penalized mean log-loss over standardized features:
/// `mean(softplus(z) - y z) + l2/2 * |w|^2`, intercept unpenalized.
#[derive(Debug, Clone)]
pub struct LogisticObjective {
    z: Matrix,
    y: Vec<f64>,
    l2: f64,
}

impl LogisticObjective {
    pub fn new(standardized: Matrix, labels: &[bool], l2: f64) -> Self {
        assert_eq!(standardized.rows(), labels.len());
        Self { z: standardized, y: labels.iter().map(|&b| f64::from(u8::from(b))).collect(), l2 }
    }

    /// Objective for a fitted model on raw features.
    pub fn for_model(model: &LogisticModel, x: &Matrix, labels: &[bool], l2: f64) -> Result<Self, ModelError> {
        Ok(Self::new(model.standardize(x)?, labels, l2))
    }

    pub fn dim(&self) -> usize {
        self.z.cols() + 1
    }

    pub fn loss(&self, params: &[f64]) -> f64 {
        let d = self.z.cols();
        let (w, b) = (&params[..d], params[d]);
        let n = self.z.rows() as f64;
        let data: f64 = self
            .z
            .iter_rows()
            .zip(&self.y)
            .map(|(r, &y)| {
                let s = linear(w, b, r);
                softplus(s) - y * s
            })
            .sum::<f64>()
            / n;
        data + 0.5 * self.l2 * w.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn gradient(&self, params: &[f64]) -> Vec<f64> {
        let d = self.z.cols();
        let (w, b) = (&params[..d], params[d]);
        let n = self.z.rows() as f64;
        let mut g = vec![0.0; d + 1];
        for (r, &y) in self.z.iter_rows().zip(&self.y) {
            let resid = sigmoid(linear(w, b, r)) - y;
            for (gj, xj) in g[..d].iter_mut().zip(r) {
                *gj += resid * xj;
            }
            g[d] += resid;
        }
        for gj in &mut g {
            *gj /= n;
        }
        for (gj, wj) in g[..d].iter_mut().zip(w) {
            *gj += self.l2 * wj;
        }
        g
    }
}

pub fn fit_logistic(x: &Matrix, labels: &[bool], config: &LogisticConfig) -> Result<LogisticModel, ModelError> {
    fit_logistic_traced(x, labels, config).map(|(m, _)| m)
}

/// Full-batch gradient descent from zero. Returns the model and the loss at
/// every accepted iterate (starting point included).
///
/// The step starts at `config.step`; a step that would raise the loss is
/// halved until it does not, so the trace is non-increasing.
pub fn fit_logistic_traced(
    x: &Matrix,
    labels: &[bool],
    config: &LogisticConfig,
) -> Result<(LogisticModel, Vec<f64>), ModelError> {
    if !(config.step > 0.0 && config.l2 >= 0.0 && config.tol >= 0.0) {
        return Err(ModelError::Config("logistic step must be > 0, l2 and tol >= 0".into()));
    }
    let n = x.rows();
    if n < 2 {
        return Err(ModelError::Training(format!("logistic regression needs at least 2 points, got {n}")));
    }
    if labels.len() != n {
        return Err(ModelError::Shape { expected: n, found: labels.len() });
    }
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(ModelError::DegenerateLabels);
    }

    let d = x.cols();
    let mut means = vec![0.0; d];
    let mut sds = vec![1.0; d];
    let mut retained = vec![true; d];
    for j in 0..d {
        let m = super::stable_mean((0..n).map(|i| x.get(i, j)));
        let var = (0..n).map(|i| (x.get(i, j) - m).powi(2)).sum::<f64>() / n as f64;
        means[j] = m;
        if var > 0.0 {
            sds[j] = var.sqrt();
        } else {
            retained[j] = false;
        }
    }
    let mut model = LogisticModel { coefficients: vec![0.0; d], intercept: 0.0, means, sds, retained };
    let objective = LogisticObjective::for_model(&model, x, labels, config.l2)?;

    let mut params = vec![0.0; d + 1];
    let mut loss = objective.loss(&params);
    let mut trace = vec![loss];
    let mut step = config.step;
    for _ in 0..config.max_iter {
        let g = objective.gradient(&params);
        if g.iter().map(|v| v * v).sum::<f64>().sqrt() < config.tol {
            break;
        }
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<f64> = params.iter().zip(&g).map(|(p, gi)| p - step * gi).collect();
            let cand_loss = objective.loss(&cand);
            if cand_loss <= loss {
                params = cand;
                loss = cand_loss;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        trace.push(loss);
    }
    model.intercept = params[d];
    params.truncate(d);
    model.coefficients = params;
    Ok((model, trace))
}
