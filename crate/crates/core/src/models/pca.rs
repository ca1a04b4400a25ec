use nalgebra::{DMatrix, SymmetricEigen};

use super::{Matrix, ModelError};

/// Projection onto the top-k principal axes of the training features.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaTransform {
    /// k x d, orthonormal rows, descending eigenvalue order.
    components: Matrix,
    means: Vec<f64>,
    eigenvalues: Vec<f64>,
}

/// Eigen-decomposes the sample covariance (divisor n - 1). Each component is
/// sign-fixed so its largest-magnitude entry is positive.
pub fn fit_pca(x: &Matrix, k: usize) -> Result<PcaTransform, ModelError> {
    let (n, d) = (x.rows(), x.cols());
    if k == 0 || k > d {
        return Err(ModelError::Config(format!("PCA needs 1 <= k <= d = {d}, got k = {k}")));
    }
    if n < 2 {
        return Err(ModelError::Training(format!("PCA needs at least 2 points, got {n}")));
    }
    let means: Vec<f64> = (0..d).map(|j| (0..n).map(|i| x.get(i, j)).sum::<f64>() / n as f64).collect();
    let centered = DMatrix::from_fn(n, d, |i, j| x.get(i, j) - means[j]);
    let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut data = Vec::with_capacity(k * d);
    let mut eigenvalues = Vec::with_capacity(k);
    for &c in order.iter().take(k) {
        let v = eig.eigenvectors.column(c);
        let lead = (0..d).fold(0, |best, j| if v[j].abs() > v[best].abs() { j } else { best });
        let sign = if v[lead] < 0.0 { -1.0 } else { 1.0 };
        data.extend((0..d).map(|j| sign * v[j]));
        eigenvalues.push(eig.eigenvalues[c].max(0.0));
    }
    Ok(PcaTransform { components: Matrix::new(k, d, data)?, means, eigenvalues })
}

impl PcaTransform {
    pub fn k(&self) -> usize {
        self.components.rows()
    }

    pub fn input_width(&self) -> usize {
        self.components.cols()
    }

    pub fn components(&self) -> &Matrix {
        &self.components
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    /// Variance along each retained component.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix, ModelError> {
        x.check_width(self.input_width())?;
        let k = self.k();
        let mut out = Matrix::zeros(x.rows(), k);
        let mut centered = vec![0.0; self.input_width()];
        for i in 0..x.rows() {
            for (c, (v, m)) in centered.iter_mut().zip(x.row(i).iter().zip(&self.means)) {
                *c = v - m;
            }
            for (slot, comp) in out.row_mut(i).iter_mut().zip(self.components.iter_rows()) {
                *slot = comp.iter().zip(&centered).map(|(a, b)| a * b).sum();
            }
        }
        Ok(out)
    }

    /// Maps k-dim scores back to the input space.
    pub fn inverse_transform(&self, scores: &Matrix) -> Result<Matrix, ModelError> {
        scores.check_width(self.k())?;
        let d = self.input_width();
        let mut out = Matrix::zeros(scores.rows(), d);
        for i in 0..scores.rows() {
            let row = out.row_mut(i);
            row.copy_from_slice(&self.means);
            for (s, comp) in scores.row(i).iter().zip(self.components.iter_rows()) {
                for (o, c) in row.iter_mut().zip(comp) {
                    *o += s * c;
                }
            }
        }
        Ok(out)
    }
}
