use super::ModelError;
use crate::dataset::Point;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, ModelError> {
        if data.len() != rows * cols {
            return Err(ModelError::Config(format!(
                "matrix data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Panics if the rows are ragged.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Self { rows: rows.len(), cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.rows).map(move |i| self.row(i))
    }

    /// Rows at the given positions, in that order.
    pub fn select_rows(&self, positions: &[usize]) -> Self {
        let mut data = Vec::with_capacity(positions.len() * self.cols);
        for &p in positions {
            data.extend_from_slice(self.row(p));
        }
        Self { rows: positions.len(), cols: self.cols, data }
    }

    pub(crate) fn check_width(&self, expected: usize) -> Result<(), ModelError> {
        if self.cols == expected {
            Ok(())
        } else {
            Err(ModelError::Shape { expected, found: self.cols })
        }
    }
}

/// Labeled training rows, always stored in ascending id order.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    ids: Vec<u64>,
    x: Matrix,
    y: Vec<f64>,
}

impl TrainingSet {
    /// Sorts rows by id. Panics if lengths disagree.
    pub fn new(ids: Vec<u64>, x: Matrix, y: Vec<f64>) -> Self {
        assert_eq!(ids.len(), x.rows());
        assert_eq!(ids.len(), y.len());
        let mut order: Vec<usize> = (0..ids.len()).collect();
        order.sort_by_key(|&i| ids[i]);
        if order.iter().enumerate().all(|(a, &b)| a == b) {
            return Self { ids, x, y };
        }
        Self {
            ids: order.iter().map(|&i| ids[i]).collect(),
            x: x.select_rows(&order),
            y: order.iter().map(|&i| y[i]).collect(),
        }
    }

    /// Targets are log-consumption.
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point>) -> Self {
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for p in points {
            ids.push(p.id);
            rows.push(p.features.as_slice());
            y.push(p.log_consumption());
        }
        let x = if rows.is_empty() { Matrix::zeros(0, 0) } else { Matrix::from_rows(&rows) };
        Self::new(ids, x, y)
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Subset by positions; keeps canonical order if positions are ascending.
    pub fn subset(&self, positions: &[usize]) -> Self {
        Self::new(
            positions.iter().map(|&p| self.ids[p]).collect(),
            self.x.select_rows(positions),
            positions.iter().map(|&p| self.y[p]).collect(),
        )
    }
}
