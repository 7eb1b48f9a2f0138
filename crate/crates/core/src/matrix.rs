//! Dense row-major `f64` matrices.
//!
//! Every constructor validates that the matrix is non-empty and that all
//! entries are finite, so downstream code never has to re-check.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidDimension(format!(
                "matrix must be at least 1x1, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidDimension(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix data"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut m = Self::zeros(n, n)?;
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        Ok(m)
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::InvalidDimension(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols)
    }

    pub fn transpose(&self) -> Matrix {
        let mut data = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        Matrix {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    /// Standard product `self * other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Shape {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut data = vec![0.0; self.rows * other.cols];
        for i in 0..self.rows {
            let out = &mut data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Matrix::new(self.rows, other.cols, data)
    }

    /// `self * other^T`, i.e. every row of `self` dotted with every row of `other`.
    pub fn matmul_transposed(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::Shape {
                op: "matmul_transposed",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut data = Vec::with_capacity(self.rows * other.rows);
        for a in self.row_iter() {
            for b in other.row_iter() {
                data.push(dot(a, b));
            }
        }
        Matrix::new(self.rows, other.rows, data)
    }

    /// Arithmetic mean of each column as a `1 x cols` matrix.
    pub fn column_mean(&self) -> Matrix {
        let mut mean = vec![0.0; self.cols];
        for row in self.row_iter() {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        let n = self.rows as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        Matrix {
            rows: 1,
            cols: self.cols,
            data: mean,
        }
    }

    /// Subtracts a `1 x cols` row vector from every row.
    pub fn sub_row(&self, row: &Matrix) -> Result<Matrix> {
        if row.rows != 1 || row.cols != self.cols {
            return Err(Error::Shape {
                op: "sub_row",
                left: self.shape(),
                right: row.shape(),
            });
        }
        let mut data = self.data.clone();
        for chunk in data.chunks_exact_mut(self.cols) {
            for (v, &m) in chunk.iter_mut().zip(&row.data) {
                *v -= m;
            }
        }
        Matrix::new(self.rows, self.cols, data)
    }

    /// Selects rows by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Matrix> {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            if i >= self.rows {
                return Err(Error::Input(format!(
                    "row index {i} out of range for {} rows",
                    self.rows
                )));
            }
            data.extend_from_slice(self.row(i));
        }
        Matrix::new(idx.len(), self.cols, data)
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(Matrix::identity(2).unwrap().matmul(&a).unwrap(), a);
    }

    #[test]
    fn matmul_zero_column() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let z = m(&[&[0.0], &[0.0]]);
        assert_eq!(a.matmul(&z).unwrap(), z);
    }

    #[test]
    fn matmul_hand_computed() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = m(&[&[5.0, 6.0], &[7.0, 8.0]]);
        assert_eq!(a.matmul(&b).unwrap(), m(&[&[19.0, 22.0], &[43.0, 50.0]]));
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = Matrix::zeros(2, 3).unwrap();
        let b = Matrix::zeros(2, 3).unwrap();
        let err = a.matmul(&b).unwrap_err();
        assert_eq!(
            err,
            Error::Shape {
                op: "matmul",
                left: (2, 3),
                right: (2, 3)
            }
        );
        assert!(err.to_string().contains("(2, 3)"));
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(Matrix::new(0, 3, vec![]).is_err());
        assert!(Matrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Matrix::new(1, 1, vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn matmul_overflow_is_rejected() {
        let a = m(&[&[1e200, 1e200]]);
        let b = m(&[&[1e200], &[1e200]]);
        assert_eq!(a.matmul(&b).unwrap_err(), Error::NonFinite("matrix data"));
    }

    #[test]
    fn column_mean_cases() {
        assert_eq!(
            m(&[&[1.0, 3.0], &[3.0, 5.0]]).column_mean(),
            m(&[&[2.0, 4.0]])
        );
        let single = m(&[&[7.0, -1.5, 2.0]]);
        assert_eq!(single.column_mean(), single);
        assert_eq!(
            Matrix::zeros(4, 3).unwrap().column_mean(),
            Matrix::zeros(1, 3).unwrap()
        );
    }

    #[test]
    fn transpose_and_matmul_transposed_agree() {
        let a = m(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        let b = m(&[&[1.0, 0.0, -1.0], &[2.0, 2.0, 2.0]]);
        assert_eq!(
            a.matmul_transposed(&b).unwrap(),
            a.matmul(&b.transpose()).unwrap()
        );
    }

    fn small_matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
        proptest::collection::vec(-10.0f64..10.0, rows * cols)
            .prop_map(move |d| Matrix::new(rows, cols, d).unwrap())
    }

    proptest! {
        #[test]
        fn matmul_is_associative(
            a in small_matrix(3, 4),
            b in small_matrix(4, 2),
            c in small_matrix(2, 5),
        ) {
            let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            let scale = left.data().iter().map(|v| v.abs()).fold(1.0, f64::max);
            for (x, y) in left.data().iter().zip(right.data()) {
                prop_assert!((x - y).abs() <= 1e-10 * scale);
            }
        }
    }
}
