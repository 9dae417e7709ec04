use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Compressed sparse row matrix holding both triangles of a symmetric operator.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseSymMatrix {
    /// Builds from (row, col, value) contributions. Duplicates are summed in
    /// ascending value order, so the result does not depend on the order
    /// the contributions were produced in.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        for &(r, c, v) in &triplets {
            if r >= dim || c >= dim {
                return Err(Error::IndexOutOfRange { index: r.max(c), count: dim });
            }
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("matrix entry ({r}, {c})")));
            }
        }
        triplets.sort_unstable_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.total_cmp(&b.2)));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut col_idx = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut m = SparseSymMatrix {
            dim,
            row_ptr,
            col_idx,
            values,
            symmetric: false,
        };
        m.symmetric = m.max_asymmetry() == 0.0;
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[span.clone()].binary_search(&j) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    /// `y = A x`
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *yi = acc;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::LengthMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        let mut y = vec![0.0; self.dim];
        self.mul_vec_into(x, &mut y);
        Ok(y)
    }

    /// `xᵀ A x`
    pub fn quadratic_form(&self, x: &[f64]) -> Result<f64> {
        let ax = self.mul_vec(x)?;
        Ok(ax.iter().zip(x).map(|(a, b)| a * b).sum())
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                d[(i, j)] = v;
            }
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_summation_is_order_independent() {
        let t = vec![(0, 0, 0.1), (0, 0, 1e16), (0, 0, -1e16), (1, 1, 2.0), (0, 1, 3.0), (1, 0, 3.0)];
        let mut rev = t.clone();
        rev.reverse();
        let a = SparseSymMatrix::from_triplets(2, t).unwrap();
        let b = SparseSymMatrix::from_triplets(2, rev).unwrap();
        assert_eq!(a, b);
        assert!(a.is_symmetric());
        assert_eq!(a.nnz(), 4);
        assert_eq!(a.mul_vec(&[1.0, 1.0]).unwrap(), vec![a.get(0, 0) + 3.0, 5.0]);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(SparseSymMatrix::from_triplets(2, vec![(2, 0, 1.0)]).is_err());
        let a = SparseSymMatrix::from_triplets(2, vec![(0, 1, 1.0)]).unwrap();
        assert!(!a.is_symmetric());
        assert!(a.mul_vec(&[1.0]).is_err());
    }
}
