//! Compressed sparse row matrices for adjacency chains.
//!
//! Every product and matrix-vector routine walks rows in order and sums
//! entries in storage order, so results are bitwise reproducible for a fixed
//! input.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Row sums within this distance of 1 count as stochastic after normalization.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct SparseRowMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseRowMatrix {
    /// Builds a matrix from raw CSR arrays, checking every structural invariant.
    pub fn from_raw_parts(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != n_rows + 1 {
            return Err(Error::MalformedMatrix(format!(
                "row_offsets has length {}, expected {}",
                row_offsets.len(),
                n_rows + 1
            )));
        }
        if row_offsets[0] != 0 || row_offsets[n_rows] != col_indices.len() {
            return Err(Error::MalformedMatrix(
                "row_offsets must start at 0 and end at nnz".into(),
            ));
        }
        if col_indices.len() != values.len() {
            return Err(Error::MalformedMatrix("col_indices and values differ in length".into()));
        }
        for row in 0..n_rows {
            let (start, end) = (row_offsets[row], row_offsets[row + 1]);
            if start > end {
                return Err(Error::MalformedMatrix(format!("row_offsets decrease at row {row}")));
            }
            let cols = &col_indices[start..end];
            if let Some(&c) = cols.iter().find(|&&c| c >= n_cols) {
                return Err(Error::MalformedMatrix(format!(
                    "column {c} out of range in row {row} (n_cols {n_cols})"
                )));
            }
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::MalformedMatrix(format!(
                    "columns not strictly increasing in row {row}"
                )));
            }
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("matrix value {v}")));
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            row_offsets: vec![0; n_rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Binary matrix with a one at every `(row, col)` pair. Duplicate pairs are rejected.
    pub fn from_pairs(n_rows: usize, n_cols: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut sorted = pairs.to_vec();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::MalformedMatrix(format!(
                "duplicate entry ({}, {})",
                w[0].0, w[0].1
            )));
        }
        let mut row_offsets = vec![0usize; n_rows + 1];
        for &(r, c) in &sorted {
            if r >= n_rows || c >= n_cols {
                return Err(Error::MalformedMatrix(format!(
                    "entry ({r}, {c}) outside {n_rows}x{n_cols}"
                )));
            }
            row_offsets[r + 1] += 1;
        }
        for r in 0..n_rows {
            row_offsets[r + 1] += row_offsets[r];
        }
        let col_indices = sorted.iter().map(|&(_, c)| c).collect::<Vec<_>>();
        let values = vec![1.0; col_indices.len()];
        Ok(Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Keeps every nonzero entry of a dense matrix.
    pub fn from_dense(dense: &Array2<f64>) -> Result<Self> {
        let (n_rows, n_cols) = dense.dim();
        let mut row_offsets = Vec::with_capacity(n_rows + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for row in dense.rows() {
            for (c, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    col_indices.push(c);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Self::from_raw_parts(n_rows, n_cols, row_offsets, col_indices, values)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut dense = Array2::zeros((self.n_rows, self.n_cols));
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                dense[(r, c)] = v;
            }
        }
        dense
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of one row.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (start, end) = (self.row_offsets[r], self.row_offsets[r + 1]);
        (&self.col_indices[start..end], &self.values[start..end])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        cols.binary_search(&c).map_or(0.0, |k| vals[k])
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.row(r).1.iter().sum()).collect()
    }

    /// A row counts as empty when it stores nothing or only zeros.
    pub fn is_row_empty(&self, r: usize) -> bool {
        self.row(r).1.iter().all(|&v| v == 0.0)
    }

    /// Scales every nonempty row to sum to one; empty rows stay empty.
    pub fn row_normalize(&self) -> Result<Self> {
        let mut values = self.values.clone();
        for r in 0..self.n_rows {
            let (start, end) = (self.row_offsets[r], self.row_offsets[r + 1]);
            for k in start..end {
                if values[k] < 0.0 {
                    return Err(Error::NegativeValue {
                        row: r,
                        col: self.col_indices[k],
                        value: values[k],
                    });
                }
            }
            let sum: f64 = values[start..end].iter().sum();
            if sum > 0.0 {
                for v in &mut values[start..end] {
                    *v /= sum;
                }
            }
        }
        Ok(Self { values, ..self.clone() })
    }

    /// Fails unless every nonempty row sums to one within `tol` and no entry is negative.
    pub fn check_row_stochastic(&self, tol: f64) -> Result<()> {
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            let (mut sum, mut nonzero) = (0.0, false);
            for (&c, &v) in cols.iter().zip(vals) {
                if v < 0.0 {
                    return Err(Error::NegativeValue {
                        row: r,
                        col: c,
                        value: v,
                    });
                }
                sum += v;
                nonzero |= v != 0.0;
            }
            if nonzero && (sum - 1.0).abs() > tol {
                return Err(Error::NotRowStochastic { row: r, sum });
            }
        }
        Ok(())
    }

    /// Returns the mass a row lacks to sum to one onto its diagonal.
    ///
    /// An empty row becomes a unit self-loop. A partial row (mass lost at a
    /// dead end somewhere along a meta-path) keeps its entries and gains the
    /// remainder on `(r, r)`. Rows within [`ROW_SUM_TOLERANCE`] of one, or
    /// above it, are left alone.
    pub fn with_self_loop_repair(&self) -> Result<Self> {
        if !self.is_square() {
            return Err(Error::ShapeMismatch(format!(
                "self-loop repair needs a square matrix, got {}x{}",
                self.n_rows, self.n_cols
            )));
        }
        let mut row_offsets = Vec::with_capacity(self.n_rows + 1);
        let mut col_indices = Vec::with_capacity(self.nnz() + self.n_rows);
        let mut values = Vec::with_capacity(self.nnz() + self.n_rows);
        row_offsets.push(0);
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            let deficit = 1.0 - vals.iter().sum::<f64>();
            if deficit <= ROW_SUM_TOLERANCE {
                col_indices.extend_from_slice(cols);
                values.extend_from_slice(vals);
            } else {
                let at = cols.partition_point(|&c| c < r);
                col_indices.extend_from_slice(&cols[..at]);
                values.extend_from_slice(&vals[..at]);
                if cols.get(at) == Some(&r) {
                    col_indices.push(r);
                    values.push(vals[at] + deficit);
                    col_indices.extend_from_slice(&cols[at + 1..]);
                    values.extend_from_slice(&vals[at + 1..]);
                } else {
                    col_indices.push(r);
                    values.push(deficit);
                    col_indices.extend_from_slice(&cols[at..]);
                    values.extend_from_slice(&vals[at..]);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Ok(Self {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Sparse-sparse product computed row by row with a sparse accumulator.
    pub fn matmul(&self, rhs: &SparseRowMatrix) -> Result<Self> {
        if self.n_cols != rhs.n_rows {
            return Err(Error::ShapeMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.n_rows, self.n_cols, rhs.n_rows, rhs.n_cols
            )));
        }
        let n_cols = rhs.n_cols;
        let mut acc = vec![0.0f64; n_cols];
        let mut marker = vec![usize::MAX; n_cols];
        let mut touched: Vec<usize> = Vec::new();

        let mut row_offsets = Vec::with_capacity(self.n_rows + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for r in 0..self.n_rows {
            touched.clear();
            let (lcols, lvals) = self.row(r);
            for (&k, &a) in lcols.iter().zip(lvals) {
                let (rcols, rvals) = rhs.row(k);
                for (&c, &b) in rcols.iter().zip(rvals) {
                    if marker[c] != r {
                        marker[c] = r;
                        acc[c] = a * b;
                        touched.push(c);
                    } else {
                        acc[c] += a * b;
                    }
                }
            }
            touched.sort_unstable();
            for &c in &touched {
                col_indices.push(c);
                values.push(acc[c]);
            }
            row_offsets.push(col_indices.len());
        }
        Ok(Self {
            n_rows: self.n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_cols {
            return Err(Error::ShapeMismatch(format!(
                "vector of length {} against {} columns",
                x.len(),
                self.n_cols
            )));
        }
        Ok((0..self.n_rows)
            .map(|r| {
                let (cols, vals) = self.row(r);
                cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum()
            })
            .collect())
    }

    /// Computes `selfᵀ · x` without materializing the transpose.
    pub fn transpose_mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_rows {
            return Err(Error::ShapeMismatch(format!(
                "vector of length {} against {} rows",
                x.len(),
                self.n_rows
            )));
        }
        let mut out = vec![0.0; self.n_cols];
        for (r, &xr) in x.iter().enumerate() {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                out[c] += v * xr;
            }
        }
        Ok(out)
    }

    /// Sparse times dense, producing a dense `n_rows x dense.ncols()` matrix.
    pub fn mul_dense(&self, dense: &Array2<f64>) -> Result<Array2<f64>> {
        if dense.nrows() != self.n_cols {
            return Err(Error::ShapeMismatch(format!(
                "cannot multiply {}x{} by dense {}x{}",
                self.n_rows,
                self.n_cols,
                dense.nrows(),
                dense.ncols()
            )));
        }
        let mut out = Array2::zeros((self.n_rows, dense.ncols()));
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            let mut out_row = out.row_mut(r);
            for (&c, &v) in cols.iter().zip(vals) {
                out_row.scaled_add(v, &dense.row(c));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn normalize_splits_equal_weights() {
        let m = SparseRowMatrix::from_dense(&array![[2.0, 2.0], [0.0, 1.0]]).unwrap();
        let n = m.row_normalize().unwrap();
        assert_eq!(n.row(0).1, &[0.5, 0.5]);
        assert_eq!(n.row(1).1, &[1.0]);
    }

    #[test]
    fn normalize_rejects_negative() {
        let m = SparseRowMatrix::from_dense(&array![[1.0, -1.0]]).unwrap();
        assert!(matches!(
            m.row_normalize(),
            Err(Error::NegativeValue { row: 0, col: 1, .. })
        ));
    }

    #[test]
    fn empty_rows_survive_normalization() {
        let m = SparseRowMatrix::from_pairs(3, 2, &[(0, 1)]).unwrap();
        let n = m.row_normalize().unwrap();
        assert_eq!(n.row_sums(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn raw_parts_validation() {
        assert!(SparseRowMatrix::from_raw_parts(1, 2, vec![0, 2], vec![1, 0], vec![1.0, 1.0]).is_err());
        assert!(SparseRowMatrix::from_raw_parts(1, 2, vec![0, 1], vec![2], vec![1.0]).is_err());
        assert!(SparseRowMatrix::from_raw_parts(1, 2, vec![0, 1], vec![1], vec![f64::NAN]).is_err());
        assert!(SparseRowMatrix::from_raw_parts(1, 2, vec![0, 1], vec![1], vec![0.5]).is_ok());
    }

    #[test]
    fn duplicate_pairs_rejected() {
        assert!(SparseRowMatrix::from_pairs(2, 2, &[(0, 1), (0, 1)]).is_err());
    }

    #[test]
    fn repair_fills_missing_mass_on_the_diagonal() {
        let m = SparseRowMatrix::from_pairs(3, 3, &[(0, 1)]).unwrap();
        let r = m.with_self_loop_repair().unwrap().to_dense();
        assert_eq!(r, array![[0.0, 1.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

        let partial = SparseRowMatrix::from_dense(&array![[0.25, 0.5, 0.0], [0.5, 0.0, 0.0], [0.0, 0.0, 0.0]]).unwrap();
        let r = partial.with_self_loop_repair().unwrap();
        assert_eq!(r.to_dense(), array![[0.5, 0.5, 0.0], [0.5, 0.5, 0.0], [0.0, 0.0, 1.0]]);
        let leaky = SparseRowMatrix::from_dense(&array![[0.0, 0.5, 0.25], [0.0, 0.0, 0.0], [0.5, 0.0, 0.0]]).unwrap();
        let r = leaky.with_self_loop_repair().unwrap();
        assert_eq!(
            r.to_dense(),
            array![[0.25, 0.5, 0.25], [0.0, 1.0, 0.0], [0.5, 0.0, 0.5]]
        );
        r.check_row_stochastic(0.0).unwrap();
        assert!(SparseRowMatrix::zeros(2, 3).with_self_loop_repair().is_err());
    }

    #[test]
    fn transpose_product_matches_dense() {
        let d = array![[0.2, 0.0, 0.8], [0.0, 1.0, 0.0]];
        let m = SparseRowMatrix::from_dense(&d).unwrap();
        let x = [3.0, -1.0];
        let got = m.transpose_mul_vec(&x).unwrap();
        let want = d.t().dot(&ndarray::arr1(&x));
        assert_eq!(got, want.to_vec());
    }

    #[test]
    fn shape_errors() {
        let a = SparseRowMatrix::zeros(2, 3);
        assert!(a.matmul(&a).is_err());
        assert!(a.mul_vec(&[1.0, 2.0]).is_err());
        assert!(a.mul_dense(&Array2::zeros((2, 1))).is_err());
    }
}
