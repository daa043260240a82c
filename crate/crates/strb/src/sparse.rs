//! Minimal CSR storage shared by the assembly and norm machinery.
//!
//! The value array of a [`CsrMatrix`] doubles as the "vector of nonzero
//! entries" that MDEIM compresses, so the column pattern is fixed at
//! construction and never pruned: structurally present entries stay present
//! even when numerically zero.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from triplets, summing duplicates. Column indices are sorted
    /// within each row, which fixes the canonical nonzero order.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_rows];
        for &(i, j, v) in triplets {
            if i >= n_rows || j >= n_cols {
                return Err(Error::DimensionMismatch(format!(
                    "triplet ({i}, {j}) outside {n_rows}x{n_cols}"
                )));
            }
            rows[i].push((j, v));
        }
        let mut indptr = Vec::with_capacity(n_rows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in &mut rows {
            row.sort_by_key(|&(j, _)| j);
            let mut last: Option<usize> = None;
            for &(j, v) in row.iter() {
                if last == Some(j) {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(j);
                    values.push(v);
                    last = Some(j);
                }
            }
            indptr.push(indices.len());
        }
        Ok(CsrMatrix {
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
        })
    }

    /// Builds directly from raw CSR arrays.
    pub fn from_raw(
        n_rows: usize,
        n_cols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if indptr.len() != n_rows + 1
            || indices.len() != values.len()
            || *indptr.last().unwrap_or(&0) != indices.len()
        {
            return Err(Error::DimensionMismatch("inconsistent CSR arrays".into()));
        }
        Ok(CsrMatrix {
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
        })
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

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn set_values(&mut self, values: Vec<f64>) -> Result<()> {
        if values.len() != self.values.len() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} nonzeros, got {}",
                self.values.len(),
                values.len()
            )));
        }
        self.values = values;
        Ok(())
    }

    /// Same pattern, all values zero.
    pub fn zero_like(&self) -> CsrMatrix {
        CsrMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            indptr: self.indptr.clone(),
            indices: self.indices.clone(),
            values: vec![0.0; self.values.len()],
        }
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.indptr[i];
        let hi = self.indptr[i + 1];
        (&self.indices[lo..hi], &self.values[lo..hi])
    }

    /// Flat nonzero position of entry (i, j), if structurally present.
    pub fn nz_position(&self, i: usize, j: usize) -> Option<usize> {
        let lo = self.indptr[i];
        let hi = self.indptr[i + 1];
        self.indices[lo..hi]
            .binary_search(&j)
            .ok()
            .map(|k| lo + k)
    }

    /// Row index owning flat nonzero position `pos`.
    pub fn row_of_nz(&self, pos: usize) -> usize {
        match self.indptr.binary_search(&pos) {
            // `pos` may sit on a row boundary shared by empty rows; take the
            // last row whose range starts at or before it.
            Ok(mut r) => {
                while r + 1 < self.indptr.len() && self.indptr[r + 1] == pos {
                    r += 1;
                }
                r
            }
            Err(r) => r - 1,
        }
    }

    pub fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.n_cols, "matvec dimension mismatch");
        let mut y = DVector::zeros(self.n_rows);
        for i in 0..self.n_rows {
            let mut acc = 0.0;
            for k in self.indptr[i]..self.indptr[i + 1] {
                acc += self.values[k] * x[self.indices[k]];
            }
            y[i] = acc;
        }
        y
    }

    pub fn matvec_transpose(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.n_rows, "matvec_transpose dimension mismatch");
        let mut y = DVector::zeros(self.n_cols);
        for i in 0..self.n_rows {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            for k in self.indptr[i]..self.indptr[i + 1] {
                y[self.indices[k]] += self.values[k] * xi;
            }
        }
        y
    }

    /// Dense product A * B.
    pub fn mul_dense(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(b.nrows(), self.n_cols, "mul_dense dimension mismatch");
        let mut out = DMatrix::zeros(self.n_rows, b.ncols());
        for i in 0..self.n_rows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                let v = self.values[k];
                let j = self.indices[k];
                for c in 0..b.ncols() {
                    out[(i, c)] += v * b[(j, c)];
                }
            }
        }
        out
    }

    /// Dense product A^T * B.
    pub fn mul_transpose_dense(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(b.nrows(), self.n_rows, "mul_transpose_dense dimension mismatch");
        let mut out = DMatrix::zeros(self.n_cols, b.ncols());
        for i in 0..self.n_rows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                let v = self.values[k];
                let j = self.indices[k];
                for c in 0..b.ncols() {
                    out[(j, c)] += v * b[(i, c)];
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                m[(i, self.indices[k])] += self.values[k];
            }
        }
        m
    }

    pub fn to_sprs(&self) -> sprs::CsMat<f64> {
        sprs::CsMat::new(
            (self.n_rows, self.n_cols),
            self.indptr.clone(),
            self.indices.clone(),
            self.values.clone(),
        )
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &j in &self.indices {
            counts[j + 1] += 1;
        }
        for j in 0..self.n_cols {
            counts[j + 1] += counts[j];
        }
        let indptr = counts.clone();
        let mut indices = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        let mut next = counts;
        for i in 0..self.n_rows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                let j = self.indices[k];
                let dst = next[j];
                indices[dst] = i;
                values[dst] = self.values[k];
                next[j] += 1;
            }
        }
        CsrMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            indptr,
            indices,
            values,
        }
    }

    /// Max relative asymmetry |A - A^T| / max|A| over structural entries.
    pub fn asymmetry(&self) -> f64 {
        let t = self.transpose();
        let scale = self
            .values
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let vt = t.nz_position(i, j).map(|p| t.values()[p]).unwrap_or(0.0);
                worst = worst.max((v - vt).abs() / scale);
            }
        }
        worst
    }
}

/// Solves `U x = b` for upper-triangular CSR `U` with explicit diagonal.
pub fn solve_upper_csr(u: &CsrMatrix, b: &DVector<f64>) -> Result<DVector<f64>> {
    let n = u.n_rows();
    if b.len() != n {
        return Err(Error::DimensionMismatch("triangular solve rhs".into()));
    }
    let mut x = b.clone();
    for i in (0..n).rev() {
        let (cols, vals) = u.row(i);
        let mut diag = 0.0;
        let mut acc = x[i];
        for (&j, &v) in cols.iter().zip(vals) {
            if j == i {
                diag = v;
            } else if j > i {
                acc -= v * x[j];
            }
        }
        if diag == 0.0 || !diag.is_finite() {
            return Err(Error::Singular(format!("zero pivot in row {i}")));
        }
        x[i] = acc / diag;
    }
    Ok(x)
}

/// Solves `U^T x = b` (forward substitution on the transposed upper factor).
pub fn solve_upper_transpose_csr(u: &CsrMatrix, b: &DVector<f64>) -> Result<DVector<f64>> {
    let n = u.n_rows();
    if b.len() != n {
        return Err(Error::DimensionMismatch("triangular solve rhs".into()));
    }
    let mut x = b.clone();
    for i in 0..n {
        let (cols, vals) = u.row(i);
        let mut diag = 0.0;
        for (&j, &v) in cols.iter().zip(vals) {
            if j == i {
                diag = v;
            }
        }
        if diag == 0.0 || !diag.is_finite() {
            return Err(Error::Singular(format!("zero pivot in row {i}")));
        }
        x[i] /= diag;
        let xi = x[i];
        for (&j, &v) in cols.iter().zip(vals) {
            if j > i {
                x[j] -= v * xi;
            }
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CsrMatrix {
        CsrMatrix::from_triplets(
            3,
            3,
            &[
                (0, 0, 2.0),
                (0, 1, -1.0),
                (1, 0, -1.0),
                (1, 1, 2.0),
                (1, 2, -1.0),
                (2, 1, -1.0),
                (2, 2, 2.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn triplets_sum_duplicates() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 0, 2.5), (1, 1, 1.0)]).unwrap();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.values()[0], 3.5);
    }

    #[test]
    fn matvec_matches_dense() {
        let m = sample();
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let y = m.matvec(&x);
        let yd = m.to_dense() * &x;
        assert!((y - yd).norm() < 1e-14);
    }

    #[test]
    fn transpose_round_trip() {
        let m = CsrMatrix::from_triplets(2, 3, &[(0, 2, 1.0), (1, 0, 4.0), (1, 2, -2.0)]).unwrap();
        let tt = m.transpose().transpose();
        assert_eq!(m, tt);
    }

    #[test]
    fn upper_solves() {
        let u =
            CsrMatrix::from_triplets(2, 2, &[(0, 0, 2.0), (0, 1, 1.0), (1, 1, 4.0)]).unwrap();
        let b = DVector::from_vec(vec![4.0, 8.0]);
        let x = solve_upper_csr(&u, &b).unwrap();
        assert!((u.to_dense() * &x - &b).norm() < 1e-14);
        let y = solve_upper_transpose_csr(&u, &b).unwrap();
        assert!((u.to_dense().transpose() * &y - &b).norm() < 1e-14);
    }

    #[test]
    fn nz_position_and_row_of_nz_agree() {
        let m = sample();
        for i in 0..3 {
            let (cols, _) = m.row(i);
            for &j in cols {
                let p = m.nz_position(i, j).unwrap();
                assert_eq!(m.row_of_nz(p), i);
            }
        }
        assert_eq!(m.nz_position(0, 2), None);
    }
}
