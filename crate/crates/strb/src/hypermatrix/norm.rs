//! Symmetric positive definite norm matrices with a cached Cholesky factor.
//!
//! The factor `H` (upper-triangular, `H^T H = X`) drives three things: the
//! weighted TPOD trick (orthonormalize `H U` instead of `U`), `X`-norms of
//! vectors, and `X^-1` applications by a pair of triangular solves. The
//! inverse is never formed.

use nalgebra::{DMatrix, DVector};
use sprs_ldl::Ldl;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::sparse::{solve_upper_csr, solve_upper_transpose_csr, CsrMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    X,
    XInverse,
}

#[derive(Debug)]
pub struct NormMatrix {
    matrix: CsrMatrix,
    factor: OnceLock<std::result::Result<CsrMatrix, String>>,
}

impl NormMatrix {
    /// Wraps a symmetric matrix and runs a probabilistic positivity check
    /// (16 seeded random vectors). Factorization is deferred to first use.
    pub fn new(matrix: CsrMatrix) -> Result<Self> {
        if matrix.n_rows() != matrix.n_cols() {
            return Err(Error::DimensionMismatch(format!(
                "norm matrix must be square, got {}x{}",
                matrix.n_rows(),
                matrix.n_cols()
            )));
        }
        if matrix.asymmetry() > 1e-12 {
            return Err(Error::NotSpd("matrix is not symmetric".into()));
        }
        let mut rng = Stream::new(0xC0FFEE);
        for trial in 0..16 {
            let v = DVector::from_fn(matrix.n_rows(), |_, _| rng.next_normal());
            let q = v.dot(&matrix.matvec(&v));
            if !(q > 0.0) {
                return Err(Error::NotSpd(format!(
                    "v^T X v = {q} on random probe {trial}"
                )));
            }
        }
        Ok(NormMatrix {
            matrix,
            factor: OnceLock::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.n_rows()
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// Upper-triangular factor `H` with `H^T H = X`, built from an LDL^T
    /// factorization in natural order as `H = D^(1/2) L^T`. Fails on a
    /// nonpositive pivot.
    pub fn factor(&self) -> Result<&CsrMatrix> {
        let cached = self.factor.get_or_init(|| build_factor(&self.matrix));
        match cached {
            Ok(f) => Ok(f),
            Err(msg) => Err(Error::NotSpd(msg.clone())),
        }
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        self.matrix.matvec(v)
    }

    /// `X^-1 v` through the factor: solve `H^T w = v`, then `H x = w`.
    pub fn solve(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        let h = self.factor()?;
        let w = solve_upper_transpose_csr(h, v)?;
        solve_upper_csr(h, &w)
    }

    pub fn weighted_norm(&self, v: &DVector<f64>, mode: NormMode) -> Result<f64> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} against norm matrix of dim {}",
                v.len(),
                self.dim()
            )));
        }
        let q = match mode {
            NormMode::X => v.dot(&self.apply(v)),
            NormMode::XInverse => v.dot(&self.solve(v)?),
        };
        // tiny negative values can appear from rounding on near-null vectors
        Ok(q.max(0.0).sqrt())
    }

    /// `H * U` for a dense multi-column `U`.
    pub fn h_mult(&self, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.factor()?.mul_dense(u))
    }

    /// `H^-1 * U` (columnwise backward substitution).
    pub fn h_solve(&self, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let h = self.factor()?;
        let mut out = DMatrix::zeros(u.nrows(), u.ncols());
        for c in 0..u.ncols() {
            let col = DVector::from_column_slice(u.column(c).as_slice());
            let x = solve_upper_csr(h, &col)?;
            out.set_column(c, &x);
        }
        Ok(out)
    }

    /// Largest eigenvalue of `X^-1` by power iteration on Cholesky solves
    /// (200 iterations or 1e-8 relative change).
    pub fn inverse_spectral_norm(&self) -> Result<f64> {
        let n = self.dim();
        let mut rng = Stream::new(0x5EED);
        let mut v = DVector::from_fn(n, |_, _| rng.next_normal());
        v /= v.norm();
        let mut lambda = 0.0f64;
        for _ in 0..200 {
            let w = self.solve(&v)?;
            let new_lambda = w.norm();
            if new_lambda == 0.0 {
                return Ok(0.0);
            }
            v = w / new_lambda;
            if (new_lambda - lambda).abs() <= 1e-8 * new_lambda {
                return Ok(new_lambda);
            }
            lambda = new_lambda;
        }
        Ok(lambda)
    }
}

fn build_factor(x: &CsrMatrix) -> std::result::Result<CsrMatrix, String> {
    // natural ordering keeps the factor reproducible and genuinely
    // triangular; mesh node numbering already keeps the band thin
    let ldl = Ldl::new()
        .fill_in_reduction(sprs::FillInReduction::NoReduction)
        .check_symmetry(sprs::SymmetryCheck::DontCheckSymmetry)
        .numeric(x.to_sprs().view())
        .map_err(|e| format!("LDL factorization failed: {e}"))?;
    let d = ldl.d();
    for (i, &di) in d.iter().enumerate() {
        if !(di > 0.0) || !di.is_finite() {
            return Err(format!("nonpositive pivot d[{i}] = {di}"));
        }
    }
    let l = ldl.l(); // strict lower part, implicit unit diagonal
    let n = x.n_rows();
    let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(l.nnz() + n);
    for i in 0..n {
        triplets.push((i, i, d[i].sqrt()));
    }
    for (&v, (r, c)) in l.iter() {
        if r != c {
            // H = D^(1/2) L^T: entry (c, r) = sqrt(d_c) * L[r, c]
            triplets.push((c, r, d[c].sqrt() * v));
        }
    }
    CsrMatrix::from_triplets(n, n, &triplets).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd_tridiag(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, &t).unwrap()
    }

    fn random_spd(n: usize, seed: u64) -> CsrMatrix {
        let mut rng = Stream::new(seed);
        let b = DMatrix::from_fn(n, n, |_, _| rng.next_normal());
        let spd = &b * b.transpose() + DMatrix::identity(n, n) * n as f64;
        let mut t = Vec::new();
        for i in 0..n {
            for j in 0..n {
                t.push((i, j, spd[(i, j)]));
            }
        }
        CsrMatrix::from_triplets(n, n, &t).unwrap()
    }

    #[test]
    fn factor_reproduces_matrix() {
        let x = NormMatrix::new(spd_tridiag(12)).unwrap();
        let h = x.factor().unwrap().to_dense();
        let err = (h.transpose() * &h - x.matrix().to_dense()).norm()
            / x.matrix().to_dense().norm();
        assert!(err < 1e-12, "relative Frobenius error {err}");
    }

    #[test]
    fn zero_vector_has_zero_norm() {
        let x = NormMatrix::new(spd_tridiag(5)).unwrap();
        let v = DVector::zeros(5);
        assert_eq!(x.weighted_norm(&v, NormMode::X).unwrap(), 0.0);
        assert_eq!(x.weighted_norm(&v, NormMode::XInverse).unwrap(), 0.0);
    }

    #[test]
    fn identity_weight_gives_euclidean_norm() {
        let eye = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, 1.0)]).unwrap();
        let x = NormMatrix::new(eye).unwrap();
        let v = DVector::from_vec(vec![3.0, 4.0]);
        assert!((x.weighted_norm(&v, NormMode::X).unwrap() - 5.0).abs() < 1e-14);
        assert!((x.weighted_norm(&v, NormMode::XInverse).unwrap() - 5.0).abs() < 1e-14);
    }

    #[test]
    fn cauchy_schwarz_between_dual_norms() {
        // ||v||_X * ||v||_{X^-1} >= v^T v, checked against a dense solve oracle
        for seed in 0..5u64 {
            let x = NormMatrix::new(random_spd(9, 100 + seed)).unwrap();
            let mut rng = Stream::new(seed);
            let v = DVector::from_fn(9, |_, _| rng.next_normal());
            let nx = x.weighted_norm(&v, NormMode::X).unwrap();
            let nxi = x.weighted_norm(&v, NormMode::XInverse).unwrap();
            assert!(nx * nxi >= v.dot(&v) - 1e-10);
            // dense oracle for the inverse-weighted norm
            let dense = x.matrix().to_dense();
            let w = dense.clone().lu().solve(&v).unwrap();
            let oracle = v.dot(&w).sqrt();
            assert!((nxi - oracle).abs() <= 1e-10 * oracle.max(1.0));
        }
    }

    #[test]
    fn x_norm_matches_factor_image_norm() {
        let x = NormMatrix::new(random_spd(7, 42)).unwrap();
        let mut rng = Stream::new(1);
        let v = DVector::from_fn(7, |_, _| rng.next_normal());
        let hv = x.factor().unwrap().matvec(&v);
        let nx = x.weighted_norm(&v, NormMode::X).unwrap();
        assert!((nx - hv.norm()).abs() < 1e-12 * nx.max(1.0));
    }

    #[test]
    fn rejects_indefinite_matrix() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, -1.0)]).unwrap();
        assert!(NormMatrix::new(m).is_err());
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let x = NormMatrix::new(spd_tridiag(4)).unwrap();
        let v = DVector::zeros(3);
        assert!(x.weighted_norm(&v, NormMode::X).is_err());
    }

    #[test]
    fn inverse_spectral_norm_matches_dense() {
        let x = NormMatrix::new(random_spd(8, 77)).unwrap();
        let dense = x.matrix().to_dense();
        let eig = dense.symmetric_eigen();
        let oracle = eig.eigenvalues.iter().fold(f64::INFINITY, |m, &l| m.min(l));
        let got = x.inverse_spectral_norm().unwrap();
        assert!((got - 1.0 / oracle).abs() < 1e-6 * got);
    }
}
