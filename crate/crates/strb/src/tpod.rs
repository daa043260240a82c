//! Truncated proper orthogonal decomposition in space, in time, and
//! sequentially over both axes, with energy-based rank selection and optional
//! weighted orthogonality.
//!
//! All decompositions run through the eigendecomposition of the smaller Gram
//! matrix: for `U` of size `N x M` the `min(N, M)`-sized Gram matrix is
//! formed, its spectrum sorted, and left singular vectors recovered as
//! `U * v_i / sigma_i` when the Gram matrix lives on the column side.
//! Singular values below `sqrt(machine eps) * sigma_max` are treated as zero
//! and never inverted.

use std::io::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hypermatrix::{Axis, Hypermatrix, NormMatrix};

#[derive(Debug, Clone)]
pub struct PodResult {
    /// `N x n` basis, orthonormal in the requested inner product.
    pub basis: DMatrix<f64>,
    /// Full spectrum, nonincreasing, kept for diagnostics and error bounds.
    pub singular_values: Vec<f64>,
    pub rank: usize,
    pub tolerance_used: f64,
}

impl PodResult {
    /// Sum of squared singular values past the selected rank.
    pub fn tail_energy(&self) -> f64 {
        self.singular_values[self.rank..].iter().map(|s| s * s).sum()
    }

    pub fn total_energy(&self) -> f64 {
        self.singular_values.iter().map(|s| s * s).sum()
    }

    /// Writes the basis as a hypermatrix binary and the spectrum as a CSV
    /// sidecar with `index,sigma` rows.
    pub fn save(&self, basis_path: &Path, spectrum_path: &Path, row_label: Axis) -> Result<()> {
        let col_label = if row_label == Axis::Parameter {
            Axis::Space
        } else {
            Axis::Parameter
        };
        let h = Hypermatrix::from_matrix(&self.basis, row_label, col_label)?;
        crate::hypermatrix::io::save(basis_path, &h)?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(spectrum_path)?);
        writeln!(f, "index,sigma")?;
        for (i, s) in self.singular_values.iter().enumerate() {
            writeln!(f, "{i},{s:.17e}")?;
        }
        Ok(())
    }
}

/// Smallest `n` with `sum_{i<=n} sigma_i^2 / sum sigma_i^2 >= 1 - eps^2`.
pub fn truncation_rank(sigma: &[f64], eps: f64) -> Result<usize> {
    if sigma.is_empty() {
        return Err(Error::InvalidArgument("empty spectrum".into()));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!("eps = {eps} outside (0, 1)")));
    }
    for i in 1..sigma.len() {
        if sigma[i] > sigma[i - 1] {
            return Err(Error::InvalidArgument("spectrum not nonincreasing".into()));
        }
    }
    if sigma[0] < 0.0 {
        return Err(Error::InvalidArgument("negative singular value".into()));
    }
    let total: f64 = sigma.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return Err(Error::DegenerateInput("zero spectrum".into()));
    }
    let target = (1.0 - eps * eps) * total;
    let mut acc = 0.0;
    for (i, s) in sigma.iter().enumerate() {
        acc += s * s;
        if acc >= target {
            return Ok(i + 1);
        }
    }
    Ok(sigma.len())
}

/// Full Gram-path SVD: all `min(N, M)` singular values (nonincreasing) and
/// the left singular vectors for values above the inversion cutoff.
fn gram_svd(u: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let (n, m) = u.shape();
    let (eigvals, eigvecs, column_side) = if m <= n {
        let g = u.transpose() * u;
        let eig = g.symmetric_eigen();
        (eig.eigenvalues, eig.eigenvectors, true)
    } else {
        let g = u * u.transpose();
        let eig = g.symmetric_eigen();
        (eig.eigenvalues, eig.eigenvectors, false)
    };
    let k = eigvals.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eigvals[b].partial_cmp(&eigvals[a]).unwrap());
    let sigma: Vec<f64> = order
        .iter()
        .map(|&i| eigvals[i].max(0.0).sqrt())
        .collect();
    let cutoff = f64::EPSILON.sqrt() * sigma.first().copied().unwrap_or(0.0);
    let numerical_rank = sigma.iter().take_while(|&&s| s > cutoff).count();
    let mut basis = DMatrix::zeros(n, numerical_rank);
    for (col, &i) in order.iter().take(numerical_rank).enumerate() {
        if column_side {
            // left singular vector from the right one: u_i = U v_i / sigma_i
            let v = eigvecs.column(i);
            let mut ui = u * v;
            ui /= sigma[col];
            basis.set_column(col, &ui);
        } else {
            basis.set_column(col, &eigvecs.column(i));
        }
    }
    fix_signs(&mut basis);
    (basis, sigma)
}

/// Makes the largest-magnitude entry of each column positive (ties toward
/// the lowest index), so bases are reproducible across platforms.
fn fix_signs(basis: &mut DMatrix<f64>) {
    for mut col in basis.column_iter_mut() {
        let mut best = 0usize;
        let mut best_abs = 0.0f64;
        for (i, &v) in col.iter().enumerate() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Space-axis TPOD with optional weighted orthogonality. When a weight `X`
/// is given, the basis is computed from `H U` (with `H^T H = X`) and mapped
/// back through `H^-1`, so its columns are `X`-orthonormal.
pub fn spod(u: &DMatrix<f64>, eps: f64, weight: Option<&NormMatrix>) -> Result<PodResult> {
    if u.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateInput("all-zero snapshot matrix".into()));
    }
    if let Some(x) = weight {
        if x.dim() != u.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "weight dim {} vs {} snapshot rows",
                x.dim(),
                u.nrows()
            )));
        }
        let hu = x.h_mult(u)?;
        let (basis_bar, sigma) = gram_svd(&hu);
        let rank = truncation_rank(&sigma, eps)?.min(basis_bar.ncols());
        let mut basis = x.h_solve(&basis_bar.columns(0, rank).into_owned())?;
        fix_signs(&mut basis);
        Ok(PodResult {
            basis,
            singular_values: sigma,
            rank,
            tolerance_used: eps,
        })
    } else {
        let (basis_full, sigma) = gram_svd(u);
        let rank = truncation_rank(&sigma, eps)?.min(basis_full.ncols());
        Ok(PodResult {
            basis: basis_full.columns(0, rank).into_owned(),
            singular_values: sigma,
            rank,
            tolerance_used: eps,
        })
    }
}

/// Time-axis TPOD; plain l2 orthogonality is sufficient for temporal bases.
pub fn tpod_time(u_time_major: &DMatrix<f64>, eps: f64) -> Result<PodResult> {
    spod(u_time_major, eps, None)
}

/// Sequential TPOD: space axis first, then the time axis of the
/// space-compressed snapshots.
///
/// With a space weight `X`, the space stage factors `H U_(s,t mu)` and the
/// time stage sees the coefficients `Phi_bar^T H U` reshaped time-major, so
/// both stages run in plain l2 geometry internally.
pub fn st_hosvd(
    u: &Hypermatrix,
    eps: f64,
    space_weight: Option<&NormMatrix>,
) -> Result<(PodResult, PodResult)> {
    if u.rank() != 3 {
        return Err(Error::InvalidArgument("st_hosvd needs a 3-axis hypermatrix".into()));
    }
    let u_s = u.unfold(Axis::Space)?;
    let space = spod(&u_s, eps, space_weight)?;
    let coeff = match space_weight {
        Some(x) => {
            let hu = x.h_mult(&u_s)?;
            let h_phi = x.h_mult(&space.basis)?;
            h_phi.transpose() * hu
        }
        None => space.basis.transpose() * &u_s,
    };
    // coeff is n_s x (N_t * N_mu), columns time-fastest; reshape time-major
    let pos_t = u.axis_position(&[Axis::Time])?;
    let n_t = u.dims()[pos_t];
    let n_s = coeff.nrows();
    let n_mu = coeff.ncols() / n_t;
    let mut time_major = DMatrix::zeros(n_t, n_s * n_mu);
    for k in 0..n_mu {
        for j in 0..n_t {
            for i in 0..n_s {
                time_major[(j, i + n_s * k)] = coeff[(i, j + n_t * k)];
            }
        }
    }
    let time = tpod_time(&time_major, eps)?;
    Ok((space, time))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;
    use crate::sparse::CsrMatrix;
    use nalgebra::DVector;

    fn random_matrix(n: usize, m: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = Stream::new(seed);
        DMatrix::from_fn(n, m, |_, _| rng.next_normal())
    }

    fn random_spd_norm(n: usize, seed: u64) -> NormMatrix {
        let b = random_matrix(n, n, seed);
        let spd = &b * b.transpose() + DMatrix::identity(n, n) * n as f64;
        let mut t = Vec::new();
        for i in 0..n {
            for j in 0..n {
                t.push((i, j, spd[(i, j)]));
            }
        }
        NormMatrix::new(CsrMatrix::from_triplets(n, n, &t).unwrap()).unwrap()
    }

    #[test]
    fn truncation_rank_examples() {
        assert_eq!(truncation_rank(&[1.0, 0.0, 0.0], 1e-2).unwrap(), 1);
        // 4/5 = 0.8 >= 1 - 0.25
        assert_eq!(truncation_rank(&[2.0, 1.0], 0.5).unwrap(), 1);
        assert_eq!(truncation_rank(&[2.0, 1.0], 0.1).unwrap(), 2);
        // flat spectrum: any n < 4 retains <= 0.75 < 0.99
        assert_eq!(truncation_rank(&[1.0, 1.0, 1.0, 1.0], 0.1).unwrap(), 4);
    }

    #[test]
    fn truncation_rank_rejects_bad_input() {
        assert!(truncation_rank(&[1.0, 2.0], 0.1).is_err());
        assert!(truncation_rank(&[1.0], 0.0).is_err());
        assert!(truncation_rank(&[1.0], 1.0).is_err());
        assert!(truncation_rank(&[0.0, 0.0], 0.1).is_err());
    }

    #[test]
    fn spod_rank_one_input() {
        let a = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let b = DVector::from_vec(vec![2.0, 1.0, -1.0]);
        let u = &a * b.transpose();
        let pod = spod(&u, 0.5, None).unwrap();
        assert_eq!(pod.rank, 1);
        let cos = pod.basis.column(0).dot(&a).abs() / a.norm();
        assert!((cos - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spod_matches_dense_svd_oracle() {
        let u = random_matrix(6, 5, 1);
        let pod = spod(&u, 1e-12, None).unwrap();
        let recon = &pod.basis * (pod.basis.transpose() * &u);
        assert!((&u - recon).norm() <= 1e-10 * u.norm());
        let svd = u.clone().svd(false, false);
        let mut oracle: Vec<f64> = svd.singular_values.iter().copied().collect();
        oracle.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (s, o) in pod.singular_values.iter().zip(&oracle) {
            assert!((s - o).abs() <= 1e-10 * oracle[0]);
        }
    }

    #[test]
    fn spod_zero_matrix_errors() {
        let u = DMatrix::zeros(4, 3);
        assert!(spod(&u, 0.1, None).is_err());
    }

    #[test]
    fn prop1_equality_with_equal_dominant_values() {
        // two equal dominant singular values built from known factors
        let q = {
            let m = random_matrix(8, 8, 3);
            m.qr().q()
        };
        let v = {
            let m = random_matrix(5, 5, 4);
            m.qr().q()
        };
        let mut sigma = DMatrix::zeros(8, 5);
        for (i, s) in [3.0, 3.0, 0.5, 1e-3, 1e-4].iter().enumerate() {
            sigma[(i, i)] = *s;
        }
        let u = &q * sigma * v.transpose();
        let pod = spod(&u, 0.2, None).unwrap();
        assert!(pod.rank >= 2, "rank {}", pod.rank);
        let err = (&u - &pod.basis * (pod.basis.transpose() * &u)).norm_squared();
        let tail = pod.tail_energy();
        assert!((err - tail).abs() <= 1e-10 * pod.total_energy());
    }

    #[test]
    fn weighted_spod_is_x_orthonormal_and_optimal() {
        let x = random_spd_norm(7, 10);
        let u = random_matrix(7, 9, 11);
        let pod = spod(&u, 0.3, Some(&x)).unwrap();
        let gram = pod.basis.transpose() * x.matrix().to_dense() * &pod.basis;
        let eye = DMatrix::identity(pod.rank, pod.rank);
        assert!((gram - eye).norm() < 1e-10);
        // Prop 1 in the weighted Frobenius norm: error^2 equals the tail
        let h = x.factor().unwrap().to_dense();
        let proj = &pod.basis * (pod.basis.transpose() * x.matrix().to_dense() * &u);
        let err = (&h * (&u - proj)).norm_squared();
        assert!((err - pod.tail_energy()).abs() <= 1e-9 * pod.total_energy());
    }

    #[test]
    fn gram_and_direct_paths_agree_on_conditioned_input() {
        // conditioned input: sigma_min / sigma_max = 1e-2
        let q = random_matrix(20, 20, 5).qr().q();
        let v = random_matrix(12, 12, 6).qr().q();
        let mut s = DMatrix::zeros(20, 12);
        for i in 0..12 {
            s[(i, i)] = 1.0 * 0.7f64.powi(i as i32).max(1e-2);
        }
        let u = &q * s * v.transpose();
        let pod = spod(&u, 1e-10, None).unwrap();
        let svd = u.clone().svd(false, false);
        let mut oracle: Vec<f64> = svd.singular_values.iter().copied().collect();
        oracle.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (s, o) in pod.singular_values.iter().zip(&oracle) {
            assert!((s - o).abs() <= 1e-8 * o.max(1e-8));
        }
    }

    #[test]
    fn tpod_time_constant_snapshots() {
        let n_t = 6;
        let mut u = DMatrix::zeros(n_t, 4);
        for c in 0..4 {
            for r in 0..n_t {
                u[(r, c)] = (c + 1) as f64;
            }
        }
        let pod = tpod_time(&u, 1e-3).unwrap();
        assert_eq!(pod.rank, 1);
        let expected = 1.0 / (n_t as f64).sqrt();
        for &v in pod.basis.column(0).iter() {
            assert!((v - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn tpod_time_affine_in_time_has_rank_two() {
        let n_t = 10;
        let t: Vec<f64> = (0..n_t).map(|i| i as f64 / (n_t - 1) as f64).collect();
        let mut rng = Stream::new(8);
        let mut u = DMatrix::zeros(n_t, 7);
        for c in 0..7 {
            let a = rng.next_normal();
            let b = rng.next_normal();
            for r in 0..n_t {
                u[(r, c)] = a + b * t[r];
            }
        }
        let pod = tpod_time(&u, 1e-8).unwrap();
        assert_eq!(pod.rank, 2);
    }

    #[test]
    fn st_hosvd_separable_tensor_is_rank_one() {
        let (ns, nt, nm) = (5, 4, 3);
        let a: Vec<f64> = (0..ns).map(|i| 1.0 + i as f64).collect();
        let b: Vec<f64> = (0..nt).map(|j| (j as f64).cos() + 2.0).collect();
        let c: Vec<f64> = (0..nm).map(|k| 0.5 + k as f64).collect();
        let h = Hypermatrix::from_fn(
            vec![ns, nt, nm],
            vec![Axis::Space, Axis::Time, Axis::Parameter],
            |idx| a[idx[0]] * b[idx[1]] * c[idx[2]],
        )
        .unwrap();
        let (s, t) = st_hosvd(&h, 1e-6, None).unwrap();
        assert_eq!(s.rank, 1);
        assert_eq!(t.rank, 1);
    }

    /// Reconstruction through both stages, for bound verification.
    fn hosvd_reconstruct(
        u: &Hypermatrix,
        space: &PodResult,
        time: &PodResult,
    ) -> DMatrix<f64> {
        let u_s = u.unfold(Axis::Space).unwrap();
        let coeff = space.basis.transpose() * &u_s; // n_s x (N_t N_mu)
        let n_t = u.dims()[1];
        let n_mu = u.dims()[2];
        let n_s = coeff.nrows();
        // project each (i, k) time trace onto the time basis
        let pt = &time.basis * time.basis.transpose(); // N_t x N_t
        let mut out = coeff.clone();
        for k in 0..n_mu {
            for i in 0..n_s {
                let trace = DVector::from_fn(n_t, |j, _| coeff[(i, j + n_t * k)]);
                let proj = &pt * trace;
                for j in 0..n_t {
                    out[(i, j + n_t * k)] = proj[j];
                }
            }
        }
        &space.basis * out
    }

    #[test]
    fn st_hosvd_prop2_bound_and_corollary() {
        let mut rng = Stream::new(77);
        let h = Hypermatrix::from_fn(
            vec![8, 6, 3],
            vec![Axis::Space, Axis::Time, Axis::Parameter],
            |_| rng.next_normal(),
        )
        .unwrap();
        for &eps in &[1e-1, 1e-2, 1e-3] {
            let (space, time) = st_hosvd(&h, eps, None).unwrap();
            let u_s = h.unfold(Axis::Space).unwrap();
            let approx = hosvd_reconstruct(&h, &space, &time);
            let err2 = (&u_s - approx).norm_squared();
            let bound = space.tail_energy() + time.tail_energy();
            assert!(
                err2 <= bound + 1e-12 * space.total_energy(),
                "eps {eps}: {err2} > {bound}"
            );
            // corollary form: err^2 <= eps * (|U|_F^2 + |U_tilde|_F^2)
            let compressed_energy = time.total_energy();
            let corollary = eps * (u_s.norm_squared() + compressed_energy);
            assert!(err2 <= corollary + 1e-12 * space.total_energy());
        }
    }

    #[test]
    fn deterministic_up_to_fixed_sign() {
        let u = random_matrix(12, 9, 99);
        let a = spod(&u, 1e-4, None).unwrap();
        let b = spod(&u, 1e-4, None).unwrap();
        assert_eq!(a.basis, b.basis);
        for col in a.basis.column_iter() {
            let mut best = 0usize;
            let mut best_abs = 0.0;
            for (i, &v) in col.iter().enumerate() {
                if v.abs() > best_abs {
                    best_abs = v.abs();
                    best = i;
                }
            }
            assert!(col[best] > 0.0);
        }
    }
}
