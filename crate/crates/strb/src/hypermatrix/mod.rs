//! Dense labeled arrays ("hypermatrices") with axis permutation, axis
//! merging, Kronecker products and weighted norms.
//!
//! Canonical storage order: the **first axis is fastest-varying**. A 3-axis
//! array with labels `(s, t, mu)` therefore stores entry `(i, j, k)` at flat
//! offset `i + N_s * (j + N_t * k)`. All flattenings in this crate are
//! defined relative to this layout, so e.g. the column ordering of the
//! snapshot matrix `U_(s, t*mu)` is time-fastest within the merged axis.

pub mod io;
mod norm;

pub use io::{read_hypermatrix, write_hypermatrix};
pub use norm::{NormMatrix, NormMode};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Primitive axis tags. A hypermatrix axis carries one tag, or several after
/// a merge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    Space,
    Time,
    Parameter,
}

impl Axis {
    pub fn byte(self) -> u8 {
        match self {
            Axis::Space => b's',
            Axis::Time => b't',
            Axis::Parameter => b'p',
        }
    }

    pub fn from_byte(b: u8) -> Result<Axis> {
        match b {
            b's' => Ok(Axis::Space),
            b't' => Ok(Axis::Time),
            b'p' => Ok(Axis::Parameter),
            _ => Err(Error::UnknownLabel(format!("axis byte {b:#04x}"))),
        }
    }
}

/// Label of one (possibly merged) axis: the ordered primitive tags it holds,
/// fastest-varying first.
pub type AxisLabel = Vec<Axis>;

#[derive(Debug, Clone, PartialEq)]
pub struct Hypermatrix {
    data: Vec<f64>,
    dims: Vec<usize>,
    labels: Vec<AxisLabel>,
}

impl Hypermatrix {
    pub fn new(data: Vec<f64>, dims: Vec<usize>, labels: Vec<Axis>) -> Result<Self> {
        Self::with_labels(data, dims, labels.into_iter().map(|a| vec![a]).collect())
    }

    pub fn with_labels(data: Vec<f64>, dims: Vec<usize>, labels: Vec<AxisLabel>) -> Result<Self> {
        if dims.len() < 2 || dims.len() > 3 || dims.len() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "hypermatrix needs 2 or 3 labeled axes, got {} dims / {} labels",
                dims.len(),
                labels.len()
            )));
        }
        let len: usize = dims.iter().product();
        if len != data.len() {
            return Err(Error::DimensionMismatch(format!(
                "dims {:?} imply {} entries, data has {}",
                dims,
                len,
                data.len()
            )));
        }
        let mut seen = Vec::new();
        for label in &labels {
            for tag in label {
                if seen.contains(tag) {
                    return Err(Error::InvalidArgument(format!(
                        "duplicate axis tag {tag:?}"
                    )));
                }
                seen.push(*tag);
            }
        }
        Ok(Hypermatrix { data, dims, labels })
    }

    pub fn zeros(dims: Vec<usize>, labels: Vec<Axis>) -> Result<Self> {
        let len = dims.iter().product();
        Self::new(vec![0.0; len], dims, labels)
    }

    pub fn from_fn<F: FnMut(&[usize]) -> f64>(
        dims: Vec<usize>,
        labels: Vec<Axis>,
        mut f: F,
    ) -> Result<Self> {
        let mut h = Self::zeros(dims, labels)?;
        let mut idx = vec![0usize; h.dims.len()];
        for pos in 0..h.data.len() {
            h.data[pos] = f(&idx);
            // advance the multi-index, first axis fastest
            for k in 0..idx.len() {
                idx[k] += 1;
                if idx[k] < h.dims[k] {
                    break;
                }
                idx[k] = 0;
            }
            let _ = pos;
        }
        Ok(h)
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn labels(&self) -> &[AxisLabel] {
        &self.labels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        let mut off = 0;
        let mut stride = 1;
        for (k, &i) in idx.iter().enumerate() {
            debug_assert!(i < self.dims[k]);
            off += i * stride;
            stride *= self.dims[k];
        }
        off
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let off = self.offset(idx);
        self.data[off] = v;
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Position of the axis carrying exactly the given tags.
    pub fn axis_position(&self, label: &[Axis]) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l.as_slice() == label)
            .ok_or_else(|| Error::UnknownLabel(format!("{label:?}")))
    }

    /// Reorders axes; entry (i_0, .., i_{r-1}) of the input appears at the
    /// permuted index of the output. Data is physically rearranged so the
    /// canonical layout invariant keeps holding.
    pub fn permute(&self, perm: &[usize]) -> Result<Hypermatrix> {
        let r = self.dims.len();
        if perm.len() != r {
            return Err(Error::InvalidArgument("permutation length".into()));
        }
        let mut seen = vec![false; r];
        for &p in perm {
            if p >= r || seen[p] {
                return Err(Error::InvalidArgument(format!("invalid permutation {perm:?}")));
            }
            seen[p] = true;
        }
        if perm.iter().enumerate().all(|(k, &p)| k == p) {
            return Ok(self.clone());
        }
        let new_dims: Vec<usize> = perm.iter().map(|&p| self.dims[p]).collect();
        let new_labels: Vec<AxisLabel> = perm.iter().map(|&p| self.labels[p].clone()).collect();
        let mut new_strides = vec![0usize; r];
        {
            let mut stride = 1;
            for k in 0..r {
                new_strides[k] = stride;
                stride *= new_dims[k];
            }
        }
        // stride of old axis p in the new layout
        let mut dest_stride_of_old = vec![0usize; r];
        for (k, &p) in perm.iter().enumerate() {
            dest_stride_of_old[p] = new_strides[k];
        }
        let mut out = vec![0.0; self.data.len()];
        let mut idx = vec![0usize; r];
        for &v in &self.data {
            let mut dst = 0;
            for k in 0..r {
                dst += idx[k] * dest_stride_of_old[k];
            }
            out[dst] = v;
            for k in 0..r {
                idx[k] += 1;
                if idx[k] < self.dims[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        Hypermatrix::with_labels(out, new_dims, new_labels)
    }

    /// Merges axis `k` with axis `k+1` (no data movement in canonical
    /// layout; axis `k` stays fastest within the merged axis).
    pub fn merge(&self, k: usize) -> Result<Hypermatrix> {
        if k + 1 >= self.dims.len() {
            return Err(Error::NonAdjacentMerge(k, k + 1));
        }
        if self.dims.len() == 2 {
            return Err(Error::InvalidArgument(
                "merging a 2-axis hypermatrix would leave a single axis".into(),
            ));
        }
        let mut dims = Vec::new();
        let mut labels = Vec::new();
        for i in 0..self.dims.len() {
            if i == k {
                dims.push(self.dims[k] * self.dims[k + 1]);
                let mut l = self.labels[k].clone();
                l.extend_from_slice(&self.labels[k + 1]);
                labels.push(l);
            } else if i != k + 1 {
                dims.push(self.dims[i]);
                labels.push(self.labels[i].clone());
            }
        }
        Hypermatrix::with_labels(self.data.clone(), dims, labels)
    }

    /// Permutation followed by an optional merge of two (then-adjacent)
    /// axes, addressed by their labels.
    pub fn reshape(&self, order: &[&[Axis]], merge: Option<(&[Axis], &[Axis])>) -> Result<Hypermatrix> {
        let perm: Vec<usize> = order
            .iter()
            .map(|l| self.axis_position(l))
            .collect::<Result<_>>()?;
        let p = self.permute(&perm)?;
        match merge {
            None => Ok(p),
            Some((a, b)) => {
                let ia = p.axis_position(a)?;
                let ib = p.axis_position(b)?;
                if ib != ia + 1 {
                    return Err(Error::NonAdjacentMerge(ia, ib));
                }
                p.merge(ia)
            }
        }
    }

    /// 2-axis hypermatrix as a dense matrix (rows = first axis).
    pub fn as_matrix(&self) -> Result<DMatrix<f64>> {
        if self.dims.len() != 2 {
            return Err(Error::InvalidArgument(format!(
                "as_matrix on a {}-axis hypermatrix",
                self.dims.len()
            )));
        }
        Ok(DMatrix::from_column_slice(
            self.dims[0],
            self.dims[1],
            &self.data,
        ))
    }

    pub fn from_matrix(m: &DMatrix<f64>, row_label: Axis, col_label: Axis) -> Result<Hypermatrix> {
        Hypermatrix::new(
            m.as_slice().to_vec(),
            vec![m.nrows(), m.ncols()],
            vec![row_label, col_label],
        )
    }

    /// Flattens a 3-axis hypermatrix into a matrix whose rows are the given
    /// axis, columns the remaining two axes merged in canonical order.
    pub fn unfold(&self, row_axis: Axis) -> Result<DMatrix<f64>> {
        if self.dims.len() != 3 {
            return Err(Error::InvalidArgument("unfold needs 3 axes".into()));
        }
        let pos = self.axis_position(&[row_axis])?;
        let mut order: Vec<usize> = vec![pos];
        order.extend((0..3).filter(|&k| k != pos));
        let p = self.permute(&order)?;
        Ok(DMatrix::from_column_slice(
            p.dims[0],
            p.dims[1] * p.dims[2],
            &p.data,
        ))
    }
}

/// Kronecker product: block (i, j) of the result equals `a[(i, j)] * b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, n) = a.shape();
    let (p, q) = b.shape();
    let mut out = DMatrix::zeros(m * p, n * q);
    for i in 0..m {
        for j in 0..n {
            let aij = a[(i, j)];
            if aij == 0.0 {
                continue;
            }
            for k in 0..p {
                for l in 0..q {
                    out[(i * p + k, j * q + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// `sqrt(v^T X v)` or `sqrt(v^T X^-1 v)`; the inverse is applied through the
/// cached Cholesky factor, never formed explicitly.
pub fn weighted_norm(v: &DVector<f64>, x: &NormMatrix, mode: NormMode) -> Result<f64> {
    x.weighted_norm(v, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    fn seq_hyper(dims: Vec<usize>, labels: Vec<Axis>) -> Hypermatrix {
        let len: usize = dims.iter().product();
        Hypermatrix::new((0..len).map(|i| i as f64).collect(), dims, labels).unwrap()
    }

    #[test]
    fn identity_permutation_is_noop() {
        let h = seq_hyper(vec![2, 3, 4], vec![Axis::Space, Axis::Time, Axis::Parameter]);
        let p = h.permute(&[0, 1, 2]).unwrap();
        assert_eq!(h, p);
    }

    #[test]
    fn permute_then_merge_matches_index_arithmetic() {
        // 2x3x4 (s,t,mu) -> (t,s,mu) -> merge (s,mu): 3x8 matrix whose
        // column j*2+i equals input (i, :, j). Oracle: enumerate all 24
        // entries by explicit index arithmetic.
        let h = seq_hyper(vec![2, 3, 4], vec![Axis::Space, Axis::Time, Axis::Parameter]);
        let m = h
            .reshape(
                &[&[Axis::Time], &[Axis::Space], &[Axis::Parameter]],
                Some((&[Axis::Space], &[Axis::Parameter])),
            )
            .unwrap();
        assert_eq!(m.dims(), &[3, 8]);
        let mat = m.as_matrix().unwrap();
        for i in 0..2 {
            for t in 0..3 {
                for j in 0..4 {
                    assert_eq!(mat[(t, j * 2 + i)], h.get(&[i, t, j]));
                }
            }
        }
    }

    #[test]
    fn permute_round_trip_bitwise() {
        let mut rng = Stream::new(11);
        let data: Vec<f64> = (0..27).map(|_| rng.next_normal()).collect();
        let h = Hypermatrix::new(
            data,
            vec![3, 3, 3],
            vec![Axis::Space, Axis::Time, Axis::Parameter],
        )
        .unwrap();
        let perm = [2usize, 0, 1];
        let inv = [1usize, 2, 0];
        let rt = h.permute(&perm).unwrap().permute(&inv).unwrap();
        assert_eq!(h.data(), rt.data());
    }

    #[test]
    fn permute_preserves_frobenius_exactly() {
        let h = seq_hyper(vec![4, 2, 5], vec![Axis::Space, Axis::Time, Axis::Parameter]);
        let p = h.permute(&[1, 2, 0]).unwrap();
        assert_eq!(h.frobenius_norm(), p.frobenius_norm());
        let m = p.merge(0).unwrap();
        assert_eq!(h.frobenius_norm(), m.frobenius_norm());
    }

    #[test]
    fn merge_of_non_adjacent_axes_fails() {
        let h = seq_hyper(vec![2, 3, 4], vec![Axis::Space, Axis::Time, Axis::Parameter]);
        let err = h
            .reshape(
                &[&[Axis::Space], &[Axis::Time], &[Axis::Parameter]],
                Some((&[Axis::Space], &[Axis::Parameter])),
            )
            .unwrap_err();
        assert!(matches!(err, Error::NonAdjacentMerge(_, _)));
    }

    #[test]
    fn unknown_label_fails() {
        let h = seq_hyper(vec![2, 3], vec![Axis::Space, Axis::Time]);
        assert!(h.axis_position(&[Axis::Parameter]).is_err());
    }

    #[test]
    fn kron_identity() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        let i3 = DMatrix::<f64>::identity(3, 3);
        let k = kron(&i2, &i3);
        assert_eq!(k, DMatrix::<f64>::identity(6, 6));
    }

    #[test]
    fn kron_blockwise_definition() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let k = kron(&a, &b);
        // expand the definition entry by entry
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, 1.0, 0.0, 2.0, //
                1.0, 0.0, 2.0, 0.0, //
                0.0, 3.0, 0.0, 4.0, //
                3.0, 0.0, 4.0, 0.0,
            ],
        );
        assert_eq!(k, expected);
    }

    #[test]
    fn kron_mixed_product_property() {
        let mut rng = Stream::new(3);
        let r = |rng: &mut Stream| DMatrix::from_fn(2, 2, |_, _| rng.next_normal());
        let (a, b, c, d) = (r(&mut rng), r(&mut rng), r(&mut rng), r(&mut rng));
        let lhs = kron(&a, &b) * kron(&c, &d);
        let rhs = kron(&(&a * &c), &(&b * &d));
        assert!((lhs - rhs).norm() < 1e-13);
    }

    #[test]
    fn kron_frobenius_multiplicative() {
        let mut rng = Stream::new(5);
        let a = DMatrix::from_fn(3, 2, |_, _| rng.next_normal());
        let b = DMatrix::from_fn(2, 4, |_, _| rng.next_normal());
        let k = kron(&a, &b);
        assert!((k.norm() - a.norm() * b.norm()).abs() < 1e-13);
    }

    #[test]
    fn kron_acts_on_kron_vectors() {
        let mut rng = Stream::new(9);
        let a = DMatrix::from_fn(3, 3, |_, _| rng.next_normal());
        let b = DMatrix::from_fn(2, 2, |_, _| rng.next_normal());
        let x = DVector::from_fn(3, |_, _| rng.next_normal());
        let y = DVector::from_fn(2, |_, _| rng.next_normal());
        let xy = kron(&DMatrix::from_column_slice(3, 1, x.as_slice()),
                      &DMatrix::from_column_slice(2, 1, y.as_slice()));
        let lhs = kron(&a, &b) * xy.column(0);
        let ax = &a * &x;
        let by = &b * &y;
        let rhs = kron(&DMatrix::from_column_slice(3, 1, ax.as_slice()),
                       &DMatrix::from_column_slice(2, 1, by.as_slice()));
        assert!((lhs - rhs.column(0)).norm() < 1e-13);
    }

    #[test]
    fn unfold_rows_are_the_requested_axis() {
        let h = seq_hyper(vec![2, 3, 4], vec![Axis::Space, Axis::Time, Axis::Parameter]);
        let m = h.unfold(Axis::Time).unwrap();
        assert_eq!((m.nrows(), m.ncols()), (3, 8));
        for t in 0..3 {
            for i in 0..2 {
                for j in 0..4 {
                    assert_eq!(m[(t, i + 2 * j)], h.get(&[i, t, j]));
                }
            }
        }
    }
}
