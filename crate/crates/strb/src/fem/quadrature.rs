//! Tensor Gauss quadrature and reference shape tables on `[-1, 1]^3`.
//!
//! The cell quadrature rule is part of the data contract: field snapshots
//! are recorded at exactly these points in cell-then-point order, and the
//! assembler consumes them in the same order.

use crate::error::{Error, Result};

/// 1D Gauss-Legendre rule on `[-1, 1]` (n = 1, 2, 3).
pub fn gauss_1d(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    match n {
        1 => Ok((vec![0.0], vec![2.0])),
        2 => {
            let a = 1.0 / 3.0f64.sqrt();
            Ok((vec![-a, a], vec![1.0, 1.0]))
        }
        3 => {
            let a = (3.0f64 / 5.0).sqrt();
            Ok((vec![-a, 0.0, a], vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0]))
        }
        _ => Err(Error::InvalidArgument(format!("unsupported Gauss order {n}"))),
    }
}

#[derive(Debug, Clone)]
pub struct CellRule {
    /// Reference points, x index fastest.
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

pub fn tensor_rule(n: usize) -> Result<CellRule> {
    let (p, w) = gauss_1d(n)?;
    let mut points = Vec::with_capacity(n * n * n);
    let mut weights = Vec::with_capacity(n * n * n);
    for iz in 0..n {
        for iy in 0..n {
            for ix in 0..n {
                points.push([p[ix], p[iy], p[iz]]);
                weights.push(w[ix] * w[iy] * w[iz]);
            }
        }
    }
    Ok(CellRule { points, weights })
}

/// 2D tensor rule for face integration, same 1D order as the cell rule.
pub fn face_rule(n: usize) -> Result<(Vec<[f64; 2]>, Vec<f64>)> {
    let (p, w) = gauss_1d(n)?;
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for iv in 0..n {
        for iu in 0..n {
            points.push([p[iu], p[iv]]);
            weights.push(w[iu] * w[iv]);
        }
    }
    Ok((points, weights))
}

/// Trilinear (Q1) shape value of local corner `l = ix + 2 iy + 4 iz`.
pub fn q1_value(l: usize, xi: &[f64; 3]) -> f64 {
    let s = [
        if l & 1 == 0 { -1.0 } else { 1.0 },
        if (l >> 1) & 1 == 0 { -1.0 } else { 1.0 },
        if (l >> 2) & 1 == 0 { -1.0 } else { 1.0 },
    ];
    0.125 * (1.0 + s[0] * xi[0]) * (1.0 + s[1] * xi[1]) * (1.0 + s[2] * xi[2])
}

pub fn q1_grad(l: usize, xi: &[f64; 3]) -> [f64; 3] {
    let s = [
        if l & 1 == 0 { -1.0 } else { 1.0 },
        if (l >> 1) & 1 == 0 { -1.0 } else { 1.0 },
        if (l >> 2) & 1 == 0 { -1.0 } else { 1.0 },
    ];
    let f = [
        1.0 + s[0] * xi[0],
        1.0 + s[1] * xi[1],
        1.0 + s[2] * xi[2],
    ];
    [
        0.125 * s[0] * f[1] * f[2],
        0.125 * f[0] * s[1] * f[2],
        0.125 * f[0] * f[1] * s[2],
    ]
}

/// 1D quadratic Lagrange basis on nodes {-1, 0, 1}.
fn lag2(i: usize, x: f64) -> f64 {
    match i {
        0 => 0.5 * x * (x - 1.0),
        1 => 1.0 - x * x,
        _ => 0.5 * x * (x + 1.0),
    }
}

fn lag2_d(i: usize, x: f64) -> f64 {
    match i {
        0 => x - 0.5,
        1 => -2.0 * x,
        _ => x + 0.5,
    }
}

/// Triquadratic shape value of local node `l = ix + 3 iy + 9 iz`.
pub fn q2_value(l: usize, xi: &[f64; 3]) -> f64 {
    let (ix, iy, iz) = (l % 3, (l / 3) % 3, l / 9);
    lag2(ix, xi[0]) * lag2(iy, xi[1]) * lag2(iz, xi[2])
}

pub fn q2_grad(l: usize, xi: &[f64; 3]) -> [f64; 3] {
    let (ix, iy, iz) = (l % 3, (l / 3) % 3, l / 9);
    [
        lag2_d(ix, xi[0]) * lag2(iy, xi[1]) * lag2(iz, xi[2]),
        lag2(ix, xi[0]) * lag2_d(iy, xi[1]) * lag2(iz, xi[2]),
        lag2(ix, xi[0]) * lag2(iy, xi[1]) * lag2_d(iz, xi[2]),
    ]
}
