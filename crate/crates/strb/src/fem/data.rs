//! Parametric problem data: coefficient, forcing, boundary and initial
//! values as closures of (position, time, parameter), plus the benchmark
//! data sets used throughout the tests.

use std::sync::Arc;

use crate::error::{Error, Result};

pub type ScalarField = Arc<dyn Fn(&[f64; 3], f64, &[f64]) -> f64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn(&[f64; 3], f64, &[f64]) -> [f64; 3] + Send + Sync>;

fn constant(v: f64) -> ScalarField {
    Arc::new(move |_, _, _| v)
}

fn constant_vec(v: [f64; 3]) -> VectorField {
    Arc::new(move |_, _, _| v)
}

/// Heat-equation data: diffusivity `alpha > 0`, volume forcing `f`,
/// Dirichlet datum `g`, Neumann datum `h`, initial value `u0`.
#[derive(Clone)]
pub struct HeatData {
    pub alpha: ScalarField,
    pub f: ScalarField,
    pub g: ScalarField,
    pub h: ScalarField,
    pub u0: ScalarField,
    /// Parameter box, one (lo, hi) per coordinate.
    pub domain: Vec<(f64, f64)>,
    pub t_final: f64,
}

impl HeatData {
    /// The benchmark data set:
    /// `alpha = exp(x1 (sin t + cos t) / sum mu)`,
    /// `g = mu1 exp(-x1/mu2) |sin(pi t / (mu3 T))|`,
    /// `h = |cos(pi t / (mu3 T))|`, `f = 1`, `u0 = 0`, on `[1, 10]^3`.
    pub fn benchmark(t_final: f64) -> HeatData {
        let tf = t_final;
        HeatData {
            alpha: Arc::new(move |x, t, mu| {
                let s: f64 = mu.iter().sum();
                (x[0] * (t.sin() + t.cos()) / s).exp()
            }),
            f: constant(1.0),
            g: Arc::new(move |x, t, mu| {
                mu[0] * (-x[0] / mu[1]).exp()
                    * (std::f64::consts::PI * t / (mu[2] * tf)).sin().abs()
            }),
            h: Arc::new(move |_, t, mu| {
                (std::f64::consts::PI * t / (mu[2] * tf)).cos().abs()
            }),
            u0: constant(0.0),
            domain: vec![(1.0, 10.0); 3],
            t_final,
        }
    }

    /// Constant data: `alpha = 1`, `g = u0 = c`, `f = h = 0`. A steady
    /// constant state that every time step must preserve.
    pub fn constant_state(c: f64, t_final: f64) -> HeatData {
        HeatData {
            alpha: constant(1.0),
            f: constant(0.0),
            g: constant(c),
            h: constant(0.0),
            u0: constant(c),
            domain: vec![(0.0, 1.0); 3],
            t_final,
        }
    }

    pub fn contains(&self, mu: &[f64]) -> bool {
        in_box(&self.domain, mu)
    }
}

/// Unsteady Stokes data: viscosity `alpha`, vector forcing `f`, Dirichlet
/// velocity `g`, Neumann traction `h`, initial velocity `u0`.
#[derive(Clone)]
pub struct StokesData {
    pub alpha: ScalarField,
    pub f: VectorField,
    pub g: VectorField,
    pub h: VectorField,
    pub u0: VectorField,
    pub domain: Vec<(f64, f64)>,
    pub t_final: f64,
}

impl StokesData {
    /// The benchmark data set: same viscosity law as the heat test, inflow
    /// `g_x = mu1 x3 (W - x3) |1 - cos(pi t/T) + sin(pi t/(mu3 T))/mu2|`
    /// (parabolic across the gap of width `W`, periodic in time),
    /// `f = h = 0`, `u0 = 0`, on `[1, 10]^3`.
    pub fn benchmark(t_final: f64, gap_width: f64) -> StokesData {
        let tf = t_final;
        StokesData {
            alpha: Arc::new(move |x, t, mu| {
                let s: f64 = mu.iter().sum();
                (x[0] * (t.sin() + t.cos()) / s).exp()
            }),
            f: constant_vec([0.0; 3]),
            g: Arc::new(move |x, t, mu| {
                let pi = std::f64::consts::PI;
                let pulse = (1.0 - (pi * t / tf).cos() + (pi * t / (mu[2] * tf)).sin() / mu[1])
                    .abs();
                [mu[0] * x[2] * (gap_width - x[2]) * pulse, 0.0, 0.0]
            }),
            h: constant_vec([0.0; 3]),
            u0: constant_vec([0.0; 3]),
            domain: vec![(1.0, 10.0); 3],
            t_final,
        }
    }

    pub fn contains(&self, mu: &[f64]) -> bool {
        in_box(&self.domain, mu)
    }
}

fn in_box(domain: &[(f64, f64)], mu: &[f64]) -> bool {
    mu.len() == domain.len()
        && mu
            .iter()
            .zip(domain)
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
}

/// Warns (once per call) when a parameter leaves the training box; online
/// evaluation outside the box is extrapolation, not an error.
pub fn check_domain(domain: &[(f64, f64)], mu: &[f64]) -> Result<()> {
    if mu.len() != domain.len() {
        return Err(Error::DimensionMismatch(format!(
            "parameter has {} coordinates, domain expects {}",
            mu.len(),
            domain.len()
        )));
    }
    if !in_box(domain, mu) {
        log::warn!("parameter {mu:?} outside the declared domain {domain:?}");
    }
    Ok(())
}
