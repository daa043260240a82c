//! Backward Euler marching for the heat and Stokes full-order models,
//! blockwise space-time operator application, and snapshot generation.
//!
//! Space-time vectors use the canonical hypermatrix layout (space fastest):
//! `v[n * N_s + i]` is spatial DOF `i` at time step `n + 1`. The monolithic
//! space-time operator is lower block-bidiagonal, with diagonal blocks
//! `1/delta M + A(t_n)` and subdiagonal blocks `-1/delta M`; the marching
//! loop and the monolithic system are the same discrete problem, which the
//! residual tests verify.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sprs_ldl::{LdlNumeric, LdlSymbolic};

use crate::clock;
use crate::error::{Error, Result};
use crate::fem::{
    assemble_operator, assemble_rhs_neumann, assemble_rhs_volume, build_box_mesh,
    dirichlet_lifting, AssembledOperator, BoundaryTag, Coupling, ElementKind, FESpace, FieldArg,
    HeatData, OperatorForm, Pattern, StokesData,
};
use crate::hypermatrix::{Axis, Hypermatrix};
use crate::sparse::CsrMatrix;

/// Direct solver for the per-step SPD systems; the symbolic analysis is
/// computed once and reused across steps (the pattern never changes).
pub(crate) struct StepSolver {
    numeric: Option<LdlNumeric<f64, usize>>,
}

impl StepSolver {
    pub fn new() -> StepSolver {
        StepSolver { numeric: None }
    }

    pub fn factorize(&mut self, k: &CsrMatrix, step: usize) -> Result<()> {
        let m = k.to_sprs();
        match &mut self.numeric {
            Some(num) => num.update(m.view()).map_err(|e| Error::StepFailure {
                step,
                reason: format!("refactorization failed: {e}"),
            })?,
            None => {
                let sym = LdlSymbolic::new(m.structure_view());
                self.numeric = Some(sym.factor(m.view()).map_err(|e| Error::StepFailure {
                    step,
                    reason: format!("factorization failed: {e}"),
                })?);
            }
        }
        let num = self.numeric.as_ref().unwrap();
        for (i, &d) in num.d().iter().enumerate() {
            if !(d != 0.0) || !d.is_finite() {
                return Err(Error::StepFailure {
                    step,
                    reason: format!("zero pivot d[{i}] = {d}"),
                });
            }
        }
        Ok(())
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let x = self
            .numeric
            .as_ref()
            .expect("factorize before solve")
            .solve(b.as_slice());
        DVector::from_vec(x)
    }
}

/// Heat-equation full-order model on the free DOFs of a Q1 space.
pub struct HeatFom {
    pub space: Arc<FESpace>,
    pub data: HeatData,
    pub delta: f64,
    pub n_t: usize,
    pub pattern: Arc<Pattern>,
    pub mass: AssembledOperator,
}

/// Solution of one heat FOM run: states are free-DOF columns per time step.
pub struct HeatSolution {
    pub states: DMatrix<f64>,
    pub max_step_residual: f64,
}

impl HeatFom {
    pub fn new(space: Arc<FESpace>, data: HeatData, n_t: usize) -> Result<HeatFom> {
        if n_t == 0 {
            return Err(Error::InvalidArgument("n_t must be positive".into()));
        }
        let pattern = Arc::new(Pattern::new(space.clone(), space.clone(), Coupling::All)?);
        let mass = assemble_operator(&pattern, OperatorForm::Mass, FieldArg::None)?;
        let delta = data.t_final / n_t as f64;
        Ok(HeatFom {
            space,
            data,
            delta,
            n_t,
            pattern,
            mass,
        })
    }

    pub fn n_free(&self) -> usize {
        self.space.n_free()
    }

    /// Time of step `n` (1-based; step 0 is the initial condition).
    pub fn time(&self, n: usize) -> f64 {
        self.delta * n as f64
    }

    pub fn stiffness(&self, t: f64, mu: &[f64]) -> Result<AssembledOperator> {
        let alpha = self.data.alpha.clone();
        let mu_owned = mu.to_vec();
        let f = move |x: &[f64; 3]| alpha(x, t, &mu_owned);
        assemble_operator(&self.pattern, OperatorForm::StiffnessWithField, FieldArg::Func(&f))
    }

    /// Full-length lifting vector of the Dirichlet datum at time `t`.
    pub fn lifting(&self, t: f64, mu: &[f64]) -> DVector<f64> {
        let g = self.data.g.clone();
        dirichlet_lifting(&self.space, &move |x, _| g(x, t, mu))
    }

    /// Free part of the interpolated initial condition.
    pub fn initial_state(&self, mu: &[f64]) -> DVector<f64> {
        let mut x0 = DVector::zeros(self.n_free());
        for free in 0..self.n_free() {
            let dof = self.space.full_index(free);
            let x = self.space.node_coords(self.space.dof_node(dof));
            x0[free] = (self.data.u0)(&x, 0.0, mu);
        }
        x0
    }

    /// Effective right-hand side of step `n` (1-based): volume and Neumann
    /// loads plus the Dirichlet lifting moves; the initial-condition term
    /// `1/delta M x_0` enters at `n = 1`. The marching term
    /// `1/delta M x_(n-1)` for `n >= 2` is part of the space-time operator,
    /// not of this vector.
    pub fn rhs_block(
        &self,
        n: usize,
        mu: &[f64],
        stiffness_at_tn: &AssembledOperator,
    ) -> Result<DVector<f64>> {
        let t = self.time(n);
        let f = self.data.f.clone();
        let h = self.data.h.clone();
        let mut rhs = assemble_rhs_volume(&self.space, &|x, _| f(x, t, mu))?;
        rhs += assemble_rhs_neumann(&self.space, &|x, _| h(x, t, mu))?;
        let g_now = self.lifting(t, mu);
        let g_prev = self.lifting(self.time(n - 1), mu);
        rhs += stiffness_at_tn.lifting_rhs(&g_now);
        let dg = (&g_now - &g_prev) / self.delta;
        rhs += self.mass.lifting_rhs(&dg);
        if n == 1 {
            rhs += self.mass.ff.matvec(&self.initial_state(mu)) / self.delta;
        }
        Ok(rhs)
    }

    /// Diagonal block values `1/delta M + A(t_n)` on the shared pattern.
    fn step_matrix(&self, stiff: &AssembledOperator) -> CsrMatrix {
        let mut k = stiff.ff.clone();
        for (v, m) in k.values_mut().iter_mut().zip(self.mass.ff.values()) {
            *v += m / self.delta;
        }
        k
    }

    /// Backward Euler marching; per-step relative algebraic residual must
    /// stay below 1e-10.
    pub fn solve(&self, mu: &[f64]) -> Result<HeatSolution> {
        crate::fem::check_domain(&self.data.domain, mu)?;
        let n_s = self.n_free();
        let mut states = DMatrix::zeros(n_s, self.n_t);
        let mut solver = StepSolver::new();
        let mut prev = self.initial_state(mu);
        let mut max_rel = 0.0f64;
        for n in 1..=self.n_t {
            let stiff = self.stiffness(self.time(n), mu)?;
            let k = self.step_matrix(&stiff);
            let mut rhs = self.rhs_block(n, mu, &stiff)?;
            if n > 1 {
                rhs += self.mass.ff.matvec(&prev) / self.delta;
            }
            solver.factorize(&k, n)?;
            let x = solver.solve(&rhs);
            let resid = (&rhs - k.matvec(&x)).norm();
            let rel = resid / rhs.norm().max(1e-300);
            max_rel = max_rel.max(rel);
            if rel > 1e-10 && resid > 1e-12 {
                return Err(Error::StepFailure {
                    step: n,
                    reason: format!("relative residual {rel}"),
                });
            }
            states.set_column(n - 1, &x);
            prev = x;
        }
        Ok(HeatSolution {
            states,
            max_step_residual: max_rel,
        })
    }

    /// `L_st - K_st v` evaluated blockwise, never forming the space-time
    /// matrix. `v` is in canonical layout (`N_s * N_t`, space fastest).
    pub fn spacetime_residual(&self, mu: &[f64], v: &DVector<f64>) -> Result<DVector<f64>> {
        let n_s = self.n_free();
        if v.len() != n_s * self.n_t {
            return Err(Error::DimensionMismatch(format!(
                "space-time vector of length {}, expected {}",
                v.len(),
                n_s * self.n_t
            )));
        }
        let mut r = DVector::zeros(n_s * self.n_t);
        for n in 1..=self.n_t {
            let stiff = self.stiffness(self.time(n), mu)?;
            let k = self.step_matrix(&stiff);
            let vn = v.rows((n - 1) * n_s, n_s).into_owned();
            let mut block = self.rhs_block(n, mu, &stiff)? - k.matvec(&vn);
            if n > 1 {
                let vprev = v.rows((n - 2) * n_s, n_s).into_owned();
                block += self.mass.ff.matvec(&vprev) / self.delta;
            }
            r.rows_mut((n - 1) * n_s, n_s).copy_from(&block);
        }
        Ok(r)
    }

    /// Dense monolithic operator in canonical (time-outer) layout; intended
    /// for toy-size oracles and the coercivity estimate.
    pub fn dense_spacetime_operator(&self, mu: &[f64]) -> Result<DMatrix<f64>> {
        let n_s = self.n_free();
        let n = n_s * self.n_t;
        let mut k_st = DMatrix::zeros(n, n);
        for step in 1..=self.n_t {
            let stiff = self.stiffness(self.time(step), mu)?;
            let k = self.step_matrix(&stiff).to_dense();
            let r0 = (step - 1) * n_s;
            k_st.view_mut((r0, r0), (n_s, n_s)).copy_from(&k);
            if step > 1 {
                let m = self.mass.ff.to_dense() / self.delta;
                k_st.view_mut((r0, r0 - n_s), (n_s, n_s)).copy_from(&(-m));
            }
        }
        Ok(k_st)
    }

    /// Space-time right-hand side in canonical layout.
    pub fn spacetime_rhs(&self, mu: &[f64]) -> Result<DVector<f64>> {
        let n_s = self.n_free();
        let mut l = DVector::zeros(n_s * self.n_t);
        for n in 1..=self.n_t {
            let stiff = self.stiffness(self.time(n), mu)?;
            let block = self.rhs_block(n, mu, &stiff)?;
            l.rows_mut((n - 1) * n_s, n_s).copy_from(&block);
        }
        Ok(l)
    }
}

/// Unsteady Stokes full-order model: Q2 vector velocity, P0 pressure.
pub struct StokesFom {
    pub vel: Arc<FESpace>,
    pub prs: Arc<FESpace>,
    pub data: StokesData,
    pub delta: f64,
    pub n_t: usize,
    pub vel_pattern: Arc<Pattern>,
    pub div_pattern: Arc<Pattern>,
    pub mass: AssembledOperator,
    pub div: AssembledOperator,
}

pub struct StokesSolution {
    pub velocity: DMatrix<f64>,
    pub pressure: DMatrix<f64>,
    /// max over steps of ||B u - r_p|| / max(||u||, 1)
    pub max_divergence_residual: f64,
}

impl StokesFom {
    pub fn new(
        vel: Arc<FESpace>,
        prs: Arc<FESpace>,
        data: StokesData,
        n_t: usize,
    ) -> Result<StokesFom> {
        if n_t == 0 {
            return Err(Error::InvalidArgument("n_t must be positive".into()));
        }
        let vel_pattern = Arc::new(Pattern::new(vel.clone(), vel.clone(), Coupling::SameComponent)?);
        let div_pattern = Arc::new(Pattern::new(prs.clone(), vel.clone(), Coupling::All)?);
        let mass = assemble_operator(&vel_pattern, OperatorForm::Mass, FieldArg::None)?;
        let div = assemble_operator(&div_pattern, OperatorForm::Divergence, FieldArg::None)?;
        let delta = data.t_final / n_t as f64;
        Ok(StokesFom {
            vel,
            prs,
            data,
            delta,
            n_t,
            vel_pattern,
            div_pattern,
            mass,
            div,
        })
    }

    pub fn n_free_velocity(&self) -> usize {
        self.vel.n_free()
    }

    pub fn n_pressure(&self) -> usize {
        self.prs.n_free()
    }

    pub fn time(&self, n: usize) -> f64 {
        self.delta * n as f64
    }

    pub fn viscous_stiffness(&self, t: f64, mu: &[f64]) -> Result<AssembledOperator> {
        let alpha = self.data.alpha.clone();
        let mu_owned = mu.to_vec();
        let f = move |x: &[f64; 3]| alpha(x, t, &mu_owned);
        assemble_operator(
            &self.vel_pattern,
            OperatorForm::StiffnessWithField,
            FieldArg::Func(&f),
        )
    }

    pub fn lifting(&self, t: f64, mu: &[f64]) -> DVector<f64> {
        let g = self.data.g.clone();
        dirichlet_lifting(&self.vel, &move |x, c| g(x, t, mu)[c])
    }

    pub fn initial_velocity(&self, mu: &[f64]) -> DVector<f64> {
        let mut x0 = DVector::zeros(self.vel.n_free());
        for free in 0..self.vel.n_free() {
            let dof = self.vel.full_index(free);
            let x = self.vel.node_coords(self.vel.dof_node(dof));
            x0[free] = (self.data.u0)(&x, 0.0, mu)[self.vel.dof_component(dof)];
        }
        x0
    }

    /// Velocity-block right-hand side of step `n` (1-based), including the
    /// initial-condition term at the first step.
    pub fn rhs_velocity_block(
        &self,
        n: usize,
        mu: &[f64],
        stiffness_at_tn: &AssembledOperator,
    ) -> Result<DVector<f64>> {
        let t = self.time(n);
        let f = self.data.f.clone();
        let h = self.data.h.clone();
        let mut rhs = assemble_rhs_volume(&self.vel, &|x, c| f(x, t, mu)[c])?;
        rhs += assemble_rhs_neumann(&self.vel, &|x, c| h(x, t, mu)[c])?;
        let g_now = self.lifting(t, mu);
        let g_prev = self.lifting(self.time(n - 1), mu);
        rhs += stiffness_at_tn.lifting_rhs(&g_now);
        let dg = (&g_now - &g_prev) / self.delta;
        rhs += self.mass.lifting_rhs(&dg);
        if n == 1 {
            rhs += self.mass.ff.matvec(&self.initial_velocity(mu)) / self.delta;
        }
        Ok(rhs)
    }

    /// Pressure-block right-hand side: the divergence constraint moves the
    /// constrained velocity DOFs to the right, `-B_fc g(t_n)`.
    pub fn rhs_pressure_block(&self, n: usize, mu: &[f64]) -> DVector<f64> {
        let g_now = self.lifting(self.time(n), mu);
        self.div.lifting_rhs(&g_now)
    }

    fn step_matrix(&self, stiff: &AssembledOperator) -> CsrMatrix {
        let mut k = stiff.ff.clone();
        for (v, m) in k.values_mut().iter_mut().zip(self.mass.ff.values()) {
            *v += m / self.delta;
        }
        k
    }

    /// Backward Euler marching with a Schur-complement saddle-point solve
    /// per step: the velocity block is refactored each step (it depends on
    /// `t`), and the small dense pressure Schur complement `B K^-1 B^T` is
    /// rebuilt on top of it.
    pub fn solve(&self, mu: &[f64]) -> Result<StokesSolution> {
        crate::fem::check_domain(&self.data.domain, mu)?;
        let n_u = self.vel.n_free();
        let n_p = self.prs.n_free();
        let mut velocity = DMatrix::zeros(n_u, self.n_t);
        let mut pressure = DMatrix::zeros(n_p, self.n_t);
        let mut solver = StepSolver::new();
        let mut prev = self.initial_velocity(mu);
        let mut max_div = 0.0f64;
        for n in 1..=self.n_t {
            let stiff = self.viscous_stiffness(self.time(n), mu)?;
            let k = self.step_matrix(&stiff);
            solver.factorize(&k, n)?;
            // w_j = K^-1 (B^T e_j): columns of K^-1 B^T
            let mut w = DMatrix::zeros(n_u, n_p);
            let mut s = DMatrix::zeros(n_p, n_p);
            for j in 0..n_p {
                let (cols, vals) = self.div.ff.row(j);
                let mut bt_col = DVector::zeros(n_u);
                for (&c, &v) in cols.iter().zip(vals) {
                    bt_col[c] = v;
                }
                let wj = solver.solve(&bt_col);
                w.set_column(j, &wj);
            }
            for i in 0..n_p {
                let (cols, vals) = self.div.ff.row(i);
                for j in 0..n_p {
                    let mut acc = 0.0;
                    for (&c, &v) in cols.iter().zip(vals) {
                        acc += v * w[(c, j)];
                    }
                    s[(i, j)] = acc;
                }
            }
            let mut rhs_u = self.rhs_velocity_block(n, mu, &stiff)?;
            if n > 1 {
                rhs_u += self.mass.ff.matvec(&prev) / self.delta;
            }
            let rhs_p = self.rhs_pressure_block(n, mu);
            let u_star = solver.solve(&rhs_u);
            // system: K u - B^T p = r_u; B u = r_p  =>  S p = r_p - B u*
            let schur_rhs = &rhs_p - self.div.ff.matvec(&u_star);
            let slu = s.clone().lu();
            let p = slu.solve(&schur_rhs).ok_or(Error::StepFailure {
                step: n,
                reason: "singular pressure Schur complement".into(),
            })?;
            let u = &u_star + &w * &p;
            let div_resid = (self.div.ff.matvec(&u) - &rhs_p).norm();
            max_div = max_div.max(div_resid / u.norm().max(1.0));
            if div_resid > 1e-6 * u.norm().max(1.0) {
                return Err(Error::StepFailure {
                    step: n,
                    reason: format!("divergence residual {div_resid}"),
                });
            }
            velocity.set_column(n - 1, &u);
            pressure.set_column(n - 1, &p);
            prev = u;
        }
        Ok(StokesSolution {
            velocity,
            pressure,
            max_divergence_residual: max_div,
        })
    }
}

/// Per-problem snapshot bundle. States cover every parameter; operator
/// nonzeros, right-hand sides and quadrature fields only the leading MDEIM
/// training subset, which bounds memory the way the offline pipeline needs.
pub struct SnapshotSet {
    pub states: Hypermatrix,
    pub pressure: Option<Hypermatrix>,
    pub op_nonzeros: Hypermatrix,
    pub rhs: Hypermatrix,
    pub rhs_pressure: Option<Hypermatrix>,
    pub field: Hypermatrix,
    pub params: Vec<Vec<f64>>,
    pub n_mdeim: usize,
    pub config_hash: String,
    pub fom_millis: Vec<f64>,
    pub failures: Vec<(usize, String)>,
}

#[derive(Serialize, Deserialize)]
struct SnapshotManifest {
    config_hash: String,
    params: Vec<Vec<f64>>,
    n_mdeim: usize,
    fom_millis: Vec<f64>,
    failures: Vec<(usize, String)>,
    has_pressure: bool,
}

impl SnapshotSet {
    pub fn save(&self, dir: &std::path::Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        crate::hypermatrix::io::save(dir.join("states.hm"), &self.states)?;
        crate::hypermatrix::io::save(dir.join("ops.hm"), &self.op_nonzeros)?;
        crate::hypermatrix::io::save(dir.join("rhs.hm"), &self.rhs)?;
        crate::hypermatrix::io::save(dir.join("field.hm"), &self.field)?;
        if let Some(p) = &self.pressure {
            crate::hypermatrix::io::save(dir.join("pressure.hm"), p)?;
        }
        if let Some(p) = &self.rhs_pressure {
            crate::hypermatrix::io::save(dir.join("rhs_pressure.hm"), p)?;
        }
        let manifest = SnapshotManifest {
            config_hash: self.config_hash.clone(),
            params: self.params.clone(),
            n_mdeim: self.n_mdeim,
            fom_millis: self.fom_millis.clone(),
            failures: self.failures.clone(),
            has_pressure: self.pressure.is_some(),
        };
        let json = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(dir.join("manifest.json"), json)?;
        Ok(())
    }

    pub fn load(dir: &std::path::Path) -> Result<SnapshotSet> {
        let manifest: SnapshotManifest =
            serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)
                .map_err(|e| Error::Parse(e.to_string()))?;
        let states = crate::hypermatrix::io::load(dir.join("states.hm"))?;
        let op_nonzeros = crate::hypermatrix::io::load(dir.join("ops.hm"))?;
        let rhs = crate::hypermatrix::io::load(dir.join("rhs.hm"))?;
        let field = crate::hypermatrix::io::load(dir.join("field.hm"))?;
        let pressure = if manifest.has_pressure {
            Some(crate::hypermatrix::io::load(dir.join("pressure.hm"))?)
        } else {
            None
        };
        let rhs_pressure = if manifest.has_pressure {
            Some(crate::hypermatrix::io::load(dir.join("rhs_pressure.hm"))?)
        } else {
            None
        };
        Ok(SnapshotSet {
            states,
            pressure,
            op_nonzeros,
            rhs,
            rhs_pressure,
            field,
            params: manifest.params,
            n_mdeim: manifest.n_mdeim,
            config_hash: manifest.config_hash,
            fom_millis: manifest.fom_millis,
            failures: manifest.failures,
        })
    }
}

/// Runs the heat FOM for every parameter and records states (all), operator
/// nonzeros, right-hand sides and quadrature field values (first `n_mdeim`
/// parameters). Failed parameters are recorded and skipped.
pub fn generate_heat_snapshots(
    fom: &HeatFom,
    params: &[Vec<f64>],
    n_mdeim: usize,
    config_hash: &str,
) -> Result<SnapshotSet> {
    let n_mdeim = n_mdeim.min(params.len());
    let n_s = fom.n_free();
    let n_t = fom.n_t;
    let n_z = fom.pattern.nnz();
    let n_q = fom.space.n_quadrature();
    let labels = vec![Axis::Space, Axis::Time, Axis::Parameter];
    let mut states = Hypermatrix::zeros(vec![n_s, n_t, params.len()], labels.clone())?;
    let mut ops = Hypermatrix::zeros(vec![n_z, n_t, n_mdeim], labels.clone())?;
    let mut rhs = Hypermatrix::zeros(vec![n_s, n_t, n_mdeim], labels.clone())?;
    let mut field = Hypermatrix::zeros(vec![n_q, n_t, n_mdeim], labels)?;
    let mut fom_millis = Vec::with_capacity(params.len());
    let mut failures = Vec::new();
    for (k, mu) in params.iter().enumerate() {
        let (solved, ms) = clock::timed(|| fom.solve(mu));
        fom_millis.push(ms);
        let solution = match solved {
            Ok(s) => s,
            Err(e) => {
                failures.push((k, e.to_string()));
                continue;
            }
        };
        for n in 0..n_t {
            for i in 0..n_s {
                states.set(&[i, n, k], solution.states[(i, n)]);
            }
        }
        if k < n_mdeim {
            for n in 1..=n_t {
                let t = fom.time(n);
                let stiff = fom.stiffness(t, mu)?;
                for (i, &v) in stiff.ff.values().iter().enumerate() {
                    ops.set(&[i, n - 1, k], v);
                }
                let l = fom.rhs_block(n, mu, &stiff)?;
                for i in 0..n_s {
                    rhs.set(&[i, n - 1, k], l[i]);
                }
                let alpha = fom.data.alpha.clone();
                let fv = crate::fem::evaluate_field_at_quadrature(&fom.space, &move |x| {
                    alpha(x, t, mu)
                })?;
                for (i, &v) in fv.iter().enumerate() {
                    field.set(&[i, n - 1, k], v);
                }
            }
        }
    }
    Ok(SnapshotSet {
        states,
        pressure: None,
        op_nonzeros: ops,
        rhs,
        rhs_pressure: None,
        field,
        params: params.to_vec(),
        n_mdeim,
        config_hash: config_hash.to_string(),
        fom_millis,
        failures,
    })
}

/// Stokes analogue of [`generate_heat_snapshots`]; the recorded operator is
/// the viscous velocity block, and the pressure constraint right-hand side
/// is kept alongside the velocity one.
pub fn generate_stokes_snapshots(
    fom: &StokesFom,
    params: &[Vec<f64>],
    n_mdeim: usize,
    config_hash: &str,
) -> Result<SnapshotSet> {
    let n_mdeim = n_mdeim.min(params.len());
    let n_u = fom.n_free_velocity();
    let n_p = fom.n_pressure();
    let n_t = fom.n_t;
    let n_z = fom.vel_pattern.nnz();
    let n_q = fom.vel.n_quadrature();
    let labels = vec![Axis::Space, Axis::Time, Axis::Parameter];
    let mut states = Hypermatrix::zeros(vec![n_u, n_t, params.len()], labels.clone())?;
    let mut press = Hypermatrix::zeros(vec![n_p, n_t, params.len()], labels.clone())?;
    let mut ops = Hypermatrix::zeros(vec![n_z, n_t, n_mdeim], labels.clone())?;
    let mut rhs = Hypermatrix::zeros(vec![n_u, n_t, n_mdeim], labels.clone())?;
    let mut rhs_p = Hypermatrix::zeros(vec![n_p, n_t, n_mdeim], labels.clone())?;
    let mut field = Hypermatrix::zeros(vec![n_q, n_t, n_mdeim], labels)?;
    let mut fom_millis = Vec::with_capacity(params.len());
    let mut failures = Vec::new();
    for (k, mu) in params.iter().enumerate() {
        let (solved, ms) = clock::timed(|| fom.solve(mu));
        fom_millis.push(ms);
        let solution = match solved {
            Ok(s) => s,
            Err(e) => {
                failures.push((k, e.to_string()));
                continue;
            }
        };
        for n in 0..n_t {
            for i in 0..n_u {
                states.set(&[i, n, k], solution.velocity[(i, n)]);
            }
            for i in 0..n_p {
                press.set(&[i, n, k], solution.pressure[(i, n)]);
            }
        }
        if k < n_mdeim {
            for n in 1..=n_t {
                let t = fom.time(n);
                let stiff = fom.viscous_stiffness(t, mu)?;
                for (i, &v) in stiff.ff.values().iter().enumerate() {
                    ops.set(&[i, n - 1, k], v);
                }
                let lu = fom.rhs_velocity_block(n, mu, &stiff)?;
                for i in 0..n_u {
                    rhs.set(&[i, n - 1, k], lu[i]);
                }
                let lp = fom.rhs_pressure_block(n, mu);
                for i in 0..n_p {
                    rhs_p.set(&[i, n - 1, k], lp[i]);
                }
                let alpha = fom.data.alpha.clone();
                let fv =
                    crate::fem::evaluate_field_at_quadrature(&fom.vel, &move |x| alpha(x, t, mu))?;
                for (i, &v) in fv.iter().enumerate() {
                    field.set(&[i, n - 1, k], v);
                }
            }
        }
    }
    Ok(SnapshotSet {
        states,
        pressure: Some(press),
        op_nonzeros: ops,
        rhs,
        rhs_pressure: Some(rhs_p),
        field,
        params: params.to_vec(),
        n_mdeim,
        config_hash: config_hash.to_string(),
        fom_millis,
        failures,
    })
}

/// Desk-scale stand-in for the benchmark heat geometry: a `4 x 1.5 x 0.2`
/// box, Dirichlet on the `x = 0` and `y = 0` faces, Neumann on `x = L` and
/// `y = H`, natural elsewhere.
pub fn heat_benchmark_fom(divisions: (usize, usize, usize), n_t: usize) -> Result<HeatFom> {
    let (l, h, w) = (4.0, 1.5, 0.2);
    let mesh = Arc::new(build_box_mesh((l, h, w), divisions, move |c, _| {
        if c[0] == 0.0 || c[1] == 0.0 {
            BoundaryTag::Dirichlet
        } else if c[0] == l || c[1] == h {
            BoundaryTag::Neumann
        } else {
            BoundaryTag::NeumannZero
        }
    })?);
    let space = Arc::new(FESpace::new(mesh, ElementKind::Q1, 1)?);
    HeatFom::new(space, HeatData::benchmark(0.3), n_t)
}

/// Desk-scale Stokes channel: inflow at `x = 0`, outflow (natural, fixes
/// the pressure gauge) at `x = L`, no-slip walls, no-penetration lid at
/// `z = W`.
pub fn stokes_benchmark_fom(
    divisions: (usize, usize, usize),
    n_t: usize,
) -> Result<StokesFom> {
    let (l, h, w) = (4.0, 1.5, 0.2);
    let mesh = Arc::new(build_box_mesh((l, h, w), divisions, move |c, _| {
        if c[0] == 0.0 {
            BoundaryTag::Dirichlet
        } else if c[0] == l {
            BoundaryTag::NeumannZero
        } else if c[2] == w {
            BoundaryTag::DirichletNoPen
        } else {
            BoundaryTag::DirichletZero
        }
    })?);
    let vel = Arc::new(FESpace::new(mesh.clone(), ElementKind::Q2, 3)?);
    let prs = Arc::new(FESpace::new(mesh, ElementKind::P0, 1)?);
    StokesFom::new(vel, prs, StokesData::benchmark(0.15, w), n_t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::HeatData;

    fn tiny_heat(n_t: usize) -> HeatFom {
        heat_benchmark_fom((4, 2, 1), n_t).unwrap()
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let mesh = Arc::new(
            build_box_mesh((1.0, 1.0, 1.0), (2, 2, 1), |c, _| {
                if c[0] == 0.0 {
                    BoundaryTag::Dirichlet
                } else {
                    BoundaryTag::NeumannZero
                }
            })
            .unwrap(),
        );
        let space = Arc::new(FESpace::new(mesh, ElementKind::Q1, 1).unwrap());
        let mut data = HeatData::constant_state(0.0, 0.1);
        data.f = Arc::new(|_, _, _| 0.0);
        let fom = HeatFom::new(space, data, 4).unwrap();
        let sol = fom.solve(&[0.5, 0.5, 0.5]).unwrap();
        assert_eq!(sol.states.norm(), 0.0);
    }

    #[test]
    fn constant_state_is_preserved() {
        let c = 3.25;
        let mesh = Arc::new(
            build_box_mesh((1.0, 1.0, 1.0), (2, 2, 2), |cc, _| {
                if cc[0] == 0.0 {
                    BoundaryTag::Dirichlet
                } else {
                    BoundaryTag::NeumannZero
                }
            })
            .unwrap(),
        );
        let space = Arc::new(FESpace::new(mesh, ElementKind::Q1, 1).unwrap());
        let fom = HeatFom::new(space, HeatData::constant_state(c, 0.2), 5).unwrap();
        let sol = fom.solve(&[0.5, 0.5, 0.5]).unwrap();
        for n in 0..fom.n_t {
            for i in 0..fom.n_free() {
                assert!(
                    (sol.states[(i, n)] - c).abs() < 1e-10,
                    "step {n}, dof {i}: {}",
                    sol.states[(i, n)]
                );
            }
        }
    }

    #[test]
    fn marching_solution_annihilates_spacetime_residual() {
        let fom = tiny_heat(4);
        let mu = vec![2.0, 5.0, 3.0];
        let sol = fom.solve(&mu).unwrap();
        let n_s = fom.n_free();
        let mut v = DVector::zeros(n_s * fom.n_t);
        for n in 0..fom.n_t {
            v.rows_mut(n * n_s, n_s).copy_from(&sol.states.column(n));
        }
        let r = fom.spacetime_residual(&mu, &v).unwrap();
        let l = fom.spacetime_rhs(&mu).unwrap();
        assert!(r.norm() <= 1e-9 * l.norm(), "{} vs {}", r.norm(), l.norm());
        // zero input returns the right-hand side itself
        let r0 = fom
            .spacetime_residual(&mu, &DVector::zeros(n_s * fom.n_t))
            .unwrap();
        assert!((r0 - l).norm() < 1e-12);
    }

    #[test]
    fn blockwise_residual_matches_dense_oracle() {
        let mesh = Arc::new(
            build_box_mesh((1.0, 1.0, 1.0), (1, 1, 1), |c, _| {
                if c[0] == 0.0 {
                    BoundaryTag::Dirichlet
                } else {
                    BoundaryTag::NeumannZero
                }
            })
            .unwrap(),
        );
        let space = Arc::new(FESpace::new(mesh, ElementKind::Q1, 1).unwrap());
        let fom = HeatFom::new(space, HeatData::benchmark(0.3), 2).unwrap();
        let mu = vec![1.5, 2.5, 3.5];
        let n = fom.n_free() * fom.n_t;
        let mut rng = crate::rng::Stream::new(4);
        let v = DVector::from_fn(n, |_, _| rng.next_normal());
        let dense = fom.dense_spacetime_operator(&mu).unwrap();
        let l = fom.spacetime_rhs(&mu).unwrap();
        let oracle = &l - &dense * &v;
        let blockwise = fom.spacetime_residual(&mu, &v).unwrap();
        assert!((oracle - blockwise).norm() < 1e-11);
    }

    #[test]
    fn snapshot_extents_and_determinism() {
        let fom = tiny_heat(2);
        let params = vec![vec![2.0, 2.0, 2.0], vec![8.0, 3.0, 1.5]];
        let a = generate_heat_snapshots(&fom, &params, 1, "hash").unwrap();
        assert_eq!(a.states.dims(), &[fom.n_free(), 2, 2]);
        assert_eq!(a.op_nonzeros.dims(), &[fom.pattern.nnz(), 2, 1]);
        assert_eq!(a.rhs.dims(), &[fom.n_free(), 2, 1]);
        assert_eq!(a.field.dims(), &[fom.space.n_quadrature(), 2, 1]);
        assert!(a.failures.is_empty());
        let b = generate_heat_snapshots(&fom, &params, 1, "hash").unwrap();
        assert_eq!(a.states.data(), b.states.data());
        assert_eq!(a.op_nonzeros.data(), b.op_nonzeros.data());
    }

    #[test]
    fn stokes_zero_data_and_divergence() {
        let fom = stokes_benchmark_fom((3, 2, 1), 2).unwrap();
        // zero inflow keeps everything zero
        let mut data = fom.data.clone();
        data.g = Arc::new(|_, _, _| [0.0; 3]);
        let fom0 = StokesFom::new(fom.vel.clone(), fom.prs.clone(), data, 2).unwrap();
        let sol = fom0.solve(&[2.0, 2.0, 2.0]).unwrap();
        assert!(sol.velocity.norm() < 1e-12);
        assert!(sol.pressure.norm() < 1e-9);
        // benchmark inflow: discrete divergence of the solved field vanishes
        let sol = fom.solve(&[2.0, 2.0, 2.0]).unwrap();
        assert!(sol.velocity.norm() > 0.0);
        assert!(
            sol.max_divergence_residual < 1e-9,
            "divergence residual {}",
            sol.max_divergence_residual
        );
    }

    #[test]
    fn stokes_inflow_realized_on_inlet_dofs() {
        let fom = stokes_benchmark_fom((3, 2, 1), 2).unwrap();
        let mu = vec![4.0, 2.0, 1.0];
        let t = fom.time(1);
        let g = fom.lifting(t, &mu);
        let w = 0.2;
        let mut checked = 0;
        for dof in 0..fom.vel.n_dofs() {
            if fom.vel.constraint(dof) == crate::fem::Constraint::Valued {
                let x = fom.vel.node_coords(fom.vel.dof_node(dof));
                if x[0] == 0.0 && fom.vel.dof_component(dof) == 0 {
                    let pulse = (1.0 - (std::f64::consts::PI * t / 0.15).cos()
                        + (std::f64::consts::PI * t / (mu[2] * 0.15)).sin() / mu[1])
                        .abs();
                    let expected = mu[0] * x[2] * (w - x[2]) * pulse;
                    assert!((g[dof] - expected).abs() < 1e-12);
                    checked += 1;
                }
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn snapshot_round_trip_through_directory() {
        let fom = tiny_heat(2);
        let params = vec![vec![2.0, 2.0, 2.0]];
        let snap = generate_heat_snapshots(&fom, &params, 1, "abc123").unwrap();
        let dir = std::env::temp_dir().join("strb_snapshots_test");
        snap.save(&dir).unwrap();
        let back = SnapshotSet::load(&dir).unwrap();
        assert_eq!(back.config_hash, "abc123");
        assert_eq!(back.states.data(), snap.states.data());
        assert_eq!(back.rhs.data(), snap.rhs.data());
        std::fs::remove_dir_all(&dir).ok();
    }
}
