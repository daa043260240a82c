//! Operator and right-hand-side assembly with strong Dirichlet elimination.
//!
//! A [`Pattern`] fixes, per (row space, column space, coupling) triple, the
//! structural nonzeros of the free-by-free operator block and the
//! free-by-constrained block used for Dirichlet lifting. The pattern is
//! purely topological: entries stay present when numerically zero, so the
//! length-`N_z` value vector is identical in layout across all `(t, mu)`
//! evaluations, which is what makes the MDEIM snapshot hypermatrices
//! well-defined.
//!
//! Sampled assembly integrates only over cells adjacent to the requested
//! entries (the reduced integration domain) and reports how many cells were
//! touched, which is the cost surrogate the benchmarks track.

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fem::mesh::BoundaryTag;
use crate::fem::quadrature::{face_rule, q1_grad, tensor_rule, CellRule};
use crate::fem::space::{Constraint, ElementKind, FESpace};
use crate::hypermatrix::NormMatrix;
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorForm {
    Mass,
    /// Diffusion/viscosity form with a coefficient at quadrature points.
    StiffnessWithField,
    /// Pressure-test, velocity-trial divergence coupling.
    Divergence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coupling {
    /// Every local row DOF couples to every local column DOF.
    All,
    /// Componentwise forms on vector spaces (mass, component Laplacian).
    SameComponent,
}

#[derive(Clone, Copy)]
pub enum FieldArg<'a> {
    None,
    /// Values at the quadrature points of the pattern's rule, canonical
    /// cell-then-point order.
    Values(&'a [f64]),
    /// Pointwise evaluation at physical coordinates.
    Func(&'a dyn Fn(&[f64; 3]) -> f64),
}

impl<'a> FieldArg<'a> {
    fn at(&self, qp_global: usize, x: &[f64; 3]) -> f64 {
        match self {
            FieldArg::None => 1.0,
            FieldArg::Values(v) => v[qp_global],
            FieldArg::Func(f) => f(x),
        }
    }
}

/// One assembled bilinear form: the free-by-free block and the
/// free-by-constrained block (kept on full column indices).
#[derive(Debug, Clone)]
pub struct AssembledOperator {
    pub ff: CsrMatrix,
    pub fc: CsrMatrix,
}

impl AssembledOperator {
    /// Right-hand-side contribution `-A_fc g` of a Dirichlet lifting `g`
    /// (full-length DOF vector).
    pub fn lifting_rhs(&self, g_full: &DVector<f64>) -> DVector<f64> {
        -self.fc.matvec(g_full)
    }
}

#[derive(Debug)]
pub struct Pattern {
    pub rows: Arc<FESpace>,
    pub cols: Arc<FESpace>,
    pub coupling: Coupling,
    ff_skeleton: CsrMatrix,
    fc_skeleton: CsrMatrix,
    /// per cell: (local row dof, local col dof, ff nonzero position)
    cell_ff: Vec<Vec<(u32, u32, u32)>>,
    /// per cell: (local row dof, local col dof, fc nonzero position)
    cell_fc: Vec<Vec<(u32, u32, u32)>>,
    nz_to_cells: OnceLock<Vec<Vec<u32>>>,
    row_to_cells: OnceLock<Vec<Vec<u32>>>,
}

impl Pattern {
    pub fn new(rows: Arc<FESpace>, cols: Arc<FESpace>, coupling: Coupling) -> Result<Pattern> {
        if !Arc::ptr_eq(&rows.mesh, &cols.mesh) {
            return Err(Error::InvalidArgument(
                "row and column spaces live on different meshes".into(),
            ));
        }
        if coupling == Coupling::SameComponent && rows.components != cols.components {
            return Err(Error::InvalidArgument(
                "same-component coupling needs equal component counts".into(),
            ));
        }
        let n_cells = rows.mesh.n_cells();
        let mut ff_triplets = Vec::new();
        let mut fc_triplets = Vec::new();
        for cell in 0..n_cells {
            for (lr, lc) in Self::pairs(&rows, &cols, coupling) {
                let rdof = rows.cell_dof(cell, lr / rows.components, lr % rows.components);
                let cdof = cols.cell_dof(cell, lc / cols.components, lc % cols.components);
                if let Some(fr) = rows.free_index(rdof) {
                    match cols.free_index(cdof) {
                        Some(fcq) => ff_triplets.push((fr, fcq, 0.0)),
                        None => fc_triplets.push((fr, cdof, 0.0)),
                    }
                }
            }
        }
        let ff_skeleton = CsrMatrix::from_triplets(rows.n_free(), cols.n_free(), &ff_triplets)?;
        let fc_skeleton = CsrMatrix::from_triplets(rows.n_free(), cols.n_dofs(), &fc_triplets)?;
        let mut cell_ff = vec![Vec::new(); n_cells];
        let mut cell_fc = vec![Vec::new(); n_cells];
        for cell in 0..n_cells {
            for (lr, lc) in Self::pairs(&rows, &cols, coupling) {
                let rdof = rows.cell_dof(cell, lr / rows.components, lr % rows.components);
                let cdof = cols.cell_dof(cell, lc / cols.components, lc % cols.components);
                if let Some(fr) = rows.free_index(rdof) {
                    match cols.free_index(cdof) {
                        Some(fcq) => {
                            let pos = ff_skeleton.nz_position(fr, fcq).unwrap();
                            cell_ff[cell].push((lr as u32, lc as u32, pos as u32));
                        }
                        None => {
                            let pos = fc_skeleton.nz_position(fr, cdof).unwrap();
                            cell_fc[cell].push((lr as u32, lc as u32, pos as u32));
                        }
                    }
                }
            }
        }
        Ok(Pattern {
            rows,
            cols,
            coupling,
            ff_skeleton,
            fc_skeleton,
            cell_ff,
            cell_fc,
            nz_to_cells: OnceLock::new(),
            row_to_cells: OnceLock::new(),
        })
    }

    fn pairs(
        rows: &FESpace,
        cols: &FESpace,
        coupling: Coupling,
    ) -> impl Iterator<Item = (usize, usize)> {
        let nr = rows.kind.local_nodes() * rows.components;
        let nc = cols.kind.local_nodes() * cols.components;
        let comps = rows.components;
        let same = coupling == Coupling::SameComponent;
        (0..nr).flat_map(move |lr| {
            (0..nc).filter_map(move |lc| {
                if same && lr % comps != lc % comps {
                    None
                } else {
                    Some((lr, lc))
                }
            })
        })
    }

    /// Number of structural nonzeros of the free-by-free block.
    pub fn nnz(&self) -> usize {
        self.ff_skeleton.nnz()
    }

    pub fn skeleton(&self) -> &CsrMatrix {
        &self.ff_skeleton
    }

    /// Quadrature rule shared by all forms on this pattern: the rule of the
    /// higher-order space involved.
    pub fn rule_points(&self) -> usize {
        self.rows.kind.gauss_points().max(self.cols.kind.gauss_points())
    }

    fn cells_for_entries(&self) -> &Vec<Vec<u32>> {
        self.nz_to_cells.get_or_init(|| {
            let mut map = vec![Vec::new(); self.ff_skeleton.nnz()];
            for (cell, list) in self.cell_ff.iter().enumerate() {
                for &(_, _, pos) in list {
                    let v = &mut map[pos as usize];
                    if v.last() != Some(&(cell as u32)) {
                        v.push(cell as u32);
                    }
                }
            }
            map
        })
    }

    fn cells_for_rows(&self) -> &Vec<Vec<u32>> {
        self.row_to_cells.get_or_init(|| {
            let mut map = vec![Vec::new(); self.rows.n_free()];
            for cell in 0..self.rows.mesh.n_cells() {
                for local in 0..self.rows.kind.local_nodes() {
                    for comp in 0..self.rows.components {
                        let dof = self.rows.cell_dof(cell, local, comp);
                        if let Some(fr) = self.rows.free_index(dof) {
                            let v = &mut map[fr];
                            if v.last() != Some(&(cell as u32)) {
                                v.push(cell as u32);
                            }
                        }
                    }
                }
            }
            map
        })
    }
}

struct ShapeTable {
    /// values[qp][local]
    values: Vec<Vec<f64>>,
    /// reference gradients[qp][local]
    grads: Vec<Vec<[f64; 3]>>,
}

fn shape_table(kind: ElementKind, rule: &CellRule) -> ShapeTable {
    let n_loc = kind.local_nodes();
    let values = rule
        .points
        .iter()
        .map(|xi| (0..n_loc).map(|l| kind.value(l, xi)).collect())
        .collect();
    let grads = rule
        .points
        .iter()
        .map(|xi| (0..n_loc).map(|l| kind.grad_ref(l, xi)).collect())
        .collect();
    ShapeTable { values, grads }
}

struct CellGeometry {
    /// physical coordinates per qp
    x: Vec<[f64; 3]>,
    /// |det J| * quadrature weight per qp
    wdet: Vec<f64>,
    /// inverse-transpose Jacobian per qp (maps reference gradients)
    jinv_t: Vec<[[f64; 3]; 3]>,
}

fn cell_geometry(space: &FESpace, cell: usize, rule: &CellRule) -> Result<CellGeometry> {
    let verts: Vec<[f64; 3]> = space.mesh.cells[cell]
        .iter()
        .map(|&v| space.mesh.vertices[v])
        .collect();
    let mut x = Vec::with_capacity(rule.points.len());
    let mut wdet = Vec::with_capacity(rule.points.len());
    let mut jinv_t = Vec::with_capacity(rule.points.len());
    for (qp, xi) in rule.points.iter().enumerate() {
        let mut j = [[0.0f64; 3]; 3];
        let mut xq = [0.0f64; 3];
        for (l, v) in verts.iter().enumerate() {
            let n = crate::fem::quadrature::q1_value(l, xi);
            let g = q1_grad(l, xi);
            for d in 0..3 {
                xq[d] += n * v[d];
                for e in 0..3 {
                    j[d][e] += v[d] * g[e];
                }
            }
        }
        let det = j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1])
            - j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0])
            + j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0]);
        if det <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "nonpositive Jacobian {det} in cell {cell}"
            )));
        }
        let inv = [
            [
                (j[1][1] * j[2][2] - j[1][2] * j[2][1]) / det,
                (j[0][2] * j[2][1] - j[0][1] * j[2][2]) / det,
                (j[0][1] * j[1][2] - j[0][2] * j[1][1]) / det,
            ],
            [
                (j[1][2] * j[2][0] - j[1][0] * j[2][2]) / det,
                (j[0][0] * j[2][2] - j[0][2] * j[2][0]) / det,
                (j[0][2] * j[1][0] - j[0][0] * j[1][2]) / det,
            ],
            [
                (j[1][0] * j[2][1] - j[1][1] * j[2][0]) / det,
                (j[0][1] * j[2][0] - j[0][0] * j[2][1]) / det,
                (j[0][0] * j[1][1] - j[0][1] * j[1][0]) / det,
            ],
        ];
        // inv is J^-1 (row i = d xi_i / d x); transpose maps gradients
        let mut it = [[0.0f64; 3]; 3];
        for d in 0..3 {
            for e in 0..3 {
                it[d][e] = inv[e][d];
            }
        }
        x.push(xq);
        wdet.push(rule.weights[qp] * det);
        jinv_t.push(it);
    }
    Ok(CellGeometry { x, wdet, jinv_t })
}

fn physical_grad(jinv_t: &[[f64; 3]; 3], g: &[f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for d in 0..3 {
        out[d] = jinv_t[d][0] * g[0] + jinv_t[d][1] * g[1] + jinv_t[d][2] * g[2];
    }
    out
}

/// Local element matrix for one cell.
fn element_matrix(
    pattern: &Pattern,
    form: OperatorForm,
    rule: &CellRule,
    row_shapes: &ShapeTable,
    col_shapes: &ShapeTable,
    geo: &CellGeometry,
    field: &FieldArg,
    qp_offset: usize,
) -> DMatrix<f64> {
    let rows = &pattern.rows;
    let cols = &pattern.cols;
    let nr = rows.kind.local_nodes() * rows.components;
    let nc = cols.kind.local_nodes() * cols.components;
    let mut local = DMatrix::zeros(nr, nc);
    let crows = rows.components;
    let ccols = cols.components;
    for qp in 0..rule.points.len() {
        let w = geo.wdet[qp];
        match form {
            OperatorForm::Mass => {
                for la in 0..rows.kind.local_nodes() {
                    let na = row_shapes.values[qp][la];
                    for lb in 0..cols.kind.local_nodes() {
                        let v = w * na * col_shapes.values[qp][lb];
                        for c in 0..crows {
                            local[(la * crows + c, lb * ccols + c)] += v;
                        }
                    }
                }
            }
            OperatorForm::StiffnessWithField => {
                let coeff = field.at(qp_offset + qp, &geo.x[qp]);
                for la in 0..rows.kind.local_nodes() {
                    let ga = physical_grad(&geo.jinv_t[qp], &row_shapes.grads[qp][la]);
                    for lb in 0..cols.kind.local_nodes() {
                        let gb = physical_grad(&geo.jinv_t[qp], &col_shapes.grads[qp][lb]);
                        let v = w * coeff * (ga[0] * gb[0] + ga[1] * gb[1] + ga[2] * gb[2]);
                        for c in 0..crows {
                            local[(la * crows + c, lb * ccols + c)] += v;
                        }
                    }
                }
            }
            OperatorForm::Divergence => {
                // rows: scalar pressure test, cols: vector velocity trial
                for la in 0..rows.kind.local_nodes() {
                    let qa = row_shapes.values[qp][la];
                    for lb in 0..cols.kind.local_nodes() {
                        let gb = physical_grad(&geo.jinv_t[qp], &col_shapes.grads[qp][lb]);
                        for c in 0..ccols {
                            local[(la, lb * ccols + c)] += w * qa * gb[c];
                        }
                    }
                }
            }
        }
    }
    local
}

/// Assembles a bilinear form over all cells.
pub fn assemble_operator(
    pattern: &Pattern,
    form: OperatorForm,
    field: FieldArg,
) -> Result<AssembledOperator> {
    let rule = tensor_rule(pattern.rule_points())?;
    if let FieldArg::Values(v) = field {
        let expected = rule.points.len() * pattern.rows.mesh.n_cells();
        if v.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "field has {} values, quadrature contract needs {expected}",
                v.len()
            )));
        }
    }
    let row_shapes = shape_table(pattern.rows.kind, &rule);
    let col_shapes = shape_table(pattern.cols.kind, &rule);
    let mut ff = pattern.ff_skeleton.zero_like();
    let mut fc = pattern.fc_skeleton.zero_like();
    let qp_per_cell = rule.points.len();
    for cell in 0..pattern.rows.mesh.n_cells() {
        let geo = cell_geometry(&pattern.rows, cell, &rule)?;
        let local = element_matrix(
            pattern,
            form,
            &rule,
            &row_shapes,
            &col_shapes,
            &geo,
            &field,
            cell * qp_per_cell,
        );
        for &(lr, lc, pos) in &pattern.cell_ff[cell] {
            ff.values_mut()[pos as usize] += local[(lr as usize, lc as usize)];
        }
        for &(lr, lc, pos) in &pattern.cell_fc[cell] {
            fc.values_mut()[pos as usize] += local[(lr as usize, lc as usize)];
        }
    }
    Ok(AssembledOperator { ff, fc })
}

/// Assembles only the requested free-by-free entries, integrating only over
/// cells that contribute to them. Returns the entry values (in the order of
/// `samples`) and the number of cells touched.
pub fn assemble_sampled(
    pattern: &Pattern,
    form: OperatorForm,
    field: FieldArg,
    samples: &[usize],
) -> Result<(Vec<f64>, usize)> {
    let nnz = pattern.ff_skeleton.nnz();
    let mut wanted = vec![false; nnz];
    let mut slot = vec![usize::MAX; nnz];
    for (k, &s) in samples.iter().enumerate() {
        if s >= nnz {
            return Err(Error::InvalidArgument(format!(
                "sample index {s} outside the nonzero pattern ({nnz} entries)"
            )));
        }
        wanted[s] = true;
        slot[s] = k;
    }
    let adjacency = pattern.cells_for_entries();
    let mut cells: Vec<u32> = samples
        .iter()
        .flat_map(|&s| adjacency[s].iter().copied())
        .collect();
    cells.sort_unstable();
    cells.dedup();
    let rule = tensor_rule(pattern.rule_points())?;
    let row_shapes = shape_table(pattern.rows.kind, &rule);
    let col_shapes = shape_table(pattern.cols.kind, &rule);
    let qp_per_cell = rule.points.len();
    let mut out = vec![0.0; samples.len()];
    for &cell in &cells {
        let cell = cell as usize;
        let geo = cell_geometry(&pattern.rows, cell, &rule)?;
        let local = element_matrix(
            pattern,
            form,
            &rule,
            &row_shapes,
            &col_shapes,
            &geo,
            &field,
            cell * qp_per_cell,
        );
        for &(lr, lc, pos) in &pattern.cell_ff[cell] {
            if wanted[pos as usize] {
                out[slot[pos as usize]] += local[(lr as usize, lc as usize)];
            }
        }
    }
    Ok((out, cells.len()))
}

/// `integral(f_c v_c)` over the domain, on free DOFs. The closure receives
/// physical coordinates and the component index.
pub fn assemble_rhs_volume(
    space: &FESpace,
    f: &dyn Fn(&[f64; 3], usize) -> f64,
) -> Result<DVector<f64>> {
    let rule = tensor_rule(space.kind.gauss_points())?;
    let shapes = shape_table(space.kind, &rule);
    let mut rhs = DVector::zeros(space.n_free());
    for cell in 0..space.mesh.n_cells() {
        let geo = cell_geometry(space, cell, &rule)?;
        for qp in 0..rule.points.len() {
            let w = geo.wdet[qp];
            for la in 0..space.kind.local_nodes() {
                let na = shapes.values[qp][la];
                for c in 0..space.components {
                    if let Some(fr) = space.free_index(space.cell_dof(cell, la, c)) {
                        rhs[fr] += w * na * f(&geo.x[qp], c);
                    }
                }
            }
        }
    }
    Ok(rhs)
}

/// Surface integral of `h_c v_c` over facets tagged `Neumann`.
pub fn assemble_rhs_neumann(
    space: &FESpace,
    h: &dyn Fn(&[f64; 3], usize) -> f64,
) -> Result<DVector<f64>> {
    let mut rhs = DVector::zeros(space.n_free());
    accumulate_neumann(space, h, None, &mut |fr, v| rhs[fr] += v)?;
    Ok(rhs)
}

fn accumulate_neumann(
    space: &FESpace,
    h: &dyn Fn(&[f64; 3], usize) -> f64,
    only_rows: Option<&[bool]>,
    add: &mut dyn FnMut(usize, f64),
) -> Result<()> {
    let (pts2, w2) = face_rule(space.kind.gauss_points())?;
    for facet in &space.mesh.facets {
        if facet.tag != BoundaryTag::Neumann {
            continue;
        }
        let axis = facet.local_face / 2;
        let side = if facet.local_face % 2 == 0 { -1.0 } else { 1.0 };
        let (b, g) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let locals = crate::fem::space::face_local_nodes(space.kind, facet.local_face);
        let verts: Vec<[f64; 3]> = space.mesh.cells[facet.cell]
            .iter()
            .map(|&v| space.mesh.vertices[v])
            .collect();
        for (k, uv) in pts2.iter().enumerate() {
            let mut xi = [0.0; 3];
            xi[axis] = side;
            xi[b] = uv[0];
            xi[g] = uv[1];
            // tangents of the geometric map along the in-face axes
            let mut x = [0.0; 3];
            let mut tb = [0.0; 3];
            let mut tg = [0.0; 3];
            for (l, v) in verts.iter().enumerate() {
                let n = crate::fem::quadrature::q1_value(l, &xi);
                let gr = q1_grad(l, &xi);
                for d in 0..3 {
                    x[d] += n * v[d];
                    tb[d] += v[d] * gr[b];
                    tg[d] += v[d] * gr[g];
                }
            }
            let cr = [
                tb[1] * tg[2] - tb[2] * tg[1],
                tb[2] * tg[0] - tb[0] * tg[2],
                tb[0] * tg[1] - tb[1] * tg[0],
            ];
            let area = (cr[0] * cr[0] + cr[1] * cr[1] + cr[2] * cr[2]).sqrt();
            let w = w2[k] * area;
            for &l in &locals {
                let n = space.kind.value(l, &xi);
                for c in 0..space.components {
                    if let Some(fr) = space.free_index(space.cell_dof(cell_of(facet), l, c)) {
                        if only_rows.map_or(true, |mask| mask[fr]) {
                            add(fr, w * n * h(&x, c));
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

fn cell_of(facet: &crate::fem::mesh::Facet) -> usize {
    facet.cell
}

/// Specification of one effective right-hand side evaluation for sampled
/// assembly: volume forcing, Neumann data, and the Dirichlet lifting moves
/// of the stiffness and mass forms.
pub struct SampledRhsSpec<'a> {
    pub volume: Option<&'a dyn Fn(&[f64; 3], usize) -> f64>,
    pub neumann: Option<&'a dyn Fn(&[f64; 3], usize) -> f64>,
    /// Stiffness pattern + coefficient for `-A_fc g_now`.
    pub stiffness: Option<(&'a Pattern, &'a dyn Fn(&[f64; 3]) -> f64, &'a DVector<f64>)>,
    /// Precomputed mass for `-1/delta M_fc (g_now - g_prev)`.
    pub mass_move: Option<(&'a AssembledOperator, DVector<f64>)>,
    /// Extra precomputed free-DOF vector (e.g. the initial-condition term).
    pub extra: Option<&'a DVector<f64>>,
}

/// Evaluates the requested rows of an effective right-hand side, touching
/// only adjacent cells/facets. Returns (values, cells touched).
pub fn assemble_rhs_sampled(
    space: &FESpace,
    pattern: &Pattern,
    spec: &SampledRhsSpec,
    rows: &[usize],
) -> Result<(Vec<f64>, usize)> {
    let n_free = space.n_free();
    let mut mask = vec![false; n_free];
    let mut slot = vec![usize::MAX; n_free];
    for (k, &r) in rows.iter().enumerate() {
        if r >= n_free {
            return Err(Error::InvalidArgument(format!("row {r} out of range")));
        }
        mask[r] = true;
        slot[r] = k;
    }
    let adjacency = pattern.cells_for_rows();
    let mut cells: Vec<u32> = rows
        .iter()
        .flat_map(|&r| adjacency[r].iter().copied())
        .collect();
    cells.sort_unstable();
    cells.dedup();
    let mut out = vec![0.0; rows.len()];
    let rule = tensor_rule(pattern.rule_points())?;
    let shapes = shape_table(space.kind, &rule);
    let col_shapes = shape_table(pattern.cols.kind, &rule);
    let qp_per_cell = rule.points.len();
    for &cell in &cells {
        let cell = cell as usize;
        let geo = cell_geometry(space, cell, &rule)?;
        if let Some(f) = spec.volume {
            for qp in 0..rule.points.len() {
                let w = geo.wdet[qp];
                for la in 0..space.kind.local_nodes() {
                    let na = shapes.values[qp][la];
                    for c in 0..space.components {
                        if let Some(fr) = space.free_index(space.cell_dof(cell, la, c)) {
                            if mask[fr] {
                                out[slot[fr]] += w * na * f(&geo.x[qp], c);
                            }
                        }
                    }
                }
            }
        }
        if let Some((pat, coeff, g_full)) = spec.stiffness {
            let local = element_matrix(
                pat,
                OperatorForm::StiffnessWithField,
                &rule,
                &shapes,
                &col_shapes,
                &geo,
                &FieldArg::Func(coeff),
                cell * qp_per_cell,
            );
            for &(lr, lc, pos) in &pat.cell_fc[cell] {
                let fr = pat.fc_skeleton.row_of_nz(pos as usize);
                if mask[fr] {
                    let cdof = pat.fc_skeleton.indices()[pos as usize];
                    out[slot[fr]] -= local[(lr as usize, lc as usize)] * g_full[cdof];
                }
            }
        }
    }
    if let Some(h) = spec.neumann {
        accumulate_neumann(space, h, Some(&mask), &mut |fr, v| {
            if mask[fr] {
                out[slot[fr]] += v;
            }
        })?;
    }
    if let Some((mass, ref dg)) = spec.mass_move {
        // mass is (t, mu)-independent; its lifting move is a sparse matvec
        // restricted to the sampled rows
        for &r in rows {
            let (cols_idx, vals) = mass.fc.row(r);
            let mut acc = 0.0;
            for (&j, &v) in cols_idx.iter().zip(vals) {
                acc += v * dg[j];
            }
            out[slot[r]] -= acc;
        }
    }
    if let Some(extra) = spec.extra {
        for &r in rows {
            out[slot[r]] += extra[r];
        }
    }
    Ok((out, cells.len()))
}

/// Full-length DOF vector holding the Dirichlet datum at constrained DOFs
/// and zero elsewhere (nodal interpolation).
pub fn dirichlet_lifting(space: &FESpace, g: &dyn Fn(&[f64; 3], usize) -> f64) -> DVector<f64> {
    let mut out = DVector::zeros(space.n_dofs());
    for dof in 0..space.n_dofs() {
        if space.constraint(dof) == Constraint::Valued {
            let x = space.node_coords(space.dof_node(dof));
            out[dof] = g(&x, space.dof_component(dof));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    /// Mass + unit-diffusivity stiffness (the V inner product).
    H1,
    /// Mass only.
    L2,
}

/// SPD norm matrix on the free DOFs of a space.
pub fn norm_matrix(space: &Arc<FESpace>, kind: NormKind) -> Result<NormMatrix> {
    let coupling = if space.components == 1 {
        Coupling::All
    } else {
        Coupling::SameComponent
    };
    let pattern = Pattern::new(space.clone(), space.clone(), coupling)?;
    let mass = assemble_operator(&pattern, OperatorForm::Mass, FieldArg::None)?;
    let mut values = mass.ff.values().to_vec();
    if kind == NormKind::H1 {
        let stiff = assemble_operator(&pattern, OperatorForm::StiffnessWithField, FieldArg::None)?;
        for (v, s) in values.iter_mut().zip(stiff.ff.values()) {
            *v += s;
        }
    }
    let mut m = mass.ff;
    m.set_values(values)?;
    NormMatrix::new(m)
}

/// Field values at the quadrature points of the space's rule, canonical
/// cell-then-point order (the `N_q`-vector contract of functional MDEIM).
pub fn evaluate_field_at_quadrature(
    space: &FESpace,
    f: &dyn Fn(&[f64; 3]) -> f64,
) -> Result<Vec<f64>> {
    let rule = tensor_rule(space.kind.gauss_points())?;
    let mut out = Vec::with_capacity(space.n_quadrature());
    for cell in 0..space.mesh.n_cells() {
        for xi in &rule.points {
            let x = space.map_point(cell, xi);
            out.push(f(&x));
        }
    }
    Ok(out)
}
