//! Nodal finite-element spaces on hexahedral meshes.
//!
//! Continuity across cells is established topologically: every Q2 node is
//! keyed by the mesh entity it sits on (vertex, edge, face, cell), and keys
//! are numbered in first-seen order over cells. This keeps DOF numbering
//! deterministic and independent of floating-point coordinates.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::mesh::{BoundaryTag, Mesh};
use crate::fem::quadrature::{q1_value, q2_grad, q2_value, q1_grad};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementKind {
    /// Continuous trilinear.
    Q1,
    /// Continuous triquadratic.
    Q2,
    /// Cellwise constant.
    P0,
}

impl ElementKind {
    pub fn local_nodes(self) -> usize {
        match self {
            ElementKind::Q1 => 8,
            ElementKind::Q2 => 27,
            ElementKind::P0 => 1,
        }
    }

    /// 1D Gauss points per direction for this family (2k rule for order k).
    pub fn gauss_points(self) -> usize {
        match self {
            ElementKind::Q1 => 2,
            ElementKind::Q2 => 3,
            ElementKind::P0 => 1,
        }
    }

    pub fn value(self, local: usize, xi: &[f64; 3]) -> f64 {
        match self {
            ElementKind::Q1 => q1_value(local, xi),
            ElementKind::Q2 => q2_value(local, xi),
            ElementKind::P0 => 1.0,
        }
    }

    pub fn grad_ref(self, local: usize, xi: &[f64; 3]) -> [f64; 3] {
        match self {
            ElementKind::Q1 => q1_grad(local, xi),
            ElementKind::Q2 => q2_grad(local, xi),
            ElementKind::P0 => [0.0; 3],
        }
    }

    /// Reference coordinates of a local node.
    pub fn node_ref(self, local: usize) -> [f64; 3] {
        match self {
            ElementKind::Q1 => [
                (local & 1) as f64 * 2.0 - 1.0,
                ((local >> 1) & 1) as f64 * 2.0 - 1.0,
                ((local >> 2) & 1) as f64 * 2.0 - 1.0,
            ],
            ElementKind::Q2 => [
                (local % 3) as f64 - 1.0,
                ((local / 3) % 3) as f64 - 1.0,
                (local / 9) as f64 - 1.0,
            ],
            ElementKind::P0 => [0.0; 3],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    Free,
    /// Interpolates the parametric Dirichlet datum.
    Valued,
    /// Pinned to zero (homogeneous or no-penetration component).
    Zero,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum EntityKey {
    Vertex(usize),
    Edge(usize, usize),
    Face([usize; 4]),
    Cell(usize),
}

#[derive(Debug)]
pub struct FESpace {
    pub mesh: Arc<Mesh>,
    pub kind: ElementKind,
    pub components: usize,
    nodes: Vec<[f64; 3]>,
    cell_nodes: Vec<Vec<usize>>,
    constraints: Vec<Constraint>,
    free2full: Vec<usize>,
    full2free: Vec<Option<usize>>,
}

impl FESpace {
    pub fn new(mesh: Arc<Mesh>, kind: ElementKind, components: usize) -> Result<FESpace> {
        if components != 1 && components != 3 {
            return Err(Error::InvalidArgument(
                "only scalar and 3-vector spaces are supported".into(),
            ));
        }
        let (nodes, cell_nodes) = build_nodes(&mesh, kind);
        let n_dofs = nodes.len() * components;
        let mut constraints = vec![Constraint::Free; n_dofs];
        if kind != ElementKind::P0 {
            apply_boundary_constraints(&mesh, kind, components, &cell_nodes, &mut constraints)?;
        }
        let mut free2full = Vec::new();
        let mut full2free = vec![None; n_dofs];
        for (dof, c) in constraints.iter().enumerate() {
            if *c == Constraint::Free {
                full2free[dof] = Some(free2full.len());
                free2full.push(dof);
            }
        }
        Ok(FESpace {
            mesh,
            kind,
            components,
            nodes,
            cell_nodes,
            constraints,
            free2full,
            full2free,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Total DOF count, constrained ones included.
    pub fn n_dofs(&self) -> usize {
        self.nodes.len() * self.components
    }

    /// Free (unconstrained) DOF count; the spatial dimension of the FOM.
    pub fn n_free(&self) -> usize {
        self.free2full.len()
    }

    pub fn node_coords(&self, node: usize) -> [f64; 3] {
        self.nodes[node]
    }

    pub fn cell_nodes(&self, cell: usize) -> &[usize] {
        &self.cell_nodes[cell]
    }

    /// Global DOF of (local node, component) in a cell; components are
    /// interleaved.
    pub fn cell_dof(&self, cell: usize, local: usize, comp: usize) -> usize {
        self.cell_nodes[cell][local] * self.components + comp
    }

    pub fn constraint(&self, dof: usize) -> Constraint {
        self.constraints[dof]
    }

    pub fn free_index(&self, dof: usize) -> Option<usize> {
        self.full2free[dof]
    }

    pub fn full_index(&self, free: usize) -> usize {
        self.free2full[free]
    }

    pub fn free_indices(&self) -> &[usize] {
        &self.free2full
    }

    pub fn dof_node(&self, dof: usize) -> usize {
        dof / self.components
    }

    pub fn dof_component(&self, dof: usize) -> usize {
        dof % self.components
    }

    /// Physical coordinates of the geometric (Q1) map at a reference point.
    pub fn map_point(&self, cell: usize, xi: &[f64; 3]) -> [f64; 3] {
        let mut x = [0.0; 3];
        for l in 0..8 {
            let v = self.mesh.cells[cell][l];
            let n = q1_value(l, xi);
            for d in 0..3 {
                x[d] += n * self.mesh.vertices[v][d];
            }
        }
        x
    }

    /// Number of quadrature points per cell for this space's rule.
    pub fn qp_per_cell(&self) -> usize {
        let n = self.kind.gauss_points();
        n * n * n
    }

    /// Total quadrature points (the `N_q` of functional compression).
    pub fn n_quadrature(&self) -> usize {
        self.qp_per_cell() * self.mesh.n_cells()
    }
}

fn build_nodes(mesh: &Mesh, kind: ElementKind) -> (Vec<[f64; 3]>, Vec<Vec<usize>>) {
    match kind {
        ElementKind::Q1 => (
            mesh.vertices.clone(),
            mesh.cells.iter().map(|c| c.to_vec()).collect(),
        ),
        ElementKind::P0 => (
            (0..mesh.n_cells()).map(|c| mesh.cell_centroid(c)).collect(),
            (0..mesh.n_cells()).map(|c| vec![c]).collect(),
        ),
        ElementKind::Q2 => {
            let mut keys: HashMap<EntityKey, usize> = HashMap::new();
            let mut nodes = Vec::new();
            let mut cell_nodes = Vec::with_capacity(mesh.n_cells());
            for (c, cell) in mesh.cells.iter().enumerate() {
                let mut locals = Vec::with_capacity(27);
                for l in 0..27 {
                    let (ix, iy, iz) = (l % 3, (l / 3) % 3, l / 9);
                    let key = entity_key(cell, c, ix, iy, iz);
                    let next = nodes.len();
                    let id = *keys.entry(key).or_insert(next);
                    if id == nodes.len() {
                        let xi = [ix as f64 - 1.0, iy as f64 - 1.0, iz as f64 - 1.0];
                        let mut x = [0.0; 3];
                        for lc in 0..8 {
                            let n = q1_value(lc, &xi);
                            for d in 0..3 {
                                x[d] += n * mesh.vertices[cell[lc]][d];
                            }
                        }
                        nodes.push(x);
                    }
                    locals.push(id);
                }
                cell_nodes.push(locals);
            }
            (nodes, cell_nodes)
        }
    }
}

fn entity_key(cell: &[usize; 8], cell_id: usize, ix: usize, iy: usize, iz: usize) -> EntityKey {
    let mids = [ix == 1, iy == 1, iz == 1];
    let n_mid = mids.iter().filter(|&&m| m).count();
    let corner = |jx: usize, jy: usize, jz: usize| cell[(jx / 2) + 2 * (jy / 2) + 4 * (jz / 2)];
    match n_mid {
        0 => EntityKey::Vertex(corner(ix, iy, iz)),
        1 => {
            // endpoints of the edge: vary the mid coordinate over {0, 2}
            let (a, b) = if mids[0] {
                (corner(0, iy, iz), corner(2, iy, iz))
            } else if mids[1] {
                (corner(ix, 0, iz), corner(ix, 2, iz))
            } else {
                (corner(ix, iy, 0), corner(ix, iy, 2))
            };
            EntityKey::Edge(a.min(b), a.max(b))
        }
        2 => {
            let mut vs = if !mids[0] {
                [corner(ix, 0, 0), corner(ix, 2, 0), corner(ix, 0, 2), corner(ix, 2, 2)]
            } else if !mids[1] {
                [corner(0, iy, 0), corner(2, iy, 0), corner(0, iy, 2), corner(2, iy, 2)]
            } else {
                [corner(0, 0, iz), corner(2, 0, iz), corner(0, 2, iz), corner(2, 2, iz)]
            };
            vs.sort_unstable();
            EntityKey::Face(vs)
        }
        _ => EntityKey::Cell(cell_id),
    }
}

/// Local nodes lying on a local face of the cell (face 0..6 = -x, +x, -y,
/// +y, -z, +z).
pub fn face_local_nodes(kind: ElementKind, local_face: usize) -> Vec<usize> {
    let axis = local_face / 2;
    let side = local_face % 2;
    let mut out = Vec::new();
    match kind {
        ElementKind::Q1 => {
            for l in 0..8 {
                let c = [(l & 1), ((l >> 1) & 1), ((l >> 2) & 1)];
                if c[axis] == side {
                    out.push(l);
                }
            }
        }
        ElementKind::Q2 => {
            let want = side * 2;
            for l in 0..27 {
                let c = [l % 3, (l / 3) % 3, l / 9];
                if c[axis] == want {
                    out.push(l);
                }
            }
        }
        ElementKind::P0 => {}
    }
    out
}

fn apply_boundary_constraints(
    mesh: &Mesh,
    kind: ElementKind,
    components: usize,
    cell_nodes: &[Vec<usize>],
    constraints: &mut [Constraint],
) -> Result<()> {
    for facet in &mesh.facets {
        if !facet.tag.is_dirichlet() {
            continue;
        }
        let locals = face_local_nodes(kind, facet.local_face);
        let comps: Vec<usize> = match facet.tag {
            BoundaryTag::DirichletNoPen => {
                let n = mesh.facet_normal(facet);
                let axis = (0..3)
                    .max_by(|&a, &b| n[a].abs().partial_cmp(&n[b].abs()).unwrap())
                    .unwrap();
                if n[axis].abs() < 1.0 - 1e-9 {
                    return Err(Error::InvalidArgument(
                        "no-penetration constraints need axis-aligned facets".into(),
                    ));
                }
                if components == 1 {
                    return Err(Error::InvalidArgument(
                        "no-penetration tag on a scalar space".into(),
                    ));
                }
                vec![axis]
            }
            _ => (0..components).collect(),
        };
        let target = match facet.tag {
            BoundaryTag::Dirichlet => Constraint::Valued,
            _ => Constraint::Zero,
        };
        for &l in &locals {
            let node = cell_nodes[facet.cell][l];
            for &c in &comps {
                let dof = node * components + c;
                // a valued constraint wins over a zero one on shared nodes
                if constraints[dof] != Constraint::Valued {
                    constraints[dof] = target;
                } else if target == Constraint::Valued {
                    constraints[dof] = Constraint::Valued;
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::mesh::build_box_mesh;

    fn tag_inlet(c: &[f64; 3], _n: &[f64; 3]) -> BoundaryTag {
        if c[0] == 0.0 {
            BoundaryTag::Dirichlet
        } else {
            BoundaryTag::NeumannZero
        }
    }

    #[test]
    fn q1_counts_and_constraints() {
        let mesh = Arc::new(build_box_mesh((1.0, 1.0, 1.0), (2, 2, 2), tag_inlet).unwrap());
        let space = FESpace::new(mesh, ElementKind::Q1, 1).unwrap();
        assert_eq!(space.n_dofs(), 27);
        // the x = 0 face carries 9 vertices
        assert_eq!(space.n_free(), 27 - 9);
    }

    #[test]
    fn q2_node_count_matches_structured_formula() {
        let (nx, ny, nz) = (3usize, 2usize, 1usize);
        let mesh =
            Arc::new(build_box_mesh((3.0, 2.0, 1.0), (nx, ny, nz), tag_inlet).unwrap());
        let space = FESpace::new(mesh, ElementKind::Q2, 3).unwrap();
        let expected = (2 * nx + 1) * (2 * ny + 1) * (2 * nz + 1);
        assert_eq!(space.n_nodes(), expected);
        assert_eq!(space.n_dofs(), 3 * expected);
    }

    #[test]
    fn q2_shared_faces_share_nodes() {
        let mesh = Arc::new(build_box_mesh((2.0, 1.0, 1.0), (2, 1, 1), tag_inlet).unwrap());
        let space = FESpace::new(mesh, ElementKind::Q2, 1).unwrap();
        // +x face nodes of cell 0 must equal -x face nodes of cell 1
        let right: Vec<usize> = face_local_nodes(ElementKind::Q2, 1)
            .iter()
            .map(|&l| space.cell_nodes(0)[l])
            .collect();
        let left: Vec<usize> = face_local_nodes(ElementKind::Q2, 0)
            .iter()
            .map(|&l| space.cell_nodes(1)[l])
            .collect();
        assert_eq!(right, left);
    }

    #[test]
    fn no_penetration_constrains_single_component() {
        let tagger = |c: &[f64; 3], _n: &[f64; 3]| {
            if c[2] == 1.0 {
                BoundaryTag::DirichletNoPen
            } else {
                BoundaryTag::NeumannZero
            }
        };
        let mesh = Arc::new(build_box_mesh((1.0, 1.0, 1.0), (1, 1, 1), tagger).unwrap());
        let space = FESpace::new(mesh, ElementKind::Q1, 3).unwrap();
        // top face has 4 vertices; only the z component is pinned
        let zeroed = space
            .free_indices()
            .len();
        assert_eq!(space.n_dofs() - zeroed, 4);
        for node in 0..8 {
            let z_dof = node * 3 + 2;
            let on_top = space.node_coords(node)[2] == 1.0;
            assert_eq!(space.constraint(z_dof) == Constraint::Zero, on_top);
            assert_eq!(space.constraint(node * 3), Constraint::Free);
        }
    }

    #[test]
    fn p0_has_no_constraints() {
        let mesh = Arc::new(build_box_mesh((1.0, 1.0, 1.0), (2, 2, 1), tag_inlet).unwrap());
        let space = FESpace::new(mesh, ElementKind::P0, 1).unwrap();
        assert_eq!(space.n_dofs(), 4);
        assert_eq!(space.n_free(), 4);
    }
}
