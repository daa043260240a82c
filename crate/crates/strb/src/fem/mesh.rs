//! Hexahedral meshes with tagged boundary facets.
//!
//! Local corner numbering inside a cell is tensorial, `l = ix + 2 iy + 4 iz`
//! on the reference cube `[-1, 1]^3`. Structured box meshes number vertices
//! with the x index slowest, so elongated boxes get a thin matrix band under
//! natural DOF ordering.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    /// Non-homogeneous Dirichlet (value from the parametric datum g).
    Dirichlet,
    /// Homogeneous Dirichlet.
    DirichletZero,
    /// No-penetration: only the normal velocity component is constrained.
    DirichletNoPen,
    /// Non-homogeneous Neumann (value from the parametric datum h).
    Neumann,
    /// Homogeneous Neumann (natural boundary).
    NeumannZero,
}

impl BoundaryTag {
    pub fn name(self) -> &'static str {
        match self {
            BoundaryTag::Dirichlet => "dirichlet",
            BoundaryTag::DirichletZero => "dirichlet_zero",
            BoundaryTag::DirichletNoPen => "dirichlet_nopen",
            BoundaryTag::Neumann => "neumann",
            BoundaryTag::NeumannZero => "neumann_zero",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "dirichlet" => Ok(BoundaryTag::Dirichlet),
            "dirichlet_zero" => Ok(BoundaryTag::DirichletZero),
            "dirichlet_nopen" => Ok(BoundaryTag::DirichletNoPen),
            "neumann" => Ok(BoundaryTag::Neumann),
            "neumann_zero" => Ok(BoundaryTag::NeumannZero),
            _ => Err(Error::Parse(format!("unknown boundary tag `{s}`"))),
        }
    }

    pub fn is_dirichlet(self) -> bool {
        matches!(
            self,
            BoundaryTag::Dirichlet | BoundaryTag::DirichletZero | BoundaryTag::DirichletNoPen
        )
    }
}

/// Local corner lists of the six faces (-x, +x, -y, +y, -z, +z), each a
/// proper cycle of the quad.
pub const FACE_CORNERS: [[usize; 4]; 6] = [
    [0, 4, 6, 2],
    [1, 3, 7, 5],
    [0, 1, 5, 4],
    [2, 6, 7, 3],
    [0, 2, 3, 1],
    [4, 5, 7, 6],
];

#[derive(Debug, Clone)]
pub struct Facet {
    pub cell: usize,
    pub local_face: usize,
    pub vertices: [usize; 4],
    pub tag: BoundaryTag,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<[f64; 3]>,
    pub cells: Vec<[usize; 8]>,
    pub facets: Vec<Facet>,
}

impl Mesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell_centroid(&self, c: usize) -> [f64; 3] {
        let mut out = [0.0; 3];
        for &v in &self.cells[c] {
            for d in 0..3 {
                out[d] += self.vertices[v][d] / 8.0;
            }
        }
        out
    }

    pub fn facet_centroid(&self, f: &Facet) -> [f64; 3] {
        let mut out = [0.0; 3];
        for &v in &f.vertices {
            for d in 0..3 {
                out[d] += self.vertices[v][d] / 4.0;
            }
        }
        out
    }

    /// Outward unit normal of a boundary facet, assuming it is planar
    /// (exact for box meshes; used for tag predicates and no-penetration
    /// component detection).
    pub fn facet_normal(&self, f: &Facet) -> [f64; 3] {
        let p: Vec<[f64; 3]> = f.vertices.iter().map(|&v| self.vertices[v]).collect();
        let e1 = sub(p[1], p[0]);
        let e2 = sub(p[3], p[0]);
        let mut n = cross(e1, e2);
        let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        for d in 0..3 {
            n[d] /= len;
        }
        // orient outward
        let toward = sub(self.facet_centroid(f), self.cell_centroid(f.cell));
        if n[0] * toward[0] + n[1] * toward[1] + n[2] * toward[2] < 0.0 {
            for d in 0..3 {
                n[d] = -n[d];
            }
        }
        n
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Structured hexahedral box `[0,L] x [0,H] x [0,W]` with
/// `n_x * n_y * n_z` cells. Boundary facets are tagged by the predicate,
/// which receives the facet centroid and outward normal.
pub fn build_box_mesh(
    lengths: (f64, f64, f64),
    divisions: (usize, usize, usize),
    tagger: impl Fn(&[f64; 3], &[f64; 3]) -> BoundaryTag,
) -> Result<Mesh> {
    let (lx, ly, lz) = lengths;
    let (nx, ny, nz) = divisions;
    if !(lx > 0.0 && ly > 0.0 && lz > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "box lengths must be positive, got ({lx}, {ly}, {lz})"
        )));
    }
    if nx == 0 || ny == 0 || nz == 0 {
        return Err(Error::InvalidArgument("zero divisions".into()));
    }
    // vertex id: iz fastest, ix slowest
    let vid = |ix: usize, iy: usize, iz: usize| iz + (nz + 1) * (iy + (ny + 1) * ix);
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
    for ix in 0..=nx {
        for iy in 0..=ny {
            for iz in 0..=nz {
                vertices.push([
                    lx * ix as f64 / nx as f64,
                    ly * iy as f64 / ny as f64,
                    lz * iz as f64 / nz as f64,
                ]);
            }
        }
    }
    // keep vertex generation and id function in sync
    debug_assert_eq!(vertices.len(), vid(nx, ny, nz) + 1);
    let mut cells = Vec::with_capacity(nx * ny * nz);
    for ix in 0..nx {
        for iy in 0..ny {
            for iz in 0..nz {
                let mut corners = [0usize; 8];
                for l in 0..8 {
                    let (dx, dy, dz) = (l & 1, (l >> 1) & 1, (l >> 2) & 1);
                    corners[l] = vid(ix + dx, iy + dy, iz + dz);
                }
                cells.push(corners);
            }
        }
    }
    let mut mesh = Mesh {
        vertices,
        cells,
        facets: Vec::new(),
    };
    mesh.facets = boundary_facets(&mesh)
        .into_iter()
        .map(|mut f| {
            f.tag = tagger(&mesh.facet_centroid(&f), &mesh.facet_normal(&f));
            f
        })
        .collect();
    check_positive_volumes(&mesh)?;
    Ok(mesh)
}

/// All cell faces not shared with another cell, untagged.
fn boundary_facets(mesh: &Mesh) -> Vec<Facet> {
    let mut seen: HashMap<[usize; 4], usize> = HashMap::new();
    for cell in &mesh.cells {
        for corners in FACE_CORNERS.iter() {
            let mut key = [
                cell[corners[0]],
                cell[corners[1]],
                cell[corners[2]],
                cell[corners[3]],
            ];
            key.sort_unstable();
            *seen.entry(key).or_insert(0) += 1;
        }
    }
    let mut out = Vec::new();
    for (c, cell) in mesh.cells.iter().enumerate() {
        for (lf, corners) in FACE_CORNERS.iter().enumerate() {
            let verts = [
                cell[corners[0]],
                cell[corners[1]],
                cell[corners[2]],
                cell[corners[3]],
            ];
            let mut key = verts;
            key.sort_unstable();
            if seen[&key] == 1 {
                out.push(Facet {
                    cell: c,
                    local_face: lf,
                    vertices: verts,
                    tag: BoundaryTag::NeumannZero,
                });
            }
        }
    }
    out
}

fn check_positive_volumes(mesh: &Mesh) -> Result<()> {
    for (c, cell) in mesh.cells.iter().enumerate() {
        // signed volume of the trilinear hex at its center
        let p: Vec<[f64; 3]> = cell.iter().map(|&v| mesh.vertices[v]).collect();
        let ex = sub(p[1], p[0]);
        let ey = sub(p[2], p[0]);
        let ez = sub(p[4], p[0]);
        let vol = ex[0] * (ey[1] * ez[2] - ey[2] * ez[1])
            - ex[1] * (ey[0] * ez[2] - ey[2] * ez[0])
            + ex[2] * (ey[0] * ez[1] - ey[1] * ez[0]);
        if vol <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "cell {c} has nonpositive volume {vol}"
            )));
        }
    }
    Ok(())
}

/// Reads the ASCII mesh format:
///
/// ```text
/// STRBMESH1 d=3
/// <n_vertices>
/// x y z                  (one line per vertex)
/// <n_cells>
/// v0 .. v7               (one line per cell, tensor corner order)
/// <n_facets>
/// v0 v1 v2 v3 <tag>      (one line per boundary facet)
/// ```
///
/// Every boundary facet of the mesh must appear exactly once in the list.
pub fn import_mesh<P: AsRef<Path>>(path: P) -> Result<Mesh> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut lines = reader
        .lines()
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header = lines.next().ok_or_else(|| Error::Parse("empty mesh file".into()))?;
    if header != "STRBMESH1 d=3" {
        return Err(Error::Parse(format!("bad mesh header `{header}`")));
    }
    let mut next = || lines.next().ok_or_else(|| Error::Parse("truncated mesh file".into()));
    let nv: usize = next()?.parse().map_err(|e| Error::Parse(format!("vertex count: {e}")))?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let line = next()?;
        let mut it = line.split_whitespace();
        let mut v = [0.0; 3];
        for x in v.iter_mut() {
            *x = it
                .next()
                .ok_or_else(|| Error::Parse("short vertex line".into()))?
                .parse()
                .map_err(|e| Error::Parse(format!("vertex coord: {e}")))?;
        }
        vertices.push(v);
    }
    let nc: usize = next()?.parse().map_err(|e| Error::Parse(format!("cell count: {e}")))?;
    let mut cells = Vec::with_capacity(nc);
    for _ in 0..nc {
        let line = next()?;
        let mut it = line.split_whitespace();
        let mut c = [0usize; 8];
        for x in c.iter_mut() {
            *x = it
                .next()
                .ok_or_else(|| Error::Parse("short cell line".into()))?
                .parse()
                .map_err(|e| Error::Parse(format!("cell vertex: {e}")))?;
        }
        cells.push(c);
    }
    let nf: usize = next()?.parse().map_err(|e| Error::Parse(format!("facet count: {e}")))?;
    let mut tag_by_key: HashMap<[usize; 4], BoundaryTag> = HashMap::new();
    for _ in 0..nf {
        let line = next()?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 5 {
            return Err(Error::Parse(format!("facet line needs 5 tokens: `{line}`")));
        }
        let mut key = [0usize; 4];
        for (x, t) in key.iter_mut().zip(&toks[..4]) {
            *x = t.parse().map_err(|e| Error::Parse(format!("facet vertex: {e}")))?;
        }
        key.sort_unstable();
        let tag = BoundaryTag::parse(toks[4])?;
        if tag_by_key.insert(key, tag).is_some() {
            return Err(Error::Parse(format!("facet {key:?} tagged twice")));
        }
    }
    let mut mesh = Mesh {
        vertices,
        cells,
        facets: Vec::new(),
    };
    let mut facets = boundary_facets(&mesh);
    for f in facets.iter_mut() {
        let mut key = f.vertices;
        key.sort_unstable();
        match tag_by_key.remove(&key) {
            Some(tag) => f.tag = tag,
            None => {
                return Err(Error::Parse(format!(
                    "boundary facet {:?} has no tag in the file",
                    f.vertices
                )))
            }
        }
    }
    if !tag_by_key.is_empty() {
        return Err(Error::Parse(format!(
            "{} tagged facets are not boundary facets of the mesh",
            tag_by_key.len()
        )));
    }
    mesh.facets = facets;
    check_positive_volumes(&mesh)?;
    Ok(mesh)
}

pub fn write_mesh<P: AsRef<Path>>(path: P, mesh: &Mesh) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "STRBMESH1 d=3")?;
    writeln!(f, "{}", mesh.n_vertices())?;
    for v in &mesh.vertices {
        writeln!(f, "{:.17e} {:.17e} {:.17e}", v[0], v[1], v[2])?;
    }
    writeln!(f, "{}", mesh.n_cells())?;
    for c in &mesh.cells {
        let toks: Vec<String> = c.iter().map(|v| v.to_string()).collect();
        writeln!(f, "{}", toks.join(" "))?;
    }
    writeln!(f, "{}", mesh.facets.len())?;
    for facet in &mesh.facets {
        writeln!(
            f,
            "{} {} {} {} {}",
            facet.vertices[0],
            facet.vertices[1],
            facet.vertices[2],
            facet.vertices[3],
            facet.tag.name()
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_cube_counts() {
        let mesh = build_box_mesh((1.0, 1.0, 1.0), (1, 1, 1), |_, _| BoundaryTag::Neumann)
            .unwrap();
        assert_eq!(mesh.n_vertices(), 8);
        assert_eq!(mesh.n_cells(), 1);
        assert_eq!(mesh.facets.len(), 6);
    }

    #[test]
    fn table_scale_box_cell_count() {
        // 4 x 1.5 x 0.2 box with (16, 6, 2) divisions
        let mesh = build_box_mesh((4.0, 1.5, 0.2), (16, 6, 2), |_, _| BoundaryTag::NeumannZero)
            .unwrap();
        assert_eq!(mesh.n_cells(), 192);
    }

    #[test]
    fn negative_length_rejected() {
        assert!(build_box_mesh((-1.0, 1.0, 1.0), (1, 1, 1), |_, _| BoundaryTag::Neumann).is_err());
        assert!(build_box_mesh((1.0, 1.0, 1.0), (0, 1, 1), |_, _| BoundaryTag::Neumann).is_err());
    }

    #[test]
    fn normals_point_outward() {
        let mesh = build_box_mesh((2.0, 1.0, 1.0), (2, 1, 1), |_, _| BoundaryTag::Neumann)
            .unwrap();
        for f in &mesh.facets {
            let n = mesh.facet_normal(f);
            let c = mesh.facet_centroid(f);
            // on a box, outward normal at a face points away from the interior
            let interior = [1.0, 0.5, 0.5];
            let dot: f64 = (0..3).map(|d| n[d] * (c[d] - interior[d])).sum();
            assert!(dot > 0.0);
        }
    }

    #[test]
    fn import_round_trip() {
        let tagger = |c: &[f64; 3], _n: &[f64; 3]| {
            if c[0] == 0.0 {
                BoundaryTag::Dirichlet
            } else {
                BoundaryTag::NeumannZero
            }
        };
        let mesh = build_box_mesh((1.0, 1.0, 1.0), (2, 2, 1), tagger).unwrap();
        let dir = std::env::temp_dir().join("strb_mesh_round_trip.txt");
        write_mesh(&dir, &mesh).unwrap();
        let back = import_mesh(&dir).unwrap();
        assert_eq!(mesh.n_vertices(), back.n_vertices());
        assert_eq!(mesh.cells, back.cells);
        assert_eq!(mesh.facets.len(), back.facets.len());
        for (a, b) in mesh.facets.iter().zip(&back.facets) {
            assert_eq!(a.tag, b.tag);
            assert_eq!(a.vertices, b.vertices);
        }
        std::fs::remove_file(dir).ok();
    }
}
