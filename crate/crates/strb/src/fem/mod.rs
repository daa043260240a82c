//! Minimal finite-element layer: structured hexahedral meshes, nodal spaces
//! (Q1, Q2, P0), tensor Gauss quadrature, parametric field evaluation,
//! operator/vector assembly with strong Dirichlet elimination, and
//! reduced-domain sampled assembly.

mod assemble;
mod data;
mod mesh;
mod quadrature;
mod space;

pub use assemble::{
    assemble_operator, assemble_rhs_neumann, assemble_rhs_sampled, assemble_rhs_volume,
    assemble_sampled, dirichlet_lifting, evaluate_field_at_quadrature, norm_matrix,
    AssembledOperator, Coupling, FieldArg, NormKind, OperatorForm, Pattern, SampledRhsSpec,
};
pub use data::{check_domain, HeatData, ScalarField, StokesData, VectorField};
pub use mesh::{build_box_mesh, import_mesh, write_mesh, BoundaryTag, Facet, Mesh};
pub use quadrature::gauss_1d;
pub use space::{face_local_nodes, Constraint, ElementKind, FESpace};

/// Operators assembled on the free degrees of freedom; the value vector of
/// the CSR storage is the length-`N_z` view MDEIM compresses.
pub type SparseOperator = crate::sparse::CsrMatrix;
