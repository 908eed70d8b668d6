//! Mesh extraction from a UDF lattice with per-cube relative signs.

mod baseline;
mod cube;
mod mesh;
mod table;

pub use baseline::{
    assign_signs_gradient_baseline, count_conflicting_edge_patterns, count_conflicting_edge_patterns_all_edges, edge_relations, gradient_relations, loop_conflicts,
    majority_labels, propagate_relations, IMPLIED_EDGE,
};
pub use cube::{crossing_parameter, cube_crossings, marching_cubes, marching_cubes_at, SignedCube};
pub use mesh::{assign_signs_learned, assign_signs_oracle, extract_mesh, mesh_from_cubes, orient_windings, ExtractionReport, SignSource};
pub use table::{case_index, case_triangles, BOURKE_TO_BIT, EDGE_CORNERS};

#[derive(Debug, thiserror::Error)]
pub enum ExtractError {
    #[error("no cube produced any triangle")]
    NoSurface,
    #[error("sign grid has {0} entries for a lattice of {1} vertices")]
    BadSigns(usize, usize),
    #[error(transparent)]
    Field(#[from] crate::field::FieldError),
    #[error(transparent)]
    Sign(#[from] crate::sign::SignError),
}

impl ExtractError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::NoSurface => "NoSurface",
            Self::BadSigns(..) => "BadSigns",
            Self::Field(e) => e.kind(),
            Self::Sign(e) => e.kind(),
        }
    }
}
