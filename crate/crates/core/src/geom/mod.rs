//! Point clouds, triangle meshes and the geometry every other module consumes.

mod io;
mod knn;
mod metrics;
mod normalize;
mod normals;
mod sampling;
pub mod vec3;

pub use io::{load_obj_mesh, load_point_cloud, parse_obj, parse_obj_mesh, parse_ply, parse_xyz, write_obj, write_ply_binary, write_xyz};
pub use knn::KnnIndex;
pub use metrics::{chamfer_l1, normal_consistency, Metrics};
pub use normalize::{normalize_to_unit_cube, UnitCubeTransform, UNIT_CUBE_MARGIN};
pub use normals::{orient_normals, pca_normal, surface_variation, PcaNormals};
pub use sampling::sample_mesh_surface;

use thiserror::Error;

/// A point in R³.
pub type Vec3 = [f64; 3];

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("mesh has no triangles")]
    EmptyMesh,
    #[error("all points coincide; extent is degenerate")]
    DegenerateExtent,
    #[error("normals are required but missing")]
    MissingNormals,
    #[error("unsupported file format: {0}")]
    UnsupportedFormat(String),
    #[error("invalid geometry: {0}")]
    Invalid(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl GeomError {
    pub fn kind(&self) -> &'static str {
        match self {
            GeomError::Parse { .. } => "ParseError",
            GeomError::EmptyCloud => "EmptyCloud",
            GeomError::EmptyMesh => "EmptyMesh",
            GeomError::DegenerateExtent => "DegenerateExtent",
            GeomError::MissingNormals => "MissingNormals",
            GeomError::UnsupportedFormat(_) => "UnsupportedFormat",
            GeomError::Invalid(_) => "InvalidGeometry",
            GeomError::Io(_) => "Io",
        }
    }
}

/// A set of 3D samples, optionally carrying unit normals.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub normals: Option<Vec<Vec3>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        Self { points, normals: None }
    }

    /// Builds a cloud with normals. Normals are renormalised to unit length.
    pub fn with_normals(points: Vec<Vec3>, normals: Vec<Vec3>) -> Result<Self, GeomError> {
        if points.len() != normals.len() {
            return Err(GeomError::Invalid(format!(
                "{} points but {} normals",
                points.len(),
                normals.len()
            )));
        }
        let normals = normals
            .into_iter()
            .map(|n| {
                let len = vec3::norm(n);
                if len > 0.0 {
                    Ok(vec3::scale(n, 1.0 / len))
                } else {
                    Err(GeomError::Invalid("zero-length normal".into()))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { points, normals: Some(normals) })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Axis-aligned bounding box `(min, max)`, or `None` for an empty cloud.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.points.first()?;
        let mut lo = first;
        let mut hi = first;
        for p in &self.points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        Some((lo, hi))
    }

    pub fn is_finite(&self) -> bool {
        self.points.iter().flatten().all(|v| v.is_finite())
    }
}

/// Indexed triangle mesh. Orientation is only locally consistent.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
}

impl Mesh {
    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (a, b, c) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        0.5 * vec3::norm(vec3::cross(vec3::sub(b, a), vec3::sub(c, a)))
    }

    /// Unit normal of triangle `t` following its winding; zero for degenerate triangles.
    pub fn triangle_normal(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.triangles[t];
        let (a, b, c) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        vec3::normalize_or_zero(vec3::cross(vec3::sub(b, a), vec3::sub(c, a)))
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Checks index bounds and rejects triangles with area below `1e-12`.
    pub fn validate(&self) -> Result<(), GeomError> {
        let n = self.vertices.len();
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(GeomError::Invalid(format!("triangle {t} indexes past {n} vertices")));
            }
            if self.triangle_area(t) <= 1e-12 {
                return Err(GeomError::Invalid(format!("triangle {t} is degenerate")));
            }
        }
        Ok(())
    }

    /// Undirected edges used by exactly one triangle.
    pub fn boundary_edge_count(&self) -> usize {
        let mut counts = std::collections::HashMap::new();
        for tri in &self.triangles {
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_insert(0usize) += 1;
            }
        }
        counts.values().filter(|&&c| c == 1).count()
    }

    /// V − E + F over the referenced vertices.
    pub fn euler_characteristic(&self) -> i64 {
        let mut edges = std::collections::HashSet::new();
        let mut used = std::collections::HashSet::new();
        for tri in &self.triangles {
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                edges.insert((a.min(b), a.max(b)));
                used.insert(a);
            }
        }
        used.len() as i64 - edges.len() as i64 + self.triangles.len() as i64
    }
}
