//! Unsigned distance field (UDF) estimation from raw point clouds and mesh
//! extraction with a learned local relative-sign classifier.
//!
//! The crate is organised bottom-up:
//!
//! * [`geom`]: point clouds, meshes, file IO, k-nearest-neighbour search and
//!   the evaluation metrics (Chamfer-L1, normal consistency).
//! * [`autodiff`]: a small define-by-run reverse-mode differentiation engine
//!   over dense `f64` matrices, with Adam and a cosine learning-rate schedule.
//! * [`estimator`]: the self-supervised projection-flow estimator. Queries are
//!   projected onto the surface in two stages; the norm of the displacement
//!   is the UDF value.
//! * [`field`]: lattice evaluation of estimated or analytic fields and the
//!   local cube samples fed to the sign classifier.
//! * [`sign`]: the relative-sign classifier with its three loss variants.
//! * [`extract`]: marching cubes over relative signs, a gradient-voting
//!   baseline and the edge-relation conflict combinatorics.
//! * [`experiment`]: fixtures, end-to-end reconstruction runs and ablations.

pub mod autodiff;
pub mod estimator;
pub mod extract;
pub mod experiment;
pub mod field;
pub mod geom;
pub mod sign;

mod error;

pub use error::{Error, Result};
pub use geom::{Mesh, Metrics, PointCloud, Vec3};
