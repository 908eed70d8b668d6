//! Regular-lattice fields (estimated or analytic), near-surface cube
//! selection and the local 4×5×5×5 samples consumed by the sign classifier.
//!
//! A sign cube is anchored at the minimum corner of its 5³ window. Its eight
//! corners sit at window offsets 1 and 3 on each axis, so a cube spans two
//! lattice steps and flips or quarter turns about the window centre map
//! corners onto corners.

mod cubes;
mod dump;
mod grid;
mod shapes;

pub(crate) use cubes::augment_with;
pub use cubes::{augment, cube_anchors, extract_cube_sample, near_surface_cubes, CubeSample, Symmetry, CUBE_SIDE, NEAR_SURFACE_THRESHOLD, WINDOW};
pub use dump::{read_grid, slice, slice_relative_l1, write_grid, write_slice_csv, write_slice_pgm, GRID_MAGIC};
pub use grid::{analytic_sign_grid, analytic_udf_grid, evaluate_grid, evaluate_grid_with, Bounds, UdfGrid};
pub use shapes::AnalyticShape;

#[derive(Debug, thiserror::Error)]
pub enum FieldError {
    #[error("point cloud leaves the grid bounds")]
    OutOfBounds,
    #[error("cube window at {0:?} leaves the grid")]
    OutOfRange([usize; 3]),
    #[error("signs are undefined for the open surface {0}")]
    UndefinedSign(&'static str),
    #[error("grid resolution {0} is below the minimum of 8")]
    Resolution(usize),
    #[error("bad shape: {0}")]
    BadShape(String),
    #[error("bad grid data: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Estimator(#[from] crate::estimator::EstimatorError),
}

impl FieldError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::OutOfBounds => "OutOfBounds",
            Self::OutOfRange(_) => "OutOfRange",
            Self::UndefinedSign(_) => "UndefinedSign",
            Self::Resolution(_) => "Resolution",
            Self::BadShape(_) => "BadShape",
            Self::Format(_) => "Format",
            Self::Io(_) => "Io",
            Self::Estimator(e) => e.kind(),
        }
    }
}
