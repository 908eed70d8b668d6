//! Self-supervised UDF estimation by projection flow.
//!
//! Every query `q` is moved onto the estimated surface in two stages. Stage 1
//! averages plane projections along the learned approaching vectors of the
//! nearest input points. Stage 2 adds a bounded learned correction computed
//! from features interpolated at the stage-1 position. The displacement is the
//! flow; its norm is the UDF value.

mod backbone;
mod config;
mod losses;
mod model;
mod train;
mod upsample;

pub use backbone::{Backbone, PointContext, INPUT_FEATURES};
pub use config::{EstimatorConfig, LossWeights, StageMode};
pub use losses::{chamfer_loss, chamfer_loss_to_cloud, inter_loss, intra_loss, offset_point, total_loss, LossParts};
pub use model::{stage1_project, Encoding, Estimator, ProjectionFlow, ProjectionVars, REFINE_SCALE};
pub use train::{approach_alignment, train_per_shape, train_per_shape_with, train_prior, train_prior_with, write_history_csv, LossRecord, TrainOutput};
pub use upsample::{upsample, UpsampleSet};

#[derive(Debug, thiserror::Error)]
pub enum EstimatorError {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("flow is zero, offset point undefined")]
    ZeroFlow,
    #[error("training diverged at step {step}: non-finite loss")]
    Divergence { step: usize },
    #[error("prior training needs at least two shapes, got {0}")]
    EmptyDataset(usize),
    #[error("bad estimator config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Autodiff(#[from] crate::autodiff::AutodiffError),
    #[error(transparent)]
    Geom(#[from] crate::geom::GeomError),
}

impl EstimatorError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::EmptyCloud => "EmptyCloud",
            Self::ZeroFlow => "ZeroFlow",
            Self::Divergence { .. } => "Divergence",
            Self::EmptyDataset(_) => "EmptyDataset",
            Self::BadConfig(_) => "BadConfig",
            Self::Autodiff(e) => e.kind(),
            Self::Geom(e) => e.kind(),
        }
    }
}
