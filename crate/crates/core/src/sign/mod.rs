//! Local relative-sign classifier: predicts the inside/outside signs of a
//! cube's eight corners, up to a global flip, from a 4×5×5×5 UDF sample.

mod dataset;
mod labels;
mod losses;
mod net;
mod train;

pub use dataset::{harvest, harvest_from_grid, Provenance, SignDataset};
pub use labels::{accuracy, class_of, decode_class, pair_relations, signs_from_pairs, to_bits, PAIRS, SIGN_CLASSES};
pub use losses::{loss_l1, loss_l2, loss_l3};
pub use net::{Head, SignConfig, SignNet, SignPrediction};
pub use train::{train_sign_net, train_sign_net_with, SignTrainOutput};

#[derive(Debug, thiserror::Error)]
pub enum SignError {
    #[error("class index {0} outside [0, 128)")]
    BadClass(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("sign dataset is empty")]
    EmptyDataset,
    #[error("sign training diverged at step {step}: non-finite loss")]
    Divergence { step: usize },
    #[error("bad sign config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Autodiff(#[from] crate::autodiff::AutodiffError),
    #[error(transparent)]
    Field(#[from] crate::field::FieldError),
    #[error(transparent)]
    Geom(#[from] crate::geom::GeomError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl SignError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::BadClass(_) => "BadClass",
            Self::ShapeMismatch(_) => "ShapeMismatch",
            Self::EmptyDataset => "EmptyDataset",
            Self::Divergence { .. } => "Divergence",
            Self::BadConfig(_) => "BadConfig",
            Self::Autodiff(e) => e.kind(),
            Self::Field(e) => e.kind(),
            Self::Geom(e) => e.kind(),
            Self::Io(_) => "Io",
        }
    }
}
