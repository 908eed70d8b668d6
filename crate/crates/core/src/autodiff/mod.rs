//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Graph`] is rebuilt for every optimisation step: ops append nodes and
//! evaluate eagerly, and [`Graph::gradients`] walks the tape back from a
//! scalar root. Parameters live in a [`ParamStore`] that also carries Adam
//! state.

mod checkpoint;
mod graph;
pub mod nn;
mod params;
mod tensor;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use graph::{Graph, Var};
pub use params::{cosine_lr, Gradients, ParamId, ParamStore, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum AutodiffError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("backward root must be scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("unknown parameter {0}")]
    UnknownParam(String),
    #[error("duplicate parameter {0}")]
    DuplicateParam(String),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl AutodiffError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::ShapeMismatch(_) => "ShapeMismatch",
            Self::NonFinite(_) => "NonFinite",
            Self::NonScalarRoot(_) => "NonScalarRoot",
            Self::UnknownParam(_) => "UnknownParam",
            Self::DuplicateParam(_) => "DuplicateParam",
            Self::Checkpoint(_) => "Checkpoint",
            Self::Io(_) => "Io",
        }
    }
}
