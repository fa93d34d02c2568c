//! Dense arrays, reverse-mode gradients and the optimizer used for training.

mod adam;
mod gradcheck;
mod params;
mod rng;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{finite_diff_check, finite_diff_check_coords};
pub use params::{glorot_uniform, ParamStore};
pub use rng::SeededRng;
pub use tape::{sigmoid, softplus, Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NumericsError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: [usize; 2],
        rhs: [usize; 2],
    },
    #[error("shape {shape:?} needs {} values, got {len}", shape[0] * shape[1])]
    DataLength { shape: [usize; 2], len: usize },
    #[error("tensor extents must be positive, got {rows}x{cols}")]
    EmptyShape { rows: usize, cols: usize },
    #[error("rows have differing lengths")]
    RaggedRows,
    #[error("expected a scalar, got shape {shape:?}")]
    NotScalar { shape: [usize; 2] },
    #[error("attention needs a positive feature dimension and at least one key (d = {d}, keys = {n_keys})")]
    EmptyAttention { d: usize, n_keys: usize },
    #[error("{op}: index {index} out of range for extent {extent}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        extent: usize,
    },
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("learning rate must be positive, got {0}")]
    InvalidLearningRate(f64),
    #[error("finite-difference step must lie in (0, 1e-2], got {0}")]
    InvalidStep(f64),
    #[error("non-finite function value while probing coordinate {coord}")]
    NonFinite { coord: usize },
    #[error("parameter `{0}` has no matching gradient or optimizer state")]
    MissingEntry(String),
}
