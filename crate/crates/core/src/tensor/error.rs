use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("invalid shape {0:?}: rank must be 1-4 with positive extents")]
    InvalidShape(Vec<usize>),
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("{op}: expected rank {expected}, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: cannot broadcast {rhs:?} over {lhs:?}; only Nx Cx1x1 and Nx1xHxW maps are allowed")]
    Broadcast {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("concat: part {index} has shape {shape:?}, expected batch/height/width of {expected:?}")]
    ConcatMismatch {
        index: usize,
        shape: Vec<usize>,
        expected: Vec<usize>,
    },
    #[error("{op}: empty output for input {input:?} with kernel {kernel:?}, pad {pad}, dilation {dilation}")]
    EmptyOutput {
        op: &'static str,
        input: Vec<usize>,
        kernel: Vec<usize>,
        pad: usize,
        dilation: usize,
    },
    #[error("{op}: {detail}")]
    InvalidArgument { op: &'static str, detail: String },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("the tape was consumed by a previous backward pass; record a new forward")]
    TapeConsumed,
    #[error("unknown tensor handle {0}")]
    UnknownVar(usize),
    #[error("non-finite value in {tensor} at flat index {index}")]
    NonFinite { tensor: String, index: usize },
    #[error("missing gradient for parameter `{0}`")]
    MissingGrad(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
}
