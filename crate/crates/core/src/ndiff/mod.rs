//! A small reverse-mode differentiation engine specialised for causal
//! convolutional networks over `f64` sequences.

mod activation;
mod conv;
mod network;
mod optim;
mod params;
mod tape;
mod tensor;

pub use activation::{sigmoid, Activation, LOGIT_EPS};
pub use conv::causal_conv1d;
pub use network::{Binding, Forward, LayerKind, LayerSpec, Network, NetworkSpec};
pub use optim::{Adam, AdamConfig, Optimizer, Sgd};
pub use params::{GradStore, ParamEntry, ParamStore};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum NdiffError {
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch { expected: Vec<usize>, found: Vec<usize> },
    #[error("expected a rank-{expected} tensor, found rank {found}")]
    Rank { expected: usize, found: usize },
    #[error("empty sequence")]
    EmptySequence,
    #[error("empty kernel")]
    EmptyKernel,
    #[error("input of length {found} is shorter than the receptive field {needed}")]
    InputTooShort { needed: usize, found: usize },
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("parameter layouts differ")]
    LayoutMismatch,
    #[error("tape recorded parameters at version {recorded}, store is at version {current}")]
    StaleTape { recorded: u64, current: u64 },
    #[error("parameter store was not used on this tape")]
    StoreNotOnTape,
    #[error("variable does not belong to this tape")]
    ForeignVar,
    #[error("invalid network: {0}")]
    InvalidSpec(String),
    #[error("network is not piecewise linear")]
    NotPiecewiseLinear,
    #[error("divergence detected at step {step}: non-finite gradient")]
    NonFinite { step: usize },
}
