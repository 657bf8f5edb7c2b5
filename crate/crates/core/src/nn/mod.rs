//! Minimal neural-network engine: layers, exact backpropagation, plain SGD.

mod gemm;
pub mod gradcheck;
mod model;
mod params;
mod spec;
mod tensor;

pub use model::{forward, forward_trace, loss, loss_and_grad, Targets, Trace};
pub use params::{apply_sgd, sgd_step, Gradients, ModelParams, ParamEntry, ParamRole};
pub use spec::{InitScheme, Layer, LossKind, ModelSpec};
pub use tensor::Tensor;

#[allow(unused_imports)]
pub(crate) use gemm::gemm;
