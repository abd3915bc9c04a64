//! Minimal deterministic neural-network engine: dense/conv/pool/ReLU layers,
//! softmax cross-entropy, plain SGD and flat parameter export/import.

mod kernels;
mod model;
mod spec;
mod tensor;

pub(crate) use model::argmax;
pub use model::{accuracy_on, Model, ParamVector};
pub use spec::{Layer, ModelSpec, ParamSlot};
pub use tensor::Tensor;
