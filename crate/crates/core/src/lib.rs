//! Federated averaging simulator instrumented with mutual-information probes.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which is what the runner uses.

pub mod data;
pub mod error;
pub mod fed;
pub mod mi;
pub mod nn;
pub mod probe;
pub mod scalar;
pub mod seed;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor = nn::Tensor<f64>;
pub type Model = nn::Model<f64>;
pub type ParamVector = nn::ParamVector<f64>;
pub type LabeledDataset = data::LabeledDataset<f64>;
pub type MiEstimate = mi::MiEstimate<f64>;
pub type NodeState = fed::NodeState<f64>;
pub type RoundOutcome = fed::RoundOutcome<f64>;
pub type FedConfig = fed::FedConfig<f64>;

pub type Tensor32 = nn::Tensor<f32>;
pub type Model32 = nn::Model<f32>;
