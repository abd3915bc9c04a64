//! Datasets: the in-memory labeled sample store, the CIFAR-10 binary reader,
//! a synthetic Gaussian-class generator and node partitioning.

mod cifar;
mod dataset;
mod partition;
mod synth;

pub use cifar::{encode_record, load_cifar10, load_cifar10_test, parse_records, RECORD_LEN};
pub use dataset::{accuracy, LabeledDataset};
pub use partition::{partition, PartitionMode, PartitionPlan};
pub use synth::{synth_gaussian_classes, SynthParams};
