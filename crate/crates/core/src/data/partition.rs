use rand::seq::SliceRandom;

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionMode {
    /// Global shuffle, then equal contiguous splits.
    Iid,
    /// Node `k` owns classes `[k * cpn, (k + 1) * cpn)`.
    LabelShard { classes_per_node: usize },
}

/// Assignment of dataset indices to nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionPlan {
    pub mode: PartitionMode,
    pub assignments: Vec<Vec<usize>>,
    pub seed: u64,
}

impl PartitionPlan {
    pub fn n_nodes(&self) -> usize {
        self.assignments.len()
    }

    pub fn classes_per_node(&self) -> Option<usize> {
        match self.mode {
            PartitionMode::Iid => None,
            PartitionMode::LabelShard { classes_per_node } => Some(classes_per_node),
        }
    }
}

pub fn partition<T: Scalar>(
    dataset: &LabeledDataset<T>,
    n_nodes: usize,
    mode: PartitionMode,
    seed: u64,
) -> Result<PartitionPlan> {
    if n_nodes == 0 {
        return Err(Error::InvalidArgument(
            "partition needs at least one node".into(),
        ));
    }
    let assignments = match mode {
        PartitionMode::Iid => {
            let mut idx = dataset.all_indices();
            idx.shuffle(&mut rng_for(seed, "partition-iid", 0));
            let base = idx.len() / n_nodes;
            let extra = idx.len() % n_nodes;
            let mut out = Vec::with_capacity(n_nodes);
            let mut start = 0;
            for k in 0..n_nodes {
                let len = base + usize::from(k < extra);
                out.push(idx[start..start + len].to_vec());
                start += len;
            }
            out
        }
        PartitionMode::LabelShard { classes_per_node } => {
            if classes_per_node == 0 || n_nodes * classes_per_node > dataset.num_classes() {
                return Err(Error::InvalidArgument(format!(
                    "label shards need n_nodes x classes_per_node <= num_classes \
                     ({n_nodes} x {classes_per_node} vs {} classes)",
                    dataset.num_classes()
                )));
            }
            (0..n_nodes)
                .map(|k| {
                    let classes = k * classes_per_node..(k + 1) * classes_per_node;
                    let mut idx: Vec<usize> = (0..dataset.len())
                        .filter(|&i| classes.contains(&dataset.label(i)))
                        .collect();
                    idx.shuffle(&mut rng_for(seed, "partition-shard", k as u64));
                    idx
                })
                .collect()
        }
    };
    Ok(PartitionPlan {
        mode,
        assignments,
        seed,
    })
}
