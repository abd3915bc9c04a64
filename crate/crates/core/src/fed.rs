//! Barrier-synchronous federated averaging over in-process nodes.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::data::{LabeledDataset, PartitionPlan};
use crate::error::{Error, Result};
use crate::nn::{Model, ModelSpec, ParamVector};
use crate::scalar::Scalar;
use crate::seed::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyncKind {
    /// Average every period and probe it, but never send it back.
    ShadowAverage,
    /// Average every period and replace every node's model with it.
    PeriodicRedistribute,
    /// Train independently; average once after the last batch.
    FinalAverageOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyncPolicy {
    pub kind: SyncKind,
    pub period_batches: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    #[default]
    Uniform,
    /// Weight each node by its local sample count.
    SampleCount,
}

/// Training schedule shared by all nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct FedConfig<T> {
    pub policy: SyncPolicy,
    pub total_epochs: usize,
    pub batch_size: usize,
    pub lr: T,
    /// Drives the per-epoch reshuffle of every node's local data.
    pub seed: u64,
    pub weighting: Weighting,
}

impl<T: Scalar> FedConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.policy.period_batches == 0 {
            return Err(Error::InvalidArgument("period_batches must be >= 1".into()));
        }
        if self.total_epochs == 0 {
            return Err(Error::InvalidArgument("total_epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        if !self.lr.is_finite() || self.lr < T::zero() {
            return Err(Error::InvalidArgument(format!(
                "lr {} must be finite and >= 0",
                self.lr
            )));
        }
        Ok(())
    }
}

/// Position in a node's epoch-by-epoch pass over its local data.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochCursor {
    pub epoch: usize,
    pub position: usize,
    order: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeState<T> {
    pub node_id: usize,
    pub model: Model<T>,
    pub local_indices: Vec<usize>,
    pub batches_done: usize,
    pub cursor: EpochCursor,
}

impl<T: Scalar> NodeState<T> {
    pub fn batches_per_epoch(&self, batch_size: usize) -> usize {
        self.local_indices.len().div_ceil(batch_size)
    }

    fn total_batches(&self, cfg: &FedConfig<T>) -> usize {
        self.batches_per_epoch(cfg.batch_size) * cfg.total_epochs
    }

    fn finished(&self, cfg: &FedConfig<T>) -> bool {
        self.cursor.epoch >= cfg.total_epochs
    }

    fn reshuffle(&mut self, seed: u64) {
        self.cursor.order = self.local_indices.clone();
        let stream = ((self.node_id as u64) << 32) | self.cursor.epoch as u64;
        self.cursor
            .order
            .shuffle(&mut rng_for(seed, "epoch-shuffle", stream));
    }

    /// Runs up to `max_steps` SGD steps; returns `(steps, mean loss)`.
    fn train(
        &mut self,
        data: &LabeledDataset<T>,
        cfg: &FedConfig<T>,
        max_steps: usize,
    ) -> Result<(usize, f64)> {
        let mut steps = 0;
        let mut loss_sum = 0.0;
        while steps < max_steps && !self.finished(cfg) {
            if self.cursor.position == 0 {
                self.reshuffle(cfg.seed);
            }
            let start = self.cursor.position;
            let end = (start + cfg.batch_size).min(self.cursor.order.len());
            let (batch, labels) = data.batch(&self.cursor.order[start..end]);
            loss_sum += self.model.sgd_step(&batch, &labels, cfg.lr)?.as_f64();
            steps += 1;
            self.batches_done += 1;
            if end == self.cursor.order.len() {
                self.cursor.epoch += 1;
                self.cursor.position = 0;
            } else {
                self.cursor.position = end;
            }
        }
        let mean = if steps > 0 {
            loss_sum / steps as f64
        } else {
            0.0
        };
        Ok((steps, mean))
    }
}

/// Gives every node a bit-identical copy of `Model::init(spec, init_seed)`.
pub fn make_nodes<T: Scalar>(
    spec: &ModelSpec,
    plan: &PartitionPlan,
    dataset: &LabeledDataset<T>,
    init_seed: u64,
) -> Result<Vec<NodeState<T>>> {
    if plan.assignments.is_empty() {
        return Err(Error::InvalidArgument("partition plan has no nodes".into()));
    }
    if spec.input_shape() != dataset.sample_shape() {
        return Err(Error::ShapeMismatch {
            expected: spec.input_shape().to_vec(),
            actual: dataset.sample_shape().to_vec(),
        });
    }
    if spec.num_classes() != dataset.num_classes() {
        return Err(Error::InvalidArgument(format!(
            "model predicts {} classes, dataset has {}",
            spec.num_classes(),
            dataset.num_classes()
        )));
    }
    let model = Model::init(spec.clone(), init_seed);
    plan.assignments
        .iter()
        .enumerate()
        .map(|(node_id, idx)| {
            if idx.is_empty() {
                return Err(Error::EmptyNode { node: node_id });
            }
            if let Some(&bad) = idx.iter().find(|&&i| i >= dataset.len()) {
                return Err(Error::InvalidArgument(format!(
                    "node {node_id} references sample {bad} beyond dataset size {}",
                    dataset.len()
                )));
            }
            Ok(NodeState {
                node_id,
                model: model.clone(),
                local_indices: idx.clone(),
                batches_done: 0,
                cursor: EpochCursor {
                    epoch: 0,
                    position: 0,
                    order: Vec::new(),
                },
            })
        })
        .collect()
}

/// Element-wise arithmetic mean of the parameters, summed in slice order.
pub fn average_params<T: Scalar>(models: &[&Model<T>]) -> Result<Model<T>> {
    weighted_average(models, None)
}

fn weighted_average<T: Scalar>(models: &[&Model<T>], weights: Option<&[f64]>) -> Result<Model<T>> {
    let first = *models.first().ok_or(Error::Empty("model list"))?;
    for m in &models[1..] {
        if let Some(layer) = first.spec().first_difference(m.spec()) {
            return Err(Error::ModelMismatch {
                layer,
                reason: "model specs differ".into(),
            });
        }
    }
    let mut acc = vec![T::zero(); first.params().len()];
    match weights {
        None => {
            for m in models {
                for (a, &v) in acc.iter_mut().zip(m.params().as_slice()) {
                    *a += v;
                }
            }
            let n = T::from_usize_lossy(models.len());
            acc.iter_mut().for_each(|a| *a /= n);
        }
        Some(w) => {
            let total: f64 = w.iter().sum();
            for (m, &wk) in models.iter().zip(w) {
                let wk = T::from_f64_lossy(wk / total);
                for (a, &v) in acc.iter_mut().zip(m.params().as_slice()) {
                    *a += wk * v;
                }
            }
        }
    }
    Model::from_params(first.spec().clone(), ParamVector::new(acc))
}

/// State at one aggregation point.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome<T> {
    pub round_index: usize,
    pub global_model: Model<T>,
    /// `(node_id, model)` in ascending node id order.
    pub per_node_models: Vec<(usize, Model<T>)>,
    pub batches_per_node_this_round: Vec<usize>,
    pub batches_done: Vec<usize>,
    pub mean_loss_per_node: Vec<f64>,
    pub is_final: bool,
}

/// Round-by-round driver. Nodes train in parallel between barriers; every
/// reduction runs in node id order, so the result does not depend on thread
/// scheduling.
pub struct Simulation<'a, T> {
    nodes: Vec<NodeState<T>>,
    data: &'a LabeledDataset<T>,
    cfg: FedConfig<T>,
    round: usize,
}

impl<'a, T: Scalar> Simulation<'a, T> {
    pub fn new(
        mut nodes: Vec<NodeState<T>>,
        data: &'a LabeledDataset<T>,
        cfg: FedConfig<T>,
    ) -> Result<Self> {
        cfg.validate()?;
        let first = nodes.first().ok_or(Error::Empty("node list"))?;
        for n in &nodes[1..] {
            if let Some(layer) = first.model.spec().first_difference(n.model.spec()) {
                return Err(Error::ModelMismatch {
                    layer,
                    reason: format!("node {} has a different spec", n.node_id),
                });
            }
        }
        nodes.sort_by_key(|n| n.node_id);
        Ok(Self {
            nodes,
            data,
            cfg,
            round: 0,
        })
    }

    pub fn nodes(&self) -> &[NodeState<T>] {
        &self.nodes
    }

    pub fn config(&self) -> &FedConfig<T> {
        &self.cfg
    }

    pub fn is_done(&self) -> bool {
        self.nodes.iter().all(|n| n.finished(&self.cfg))
    }

    /// Number of aggregation points the full run will produce.
    pub fn planned_rounds(&self) -> usize {
        let longest = self
            .nodes
            .iter()
            .map(|n| n.total_batches(&self.cfg))
            .max()
            .unwrap_or(0);
        match self.cfg.policy.kind {
            SyncKind::FinalAverageOnly => 1,
            _ => longest.div_ceil(self.cfg.policy.period_batches),
        }
    }

    /// Advances to the next aggregation point. Returns `None` once training
    /// is complete.
    pub fn next_round(&mut self) -> Result<Option<RoundOutcome<T>>> {
        if self.is_done() {
            return Ok(None);
        }
        let round = self.round;
        let steps = match self.cfg.policy.kind {
            SyncKind::FinalAverageOnly => usize::MAX,
            _ => self.cfg.policy.period_batches,
        };
        let data = self.data;
        let cfg = &self.cfg;
        let results: Vec<Result<(usize, f64)>> = self
            .nodes
            .par_iter_mut()
            .map(|n| n.train(data, cfg, steps))
            .collect();
        let mut stepped = Vec::with_capacity(results.len());
        let mut losses = Vec::with_capacity(results.len());
        for r in results {
            let (s, l) = r.map_err(|e| Error::Round {
                round,
                source: Box::new(e),
            })?;
            stepped.push(s);
            losses.push(l);
        }

        let models: Vec<&Model<T>> = self.nodes.iter().map(|n| &n.model).collect();
        let global = match self.cfg.weighting {
            Weighting::Uniform => average_params(&models)?,
            Weighting::SampleCount => {
                let w: Vec<f64> = self
                    .nodes
                    .iter()
                    .map(|n| n.local_indices.len() as f64)
                    .collect();
                weighted_average(&models, Some(&w))?
            }
        };
        let per_node_models = self
            .nodes
            .iter()
            .map(|n| (n.node_id, n.model.clone()))
            .collect();
        let batches_done = self.nodes.iter().map(|n| n.batches_done).collect();
        if self.cfg.policy.kind == SyncKind::PeriodicRedistribute {
            for n in &mut self.nodes {
                n.model = global.clone();
            }
        }
        self.round += 1;
        Ok(Some(RoundOutcome {
            round_index: round,
            global_model: global,
            per_node_models,
            batches_per_node_this_round: stepped,
            batches_done,
            mean_loss_per_node: losses,
            is_final: self.is_done(),
        }))
    }
}

/// Runs the whole schedule, calling `probe_hook` after every aggregation.
pub fn train_rounds<T: Scalar>(
    nodes: Vec<NodeState<T>>,
    data: &LabeledDataset<T>,
    cfg: FedConfig<T>,
    mut probe_hook: impl FnMut(&RoundOutcome<T>) -> Result<()>,
) -> Result<Vec<RoundOutcome<T>>> {
    let mut sim = Simulation::new(nodes, data, cfg)?;
    let mut out = Vec::new();
    while let Some(outcome) = sim.next_round()? {
        probe_hook(&outcome)?;
        out.push(outcome);
    }
    Ok(out)
}
