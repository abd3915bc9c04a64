//! Measurements taken at every aggregation point, and the CSV event log.

use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index::sample;
use rayon::prelude::*;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::fed::RoundOutcome;
use crate::mi::{estimate_mi, one_hot, MiConfig};
use crate::nn::{argmax, Model, Tensor};
use crate::scalar::Scalar;
use crate::seed::rng_for;

pub const LOG_HEADER: &str =
    "round,model_kind,probe_dataset,mi_zx_nats,mi_zy_nats,accuracy,n_probe";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputProjection {
    /// MI(Z;X) against the raw inputs flattened to vectors.
    Flatten,
    /// Skip MI(Z;X); the record carries NaN.
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    /// Evaluation indices per node (usually the node's local dataset).
    pub probe_sets: Vec<Vec<usize>>,
    /// Samples drawn per probe set per round; capped by the set size.
    pub subsample: usize,
    pub mi: MiConfig,
    pub input_projection: InputProjection,
    /// Drives the per-round subsample draw.
    pub seed: u64,
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.subsample < 2 {
            return Err(Error::InvalidArgument(
                "probe subsample must be >= 2".into(),
            ));
        }
        if let Some(k) = self.probe_sets.iter().position(|s| s.len() < 2) {
            return Err(Error::InvalidArgument(format!(
                "probe set {k} has fewer than 2 samples"
            )));
        }
        self.mi.validate()
    }

    /// Deterministic subsample of probe set `k` for round `round`, in
    /// ascending index order.
    pub fn draw(&self, round: usize, k: usize) -> Vec<usize> {
        let set = &self.probe_sets[k];
        if self.subsample >= set.len() {
            return set.clone();
        }
        let mut rng = rng_for(self.seed, "probe-draw", ((round as u64) << 16) | k as u64);
        let mut picked: Vec<usize> = sample(&mut rng, set.len(), self.subsample).into_vec();
        picked.sort_unstable();
        picked.into_iter().map(|i| set[i]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModelKind {
    Local(usize),
    Global,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::Local(k) => write!(f, "local{k}"),
            ModelKind::Global => f.write_str("global"),
        }
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "global" {
            return Ok(ModelKind::Global);
        }
        s.strip_prefix("local")
            .and_then(|k| k.parse().ok())
            .map(ModelKind::Local)
            .ok_or_else(|| format!("unknown model kind {s:?}"))
    }
}

/// One row of the experiment log.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationRecord {
    pub round: usize,
    pub model_kind: ModelKind,
    pub probe_dataset: usize,
    pub mi_zx_nats: f64,
    pub mi_zy_nats: f64,
    pub accuracy: f64,
    pub n_probe: usize,
}

/// Representation, MI and accuracy of one model on one probe subset.
pub fn probe_model<T: Scalar>(
    model: &Model<T>,
    data: &LabeledDataset<T>,
    indices: &[usize],
    mi: &MiConfig,
    projection: InputProjection,
) -> Result<(f64, f64, f64)> {
    let (inputs, labels) = data.batch(indices);
    let (logits, z) = model.forward(&inputs)?;
    let hits = logits
        .iter_rows()
        .zip(&labels)
        .filter(|(row, &l)| argmax(row) == l)
        .count();
    let accuracy = hits as f64 / labels.len() as f64;
    let mi_zx = match projection {
        InputProjection::Flatten => {
            let flat = Tensor::new(vec![indices.len(), data.sample_len()], inputs.into_data())?;
            estimate_mi(&z, &flat, mi)?.value_nats.as_f64()
        }
        InputProjection::None => f64::NAN,
    };
    let y = one_hot::<T>(&labels, data.num_classes());
    let mi_zy = estimate_mi(&z, &y, mi)?.value_nats.as_f64();
    Ok((mi_zx, mi_zy, accuracy))
}

/// Probes every local model and the global model on every node's probe set.
/// Records come out ordered by (model kind, probe set), locals first.
pub fn probe_round<T: Scalar>(
    outcome: &RoundOutcome<T>,
    data: &LabeledDataset<T>,
    cfg: &ProbeConfig,
) -> Result<Vec<AggregationRecord>> {
    cfg.validate()?;
    let round = outcome.round_index;
    let mut models: Vec<(ModelKind, &Model<T>)> = outcome
        .per_node_models
        .iter()
        .map(|(id, m)| (ModelKind::Local(*id), m))
        .collect();
    models.push((ModelKind::Global, &outcome.global_model));

    let subsets: Vec<Vec<usize>> = (0..cfg.probe_sets.len())
        .map(|k| cfg.draw(round, k))
        .collect();
    let jobs: Vec<(ModelKind, &Model<T>, usize)> = models
        .iter()
        .flat_map(|&(kind, m)| (0..subsets.len()).map(move |k| (kind, m, k)))
        .collect();

    jobs.par_iter()
        .map(|&(kind, model, k)| {
            let idx = &subsets[k];
            let (mi_zx, mi_zy, accuracy) =
                probe_model(model, data, idx, &cfg.mi, cfg.input_projection).map_err(|e| {
                    Error::Probe {
                        round,
                        model: kind.to_string(),
                        source: Box::new(e),
                    }
                })?;
            Ok(AggregationRecord {
                round,
                model_kind: kind,
                probe_dataset: k,
                mi_zx_nats: mi_zx,
                mi_zy_nats: mi_zy,
                accuracy,
                n_probe: idx.len(),
            })
        })
        .collect()
}

fn format_row(r: &AggregationRecord) -> String {
    format!(
        "{},{},{},{:.6},{:.6},{:.6},{}\n",
        r.round, r.model_kind, r.probe_dataset, r.mi_zx_nats, r.mi_zy_nats, r.accuracy, r.n_probe
    )
}

/// Writes a fresh log: header plus one row per record.
pub fn write_log(records: &[AggregationRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(LOG_HEADER);
    out.push('\n');
    records.iter().for_each(|r| out.push_str(&format_row(r)));
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Appends rows, writing the header first if the file is new or empty.
pub fn append_log(records: &[AggregationRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let empty = file.metadata().map_err(|e| Error::io(path, e))?.len() == 0;
    let mut out = String::new();
    if empty {
        out.push_str(LOG_HEADER);
        out.push('\n');
    }
    records.iter().for_each(|r| out.push_str(&format_row(r)));
    file.write_all(out.as_bytes())
        .map_err(|e| Error::io(path, e))
}

pub fn parse_log(text: &str) -> Result<Vec<AggregationRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == LOG_HEADER => {}
        _ => {
            return Err(Error::LogParse {
                line: 1,
                reason: format!("expected header {LOG_HEADER:?}"),
            })
        }
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| Error::LogParse {
            line: line_no,
            reason,
        };
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != 7 {
            return Err(bad(format!("expected 7 fields, found {}", fields.len())));
        }
        let int = |s: &str, name: &str| {
            s.parse::<usize>()
                .map_err(|_| bad(format!("bad {name} {s:?}")))
        };
        let float = |s: &str, name: &str| {
            s.parse::<f64>()
                .map_err(|_| bad(format!("bad {name} {s:?}")))
        };
        records.push(AggregationRecord {
            round: int(fields[0], "round")?,
            model_kind: fields[1].parse().map_err(bad)?,
            probe_dataset: int(fields[2], "probe_dataset")?,
            mi_zx_nats: float(fields[3], "mi_zx_nats")?,
            mi_zy_nats: float(fields[4], "mi_zy_nats")?,
            accuracy: float(fields[5], "accuracy")?,
            n_probe: int(fields[6], "n_probe")?,
        });
    }
    Ok(records)
}

pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<AggregationRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_log(&text)
}
