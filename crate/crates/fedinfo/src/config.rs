//! `key = value` run configuration.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use fedinfo_core::data::PartitionMode;
use fedinfo_core::fed::{SyncKind, Weighting};
use fedinfo_core::mi::{MiConfig, Resolution};
use fedinfo_core::probe::InputProjection;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`, found {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` set twice")]
    Duplicate { line: usize, key: String },
    #[error("invalid `{field}`: {reason}")]
    Field { field: &'static str, reason: String },
}

fn field(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    Synth {
        classes: usize,
        per_class: usize,
        dim: usize,
    },
    Cifar10(PathBuf),
}

impl DatasetSpec {
    pub fn parse(s: &str) -> Result<Self, String> {
        if let Some(rest) = s.strip_prefix("synth:") {
            let parts: Vec<&str> = rest.split('x').collect();
            let nums: Option<Vec<usize>> = parts.iter().map(|p| p.trim().parse().ok()).collect();
            match nums.as_deref() {
                Some(&[classes, per_class, dim]) if classes > 0 && per_class > 0 && dim > 0 => {
                    Ok(DatasetSpec::Synth {
                        classes,
                        per_class,
                        dim,
                    })
                }
                _ => Err(format!(
                    "expected synth:<classes>x<per_class>x<dim> with positive counts, found {s:?}"
                )),
            }
        } else if let Some(dir) = s.strip_prefix("cifar10:") {
            if dir.is_empty() {
                return Err("cifar10: needs a directory".into());
            }
            Ok(DatasetSpec::Cifar10(PathBuf::from(dir)))
        } else {
            Err(format!(
                "expected synth:<c>x<n>x<d> or cifar10:<dir>, found {s:?}"
            ))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelName {
    Lenet,
    MlpSmall,
}

/// A fully validated run description.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetSpec,
    pub synth_spread: f64,
    pub model: ModelName,
    pub nodes: usize,
    pub partition: PartitionMode,
    pub policy: SyncKind,
    pub period_batches: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weighting: Weighting,
    pub init_seed: u64,
    pub data_seed: u64,
    pub probe_subsample: usize,
    pub probe_input: InputProjection,
    pub mi: MiConfig,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::Synth {
                classes: 10,
                per_class: 400,
                dim: 32,
            },
            synth_spread: 0.3,
            model: ModelName::MlpSmall,
            nodes: 2,
            partition: PartitionMode::Iid,
            policy: SyncKind::ShadowAverage,
            period_batches: 100,
            epochs: 3,
            batch_size: 32,
            lr: 0.01,
            weighting: Weighting::Uniform,
            init_seed: 0,
            data_seed: 0,
            probe_subsample: 2000,
            probe_input: InputProjection::Flatten,
            mi: MiConfig::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

const KEYS: &[&str] = &[
    "dataset",
    "synth_spread",
    "model",
    "nodes",
    "partition",
    "classes_per_node",
    "policy",
    "period_batches",
    "epochs",
    "batch_size",
    "lr",
    "weighting",
    "seed",
    "init_seed",
    "data_seed",
    "hash_seed",
    "probe_subsample",
    "probe_input",
    "mi_epsilons",
    "mi_epsilon_mode",
    "mi_max_buckets",
    "output_dir",
];

fn positive(name: &'static str, v: &str) -> Result<usize, ConfigError> {
    match v.parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(field(
            name,
            format!("expected a positive integer, found {v:?}"),
        )),
    }
}

fn seed(name: &'static str, v: &str) -> Result<u64, ConfigError> {
    v.parse()
        .map_err(|_| field(name, format!("expected an unsigned integer, found {v:?}")))
}

pub fn parse_epsilons(v: &str) -> Result<Vec<f64>, ConfigError> {
    let eps: Vec<f64> = v
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| {
            field(
                "mi_epsilons",
                format!("expected comma-separated numbers, found {v:?}"),
            )
        })?;
    if eps.is_empty() || eps.iter().any(|e| !e.is_finite() || *e <= 0.0) {
        return Err(field(
            "mi_epsilons",
            "every epsilon must be positive and finite",
        ));
    }
    Ok(eps)
}

impl RunConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut seen = BTreeSet::new();
        let mut cpn: Option<usize> = None;
        let mut partition = "iid".to_string();
        let mut eps: Option<Vec<f64>> = None;
        let mut absolute = false;

        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: line_no,
                text: raw.to_string(),
            })?;
            let (key, v) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey {
                    line: line_no,
                    key: key.to_string(),
                });
            }
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::Duplicate {
                    line: line_no,
                    key: key.to_string(),
                });
            }
            match key {
                "dataset" => {
                    cfg.dataset = DatasetSpec::parse(v).map_err(|r| field("dataset", r))?
                }
                "synth_spread" => {
                    cfg.synth_spread = v
                        .parse()
                        .ok()
                        .filter(|s: &f64| *s > 0.0 && s.is_finite())
                        .ok_or_else(|| {
                            field(
                                "synth_spread",
                                format!("expected a positive number, found {v:?}"),
                            )
                        })?
                }
                "model" => {
                    cfg.model = match v {
                        "lenet" => ModelName::Lenet,
                        "mlp-small" => ModelName::MlpSmall,
                        _ => {
                            return Err(field(
                                "model",
                                format!("expected lenet or mlp-small, found {v:?}"),
                            ))
                        }
                    }
                }
                "nodes" => cfg.nodes = positive("nodes", v)?,
                "partition" => partition = v.to_string(),
                "classes_per_node" => cpn = Some(positive("classes_per_node", v)?),
                "policy" => {
                    cfg.policy = match v {
                        "shadow" => SyncKind::ShadowAverage,
                        "redistribute" => SyncKind::PeriodicRedistribute,
                        "final" => SyncKind::FinalAverageOnly,
                        _ => {
                            return Err(field(
                                "policy",
                                format!("expected shadow, redistribute or final, found {v:?}"),
                            ))
                        }
                    }
                }
                "period_batches" => cfg.period_batches = positive("period_batches", v)?,
                "epochs" => cfg.epochs = positive("epochs", v)?,
                "batch_size" => cfg.batch_size = positive("batch_size", v)?,
                "lr" => {
                    cfg.lr = v
                        .parse()
                        .ok()
                        .filter(|s: &f64| *s > 0.0 && s.is_finite())
                        .ok_or_else(|| {
                            field("lr", format!("expected a positive number, found {v:?}"))
                        })?
                }
                "weighting" => {
                    cfg.weighting = match v {
                        "uniform" => Weighting::Uniform,
                        "samples" => Weighting::SampleCount,
                        _ => {
                            return Err(field(
                                "weighting",
                                format!("expected uniform or samples, found {v:?}"),
                            ))
                        }
                    }
                }
                "seed" => {
                    let s = seed("seed", v)?;
                    cfg.init_seed = s;
                    cfg.data_seed = s;
                    cfg.mi.hash_seed = s;
                }
                "init_seed" => cfg.init_seed = seed("init_seed", v)?,
                "data_seed" => cfg.data_seed = seed("data_seed", v)?,
                "hash_seed" => cfg.mi.hash_seed = seed("hash_seed", v)?,
                "probe_subsample" => {
                    cfg.probe_subsample = positive("probe_subsample", v)?;
                    if cfg.probe_subsample < 2 {
                        return Err(field("probe_subsample", "must be at least 2"));
                    }
                }
                "probe_input" => {
                    cfg.probe_input = match v {
                        "flatten" => InputProjection::Flatten,
                        "none" => InputProjection::None,
                        _ => {
                            return Err(field(
                                "probe_input",
                                format!("expected flatten or none, found {v:?}"),
                            ))
                        }
                    }
                }
                "mi_epsilons" => eps = Some(parse_epsilons(v)?),
                "mi_epsilon_mode" => {
                    absolute = match v {
                        "relative" => false,
                        "absolute" => true,
                        _ => {
                            return Err(field(
                                "mi_epsilon_mode",
                                format!("expected relative or absolute, found {v:?}"),
                            ))
                        }
                    }
                }
                "mi_max_buckets" => cfg.mi.max_buckets = positive("mi_max_buckets", v)? as u64,
                "output_dir" => {
                    if v.is_empty() {
                        return Err(field("output_dir", "must not be empty"));
                    }
                    cfg.output_dir = PathBuf::from(v)
                }
                _ => unreachable!("key list and match arms disagree"),
            }
        }
        if seen.contains("seed")
            && ["init_seed", "data_seed", "hash_seed"]
                .iter()
                .any(|k| seen.contains(*k))
        {
            return Err(field(
                "seed",
                "cannot be combined with init_seed, data_seed or hash_seed",
            ));
        }

        cfg.partition = match partition.as_str() {
            "iid" => {
                if cpn.is_some() {
                    return Err(field(
                        "classes_per_node",
                        "only valid with partition = label-shard",
                    ));
                }
                PartitionMode::Iid
            }
            "label-shard" => PartitionMode::LabelShard {
                classes_per_node: cpn
                    .ok_or_else(|| field("classes_per_node", "required for label-shard"))?,
            },
            other => {
                return Err(field(
                    "partition",
                    format!("expected iid or label-shard, found {other:?}"),
                ))
            }
        };
        if let Some(e) = eps {
            cfg.set_epsilons(e, absolute);
        } else if absolute {
            return Err(field("mi_epsilons", "absolute mode needs explicit widths"));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set_epsilons(&mut self, eps: Vec<f64>, absolute: bool) {
        self.mi.epsilons = if absolute {
            Resolution::Absolute(eps)
        } else {
            Resolution::Relative(eps)
        };
    }

    /// Cross-field checks that need no file system access.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let classes = match &self.dataset {
            DatasetSpec::Synth { classes, .. } => *classes,
            DatasetSpec::Cifar10(_) => 10,
        };
        if let PartitionMode::LabelShard { classes_per_node } = self.partition {
            if classes_per_node * self.nodes > classes {
                return Err(field(
                    "classes_per_node",
                    format!(
                        "{} nodes x {classes_per_node} classes exceeds the {classes} classes of the dataset",
                        self.nodes
                    ),
                ));
            }
        }
        if self.model == ModelName::Lenet && matches!(self.dataset, DatasetSpec::Synth { .. }) {
            return Err(field(
                "model",
                "lenet needs image input; use mlp-small with synth data",
            ));
        }
        if let DatasetSpec::Synth {
            per_class, classes, ..
        } = self.dataset
        {
            if per_class * classes < self.nodes {
                return Err(field("nodes", "more nodes than samples"));
            }
        }
        self.mi
            .validate()
            .map_err(|e| field("mi_epsilons", e.to_string()))
    }
}
