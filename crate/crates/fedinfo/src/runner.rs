//! End-to-end run: data, partition, federated training, probing, artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use fedinfo_core::data::{load_cifar10, partition, synth_gaussian_classes, SynthParams};
use fedinfo_core::fed::{make_nodes, FedConfig, Simulation, SyncKind, SyncPolicy};
use fedinfo_core::nn::ModelSpec;
use fedinfo_core::probe::{append_log, probe_round, AggregationRecord, ModelKind, ProbeConfig};
use fedinfo_core::{Error, LabeledDataset};

use crate::config::{ConfigError, DatasetSpec, ModelName, RunConfig};
use crate::plot;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Runtime(#[from] Error),
    #[error(transparent)]
    Plot(#[from] plot::PlotError),
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) => 1,
            RunError::Runtime(_) | RunError::Plot(_) => 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub records: Vec<AggregationRecord>,
    pub rounds: usize,
    pub output_dir: PathBuf,
}

pub fn load_dataset(cfg: &RunConfig) -> Result<LabeledDataset, RunError> {
    match &cfg.dataset {
        DatasetSpec::Synth {
            classes,
            per_class,
            dim,
        } => Ok(synth_gaussian_classes(SynthParams {
            num_classes: *classes,
            per_class: *per_class,
            dim: *dim,
            spread: cfg.synth_spread,
            seed: cfg.data_seed,
        })?),
        DatasetSpec::Cifar10(dir) => {
            if !dir.is_dir() {
                return Err(ConfigError::Field {
                    field: "dataset",
                    reason: format!("directory {} does not exist", dir.display()),
                }
                .into());
            }
            Ok(load_cifar10(dir)?)
        }
    }
}

pub fn model_spec(cfg: &RunConfig, data: &LabeledDataset) -> Result<ModelSpec, RunError> {
    let shape = data.sample_shape();
    let spec = match cfg.model {
        ModelName::MlpSmall => ModelSpec::mlp_small(shape.to_vec(), data.num_classes()),
        ModelName::Lenet => match *shape {
            [c, h, w] => ModelSpec::lenet([c, h, w], data.num_classes()),
            _ => {
                return Err(ConfigError::Field {
                    field: "model",
                    reason: format!(
                        "lenet needs (channels, height, width) input, dataset has {shape:?}"
                    ),
                }
                .into())
            }
        },
    };
    spec.map_err(|e| {
        ConfigError::Field {
            field: "model",
            reason: e.to_string(),
        }
        .into()
    })
}

/// Runs the configured experiment and writes every artifact to
/// `cfg.output_dir`. Progress lines go to stderr when `verbose` is set.
pub fn run(cfg: &RunConfig, verbose: bool) -> Result<RunReport, RunError> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    let spec = model_spec(cfg, &data)?;
    let plan = partition(&data, cfg.nodes, cfg.partition, cfg.data_seed)?;
    let nodes = make_nodes(&spec, &plan, &data, cfg.init_seed)?;
    let fed = FedConfig {
        policy: SyncPolicy {
            kind: cfg.policy,
            period_batches: cfg.period_batches,
        },
        total_epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        lr: cfg.lr,
        seed: cfg.data_seed,
        weighting: cfg.weighting,
    };
    let smallest = plan.assignments.iter().map(Vec::len).min().unwrap_or(0);
    let probe = ProbeConfig {
        probe_sets: plan.assignments.clone(),
        subsample: cfg.probe_subsample.min(smallest),
        mi: cfg.mi.clone(),
        input_projection: cfg.probe_input,
        seed: cfg.data_seed,
    };
    probe.validate()?;

    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let log = out.join("log.csv");
    if log.exists() {
        fs::remove_file(&log).map_err(|e| Error::io(&log, e))?;
    }

    let mut sim = Simulation::new(nodes, &data, fed)?;
    let planned = sim.planned_rounds();
    let mut records = Vec::new();
    while let Some(outcome) = sim.next_round()? {
        let rows = probe_round(&outcome, &data, &probe)?;
        append_log(&rows, &log)?;
        if verbose {
            let global: Vec<String> = rows
                .iter()
                .filter(|r| r.model_kind == ModelKind::Global)
                .map(|r| {
                    format!(
                        "acc{}={:.3} mi_zy{}={:.3}",
                        r.probe_dataset, r.accuracy, r.probe_dataset, r.mi_zy_nats
                    )
                })
                .collect();
            eprintln!(
                "round {}/{}: global {}",
                outcome.round_index + 1,
                planned,
                global.join(" ")
            );
        }
        records.extend(rows);
    }
    let rounds = records.last().map_or(0, |r| r.round + 1);

    write_summary(cfg, &records, rounds, &out.join("summary.txt"))?;
    plot::render_all(&records, out)?;
    Ok(RunReport {
        records,
        rounds,
        output_dir: out.clone(),
    })
}

fn policy_name(kind: SyncKind) -> &'static str {
    match kind {
        SyncKind::ShadowAverage => "shadow",
        SyncKind::PeriodicRedistribute => "redistribute",
        SyncKind::FinalAverageOnly => "final",
    }
}

fn fmt_mi(v: f64) -> String {
    if v.is_nan() {
        "-".to_string()
    } else {
        format!("{v:.4}")
    }
}

pub fn summary_text(cfg: &RunConfig, records: &[AggregationRecord], rounds: usize) -> String {
    let mut s = String::new();
    let dataset = match &cfg.dataset {
        DatasetSpec::Synth {
            classes,
            per_class,
            dim,
        } => format!(
            "synth:{classes}x{per_class}x{dim} (spread {})",
            cfg.synth_spread
        ),
        DatasetSpec::Cifar10(dir) => format!("cifar10:{}", dir.display()),
    };
    let model = match cfg.model {
        ModelName::Lenet => "lenet",
        ModelName::MlpSmall => "mlp-small",
    };
    let _ = writeln!(s, "dataset            {dataset}");
    let _ = writeln!(s, "model              {model}");
    let _ = writeln!(s, "nodes              {} ({:?})", cfg.nodes, cfg.partition);
    let _ = writeln!(
        s,
        "policy             {} every {} batches",
        policy_name(cfg.policy),
        cfg.period_batches
    );
    let _ = writeln!(
        s,
        "training           {} epochs, batch {}, lr {}",
        cfg.epochs, cfg.batch_size, cfg.lr
    );
    let _ = writeln!(
        s,
        "seeds              init {}, data {}, hash {}",
        cfg.init_seed, cfg.data_seed, cfg.mi.hash_seed
    );
    let _ = writeln!(s, "aggregation points {rounds}");
    let _ = writeln!(s);
    let _ = writeln!(s, "final aggregation point");
    let _ = writeln!(
        s,
        "{:<8} {:>5} {:>10} {:>10} {:>9} {:>7}",
        "model", "probe", "mi_zx", "mi_zy", "accuracy", "n"
    );
    let last = records.last().map(|r| r.round);
    for r in records.iter().filter(|r| Some(r.round) == last) {
        let _ = writeln!(
            s,
            "{:<8} {:>5} {:>10} {:>10} {:>9.4} {:>7}",
            r.model_kind.to_string(),
            r.probe_dataset,
            fmt_mi(r.mi_zx_nats),
            fmt_mi(r.mi_zy_nats),
            r.accuracy,
            r.n_probe
        );
    }
    s
}

fn write_summary(
    cfg: &RunConfig,
    records: &[AggregationRecord],
    rounds: usize,
    path: &Path,
) -> Result<(), Error> {
    fs::write(path, summary_text(cfg, records, rounds)).map_err(|e| Error::io(path, e))
}
