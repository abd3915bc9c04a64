//! Averaging algebra, scheduling invariants and probe purity.

use fedinfo_core::data::{
    partition, synth_gaussian_classes, LabeledDataset, PartitionMode, SynthParams,
};
use fedinfo_core::fed::{
    average_params, make_nodes, FedConfig, Simulation, SyncKind, SyncPolicy, Weighting,
};
use fedinfo_core::mi::MiConfig;
use fedinfo_core::nn::{Model, ModelSpec, ParamVector};
use fedinfo_core::probe::{probe_round, InputProjection, ProbeConfig};
use fedinfo_core::RoundOutcome;
use proptest::prelude::*;

fn spec() -> ModelSpec {
    ModelSpec::mlp(vec![3], &[5, 4], 4).unwrap()
}

fn model(values: Vec<f64>) -> Model<f64> {
    Model::from_params(spec(), ParamVector::new(values)).unwrap()
}

fn params() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, spec().param_count())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn identical_models_average_to_themselves(w in params(), n in 1usize..5) {
        let m = model(w);
        let copies: Vec<&Model<f64>> = std::iter::repeat_n(&m, n).collect();
        let avg = average_params(&copies).unwrap();
        for (a, b) in avg.params().as_slice().iter().zip(m.params().as_slice()) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn opposite_models_cancel(w in params()) {
        let a = model(w.clone());
        let b = model(w.iter().map(|v| -v).collect());
        let avg = average_params(&[&a, &b]).unwrap();
        prop_assert!(avg.params().as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn average_is_elementwise_mean(ws in prop::collection::vec(params(), 2..5)) {
        let models: Vec<Model<f64>> = ws.iter().cloned().map(model).collect();
        let refs: Vec<&Model<f64>> = models.iter().collect();
        let avg = average_params(&refs).unwrap();
        for (i, got) in avg.params().as_slice().iter().enumerate() {
            let want = ws.iter().map(|w| w[i]).sum::<f64>() / ws.len() as f64;
            prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
    }
}

fn data() -> LabeledDataset<f64> {
    synth_gaussian_classes(SynthParams {
        num_classes: 4,
        per_class: 30,
        dim: 3,
        spread: 0.15,
        seed: 11,
    })
    .unwrap()
}

fn fed(kind: SyncKind, lr: f64) -> FedConfig<f64> {
    FedConfig {
        policy: SyncPolicy {
            kind,
            period_batches: 7,
        },
        total_epochs: 3,
        batch_size: 8,
        lr,
        seed: 4,
        weighting: Weighting::Uniform,
    }
}

fn outcomes(
    ds: &LabeledDataset<f64>,
    mode: PartitionMode,
    cfg: FedConfig<f64>,
    reverse: bool,
) -> Vec<RoundOutcome> {
    let plan = partition(ds, 2, mode, 9).unwrap();
    let mut nodes = make_nodes(&spec(), &plan, ds, 2).unwrap();
    if reverse {
        nodes.reverse();
    }
    let mut sim = Simulation::new(nodes, ds, cfg).unwrap();
    std::iter::from_fn(|| sim.next_round().unwrap()).collect()
}

const MODES: [PartitionMode; 2] = [
    PartitionMode::Iid,
    PartitionMode::LabelShard {
        classes_per_node: 2,
    },
];
const KINDS: [SyncKind; 3] = [
    SyncKind::ShadowAverage,
    SyncKind::PeriodicRedistribute,
    SyncKind::FinalAverageOnly,
];

#[test]
fn node_order_does_not_change_outcomes() {
    let ds = data();
    for mode in MODES {
        for kind in KINDS {
            let a = outcomes(&ds, mode, fed(kind, 0.3), false);
            let b = outcomes(&ds, mode, fed(kind, 0.3), true);
            assert_eq!(a, b, "{mode:?} {kind:?}");
        }
    }
}

#[test]
fn runs_are_deterministic_and_seed_sensitive() {
    let ds = data();
    let a = outcomes(
        &ds,
        PartitionMode::Iid,
        fed(SyncKind::PeriodicRedistribute, 0.3),
        false,
    );
    let b = outcomes(
        &ds,
        PartitionMode::Iid,
        fed(SyncKind::PeriodicRedistribute, 0.3),
        false,
    );
    assert_eq!(a, b);
    let mut other = fed(SyncKind::PeriodicRedistribute, 0.3);
    other.seed += 1;
    let c = outcomes(&ds, PartitionMode::Iid, other, false);
    assert_ne!(
        a.last().unwrap().global_model,
        c.last().unwrap().global_model
    );
}

#[test]
fn zero_learning_rate_is_a_fixed_point() {
    let ds = data();
    let init = Model::<f64>::init(spec(), 2);
    for kind in KINDS {
        for o in outcomes(&ds, PartitionMode::Iid, fed(kind, 0.0), false) {
            assert_eq!(o.global_model, init);
            assert!(o.per_node_models.iter().all(|(_, m)| *m == init));
        }
    }
}

#[test]
fn barrier_keeps_batch_counts_equal() {
    let ds = data();
    for kind in KINDS {
        let out = outcomes(&ds, PartitionMode::Iid, fed(kind, 0.3), false);
        let total = 3 * 60usize.div_ceil(8);
        for o in &out {
            assert!(o.batches_done.windows(2).all(|w| w[0] == w[1]));
        }
        assert_eq!(out.last().unwrap().batches_done, vec![total, total]);
        assert!(out.last().unwrap().is_final);
    }
}

#[test]
fn probing_never_touches_parameters() {
    let ds = data();
    let plan = partition(
        &ds,
        2,
        PartitionMode::LabelShard {
            classes_per_node: 2,
        },
        9,
    )
    .unwrap();
    let nodes = make_nodes(&spec(), &plan, &ds, 2).unwrap();
    let probe = ProbeConfig {
        probe_sets: plan.assignments.clone(),
        subsample: 40,
        mi: MiConfig::default(),
        input_projection: InputProjection::Flatten,
        seed: 1,
    };
    let mut sim = Simulation::new(nodes, &ds, fed(SyncKind::ShadowAverage, 0.3)).unwrap();
    let mut rounds = 0;
    while let Some(o) = sim.next_round().unwrap() {
        let before: Vec<u64> = o
            .per_node_models
            .iter()
            .map(|(_, m)| m.params().fingerprint())
            .chain([o.global_model.params().fingerprint()])
            .collect();
        let snapshot = o.clone();
        let records = probe_round(&o, &ds, &probe).unwrap();
        assert_eq!(records.len(), 6);
        let after: Vec<u64> = o
            .per_node_models
            .iter()
            .map(|(_, m)| m.params().fingerprint())
            .chain([o.global_model.params().fingerprint()])
            .collect();
        assert_eq!(before, after);
        assert_eq!(o, snapshot);
        rounds += 1;
    }
    assert!(rounds > 1);
}
