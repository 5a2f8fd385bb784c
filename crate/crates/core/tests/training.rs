mod common;

use common::*;
use e2efs::data::{synth_classification, Dataset, LabeledExample, SYNTH_INPUT};
use e2efs::ensemble::{train_ensemble, Ensemble, Schedule};
use e2efs::losses::{LossSpec, Target};
use e2efs::nn::{forward, init, train, Activation, ConvLstmShape, Padding, Task, TrainConfig};
use e2efs::{Error, FeatureMatrix};

fn small_shape() -> ConvLstmShape {
    ConvLstmShape {
        conv: vec![(8, 1, 1)],
        padding: Padding::Valid,
        conv_activation: Activation::Relu,
        lstm_units: 8,
        dense_units: vec![8],
    }
}

fn easy_data() -> Dataset<f64> {
    synth_classification(4, 200, 6, 6, &[1, 4], 1.5).unwrap()
}

#[test]
fn learns_separable_data() {
    let ds = easy_data();
    let spec = small_shape()
        .build(Task::Classification { n_classes: 2 }, &[(SYNTH_INPUT, 6)])
        .unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.01,
        batch_size: 20,
        epochs: 15,
        ..TrainConfig::default()
    };
    let (p, log) = train(&spec, init(&spec, 3).unwrap(), ds.train(), &LossSpec::CrossEntropy, &cfg).unwrap();
    assert_eq!(log.epochs.len(), 15);
    assert!(log.epochs.last().unwrap().mean_loss < log.epochs[0].mean_loss);
    let correct = ds
        .train()
        .iter()
        .filter(|ex| {
            let pred = forward(&spec, &p, &ex.inputs).unwrap().argmax();
            Some(Target::Class(pred)) == ex.target
        })
        .count();
    assert!(correct as f64 > 0.95 * ds.train().len() as f64, "{correct} correct");
}

#[test]
fn zero_epochs_and_zero_rate_leave_weights() {
    let ds = easy_data();
    let spec = small_shape()
        .build(Task::Classification { n_classes: 2 }, &[(SYNTH_INPUT, 6)])
        .unwrap();
    let start = init(&spec, 9).unwrap();
    for cfg in [
        TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        },
        TrainConfig {
            learning_rate: 0.0,
            epochs: 2,
            ..TrainConfig::default()
        },
    ] {
        let (p, _) = train(&spec, start.clone(), ds.train(), &LossSpec::CrossEntropy, &cfg).unwrap();
        assert_eq!(p, start);
    }
}

#[test]
fn training_is_deterministic_across_schedules() {
    let ds = easy_data();
    let spec = small_shape()
        .build(Task::Classification { n_classes: 2 }, &[(SYNTH_INPUT, 6)])
        .unwrap();
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 32,
        ..TrainConfig::default()
    };
    let run = |s| train_ensemble(&spec, ds.train(), &LossSpec::CrossEntropy, &cfg, 3, 11, s).unwrap();
    let (a, la) = run(Schedule::Serial);
    let (b, lb) = run(Schedule::Parallel);
    assert_eq!(a, b);
    assert_eq!(la, lb);
    assert_eq!(a.seeds(), vec![11, 12, 13]);
    assert_ne!(a.members[0], a.members[1]);

    let dir = tempfile::tempdir().unwrap();
    a.save_dir(dir.path()).unwrap();
    assert_eq!(Ensemble::<f64>::load_dir(dir.path()).unwrap(), a);
}

#[test]
fn member_matches_standalone_training() {
    let ds = easy_data();
    let spec = small_shape()
        .build(Task::Classification { n_classes: 2 }, &[(SYNTH_INPUT, 6)])
        .unwrap();
    let cfg = TrainConfig {
        epochs: 1,
        ..TrainConfig::default()
    };
    let (ens, _) = train_ensemble(&spec, ds.train(), &LossSpec::CrossEntropy, &cfg, 2, 40, Schedule::Serial).unwrap();
    let alone = TrainConfig {
        shuffle_seed: 41,
        ..cfg
    };
    let (p, _) = train(&spec, init(&spec, 41).unwrap(), ds.train(), &LossSpec::CrossEntropy, &alone).unwrap();
    assert_eq!(ens.members[1], p);
}

#[test]
fn overflowing_loss_is_a_numeric_error() {
    let ds = easy_data();
    let m = &ds.train()[0].inputs[SYNTH_INPUT];
    let mut vals = m.values().to_vec();
    vals[2] = f64::NAN;
    assert!(FeatureMatrix::new(vals, m.n_frames(), m.band_labels().to_vec(), m.frame_rate()).is_err());

    let spec = tiny_spec(Task::SequenceRegression, Activation::Tanh, Padding::Same, false);
    let examples: Vec<LabeledExample<f64>> = (0..4)
        .map(|i| LabeledExample {
            id: format!("big{i}"),
            inputs: random_inputs(&[("x", 5)], 4, i),
            target: Some(Target::Sequence(vec![1e200; 4])),
        })
        .collect();
    let err = train_ensemble(&spec, &examples, &LossSpec::Mse, &TrainConfig::default(), 2, 0, Schedule::Serial)
        .unwrap_err();
    assert!(matches!(err, Error::Member { index: 0, .. }), "{err}");
    assert!(matches!(err.root(), Error::Numeric(_)), "{err}");
    assert!(err.to_string().contains("epoch"), "{err}");
}

#[test]
fn regression_with_each_loss_reduces_it() {
    let spec = tiny_spec(Task::SequenceRegression, Activation::Tanh, Padding::Same, false);
    let examples: Vec<LabeledExample<f64>> = (0..20)
        .map(|i| {
            let inputs = random_inputs(&[("x", 5)], 8, 100 + i);
            let target = inputs["x"].values().chunks(5).map(|r| 2.0 * r[0] + 1.0).collect();
            LabeledExample {
                id: format!("r{i}"),
                inputs,
                target: Some(Target::Sequence(target)),
            }
        })
        .collect();
    let cfg = TrainConfig {
        learning_rate: 0.01,
        batch_size: 5,
        epochs: 20,
        ..TrainConfig::default()
    };
    for loss in [LossSpec::Mse, LossSpec::Corr, LossSpec::CorrPlusMse { lambda_mse: 1.0 }] {
        let (_, log) = train(&spec, init(&spec, 2).unwrap(), &examples, &loss, &cfg).unwrap();
        let first = log.epochs[0].mean_loss;
        let last = log.epochs.last().unwrap().mean_loss;
        assert!(last < 0.7 * first, "{loss}: {first} -> {last}");
    }
}

#[test]
fn rejects_bad_configs() {
    let ds = easy_data();
    let spec = small_shape()
        .build(Task::Classification { n_classes: 2 }, &[(SYNTH_INPUT, 6)])
        .unwrap();
    let p = init(&spec, 0).unwrap();
    let bad = [
        TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        },
        TrainConfig {
            learning_rate: -1.0,
            ..TrainConfig::default()
        },
        TrainConfig {
            beta1: 1.0,
            ..TrainConfig::default()
        },
    ];
    for cfg in bad {
        assert!(matches!(
            train(&spec, p.clone(), ds.train(), &LossSpec::CrossEntropy, &cfg),
            Err(Error::InvalidArgument(_))
        ));
    }
    assert!(train(&spec, p.clone(), ds.train(), &LossSpec::Mse, &TrainConfig::default()).is_err());
    assert!(train(&spec, p, &[], &LossSpec::CrossEntropy, &TrainConfig::default()).is_err());
}
