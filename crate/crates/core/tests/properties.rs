mod common;

use std::collections::BTreeMap;

use common::*;
use e2efs::data::LabeledExample;
use e2efs::dsp::{preemphasize, AudioBuffer, PreEmphasisConfig};
use e2efs::ensemble::Ensemble;
use e2efs::eval::ConfusionMatrix;
use e2efs::losses::{corr_loss, cross_entropy, mse, pearson, LossSpec, Target};
use e2efs::nn::{
    output_gradient, Activation, BranchSpec, LayerSpec, NetworkSpec, OutputUnit, Padding, Parameters, Task,
};
use e2efs::selection::{importance, FeatureMask, ImportanceSource, MaskOrigin, VoteTally, ImportanceVector};
use proptest::prelude::*;

fn finite_vec(len: impl Into<proptest::collection::SizeRange>) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-10.0f64..10.0, len)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn preemphasis_is_linear(
        (x, y) in (2usize..64).prop_flat_map(|n| (finite_vec(n), finite_vec(n))),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        c in 0.0f64..0.99,
    ) {
        let cfg = PreEmphasisConfig::new(c).unwrap();
        let buf = |v: Vec<f64>| AudioBuffer::new(v, 16_000).unwrap();
        let mixed: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let lhs = preemphasize(&buf(mixed), cfg).unwrap();
        let px = preemphasize(&buf(x), cfg).unwrap();
        let py = preemphasize(&buf(y), cfg).unwrap();
        for ((l, p), q) in lhs.samples().iter().zip(px.samples()).zip(py.samples()) {
            prop_assert!((l - (a * p + b * q)).abs() <= 1e-9 * (1.0 + l.abs()));
        }
    }

    #[test]
    fn pearson_ignores_positive_affine_maps(
        (p, t) in (3usize..50).prop_flat_map(|n| (finite_vec(n), finite_vec(n))),
        a in 0.01f64..100.0,
        b in -100.0f64..100.0,
    ) {
        let base = pearson(&p, &t).unwrap();
        prop_assume!(!base.degenerate);
        let spread = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - p.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assume!(spread > 1e-3);
        let moved: Vec<f64> = p.iter().map(|v| a * v + b).collect();
        prop_assert!((pearson(&moved, &t).unwrap().r - base.r).abs() < 1e-9);
    }

    #[test]
    fn losses_stay_in_range(
        (p, t) in (2usize..40).prop_flat_map(|n| (finite_vec(n), finite_vec(n))),
        logits in proptest::collection::vec(-20.0f64..20.0, 2..6),
        class in 0usize..6,
    ) {
        let c = corr_loss(&p, &t).unwrap();
        prop_assert!((0.0..=2.0).contains(&c));
        prop_assert!(mse(&p, &t).unwrap() >= 0.0);
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        let post: Vec<f64> = logits.iter().map(|l| (l - max).exp() / z).collect();
        let class = class % post.len();
        let xe = cross_entropy(&post, class).unwrap();
        prop_assert!(xe >= 0.0 && xe <= -(1e-12f64).ln() + 1e-9);
    }

    #[test]
    fn ensemble_is_member_order_free(
        seeds in proptest::collection::vec(0u64..1000, 2..6),
        rotate in 0usize..6,
        regression in any::<bool>(),
    ) {
        let task = if regression { Task::SequenceRegression } else { Task::Classification { n_classes: 2 } };
        let spec = tiny_spec(task, Activation::Tanh, Padding::Same, false);
        let x = random_inputs(&[("x", 5)], 6, 3);
        let members: Vec<Parameters<f64>> = seeds.iter().map(|&s| random_params(&spec, s)).collect();
        let mut rotated = members.clone();
        rotated.rotate_left(rotate % members.len());
        let make = |members: Vec<Parameters<f64>>| Ensemble {
            spec: spec.clone(),
            shuffle_seeds: vec![0; members.len()],
            members,
            loss: LossSpec::Mse,
            masks: BTreeMap::new(),
        };
        let (a, b) = (make(members), make(rotated));
        if regression {
            let (pa, pb) = (a.predict_regression(&x).unwrap(), b.predict_regression(&x).unwrap());
            prop_assert!(pa.iter().zip(&pb).all(|(u, v)| u.to_bits() == v.to_bits()));
        } else {
            let (pa, pb) = (a.predict_classification(&x).unwrap(), b.predict_classification(&x).unwrap());
            prop_assert_eq!(pa.1, pb.1);
            prop_assert!(pa.0.iter().zip(&pb.0).all(|(u, v)| u.to_bits() == v.to_bits()));
        }
    }

    #[test]
    fn mask_and_complement_partition_bands(
        f in 2usize..200,
        picks in proptest::collection::vec(any::<prop::sample::Index>(), 1..40),
    ) {
        let mut idx: Vec<usize> = picks.iter().map(|i| i.index(f)).collect();
        idx.sort_unstable();
        idx.dedup();
        prop_assume!(idx.len() < f);
        let m = FeatureMask::new(idx, f, MaskOrigin::Manual).unwrap();
        let c = m.complement().unwrap();
        prop_assert_eq!(m.len() + c.len(), f);
        for b in 0..f {
            prop_assert!(m.contains(b) != c.contains(b));
        }
        prop_assert_eq!(FeatureMask::from_text(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn uar_is_scale_free(
        counts in proptest::collection::vec(proptest::collection::vec(0u64..50, 3), 3),
        k in 1u64..20,
    ) {
        prop_assume!(counts.iter().all(|row| row.iter().sum::<u64>() > 0));
        let base = ConfusionMatrix::from_counts(counts.clone()).unwrap().uar().unwrap();
        let scaled: Vec<Vec<u64>> = counts.iter().map(|r| r.iter().map(|c| c * k).collect()).collect();
        let uar = ConfusionMatrix::from_counts(scaled).unwrap().uar().unwrap();
        prop_assert!((uar - base).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&uar));
    }

    #[test]
    fn regression_length_follows_strides(
        t in 1usize..80,
        strides in proptest::collection::vec(1usize..4, 1..3),
    ) {
        let mut layers = Vec::new();
        for &s in &strides {
            layers.push(conv(2, 3, Activation::Relu, Padding::Same));
            layers.push(LayerSpec::MaxPool1d { stride: s });
        }
        layers.push(LayerSpec::Lstm { units: 2 });
        let spec = NetworkSpec {
            branches: vec![BranchSpec { input: "x".into(), input_width: 5, layers }],
            trunk: vec![LayerSpec::Output { units: 1, activation: Activation::Linear }],
            task: Task::SequenceRegression,
        };
        let want = t / strides.iter().product::<usize>();
        let x = random_inputs(&[("x", 5)], t, t as u64);
        let out = e2efs::nn::forward(&spec, &random_params(&spec, 1), &x);
        if want == 0 {
            prop_assert!(out.is_err());
        } else {
            prop_assert_eq!(out.unwrap().values().len(), want);
            prop_assert_eq!(NetworkSpec::branch_output_len(&spec.branches[0], t), Some(want));
        }
    }

    #[test]
    fn pooling_routes_gradient_to_one_cell_per_window(
        t in 2usize..30,
        stride in 2usize..5,
        seed in 0u64..500,
    ) {
        prop_assume!(t >= stride);
        let spec = NetworkSpec {
            branches: vec![BranchSpec {
                input: "x".into(),
                input_width: 3,
                layers: vec![LayerSpec::MaxPool1d { stride }, LayerSpec::Lstm { units: 3 }],
            }],
            trunk: vec![LayerSpec::Output { units: 1, activation: Activation::Linear }],
            task: Task::SequenceRegression,
        };
        let x = random_inputs(&[("x", 3)], t, seed);
        let g = output_gradient(&spec, &random_params(&spec, seed), &x, OutputUnit::Sum).unwrap();
        let gx = &g.input_grads["x"];
        for band in 0..3 {
            for w in 0..t / stride {
                let nonzero = (0..stride).filter(|j| gx.data[(w * stride + j) * 3 + band] != 0.0).count();
                prop_assert!(nonzero <= 1);
            }
            for frame in (t / stride) * stride..t {
                prop_assert_eq!(gx.data[frame * 3 + band], 0.0);
            }
        }
    }

    #[test]
    fn vote_counts_add_up(
        scores in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 12), 1..8),
        n in 1usize..12,
    ) {
        let ivs: Vec<ImportanceVector> = scores
            .iter()
            .enumerate()
            .map(|(i, s)| ImportanceVector { scores: s.clone(), source: ImportanceSource::Output, model_id: i, scalars: vec![] })
            .collect();
        let tally = VoteTally::from_importance(&ivs, n, false).unwrap();
        prop_assert_eq!(tally.votes.iter().sum::<usize>(), n * ivs.len());
        let mask = tally.select(n, false, MaskOrigin::OutputGrad).unwrap();
        prop_assert_eq!(mask.len(), n);
        let least_voted_in = mask.indices().iter().map(|&b| tally.votes[b]).min().unwrap();
        let most_voted_out = (0..12).filter(|b| !mask.contains(*b)).map(|b| tally.votes[b]).max().unwrap_or(0);
        prop_assert!(least_voted_in >= most_voted_out);
    }
}

#[test]
fn importance_doubles_with_duplicated_data() {
    let spec = tiny_spec(Task::Classification { n_classes: 2 }, Activation::Tanh, Padding::Valid, true);
    let p = random_params(&spec, 21);
    let examples: Vec<LabeledExample<f64>> = (0..5)
        .map(|i| LabeledExample {
            id: format!("e{i}"),
            inputs: random_inputs(&[("x", 5)], 7, 30 + i),
            target: Some(Target::Class(i as usize % 2)),
        })
        .collect();
    let twice: Vec<LabeledExample<f64>> = examples.iter().chain(&examples).cloned().collect();
    for source in [ImportanceSource::Output, ImportanceSource::Loss] {
        let once = importance(&spec, &p, &LossSpec::CrossEntropy, &examples, "x", source, 0).unwrap();
        let doubled = importance(&spec, &p, &LossSpec::CrossEntropy, &twice, "x", source, 0).unwrap();
        for (a, b) in once.scores.iter().zip(&doubled.scores) {
            assert_eq!(2.0 * a, *b);
        }
    }
}
