#![allow(dead_code)]

use e2efs::losses::{LossSpec, Target};
use e2efs::nn::{backward, forward, Activation, BranchSpec, LayerSpec, NetworkSpec, Padding, Parameters, Task};
use e2efs::{FeatureMatrix, Inputs};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor for relative error, so coordinates whose true gradient is
/// ~0 are judged on absolute error instead.
pub const REL_FLOOR: f64 = 1e-6;

pub fn random_inputs(names: &[(&str, usize)], t: usize, seed: u64) -> Inputs<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    names
        .iter()
        .map(|&(name, f)| {
            let rows: Vec<Vec<f64>> = (0..t)
                .map(|_| (0..f).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            (name.to_string(), FeatureMatrix::from_rows(&rows, 100.0).unwrap())
        })
        .collect()
}

/// Small random weights so saturation does not hide errors.
pub fn random_params(spec: &NetworkSpec, seed: u64) -> Parameters<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = Parameters::zeros(spec);
    for v in &mut p.values {
        *v = rng.random_range(-0.5..0.5);
    }
    p
}

pub fn conv(filters: usize, k: usize, activation: Activation, padding: Padding) -> LayerSpec {
    LayerSpec::Conv1d {
        filters,
        kernel_width: k,
        activation,
        padding,
    }
}

/// The reference tiny network: 8 filters, 6 LSTM cells.
pub fn tiny_spec(task: Task, activation: Activation, padding: Padding, pool: bool) -> NetworkSpec {
    let mut layers = vec![conv(8, 3, activation, padding)];
    if pool {
        layers.push(LayerSpec::MaxPool1d { stride: 2 });
    }
    layers.push(LayerSpec::Lstm { units: 6 });
    let out = match task {
        Task::Classification { n_classes } => LayerSpec::Output {
            units: n_classes,
            activation: Activation::Softmax,
        },
        Task::SequenceRegression => LayerSpec::Output {
            units: 1,
            activation: Activation::Linear,
        },
    };
    NetworkSpec {
        branches: vec![BranchSpec {
            input: "x".into(),
            input_width: 5,
            layers,
        }],
        trunk: vec![
            LayerSpec::Dense {
                units: 4,
                activation: Activation::Tanh,
            },
            out,
        ],
        task,
    }
}

pub fn loss_value(
    spec: &NetworkSpec,
    params: &Parameters<f64>,
    inputs: &Inputs<f64>,
    loss: &LossSpec,
    target: &Target<f64>,
) -> f64 {
    let pred = forward(spec, params, inputs).unwrap();
    loss.evaluate(pred.values(), target).unwrap().value
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

#[derive(Debug, Default)]
pub struct CheckStats {
    pub checked: usize,
    pub max_rel: f64,
    pub worst: String,
}

impl CheckStats {
    fn record(&mut self, a: f64, n: f64, what: impl FnOnce() -> String) {
        self.checked += 1;
        let e = rel_err(a, n);
        if e > self.max_rel {
            self.max_rel = e;
            self.worst = format!("{} analytic {a:e} numeric {n:e}", what());
        }
    }

    pub fn merge(&mut self, other: CheckStats) {
        self.checked += other.checked;
        if other.max_rel > self.max_rel {
            self.max_rel = other.max_rel;
            self.worst = other.worst;
        }
    }
}

/// Central-difference check of every parameter and every input cell.
pub fn check_network(
    spec: &NetworkSpec,
    params: &Parameters<f64>,
    inputs: &Inputs<f64>,
    loss: &LossSpec,
    target: &Target<f64>,
) -> CheckStats {
    let (_, grads) = backward(spec, params, inputs, loss, target).unwrap();
    let mut stats = CheckStats::default();
    let mut p = params.clone();
    for i in 0..p.len() {
        let orig = p.values[i];
        p.values[i] = orig + FD_STEP;
        let up = loss_value(spec, &p, inputs, loss, target);
        p.values[i] = orig - FD_STEP;
        let down = loss_value(spec, &p, inputs, loss, target);
        p.values[i] = orig;
        stats.record(grads.param_grads[i], (up - down) / (2.0 * FD_STEP), || format!("param {i}"));
    }
    for (name, m) in inputs {
        let g = &grads.input_grads[name];
        assert_eq!((g.len, g.width), (m.n_frames(), m.n_bands()));
        for cell in 0..m.values().len() {
            let shifted = |delta: f64| {
                let mut vals = m.values().to_vec();
                vals[cell] += delta;
                let mut x = inputs.clone();
                x.insert(
                    name.clone(),
                    FeatureMatrix::new(vals, m.n_frames(), m.band_labels().to_vec(), m.frame_rate()).unwrap(),
                );
                loss_value(spec, params, &x, loss, target)
            };
            let n = (shifted(FD_STEP) - shifted(-FD_STEP)) / (2.0 * FD_STEP);
            stats.record(g.data[cell], n, || format!("input {name}[{cell}]"));
        }
    }
    stats
}

pub fn random_sequence(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.random_range(-2.0..2.0)).collect()
}
