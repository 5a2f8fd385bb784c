use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{LayerSpec, NetworkSpec};
use crate::scalar::Scalar;

/// Position of a layer inside a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerRef {
    Branch { branch: usize, layer: usize },
    Trunk { layer: usize },
}

/// Offsets of every layer's parameters inside the flat vector.
///
/// Per layer the storage order is: conv `W[filter][tap][channel]` then bias;
/// LSTM `W_x[4U][in]`, `W_h[4U][U]`, bias `[4U]` with gate order input, forget,
/// cell, output; dense `W[out][in]` then bias.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    slots: Vec<(LayerRef, Range<usize>)>,
    total: usize,
}

/// Parameter count of one layer given its input width.
fn layer_size(layer: &LayerSpec, in_width: usize) -> (usize, usize) {
    match *layer {
        LayerSpec::Conv1d {
            filters,
            kernel_width,
            ..
        } => (filters * kernel_width * in_width + filters, filters),
        LayerSpec::MaxPool1d { .. } => (0, in_width),
        LayerSpec::Lstm { units } => (4 * units * (in_width + units) + 4 * units, units),
        LayerSpec::Dense { units, .. } | LayerSpec::Output { units, .. } => {
            (units * in_width + units, units)
        }
    }
}

impl ParamLayout {
    pub fn new(spec: &NetworkSpec) -> Self {
        let mut slots = Vec::new();
        let mut offset = 0;
        for (b, branch) in spec.branches.iter().enumerate() {
            let mut width = branch.input_width;
            for (l, layer) in branch.layers.iter().enumerate() {
                let (n, out) = layer_size(layer, width);
                slots.push((LayerRef::Branch { branch: b, layer: l }, offset..offset + n));
                offset += n;
                width = out;
            }
        }
        let mut width = spec.fused_width();
        for (l, layer) in spec.trunk.iter().enumerate() {
            let (n, out) = layer_size(layer, width);
            slots.push((LayerRef::Trunk { layer: l }, offset..offset + n));
            offset += n;
            width = out;
        }
        Self {
            slots,
            total: offset,
        }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn slots(&self) -> &[(LayerRef, Range<usize>)] {
        &self.slots
    }

    pub fn range(&self, at: LayerRef) -> Range<usize> {
        self.slots
            .iter()
            .find(|(r, _)| *r == at)
            .map(|(_, range)| range.clone())
            .expect("layer belongs to the spec the layout was built from")
    }
}

/// Flat trainable parameters plus the seed used to initialise them.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters<T> {
    pub values: Vec<T>,
    pub seed: u64,
}

impl<T: Scalar> Parameters<T> {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        Self {
            values: vec![T::zero(); spec.count_parameters()],
            seed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check(&self, spec: &NetworkSpec) -> Result<()> {
        let want = spec.count_parameters();
        if self.values.len() != want {
            return Err(Error::shape(format!(
                "parameter vector has {} entries, spec needs {want}",
                self.values.len()
            )));
        }
        if let Some(index) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                index,
                context: "parameter".into(),
            });
        }
        Ok(())
    }
}

/// Glorot-uniform weights, zero biases and forget-gate bias 1, drawn in layout order
/// from a ChaCha8 stream seeded with `seed`.
pub fn init<T: Scalar>(spec: &NetworkSpec, seed: u64) -> Result<Parameters<T>> {
    spec.validate()?;
    let layout = ParamLayout::new(spec);
    let mut values = vec![T::zero(); layout.total()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut glorot = |dst: &mut [T], fan_in: usize, fan_out: usize| {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for v in dst {
            *v = T::lit(rng.random_range(-limit..limit));
        }
    };

    let mut widths = Vec::new();
    for branch in &spec.branches {
        let mut w = branch.input_width;
        for layer in &branch.layers {
            widths.push(w);
            w = layer_size(layer, w).1;
        }
    }
    let mut w = spec.fused_width();
    for layer in &spec.trunk {
        widths.push(w);
        w = layer_size(layer, w).1;
    }
    let layers = spec
        .branches
        .iter()
        .flat_map(|b| b.layers.iter())
        .chain(spec.trunk.iter());

    for (((_, range), layer), &in_w) in layout.slots().iter().zip(layers).zip(&widths) {
        let p = &mut values[range.clone()];
        match *layer {
            LayerSpec::Conv1d {
                filters,
                kernel_width,
                ..
            } => {
                let nw = filters * kernel_width * in_w;
                glorot(&mut p[..nw], kernel_width * in_w, kernel_width * filters);
            }
            LayerSpec::MaxPool1d { .. } => {}
            LayerSpec::Lstm { units } => {
                let nx = 4 * units * in_w;
                let nh = 4 * units * units;
                glorot(&mut p[..nx], in_w, 4 * units);
                glorot(&mut p[nx..nx + nh], units, 4 * units);
                for b in &mut p[nx + nh + units..nx + nh + 2 * units] {
                    *b = T::one();
                }
            }
            LayerSpec::Dense { units, .. } | LayerSpec::Output { units, .. } => {
                glorot(&mut p[..units * in_w], in_w, units);
            }
        }
    }
    Ok(Parameters { values, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, BranchSpec, ConvLstmShape, Task};

    fn binary() -> Task {
        Task::Classification { n_classes: 2 }
    }

    /// Closed-form per-layer arithmetic, written independently of `layer_size`.
    fn msc_count_by_hand(f: usize) -> usize {
        let conv1 = 64 * 1 * f + 64;
        let conv2 = 64 * 1 * 64 + 64;
        let lstm = 4 * ((64 + 100) * 100 + 100);
        let dense = 100 * 100 + 100;
        let out = 100 * 2 + 2;
        conv1 + conv2 + lstm + dense + out
    }

    #[test]
    fn msc_count_matches_hand_sum() {
        for f in [10, 64, 128] {
            let spec = ConvLstmShape::msc().build(binary(), &[("spect", f)]).unwrap();
            assert_eq!(spec.count_parameters(), msc_count_by_hand(f));
        }
        assert_eq!(msc_count_by_hand(128), 88_718);
    }

    #[test]
    fn single_layer_counts() {
        // dense(in=10, out=100) as the only trunk layer after a 10-unit lstm
        let spec = NetworkSpec {
            branches: vec![BranchSpec {
                input: "x".into(),
                input_width: 64,
                layers: vec![LayerSpec::Lstm { units: 100 }],
            }],
            trunk: vec![LayerSpec::Output {
                units: 1,
                activation: Activation::Linear,
            }],
            task: Task::SequenceRegression,
        };
        let layout = ParamLayout::new(&spec);
        assert_eq!(layout.slots()[0].1.len(), 66_000);
        assert_eq!(layer_size(&LayerSpec::Dense { units: 100, activation: Activation::Relu }, 10).0, 1100);
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let spec = ConvLstmShape::msc().build(binary(), &[("spect", 16)]).unwrap();
        let a: Parameters<f64> = init(&spec, 3).unwrap();
        let b: Parameters<f64> = init(&spec, 3).unwrap();
        let c: Parameters<f64> = init(&spec, 4).unwrap();
        assert_eq!(a, b);
        // compare weights only; biases are constant by construction
        let weights: Vec<usize> = (0..a.len()).filter(|&i| a.values[i] != 0.0 && a.values[i] != 1.0).collect();
        let differ = weights.iter().filter(|&&i| a.values[i] != c.values[i]).count();
        assert!(differ as f64 >= 0.99 * weights.len() as f64);
    }

    #[test]
    fn biases_zero_forget_gate_one() {
        let spec = NetworkSpec {
            branches: vec![BranchSpec {
                input: "x".into(),
                input_width: 3,
                layers: vec![LayerSpec::Lstm { units: 2 }],
            }],
            trunk: vec![LayerSpec::Output {
                units: 1,
                activation: Activation::Linear,
            }],
            task: Task::SequenceRegression,
        };
        let p: Parameters<f64> = init(&spec, 0).unwrap();
        let bias = &p.values[4 * 2 * 3 + 4 * 2 * 2..4 * 2 * 3 + 4 * 2 * 2 + 8];
        assert_eq!(bias, &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let limit = (6.0f64 / (3 + 8) as f64).sqrt();
        assert!(p.values[..24].iter().all(|v| v.abs() < limit));
        assert_eq!(*p.values.last().unwrap(), 0.0);
    }
}
