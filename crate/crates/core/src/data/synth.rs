//! Seeded synthetic corpora whose informative bands are known in advance.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{Dataset, DatasetMetadata, LabeledExample};
use crate::error::{Error, Result};
use crate::losses::Target;
use crate::matrix::{BandLabel, FeatureMatrix, Inputs};
use crate::nn::Task;
use crate::scalar::Scalar;

/// Input name used by the generators.
pub const SYNTH_INPUT: &str = "spect";
/// Frame rate stamped on synthetic matrices.
pub const SYNTH_FRAME_RATE: f64 = 100.0;
/// Target = offset + scale · smoothed driver sum.
pub const REGRESSION_OFFSET: f64 = 5.0;
pub const REGRESSION_SCALE: f64 = 3.0;
/// Trailing moving-average window applied to the driver sum.
pub const REGRESSION_SMOOTHING: usize = 5;

fn check_bands(bands: &[usize], f: usize, what: &str) -> Result<Vec<usize>> {
    let mut b = bands.to_vec();
    b.sort_unstable();
    b.dedup();
    if b.len() != bands.len() {
        return Err(Error::invalid(format!("{what} bands contain duplicates")));
    }
    if let Some(&bad) = b.iter().find(|&&i| i >= f) {
        return Err(Error::invalid(format!("{what} band {bad} out of range for F={f}")));
    }
    Ok(b)
}

fn check_dims(n_examples: usize, t: usize, f: usize) -> Result<()> {
    if n_examples < 2 || t == 0 || f == 0 {
        return Err(Error::invalid(format!(
            "need n_examples >= 2 and positive T, F (got {n_examples}, {t}, {f})"
        )));
    }
    Ok(())
}

fn noise_matrix(rng: &mut ChaCha8Rng, t: usize, f: usize) -> Vec<f64> {
    (0..t * f).map(|_| StandardNormal.sample(rng)).collect()
}

fn to_matrix<T: Scalar>(cells: Vec<f64>, t: usize, f: usize) -> Result<FeatureMatrix<T>> {
    let labels = (0..f).map(|i| BandLabel::Hz(i as f64)).collect();
    FeatureMatrix::new(cells.into_iter().map(T::lit).collect(), t, labels, SYNTH_FRAME_RATE)
}

/// 60/20/20 split by position.
fn split<T: Scalar>(
    task: Task,
    mut examples: Vec<LabeledExample<T>>,
    metadata: DatasetMetadata,
) -> Result<Dataset<T>> {
    let n = examples.len();
    let n_train = (n * 3 / 5).max(1);
    let n_dev = n / 5;
    let test = examples.split_off((n_train + n_dev).min(n));
    let dev = examples.split_off(n_train);
    Dataset::new(task, examples, dev, test, metadata)
}

/// Balanced two-class set. Every cell is standard normal; class-1 examples add
/// `effect_size` to each cell of the planted bands.
pub fn synth_classification<T: Scalar>(
    seed: u64,
    n_examples: usize,
    t: usize,
    f: usize,
    planted: &[usize],
    effect_size: f64,
) -> Result<Dataset<T>> {
    check_dims(n_examples, t, f)?;
    let planted = check_bands(planted, f, "planted")?;
    if !(effect_size.is_finite() && effect_size >= 0.0) {
        return Err(Error::invalid(format!("effect size must be >= 0, got {effect_size}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<usize> = (0..n_examples).map(|i| usize::from(i >= n_examples.div_ceil(2))).collect();
    labels.shuffle(&mut rng);
    let mut examples = Vec::with_capacity(n_examples);
    for (i, &label) in labels.iter().enumerate() {
        let mut cells = noise_matrix(&mut rng, t, f);
        if label == 1 {
            for row in cells.chunks_mut(f) {
                for &b in &planted {
                    row[b] += effect_size;
                }
            }
        }
        let mut inputs = Inputs::new();
        inputs.insert(SYNTH_INPUT.to_string(), to_matrix(cells, t, f)?);
        examples.push(LabeledExample {
            id: format!("ex{i:05}"),
            inputs,
            target: Some(Target::Class(label)),
        });
    }
    let metadata = DatasetMetadata {
        source: format!("synth_classification(T={t}, F={f}, effect={effect_size})"),
        seed: Some(seed),
        planted: Some(planted),
        class_names: vec!["0".into(), "1".into()],
    };
    split(Task::Classification { n_classes: 2 }, examples, metadata)
}

/// Sequence targets driven by a few bands: the per-frame sum over
/// `driver_bands`, smoothed by a trailing moving average, then scaled and offset.
pub fn synth_regression<T: Scalar>(
    seed: u64,
    n_examples: usize,
    t: usize,
    f: usize,
    driver_bands: &[usize],
) -> Result<Dataset<T>> {
    check_dims(n_examples, t, f)?;
    let drivers = check_bands(driver_bands, f, "driver")?;
    if drivers.is_empty() {
        return Err(Error::invalid("need at least one driver band"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut examples = Vec::with_capacity(n_examples);
    for i in 0..n_examples {
        let cells = noise_matrix(&mut rng, t, f);
        let target = regression_target(&cells, f, &drivers);
        let mut inputs = Inputs::new();
        inputs.insert(SYNTH_INPUT.to_string(), to_matrix(cells, t, f)?);
        examples.push(LabeledExample {
            id: format!("ex{i:05}"),
            inputs,
            target: Some(Target::Sequence(target.into_iter().map(T::lit).collect())),
        });
    }
    let metadata = DatasetMetadata {
        source: format!("synth_regression(T={t}, F={f})"),
        seed: Some(seed),
        planted: Some(drivers),
        class_names: vec![],
    };
    split(Task::SequenceRegression, examples, metadata)
}

/// Generating function of [`synth_regression`] applied to row-major cells.
pub fn regression_target(cells: &[f64], f: usize, drivers: &[usize]) -> Vec<f64> {
    let sums: Vec<f64> = cells.chunks(f).map(|row| drivers.iter().map(|&b| row[b]).sum()).collect();
    (0..sums.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(REGRESSION_SMOOTHING);
            let window = &sums[lo..=i];
            let mean = window.iter().sum::<f64>() / window.len() as f64;
            REGRESSION_OFFSET + REGRESSION_SCALE * mean
        })
        .collect()
}
