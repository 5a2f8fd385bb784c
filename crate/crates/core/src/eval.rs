//! Metrics (UAR, Pearson, MSE) and single-threaded latency benchmarking.

use std::fmt::Write as _;
use std::time::Instant;

use crate::data::LabeledExample;
use crate::dsp::{AudioBuffer, FeaturePipeline};
use crate::ensemble::{Ensemble, Schedule};
use crate::error::{Error, Result};
use crate::losses::{mse, pearson, Target};
use crate::matrix::Inputs;
use crate::nn::Task;
use crate::scalar::Scalar;

/// Counts indexed `[true class][predicted class]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        Self {
            counts: vec![vec![0; n_classes]; n_classes],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = counts.len();
        if k == 0 || counts.iter().any(|r| r.len() != k) {
            return Err(Error::shape("confusion matrix must be square and non-empty"));
        }
        Ok(Self { counts })
    }

    pub fn from_pairs(n_classes: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut cm = Self::new(n_classes);
        for (t, p) in pairs {
            cm.add(t, p)?;
        }
        Ok(cm)
    }

    pub fn add(&mut self, truth: usize, predicted: usize) -> Result<()> {
        let k = self.counts.len();
        if truth >= k || predicted >= k {
            return Err(Error::invalid(format!("class pair ({truth}, {predicted}) outside {k} classes")));
        }
        self.counts[truth][predicted] += 1;
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn recall(&self, class: usize) -> Result<f64> {
        let row = &self.counts[class];
        let n: u64 = row.iter().sum();
        if n == 0 {
            return Err(Error::data(format!("class {class} has no examples; recall undefined")));
        }
        Ok(row[class] as f64 / n as f64)
    }

    pub fn uar(&self) -> Result<f64> {
        let mut sum = 0.0;
        for k in 0..self.n_classes() {
            sum += self.recall(k)?;
        }
        Ok(sum / self.n_classes() as f64)
    }
}

/// Unweighted average recall.
pub fn uar(cm: &ConfusionMatrix) -> Result<f64> {
    cm.uar()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FileScore {
    pub id: String,
    pub pearson: f64,
    pub degenerate: bool,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Metrics {
    Classification {
        uar: f64,
        confusion: ConfusionMatrix,
    },
    Regression {
        files: Vec<FileScore>,
        mean_pearson: f64,
        mean_mse: f64,
    },
}

impl Metrics {
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        match self {
            Metrics::Classification { uar, confusion } => {
                s.push_str("metric,value\n");
                writeln!(s, "uar,{uar}").ok();
                writeln!(s, "n,{}", confusion.total()).ok();
                for (t, row) in confusion.counts().iter().enumerate() {
                    for (p, c) in row.iter().enumerate() {
                        writeln!(s, "confusion_{t}_{p},{c}").ok();
                    }
                }
            }
            Metrics::Regression {
                files,
                mean_pearson,
                mean_mse,
            } => {
                s.push_str("id,pearson,mse,degenerate\n");
                for f in files {
                    writeln!(s, "{},{},{},{}", f.id, f.pearson, f.mse, f.degenerate).ok();
                }
                writeln!(s, "mean,{mean_pearson},{mean_mse},").ok();
            }
        }
        s
    }
}

/// Scores the ensemble on labeled examples.
pub fn evaluate<T: Scalar>(ens: &Ensemble<T>, examples: &[LabeledExample<T>]) -> Result<Metrics> {
    if examples.is_empty() {
        return Err(Error::data("nothing to evaluate"));
    }
    match ens.spec.task {
        Task::Classification { n_classes } => {
            let mut cm = ConfusionMatrix::new(n_classes);
            for ex in examples {
                let Some(Target::Class(truth)) = ex.target else {
                    return Err(Error::data(format!("example {:?} lacks a class label", ex.id)));
                };
                let (_, class) = ens.predict_classification(&ex.inputs)?;
                cm.add(truth, class)?;
            }
            Ok(Metrics::Classification {
                uar: cm.uar()?,
                confusion: cm,
            })
        }
        Task::SequenceRegression => {
            let mut files = Vec::with_capacity(examples.len());
            for ex in examples {
                let Some(Target::Sequence(target)) = &ex.target else {
                    return Err(Error::data(format!("example {:?} lacks a target sequence", ex.id)));
                };
                let pred = ens.predict_regression(&ex.inputs)?;
                let r = pearson(&pred, target)?;
                files.push(FileScore {
                    id: ex.id.clone(),
                    pearson: r.r.as_f64(),
                    degenerate: r.degenerate,
                    mse: mse(&pred, target)?.as_f64(),
                });
            }
            let n = files.len() as f64;
            let mean_pearson = files.iter().map(|f| f.pearson).sum::<f64>() / n;
            let mean_mse = files.iter().map(|f| f.mse).sum::<f64>() / n;
            Ok(Metrics::Regression {
                files,
                mean_pearson,
                mean_mse,
            })
        }
    }
}

/// Number of untimed evaluations run before measuring.
pub const WARMUP_EVALUATIONS: usize = 5;

/// What one timed evaluation consumes.
#[derive(Debug, Clone)]
pub enum Workload<T> {
    /// Audio clips; features are extracted inside the timed region.
    Audio {
        clips: Vec<AudioBuffer<T>>,
        pipeline: FeaturePipeline,
    },
    /// Precomputed network inputs.
    Features(Vec<Inputs<T>>),
}

impl<T: Scalar> Workload<T> {
    fn len(&self) -> usize {
        match self {
            Workload::Audio { clips, .. } => clips.len(),
            Workload::Features(f) => f.len(),
        }
    }

    fn run_one(&self, ens: &Ensemble<T>, i: usize) -> Result<()> {
        let extracted;
        let inputs = match self {
            Workload::Audio { clips, pipeline } => {
                extracted = pipeline.extract(&clips[i])?;
                &extracted
            }
            Workload::Features(f) => &f[i],
        };
        match ens.spec.task {
            Task::Classification { .. } => {
                std::hint::black_box(ens.predict_classification_with(inputs, Schedule::Serial)?);
            }
            Task::SequenceRegression => {
                std::hint::black_box(ens.predict_regression_with(inputs, Schedule::Serial)?);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub system: String,
    pub n_features: usize,
    pub n_members: usize,
    /// Trainable scalars of one member.
    pub params: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub examples_measured: usize,
    pub repetitions: usize,
    pub includes_feature_extraction: bool,
    /// Always 1: timing runs on the calling thread only.
    pub threads: usize,
}

pub const BENCH_CSV_HEADER: &str = "system,n_features,n_members,params,mean_ms,median_ms,p95_ms";

impl BenchmarkReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.6},{:.6},{:.6}",
            self.system, self.n_features, self.n_members, self.params, self.mean_ms, self.median_ms, self.p95_ms
        )
    }

    pub fn to_text(&self) -> String {
        format!(
            "{}: {} members, {} features, {} params/member; per example mean {:.4} ms, median {:.4} ms, p95 {:.4} ms over {} repetitions of {} examples (feature extraction {}, {} thread)",
            self.system,
            self.n_members,
            self.n_features,
            self.params,
            self.mean_ms,
            self.median_ms,
            self.p95_ms,
            self.repetitions,
            self.examples_measured,
            if self.includes_feature_extraction { "included" } else { "excluded" },
            self.threads
        )
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() as f64 - 1.0) * q).round() as usize;
    sorted[idx.min(sorted.len() - 1)]
}

/// Times end-to-end prediction on the calling thread. Each repetition passes
/// over the whole workload once; its per-example time is the pass time divided
/// by the number of examples.
pub fn benchmark_latency<T: Scalar>(
    system: &str,
    ens: &Ensemble<T>,
    workload: &Workload<T>,
    repetitions: usize,
) -> Result<BenchmarkReport> {
    if repetitions < 3 {
        return Err(Error::invalid("benchmark needs at least 3 repetitions"));
    }
    let n = workload.len();
    if n == 0 {
        return Err(Error::data("benchmark workload is empty"));
    }
    for w in 0..WARMUP_EVALUATIONS {
        workload.run_one(ens, w % n)?;
    }
    let mut per_example = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let start = Instant::now();
        for i in 0..n {
            workload.run_one(ens, i)?;
        }
        let ms = start.elapsed().as_secs_f64() * 1e3 / n as f64;
        per_example.push(ms.max(f64::MIN_POSITIVE));
    }
    let mean_ms = per_example.iter().sum::<f64>() / repetitions as f64;
    per_example.sort_by(f64::total_cmp);
    let n_features = ens.spec.branches.iter().map(|b| b.input_width).sum();
    Ok(BenchmarkReport {
        system: system.to_string(),
        n_features,
        n_members: ens.len(),
        params: ens.spec.count_parameters(),
        mean_ms,
        median_ms: percentile(&per_example, 0.5),
        p95_ms: percentile(&per_example, 0.95),
        examples_measured: n,
        repetitions,
        includes_feature_extraction: matches!(workload, Workload::Audio { .. }),
        threads: 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uar_cases() {
        let diag = ConfusionMatrix::from_counts(vec![vec![3, 0], vec![0, 9]]).unwrap();
        assert_eq!(uar(&diag).unwrap(), 1.0);
        let cm = ConfusionMatrix::from_counts(vec![vec![8, 2], vec![4, 6]]).unwrap();
        assert!((uar(&cm).unwrap() - 0.7).abs() < 1e-15);
        let always0 = ConfusionMatrix::from_pairs(2, (0..10).map(|i| (i % 2, 0))).unwrap();
        assert_eq!(uar(&always0).unwrap(), 0.5);
        let empty_row = ConfusionMatrix::from_counts(vec![vec![1, 0], vec![0, 0]]).unwrap();
        assert!(uar(&empty_row).unwrap_err().to_string().contains("class 1"));
    }

    #[test]
    fn uar_scale_invariant() {
        let cm = ConfusionMatrix::from_counts(vec![vec![5, 2, 1], vec![0, 4, 4], vec![1, 1, 7]]).unwrap();
        let scaled = ConfusionMatrix::from_counts(cm.counts().iter().map(|r| r.iter().map(|c| c * 7).collect()).collect()).unwrap();
        assert!((uar(&cm).unwrap() - uar(&scaled).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn percentile_picks_nearest_rank() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&v, 0.5), 3.0);
        assert_eq!(percentile(&v, 0.95), 5.0);
    }
}
