//! Independently seeded networks combined by averaging (mean output for
//! sequences, soft voting for posteriors).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::data::LabeledExample;
use crate::error::{Error, Result};
use crate::losses::LossSpec;
use crate::matrix::Inputs;
use crate::nn::{
    argmax, forward, init, mask_from_value, mask_to_value, parse_kv, train, Model, NetworkSpec,
    Parameters, Prediction, Task, TrainConfig, TrainLog,
};
use crate::scalar::{order_free_sum, Scalar};
use crate::selection::FeatureMask;

/// How member work is scheduled. Results do not depend on the choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Schedule {
    Serial,
    #[default]
    Parallel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble<T> {
    pub spec: NetworkSpec,
    pub members: Vec<Parameters<T>>,
    pub shuffle_seeds: Vec<u64>,
    pub loss: LossSpec,
    pub masks: BTreeMap<String, FeatureMask>,
}

fn map_members<T, R, F>(n: usize, schedule: Schedule, f: F) -> Vec<R>
where
    T: Scalar,
    R: Send,
    F: Fn(usize) -> R + Send + Sync,
{
    match schedule {
        Schedule::Serial => (0..n).map(f).collect(),
        Schedule::Parallel => (0..n).into_par_iter().map(f).collect(),
    }
}

/// Trains member `i` from seed `base_seed + i` with shuffle seed `base_seed + i`,
/// each on the full training set.
pub fn train_ensemble<T: Scalar>(
    spec: &NetworkSpec,
    examples: &[LabeledExample<T>],
    loss: &LossSpec,
    cfg: &TrainConfig,
    n: usize,
    base_seed: u64,
    schedule: Schedule,
) -> Result<(Ensemble<T>, Vec<TrainLog>)> {
    if n == 0 {
        return Err(Error::invalid("ensemble needs at least one member"));
    }
    spec.validate()?;
    let seeds: Vec<u64> = (0..n as u64).map(|i| base_seed.wrapping_add(i)).collect();
    let results = map_members::<T, _, _>(n, schedule, |i| {
        let member_cfg = TrainConfig {
            shuffle_seed: seeds[i],
            ..*cfg
        };
        init(spec, seeds[i])
            .and_then(|p| train(spec, p, examples, loss, &member_cfg))
            .map_err(|e| Error::Member {
                index: i,
                source: Box::new(e),
            })
    });
    let mut members = Vec::with_capacity(n);
    let mut logs = Vec::with_capacity(n);
    for r in results {
        let (p, log) = r?;
        members.push(p);
        logs.push(log);
    }
    Ok((
        Ensemble {
            spec: spec.clone(),
            members,
            shuffle_seeds: seeds,
            loss: *loss,
            masks: BTreeMap::new(),
        },
        logs,
    ))
}

/// Element-wise mean of equally long vectors, summed in an order that does not
/// depend on the order of `rows`.
pub fn mean_rows<T: Scalar>(rows: &[Vec<T>]) -> Result<Vec<T>> {
    let first = rows.first().ok_or_else(|| Error::invalid("nothing to average"))?;
    if rows.iter().any(|r| r.len() != first.len()) {
        return Err(Error::Numeric("members produced outputs of different lengths".into()));
    }
    let n = T::from_usize_lossy(rows.len());
    let mut column = Vec::with_capacity(rows.len());
    Ok((0..first.len())
        .map(|k| {
            column.clear();
            column.extend(rows.iter().map(|r| r[k]));
            order_free_sum(&mut column) / n
        })
        .collect())
}

impl<T: Scalar> Ensemble<T> {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.members.iter().map(|p| p.seed).collect()
    }

    pub fn member_model(&self, i: usize) -> Model<T> {
        Model {
            spec: self.spec.clone(),
            params: self.members[i].clone(),
            shuffle_seed: self.shuffle_seeds[i],
            loss: self.loss,
            masks: self.masks.clone(),
        }
    }

    /// Per-member predictions in member order.
    pub fn member_outputs(&self, inputs: &Inputs<T>, schedule: Schedule) -> Result<Vec<Prediction<T>>> {
        map_members::<T, _, _>(self.len(), schedule, |i| forward(&self.spec, &self.members[i], inputs))
            .into_iter()
            .collect()
    }

    pub fn predict_regression(&self, inputs: &Inputs<T>) -> Result<Vec<T>> {
        self.predict_regression_with(inputs, Schedule::Serial)
    }

    pub fn predict_regression_with(&self, inputs: &Inputs<T>, schedule: Schedule) -> Result<Vec<T>> {
        if self.spec.task != Task::SequenceRegression {
            return Err(Error::invalid("predict_regression needs a sequence-regression ensemble"));
        }
        let outs: Vec<Vec<T>> = self
            .member_outputs(inputs, schedule)?
            .into_iter()
            .map(|p| p.values().to_vec())
            .collect();
        mean_rows(&outs)
    }

    /// Soft vote: mean posterior and its argmax (ties toward the lower class).
    pub fn predict_classification(&self, inputs: &Inputs<T>) -> Result<(Vec<T>, usize)> {
        self.predict_classification_with(inputs, Schedule::Serial)
    }

    pub fn predict_classification_with(
        &self,
        inputs: &Inputs<T>,
        schedule: Schedule,
    ) -> Result<(Vec<T>, usize)> {
        if !self.spec.task.is_classification() {
            return Err(Error::invalid("predict_classification needs a classification ensemble"));
        }
        let outs: Vec<Vec<T>> = self
            .member_outputs(inputs, schedule)?
            .into_iter()
            .map(|p| p.values().to_vec())
            .collect();
        let mean = mean_rows(&outs)?;
        let class = argmax(&mean);
        Ok((mean, class))
    }

    /// Pairwise agreement of member decisions over `examples`.
    pub fn inter_model_agreement(&self, examples: &[LabeledExample<T>]) -> Result<Agreement> {
        if !self.spec.task.is_classification() {
            return Err(Error::invalid("agreement is defined for classifiers only"));
        }
        if examples.is_empty() {
            return Err(Error::data("agreement needs at least one example"));
        }
        let mut decisions = vec![Vec::with_capacity(examples.len()); self.len()];
        for ex in examples {
            for (i, p) in self.member_outputs(&ex.inputs, Schedule::Serial)?.iter().enumerate() {
                decisions[i].push(p.argmax());
            }
        }
        Ok(Agreement::from_decisions(&decisions))
    }

    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut manifest = String::new();
        for (k, v) in self.spec.to_kv() {
            writeln!(manifest, "{k}={v}").ok();
        }
        let join = |v: &[u64]| v.iter().map(u64::to_string).collect::<Vec<_>>().join(",");
        writeln!(manifest, "n_members={}", self.len()).ok();
        writeln!(manifest, "seeds={}", join(&self.seeds())).ok();
        writeln!(manifest, "shuffle_seeds={}", join(&self.shuffle_seeds)).ok();
        writeln!(manifest, "loss={}", self.loss).ok();
        for (name, m) in &self.masks {
            writeln!(manifest, "mask.{name}={}", mask_to_value(m)).ok();
        }
        std::fs::write(dir.join("manifest.txt"), manifest)?;
        for i in 0..self.len() {
            self.member_model(i).save(dir.join(member_file(i)))?;
        }
        Ok(())
    }

    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let text = std::fs::read_to_string(dir.join("manifest.txt")).map_err(|e| {
            Error::data(format!("{}: not an ensemble directory ({e})", dir.display()))
        })?;
        let pairs = parse_kv(&text)?;
        let spec = NetworkSpec::from_kv(pairs.iter().copied().filter(|(k, _)| k.starts_with("spec.")))?;
        let mut n = None;
        let mut loss = None;
        let mut seeds = Vec::new();
        let mut shuffle_seeds = Vec::new();
        let mut masks = BTreeMap::new();
        let nums = |v: &str| -> Result<Vec<u64>> {
            v.split(',')
                .map(|s| s.parse().map_err(|_| Error::corrupt(format!("bad seed {s:?}"))))
                .collect()
        };
        for &(k, v) in &pairs {
            match k {
                "n_members" => n = v.parse::<usize>().ok(),
                "seeds" => seeds = nums(v)?,
                "shuffle_seeds" => shuffle_seeds = nums(v)?,
                "loss" => loss = Some(v.parse::<LossSpec>()?),
                _ if k.starts_with("spec.") => {}
                _ => match k.strip_prefix("mask.") {
                    Some(name) => {
                        masks.insert(name.to_string(), mask_from_value(v)?);
                    }
                    None => return Err(Error::corrupt(format!("unknown manifest key {k:?}"))),
                },
            }
        }
        let n = n.filter(|&n| n > 0).ok_or_else(|| Error::corrupt("manifest lacks n_members"))?;
        let loss = loss.ok_or_else(|| Error::corrupt("manifest lacks loss"))?;
        if seeds.len() != n || shuffle_seeds.len() != n {
            return Err(Error::corrupt("seed lists do not match n_members"));
        }
        let mut members = Vec::with_capacity(n);
        for i in 0..n {
            let m = Model::<T>::load(dir.join(member_file(i)))?;
            if m.spec != spec || m.loss != loss || m.masks != masks || m.params.seed != seeds[i] {
                return Err(Error::corrupt(format!("member {i} disagrees with the manifest")));
            }
            members.push(m.params);
        }
        Ok(Self {
            spec,
            members,
            shuffle_seeds,
            loss,
            masks,
        })
    }
}

fn member_file(i: usize) -> String {
    format!("member_{i:03}.e2efs")
}

/// Pairwise agreement percentages between member decisions.
#[derive(Debug, Clone, PartialEq)]
pub struct Agreement {
    /// `percent[i][j]`: share of examples where members i and j chose the same class.
    pub percent: Vec<Vec<f64>>,
    /// Mean over unordered pairs; 100 for a single member.
    pub mean: f64,
}

impl Agreement {
    /// `decisions[m][e]` is member m's class for example e.
    pub fn from_decisions(decisions: &[Vec<usize>]) -> Self {
        let n = decisions.len();
        let mut percent = vec![vec![100.0; n]; n];
        let mut total = 0.0;
        let mut pairs = 0usize;
        for i in 0..n {
            for j in i + 1..n {
                let same = decisions[i].iter().zip(&decisions[j]).filter(|(a, b)| a == b).count();
                let p = 100.0 * same as f64 / decisions[i].len().max(1) as f64;
                percent[i][j] = p;
                percent[j][i] = p;
                total += p;
                pairs += 1;
            }
        }
        let mean = if pairs == 0 { 100.0 } else { total / pairs as f64 };
        Self { percent, mean }
    }
}
