use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::dsp::band_select;
use crate::error::{Error, Result};
use crate::losses::Target;
use crate::matrix::Inputs;
use crate::nn::Task;
use crate::scalar::Scalar;
use crate::selection::FeatureMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" | "devel" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::data(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample<T> {
    pub id: String,
    pub inputs: Inputs<T>,
    /// `None` for unlabeled data.
    pub target: Option<Target<T>>,
}

/// Provenance carried next to the examples. Training code never reads it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetMetadata {
    pub source: String,
    pub seed: Option<u64>,
    /// Informative bands of a synthetic set.
    pub planted: Option<Vec<usize>>,
    /// Class names in index order (classification only).
    pub class_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    task: Task,
    splits: BTreeMap<Split, Vec<LabeledExample<T>>>,
    pub metadata: DatasetMetadata,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(
        task: Task,
        train: Vec<LabeledExample<T>>,
        dev: Vec<LabeledExample<T>>,
        test: Vec<LabeledExample<T>>,
        metadata: DatasetMetadata,
    ) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::data("training split is empty"));
        }
        let mut seen = BTreeSet::new();
        for (split, examples) in [(Split::Train, &train), (Split::Dev, &dev), (Split::Test, &test)] {
            for ex in examples {
                if !seen.insert(ex.id.as_str()) {
                    return Err(Error::data(format!(
                        "id {:?} appears more than once (again in {split})",
                        ex.id
                    )));
                }
                check_target(task, ex)?;
            }
        }
        let ds = Self {
            task,
            splits: [(Split::Train, train), (Split::Dev, dev), (Split::Test, test)]
                .into_iter()
                .collect(),
            metadata,
        };
        ds.input_widths()?;
        Ok(ds)
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn split(&self, split: Split) -> &[LabeledExample<T>] {
        &self.splits[&split]
    }

    pub fn train(&self) -> &[LabeledExample<T>] {
        self.split(Split::Train)
    }

    pub fn dev(&self) -> &[LabeledExample<T>] {
        self.split(Split::Dev)
    }

    pub fn test(&self) -> &[LabeledExample<T>] {
        self.split(Split::Test)
    }

    pub fn len(&self) -> usize {
        self.splits.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_labeled(&self) -> bool {
        self.splits.values().flatten().all(|e| e.target.is_some())
    }

    /// Band count of every named input, checked to agree across examples.
    pub fn input_widths(&self) -> Result<BTreeMap<String, usize>> {
        let mut widths: Option<BTreeMap<String, usize>> = None;
        for ex in self.splits.values().flatten() {
            let w: BTreeMap<String, usize> = ex
                .inputs
                .iter()
                .map(|(k, m)| (k.clone(), m.n_bands()))
                .collect();
            match &widths {
                None => widths = Some(w),
                Some(first) if *first != w => {
                    return Err(Error::data(format!(
                        "example {:?} has inputs {w:?}, expected {first:?}",
                        ex.id
                    )))
                }
                _ => {}
            }
        }
        Ok(widths.unwrap_or_default())
    }

    /// Applies `mask` to input `name` of every example.
    pub fn with_mask(&self, name: &str, mask: &FeatureMask) -> Result<Self> {
        self.derive_input(name, name, mask)
    }

    /// Adds input `to`, built by masking input `from`; the original stays.
    pub fn derive_input(&self, from: &str, to: &str, mask: &FeatureMask) -> Result<Self> {
        let mut out = self.clone();
        for ex in out.splits.values_mut().flatten() {
            let src = ex
                .inputs
                .get(from)
                .ok_or_else(|| Error::data(format!("example {:?} has no input {from:?}", ex.id)))?;
            if src.n_bands() != mask.n_features() {
                return Err(Error::data(format!(
                    "mask is over {} features but input {from:?} has {}",
                    mask.n_features(),
                    src.n_bands()
                )));
            }
            let masked = band_select(src, mask)?;
            ex.inputs.insert(to.to_string(), masked);
        }
        Ok(out)
    }

    /// Same examples with every target dropped.
    pub fn unlabeled(&self) -> Self {
        let mut out = self.clone();
        for ex in out.splits.values_mut().flatten() {
            ex.target = None;
        }
        out
    }
}

fn check_target<T: Scalar>(task: Task, ex: &LabeledExample<T>) -> Result<()> {
    match (task, &ex.target) {
        (_, None) => Ok(()),
        (Task::Classification { n_classes }, Some(Target::Class(c))) if *c < n_classes => Ok(()),
        (Task::SequenceRegression, Some(Target::Sequence(s))) if !s.is_empty() => {
            match s.iter().position(|v| !v.is_finite()) {
                Some(index) => Err(Error::NonFinite {
                    index,
                    context: format!("target of {:?}", ex.id),
                }),
                None => Ok(()),
            }
        }
        (task, Some(_)) => Err(Error::data(format!(
            "target of {:?} does not fit task {task}",
            ex.id
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::FeatureMatrix;
    use crate::selection::MaskOrigin;

    fn ex(id: &str, label: usize) -> LabeledExample<f64> {
        let mut inputs = Inputs::new();
        inputs.insert(
            "spect".into(),
            FeatureMatrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]], 100.0).unwrap(),
        );
        LabeledExample {
            id: id.into(),
            inputs,
            target: Some(Target::Class(label)),
        }
    }

    const BINARY: Task = Task::Classification { n_classes: 2 };

    #[test]
    fn ids_must_be_disjoint() {
        let err = Dataset::new(BINARY, vec![ex("a", 0)], vec![ex("a", 1)], vec![], Default::default());
        assert!(err.unwrap_err().to_string().contains("\"a\""));
        assert!(Dataset::new(BINARY, vec![], vec![ex("a", 0)], vec![], Default::default()).is_err());
    }

    #[test]
    fn targets_checked_against_task() {
        assert!(Dataset::new(BINARY, vec![ex("a", 2)], vec![], vec![], Default::default()).is_err());
        assert!(Dataset::new(Task::SequenceRegression, vec![ex("a", 0)], vec![], vec![], Default::default()).is_err());
    }

    #[test]
    fn masking_and_derived_inputs() {
        let ds = Dataset::new(BINARY, vec![ex("a", 0), ex("b", 1)], vec![], vec![], Default::default()).unwrap();
        let m = FeatureMask::new(vec![2], 3, MaskOrigin::Manual).unwrap();
        let masked = ds.with_mask("spect", &m).unwrap();
        assert_eq!(masked.train()[0].inputs["spect"].values(), &[3.0, 6.0]);
        let fused = ds.derive_input("spect", "sel", &m).unwrap();
        assert_eq!(fused.input_widths().unwrap().into_iter().collect::<Vec<_>>(), vec![("sel".into(), 1), ("spect".into(), 3)]);
        assert!(!ds.unlabeled().is_labeled());
    }
}
