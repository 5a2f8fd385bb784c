use std::fmt;
use std::str::FromStr;

use crate::data::LabeledExample;
use crate::error::{Error, Result};
use crate::losses::{LossSpec, Target};
use crate::nn::{backward, forward, output_gradient, NetworkSpec, OutputUnit, Parameters, Task};
use crate::scalar::{exact_sum, Scalar};

/// Which scalar is differentiated to score inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImportanceSource {
    /// The network output (no labels needed).
    Output,
    /// The training loss (labels required).
    Loss,
}

impl fmt::Display for ImportanceSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ImportanceSource::Output => "output",
            ImportanceSource::Loss => "loss",
        })
    }
}

impl FromStr for ImportanceSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "output" => Ok(ImportanceSource::Output),
            "loss" => Ok(ImportanceSource::Loss),
            other => Err(Error::invalid(format!("unknown importance source {other:?}"))),
        }
    }
}

/// Output unit differentiated in output mode, recorded with the scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SaliencyScalar {
    /// Posterior of the labelled class.
    TrueClass,
    /// Posterior of the most probable class (unlabelled examples).
    PredictedClass,
    /// Sum of the output sequence over time.
    SequenceSum,
    /// The loss itself.
    Loss,
}

impl fmt::Display for SaliencyScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SaliencyScalar::TrueClass => "true_class_posterior",
            SaliencyScalar::PredictedClass => "argmax_class_posterior",
            SaliencyScalar::SequenceSum => "sequence_sum",
            SaliencyScalar::Loss => "loss",
        })
    }
}

/// Accumulated absolute input gradients per band of one input.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceVector {
    pub scores: Vec<f64>,
    pub source: ImportanceSource,
    pub model_id: usize,
    /// Scalars used, in first-use order (labelled and unlabelled examples may mix).
    pub scalars: Vec<SaliencyScalar>,
}

impl ImportanceVector {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Sums |∂s/∂x| over examples and frames for every band of `input`, where `s`
/// is the output scalar or the loss depending on `source`. Sums are correctly
/// rounded, so the scores depend only on the multiset of examples.
pub fn importance<T: Scalar>(
    spec: &NetworkSpec,
    params: &Parameters<T>,
    loss: &LossSpec,
    examples: &[LabeledExample<T>],
    input: &str,
    source: ImportanceSource,
    model_id: usize,
) -> Result<ImportanceVector> {
    if examples.is_empty() {
        return Err(Error::data("importance needs at least one example"));
    }
    let width = spec
        .branch(input)
        .ok_or_else(|| Error::invalid(format!("network has no branch for input {input:?}")))?
        .input_width;
    if source == ImportanceSource::Loss {
        if let Some(ex) = examples.iter().find(|e| e.target.is_none()) {
            return Err(Error::data(format!(
                "loss-gradient importance needs labels; example {:?} has none",
                ex.id
            )));
        }
    }
    let mut per_band: Vec<Vec<f64>> = vec![Vec::with_capacity(examples.len()); width];
    let mut scalars = Vec::new();
    for ex in examples {
        let (bundle, scalar) = match source {
            ImportanceSource::Loss => {
                let target = ex.target.as_ref().expect("checked above");
                (backward(spec, params, &ex.inputs, loss, target)?.1, SaliencyScalar::Loss)
            }
            ImportanceSource::Output => {
                let (unit, scalar) = match (spec.task, &ex.target) {
                    (Task::SequenceRegression, _) => (OutputUnit::Sum, SaliencyScalar::SequenceSum),
                    (Task::Classification { .. }, Some(Target::Class(c))) => {
                        (OutputUnit::Class(*c), SaliencyScalar::TrueClass)
                    }
                    (Task::Classification { .. }, _) => {
                        let k = forward(spec, params, &ex.inputs)?.argmax();
                        (OutputUnit::Class(k), SaliencyScalar::PredictedClass)
                    }
                };
                (output_gradient(spec, params, &ex.inputs, unit)?, scalar)
            }
        };
        if !scalars.contains(&scalar) {
            scalars.push(scalar);
        }
        let g = &bundle.input_grads[input];
        for (band, s) in g.abs_column_sums().into_iter().enumerate() {
            per_band[band].push(s.as_f64());
        }
    }
    let scores: Vec<f64> = per_band.into_iter().map(exact_sum).collect();
    if let Some(index) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite {
            index,
            context: "importance score".into(),
        });
    }
    Ok(ImportanceVector {
        scores,
        source,
        model_id,
        scalars,
    })
}
