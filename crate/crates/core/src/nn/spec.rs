//! Declarative network architecture: conv/pool/LSTM branches fused into a dense trunk.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Linear,
    Softmax,
}

impl Activation {
    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Linear => "linear",
            Activation::Softmax => "softmax",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "relu" => Activation::Relu,
            "tanh" => Activation::Tanh,
            "sigmoid" => Activation::Sigmoid,
            "linear" => Activation::Linear,
            "softmax" => Activation::Softmax,
            other => return Err(Error::InvalidSpec(format!("unknown activation {other:?}"))),
        })
    }
}

/// Temporal padding of a convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// No padding: output length `T - k + 1`.
    Valid,
    /// Zero padding of `(k-1)/2` frames on the left and the rest on the right:
    /// output length `T`.
    Same,
}

impl Padding {
    pub fn as_str(self) -> &'static str {
        match self {
            Padding::Valid => "valid",
            Padding::Same => "same",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "valid" => Ok(Padding::Valid),
            "same" => Ok(Padding::Same),
            other => Err(Error::InvalidSpec(format!("unknown padding {other:?}"))),
        }
    }

    /// `(left, right)` zero frames for a kernel of width `k`.
    pub fn amounts(self, k: usize) -> (usize, usize) {
        match self {
            Padding::Valid => (0, 0),
            Padding::Same => ((k - 1) / 2, k - 1 - (k - 1) / 2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Conv1d {
        filters: usize,
        kernel_width: usize,
        activation: Activation,
        padding: Padding,
    },
    /// Non-overlapping max pooling with window equal to `stride`.
    MaxPool1d { stride: usize },
    Lstm { units: usize },
    Dense { units: usize, activation: Activation },
    Output { units: usize, activation: Activation },
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            LayerSpec::Conv1d {
                filters,
                kernel_width,
                activation,
                padding,
            } => write!(
                f,
                "conv1d:{filters}:{kernel_width}:{}:{}",
                activation.as_str(),
                padding.as_str()
            ),
            LayerSpec::MaxPool1d { stride } => write!(f, "maxpool1d:{stride}"),
            LayerSpec::Lstm { units } => write!(f, "lstm:{units}"),
            LayerSpec::Dense { units, activation } => {
                write!(f, "dense:{units}:{}", activation.as_str())
            }
            LayerSpec::Output { units, activation } => {
                write!(f, "output:{units}:{}", activation.as_str())
            }
        }
    }
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv1d { .. } => "conv1d",
            LayerSpec::MaxPool1d { .. } => "maxpool1d",
            LayerSpec::Lstm { .. } => "lstm",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Output { .. } => "output",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |i: usize| -> Result<usize> {
            parts
                .get(i)
                .and_then(|p| p.parse().ok())
                .ok_or_else(|| Error::InvalidSpec(format!("bad layer {s:?}")))
        };
        let word = |i: usize| -> Result<&str> {
            parts
                .get(i)
                .copied()
                .ok_or_else(|| Error::InvalidSpec(format!("bad layer {s:?}")))
        };
        let layer = match parts[0] {
            "conv1d" if parts.len() == 5 => LayerSpec::Conv1d {
                filters: num(1)?,
                kernel_width: num(2)?,
                activation: Activation::parse(word(3)?)?,
                padding: Padding::parse(word(4)?)?,
            },
            "maxpool1d" if parts.len() == 2 => LayerSpec::MaxPool1d { stride: num(1)? },
            "lstm" if parts.len() == 2 => LayerSpec::Lstm { units: num(1)? },
            "dense" if parts.len() == 3 => LayerSpec::Dense {
                units: num(1)?,
                activation: Activation::parse(word(2)?)?,
            },
            "output" if parts.len() == 3 => LayerSpec::Output {
                units: num(1)?,
                activation: Activation::parse(word(2)?)?,
            },
            _ => return Err(Error::InvalidSpec(format!("bad layer {s:?}"))),
        };
        Ok(layer)
    }
}

/// One input stream and its conv/pool/LSTM encoder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BranchSpec {
    pub input: String,
    /// Number of feature columns the branch expects.
    pub input_width: usize,
    pub layers: Vec<LayerSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Classification { n_classes: usize },
    SequenceRegression,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::Classification { n_classes } => write!(f, "classification:{n_classes}"),
            Task::SequenceRegression => f.write_str("sequence_regression"),
        }
    }
}

impl Task {
    pub fn parse(s: &str) -> Result<Self> {
        if s == "sequence_regression" || s == "regression" {
            return Ok(Task::SequenceRegression);
        }
        if s == "classification" {
            return Ok(Task::Classification { n_classes: 2 });
        }
        s.strip_prefix("classification:")
            .and_then(|n| n.parse().ok())
            .map(|n_classes| Task::Classification { n_classes })
            .ok_or_else(|| Error::InvalidSpec(format!("unknown task {s:?}")))
    }

    pub fn is_classification(&self) -> bool {
        matches!(self, Task::Classification { .. })
    }
}

/// Multi-branch architecture. Branch encoders end in an LSTM; their outputs are
/// concatenated (middle fusion) before the dense trunk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    pub branches: Vec<BranchSpec>,
    pub trunk: Vec<LayerSpec>,
    pub task: Task,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.branches.is_empty() {
            return bad("network needs at least one branch".into());
        }
        for (i, b) in self.branches.iter().enumerate() {
            if b.input.is_empty() || b.input.contains(['|', '=', ',', '\n']) {
                return bad(format!("branch {i} has an unusable input name {:?}", b.input));
            }
            if self.branches[..i].iter().any(|o| o.input == b.input) {
                return bad(format!("input {:?} bound to two branches", b.input));
            }
            if b.input_width == 0 {
                return bad(format!("branch {:?} has zero input width", b.input));
            }
            if !matches!(b.layers.last(), Some(LayerSpec::Lstm { .. })) {
                return bad(format!("branch {:?} must end in an lstm layer", b.input));
            }
            for l in &b.layers {
                match *l {
                    LayerSpec::Conv1d {
                        filters,
                        kernel_width,
                        activation,
                        ..
                    } => {
                        if filters == 0 || kernel_width == 0 {
                            return bad(format!("branch {:?}: {l} has a zero count", b.input));
                        }
                        if activation == Activation::Softmax {
                            return bad("softmax is only allowed on the output layer".into());
                        }
                    }
                    LayerSpec::MaxPool1d { stride } if stride == 0 => {
                        return bad(format!("branch {:?}: pool stride must be >= 1", b.input));
                    }
                    LayerSpec::Lstm { units } if units == 0 => {
                        return bad(format!("branch {:?}: lstm needs units", b.input));
                    }
                    LayerSpec::Dense { .. } | LayerSpec::Output { .. } => {
                        return bad(format!("branch {:?}: {} belongs in the trunk", b.input, l.kind()));
                    }
                    _ => {}
                }
            }
        }
        let (out, dense) = match self.trunk.split_last() {
            Some((LayerSpec::Output { units, activation }, rest)) => ((*units, *activation), rest),
            _ => return bad("trunk must end in an output layer".into()),
        };
        for l in dense {
            match *l {
                LayerSpec::Dense { units, activation } => {
                    if units == 0 {
                        return bad("dense layer needs units".into());
                    }
                    if activation == Activation::Softmax {
                        return bad("softmax is only allowed on the output layer".into());
                    }
                }
                _ => return bad(format!("{} layer not allowed inside the trunk", l.kind())),
            }
        }
        match self.task {
            Task::Classification { n_classes } => {
                if n_classes < 2 {
                    return bad("classification needs at least two classes".into());
                }
                if out != (n_classes, Activation::Softmax) {
                    return bad(format!(
                        "classification output must be output:{n_classes}:softmax"
                    ));
                }
            }
            Task::SequenceRegression => {
                if out != (1, Activation::Linear) {
                    return bad("sequence regression output must be output:1:linear".into());
                }
            }
        }
        Ok(())
    }

    pub fn branch(&self, input: &str) -> Option<&BranchSpec> {
        self.branches.iter().find(|b| b.input == input)
    }

    /// Product of all pooling strides in a branch.
    pub fn total_stride(branch: &BranchSpec) -> usize {
        branch
            .layers
            .iter()
            .map(|l| match l {
                LayerSpec::MaxPool1d { stride } => *stride,
                _ => 1,
            })
            .product()
    }

    /// Sequence length leaving a branch for an input of `len` frames, or `None`
    /// when the input is too short.
    pub fn branch_output_len(branch: &BranchSpec, len: usize) -> Option<usize> {
        let mut t = len;
        for l in &branch.layers {
            t = match *l {
                LayerSpec::Conv1d {
                    kernel_width,
                    padding,
                    ..
                } => {
                    let (pl, pr) = padding.amounts(kernel_width);
                    (t + pl + pr).checked_sub(kernel_width)? + 1
                }
                LayerSpec::MaxPool1d { stride } => t / stride,
                _ => t,
            };
            if t == 0 {
                return None;
            }
        }
        Some(t)
    }

    /// Width of the concatenated branch representation fed to the trunk.
    pub fn fused_width(&self) -> usize {
        self.branches
            .iter()
            .map(|b| match b.layers.last() {
                Some(LayerSpec::Lstm { units }) => *units,
                _ => 0,
            })
            .sum()
    }

    /// Exact number of trainable scalars.
    pub fn count_parameters(&self) -> usize {
        crate::nn::ParamLayout::new(self).total()
    }

    /// Key/value serialisation used in model headers and ensemble manifests.
    pub fn to_kv(&self) -> Vec<(String, String)> {
        let mut kv = vec![("spec.task".to_string(), self.task.to_string())];
        for (i, b) in self.branches.iter().enumerate() {
            let layers: Vec<String> = b.layers.iter().map(ToString::to_string).collect();
            kv.push((
                format!("spec.branch.{i}"),
                format!("{}:{}|{}", b.input, b.input_width, layers.join("|")),
            ));
        }
        let trunk: Vec<String> = self.trunk.iter().map(ToString::to_string).collect();
        kv.push(("spec.trunk".to_string(), trunk.join("|")));
        kv
    }

    pub fn from_kv<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut task = None;
        let mut trunk = None;
        let mut branches: Vec<(usize, BranchSpec)> = Vec::new();
        for (k, v) in pairs {
            if k == "spec.task" {
                task = Some(Task::parse(v)?);
            } else if k == "spec.trunk" {
                trunk = Some(v.split('|').map(LayerSpec::parse).collect::<Result<Vec<_>>>()?);
            } else if let Some(idx) = k.strip_prefix("spec.branch.") {
                let idx: usize = idx
                    .parse()
                    .map_err(|_| Error::InvalidSpec(format!("bad key {k:?}")))?;
                let mut parts = v.split('|');
                let head = parts.next().unwrap_or_default();
                let (name, width) = head
                    .rsplit_once(':')
                    .and_then(|(n, w)| Some((n.to_string(), w.parse().ok()?)))
                    .ok_or_else(|| Error::InvalidSpec(format!("bad branch {v:?}")))?;
                let layers = parts.map(LayerSpec::parse).collect::<Result<Vec<_>>>()?;
                branches.push((
                    idx,
                    BranchSpec {
                        input: name,
                        input_width: width,
                        layers,
                    },
                ));
            }
        }
        branches.sort_by_key(|(i, _)| *i);
        if branches.iter().enumerate().any(|(i, (j, _))| i != *j) {
            return Err(Error::InvalidSpec("branch indices are not contiguous".into()));
        }
        let spec = NetworkSpec {
            branches: branches.into_iter().map(|(_, b)| b).collect(),
            trunk: trunk.ok_or_else(|| Error::InvalidSpec("missing spec.trunk".into()))?,
            task: task.ok_or_else(|| Error::InvalidSpec("missing spec.task".into()))?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Conv → (pool) → LSTM encoder shape shared by every branch, plus a dense trunk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvLstmShape {
    /// `(filters, kernel width, pool stride)`; stride 1 means no pooling layer.
    pub conv: Vec<(usize, usize, usize)>,
    pub padding: Padding,
    pub conv_activation: Activation,
    pub lstm_units: usize,
    pub dense_units: Vec<usize>,
}

impl ConvLstmShape {
    /// Mask-detection network: two pointwise conv layers of 64 filters, 100 LSTM
    /// cells, 100 ReLU units.
    pub fn msc() -> Self {
        Self {
            conv: vec![(64, 1, 1), (64, 1, 1)],
            padding: Padding::Valid,
            conv_activation: Activation::Relu,
            lstm_units: 100,
            dense_units: vec![100],
        }
    }

    /// Spectral breathing network: conv widths 8 and 6, no pooling.
    pub fn breathing_spectral() -> Self {
        Self {
            conv: vec![(64, 8, 1), (64, 6, 1)],
            padding: Padding::Same,
            conv_activation: Activation::Relu,
            lstm_units: 100,
            dense_units: vec![100],
        }
    }

    /// Raw-waveform breathing network: 64-128-256 filters of widths 8-6-6, each
    /// followed by max pooling at strides 10-8-8.
    pub fn breathing_raw() -> Self {
        Self {
            conv: vec![(64, 8, 10), (128, 6, 8), (256, 6, 8)],
            padding: Padding::Same,
            conv_activation: Activation::Relu,
            lstm_units: 100,
            dense_units: vec![100],
        }
    }

    pub fn branch(&self, input: &str, input_width: usize) -> BranchSpec {
        let mut layers = Vec::new();
        for &(filters, kernel_width, stride) in &self.conv {
            layers.push(LayerSpec::Conv1d {
                filters,
                kernel_width,
                activation: self.conv_activation,
                padding: self.padding,
            });
            if stride > 1 {
                layers.push(LayerSpec::MaxPool1d { stride });
            }
        }
        layers.push(LayerSpec::Lstm {
            units: self.lstm_units,
        });
        BranchSpec {
            input: input.to_string(),
            input_width,
            layers,
        }
    }

    /// One encoder per `(input name, width)`, fused into a shared trunk.
    pub fn build(&self, task: Task, inputs: &[(&str, usize)]) -> Result<NetworkSpec> {
        let mut trunk: Vec<LayerSpec> = self
            .dense_units
            .iter()
            .map(|&units| LayerSpec::Dense {
                units,
                activation: Activation::Relu,
            })
            .collect();
        trunk.push(match task {
            Task::Classification { n_classes } => LayerSpec::Output {
                units: n_classes,
                activation: Activation::Softmax,
            },
            Task::SequenceRegression => LayerSpec::Output {
                units: 1,
                activation: Activation::Linear,
            },
        });
        let spec = NetworkSpec {
            branches: inputs.iter().map(|&(n, w)| self.branch(n, w)).collect(),
            trunk,
            task,
        };
        spec.validate()?;
        Ok(spec)
    }
}
