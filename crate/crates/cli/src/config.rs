//! Run configuration: UTF-8 `key=value` lines with dotted section names.
//!
//! Every key has a default; files and `--set` overrides may only name known
//! keys. The resolved table is written next to every artifact as `config.txt`,
//! which is itself a valid config file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use e2efs::dsp::{BranchFeatures, FeatureKind, FeaturePipeline, PreEmphasisConfig, SpectrogramConfig};
use e2efs::ensemble::Schedule;
use e2efs::losses::LossSpec;
use e2efs::nn::{Activation, ConvLstmShape, Padding, Task, TrainConfig};
use e2efs::selection::{ImportanceSource, ProxyConfig};

/// `(key, default, meaning)`.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("data.dataset", "", "dataset directory written by `synth` or `features`"),
    ("data.manifest", "", "manifest CSV: id,wav_path,split,label_or_target_path"),
    ("data.target", "label", "fourth manifest column: label | sequence"),
    ("data.expected_target_len", "0", "warn when a target sequence has another length (0 = off)"),
    ("features.sample_rate", "16000", "expected WAV sample rate"),
    ("features.n_fft", "512", "FFT size"),
    ("features.hop", "160", "hop in samples"),
    ("features.n_mel", "128", "mel bands"),
    ("features.fmin", "20", "lowest mel edge in Hz"),
    ("features.fmax", "8000", "highest mel edge in Hz"),
    ("features.log_floor", "1e-10", "added to mel power before the log"),
    ("features.preemphasis", "0.97", "pre-emphasis coefficient"),
    ("features.lowpass_order", "5", "Butterworth order for the preemph features"),
    ("features.lowpass_cutoff", "400", "Butterworth cutoff in Hz"),
    ("features.ratio_boundary", "400", "low/high split for the ratio feature in Hz"),
    ("features.branches", "spect:logmel", "comma list of name:kind (logmel | preemph | ratio | raw)"),
    ("model.shape", "msc", "msc | breathing_spectral | breathing_raw"),
    ("model.conv", "", "override conv stack: filters:width:pool, comma separated"),
    ("model.padding", "", "override conv padding: valid | same"),
    ("model.activation", "", "override conv activation"),
    ("model.lstm_units", "", "override LSTM cells"),
    ("model.dense_units", "", "override dense trunk widths, comma separated"),
    ("model.inputs", "spect", "dataset inputs fed to the network, one branch each"),
    ("model.ensemble", "", "trained ensemble directory read by saliency, select, eval, bench"),
    ("train.learning_rate", "0.001", "Adam step size"),
    ("train.batch_size", "100", "examples per update"),
    ("train.epochs", "10", "passes over the training split"),
    ("train.beta1", "0.9", "Adam first-moment decay"),
    ("train.beta2", "0.999", "Adam second-moment decay"),
    ("train.epsilon", "1e-8", "Adam denominator offset"),
    ("ensemble.n", "10", "members"),
    ("ensemble.base_seed", "0", "member i uses seed base_seed + i"),
    ("ensemble.schedule", "parallel", "parallel | serial"),
    ("loss", "auto", "xent | mse | corr | corr+mse:<lambda>; auto picks xent or corr+mse:1"),
    ("selection.method", "vote", "vote | least_important | lowest | random | sffs"),
    ("selection.source", "output", "importance source: output | loss"),
    ("selection.n", "10", "bands to keep"),
    ("selection.input", "spect", "input whose bands are selected"),
    ("selection.seed", "0", "seed of the random baseline"),
    ("selection.mask", "", "mask file used by retrain and fuse"),
    ("sffs.epochs", "100", "proxy training epochs"),
    ("sffs.learning_rate", "0.1", "proxy step size"),
    ("sffs.l2", "0.001", "proxy weight decay"),
    ("synth.kind", "classification", "classification | regression"),
    ("synth.seed", "0", "generator seed"),
    ("synth.n_examples", "667", "examples over all splits (60/20/20)"),
    ("synth.frames", "10", "frames per example"),
    ("synth.bands", "64", "bands per frame"),
    ("synth.planted", "3,9,15,21,27,33,39,45,51,57", "planted (classification) or driver (regression) bands"),
    ("synth.effect_size", "2", "class-1 mean shift on planted bands"),
    ("eval.split", "dev", "train | dev | test"),
    ("bench.repetitions", "10", "timed passes over the workload"),
    ("bench.max_examples", "50", "examples per pass"),
    ("bench.split", "dev", "split timed when benchmarking precomputed features"),
    ("output.dir", "out", "directory receiving artifacts"),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

fn err<T>(msg: impl Into<String>) -> Result<T> {
    Err(ConfigError(msg.into()))
}

/// The resolved key table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl Config {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => err(format!("unknown config key {key:?}")),
        }
    }

    /// Applies `key=value` text; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = split_pair(line).map_err(|e| ConfigError(format!("{origin}:{}: {e}", i + 1)))?;
            self.set(k, v).map_err(|e| ConfigError(format!("{origin}:{}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).expect("key listed in KEYS")
    }

    pub fn snapshot(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        let raw = self.get(key);
        raw.parse()
            .map_err(|e| ConfigError(format!("{key}={raw:?}: {e}")))
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>>
    where
        T::Err: fmt::Display,
    {
        let raw = self.get(key);
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e| ConfigError(format!("{key}: {s:?}: {e}"))))
            .collect()
    }

    fn path(&self, key: &str) -> Result<PathBuf> {
        match self.get(key) {
            "" => err(format!("{key} is not set")),
            p => Ok(PathBuf::from(p)),
        }
    }

    pub fn dataset_dir(&self) -> Result<PathBuf> {
        self.path("data.dataset")
    }

    pub fn manifest(&self) -> Result<Option<PathBuf>> {
        Ok(match self.get("data.manifest") {
            "" => None,
            p => Some(PathBuf::from(p)),
        })
    }

    pub fn ensemble_dir(&self) -> Result<PathBuf> {
        self.path("model.ensemble")
    }

    pub fn mask_path(&self) -> Result<PathBuf> {
        self.path("selection.mask")
    }

    pub fn output_dir(&self) -> Result<PathBuf> {
        self.path("output.dir")
    }

    pub fn target_is_sequence(&self) -> Result<bool> {
        match self.get("data.target") {
            "label" => Ok(false),
            "sequence" => Ok(true),
            other => err(format!("data.target must be label or sequence, got {other:?}")),
        }
    }

    pub fn expected_target_len(&self) -> Result<Option<usize>> {
        Ok(Some(self.parse::<usize>("data.expected_target_len")?).filter(|&n| n > 0))
    }

    pub fn pipeline(&self) -> Result<FeaturePipeline> {
        let spectrogram = SpectrogramConfig {
            sample_rate: self.parse("features.sample_rate")?,
            n_fft: self.parse("features.n_fft")?,
            hop: self.parse("features.hop")?,
            n_mel: self.parse("features.n_mel")?,
            fmin: self.parse("features.fmin")?,
            fmax: self.parse("features.fmax")?,
            log_floor: self.parse("features.log_floor")?,
        };
        spectrogram.validate().map_err(|e| ConfigError(e.to_string()))?;
        let preemphasis =
            PreEmphasisConfig::new(self.parse("features.preemphasis")?).map_err(|e| ConfigError(e.to_string()))?;
        let mut branches = Vec::new();
        for item in self.list::<String>("features.branches")? {
            let Some((name, kind)) = item.split_once(':') else {
                return err(format!("features.branches entry {item:?} is not name:kind"));
            };
            branches.push(BranchFeatures {
                name: name.to_string(),
                kind: FeatureKind::parse(kind).map_err(|e| ConfigError(e.to_string()))?,
                mask: None,
            });
        }
        if branches.is_empty() {
            return err("features.branches is empty");
        }
        Ok(FeaturePipeline {
            spectrogram,
            preemphasis,
            lowpass_order: self.parse("features.lowpass_order")?,
            lowpass_cutoff: self.parse("features.lowpass_cutoff")?,
            ratio_boundary: self.parse("features.ratio_boundary")?,
            branches,
        })
    }

    pub fn shape(&self) -> Result<ConvLstmShape> {
        let mut shape = match self.get("model.shape") {
            "msc" => ConvLstmShape::msc(),
            "breathing_spectral" => ConvLstmShape::breathing_spectral(),
            "breathing_raw" => ConvLstmShape::breathing_raw(),
            other => return err(format!("unknown model.shape {other:?}")),
        };
        if !self.get("model.conv").is_empty() {
            shape.conv = self
                .list::<String>("model.conv")?
                .iter()
                .map(|item| {
                    let parts: Vec<usize> = item
                        .split(':')
                        .map(|p| p.parse().map_err(|_| ConfigError(format!("model.conv entry {item:?}"))))
                        .collect::<Result<_>>()?;
                    match parts[..] {
                        [f, k, s] => Ok((f, k, s)),
                        _ => err(format!("model.conv entry {item:?} is not filters:width:pool")),
                    }
                })
                .collect::<Result<_>>()?;
        }
        if !self.get("model.padding").is_empty() {
            shape.padding = Padding::parse(self.get("model.padding")).map_err(|e| ConfigError(e.to_string()))?;
        }
        if !self.get("model.activation").is_empty() {
            shape.conv_activation =
                Activation::parse(self.get("model.activation")).map_err(|e| ConfigError(e.to_string()))?;
        }
        if !self.get("model.lstm_units").is_empty() {
            shape.lstm_units = self.parse("model.lstm_units")?;
        }
        if !self.get("model.dense_units").is_empty() {
            shape.dense_units = self.list("model.dense_units")?;
        }
        Ok(shape)
    }

    pub fn model_inputs(&self) -> Result<Vec<String>> {
        let v = self.list::<String>("model.inputs")?;
        if v.is_empty() {
            return err("model.inputs is empty");
        }
        Ok(v)
    }

    pub fn train(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            learning_rate: self.parse("train.learning_rate")?,
            batch_size: self.parse("train.batch_size")?,
            epochs: self.parse("train.epochs")?,
            beta1: self.parse("train.beta1")?,
            beta2: self.parse("train.beta2")?,
            epsilon: self.parse("train.epsilon")?,
            shuffle_seed: 0,
        };
        cfg.validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(cfg)
    }

    pub fn members(&self) -> Result<usize> {
        match self.parse("ensemble.n")? {
            0 => err("ensemble.n must be at least 1"),
            n => Ok(n),
        }
    }

    pub fn base_seed(&self) -> Result<u64> {
        self.parse("ensemble.base_seed")
    }

    pub fn schedule(&self) -> Result<Schedule> {
        match self.get("ensemble.schedule") {
            "parallel" => Ok(Schedule::Parallel),
            "serial" => Ok(Schedule::Serial),
            other => err(format!("ensemble.schedule must be parallel or serial, got {other:?}")),
        }
    }

    pub fn loss(&self, task: Task) -> Result<LossSpec> {
        let loss = match self.get("loss") {
            "auto" if task.is_classification() => LossSpec::CrossEntropy,
            "auto" => LossSpec::CorrPlusMse { lambda_mse: 1.0 },
            other => other.parse().map_err(|e: e2efs::Error| ConfigError(format!("loss: {e}")))?,
        };
        if loss.is_classification() != task.is_classification() {
            return err(format!("loss {loss} does not fit task {task}"));
        }
        Ok(loss)
    }

    pub fn selection_method(&self) -> Result<SelectionMethod> {
        Ok(match self.get("selection.method") {
            "vote" => SelectionMethod::Vote,
            "least_important" => SelectionMethod::LeastImportant,
            "lowest" => SelectionMethod::Lowest,
            "random" => SelectionMethod::Random,
            "sffs" => SelectionMethod::Sffs,
            other => return err(format!("unknown selection.method {other:?}")),
        })
    }

    pub fn importance_source(&self) -> Result<ImportanceSource> {
        self.get("selection.source")
            .parse()
            .map_err(|e: e2efs::Error| ConfigError(format!("selection.source: {e}")))
    }

    pub fn selection_n(&self) -> Result<usize> {
        self.parse("selection.n")
    }

    pub fn selection_input(&self) -> &str {
        self.get("selection.input")
    }

    pub fn selection_seed(&self) -> Result<u64> {
        self.parse("selection.seed")
    }

    pub fn proxy(&self) -> Result<ProxyConfig> {
        Ok(ProxyConfig {
            epochs: self.parse("sffs.epochs")?,
            learning_rate: self.parse("sffs.learning_rate")?,
            l2: self.parse("sffs.l2")?,
        })
    }

    pub fn synth(&self) -> Result<SynthSettings> {
        let regression = match self.get("synth.kind") {
            "classification" => false,
            "regression" => true,
            other => return err(format!("synth.kind must be classification or regression, got {other:?}")),
        };
        Ok(SynthSettings {
            regression,
            seed: self.parse("synth.seed")?,
            n_examples: self.parse("synth.n_examples")?,
            frames: self.parse("synth.frames")?,
            bands: self.parse("synth.bands")?,
            planted: self.list("synth.planted")?,
            effect_size: self.parse("synth.effect_size")?,
        })
    }

    pub fn eval_split(&self) -> Result<e2efs::data::Split> {
        self.get("eval.split")
            .parse()
            .map_err(|e: e2efs::Error| ConfigError(format!("eval.split: {e}")))
    }

    pub fn bench(&self) -> Result<BenchSettings> {
        Ok(BenchSettings {
            repetitions: self.parse("bench.repetitions")?,
            max_examples: self.parse("bench.max_examples")?,
            split: self
                .get("bench.split")
                .parse()
                .map_err(|e: e2efs::Error| ConfigError(format!("bench.split: {e}")))?,
        })
    }
}

fn split_pair(s: &str) -> std::result::Result<(&str, &str), String> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim(), v.trim())),
        _ => Err(format!("expected key=value, got {s:?}")),
    }
}

/// Parses one `--set` argument.
pub fn parse_override(s: &str) -> std::result::Result<(String, String), String> {
    split_pair(s).map(|(k, v)| (k.to_string(), v.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionMethod {
    Vote,
    LeastImportant,
    Lowest,
    Random,
    Sffs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSettings {
    pub regression: bool,
    pub seed: u64,
    pub n_examples: usize,
    pub frames: usize,
    pub bands: usize,
    pub planted: Vec<usize>,
    pub effect_size: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchSettings {
    pub repetitions: usize,
    pub max_examples: usize,
    pub split: e2efs::data::Split,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve() {
        let c = Config::default();
        assert_eq!(c.train().unwrap(), TrainConfig::default());
        assert_eq!(c.shape().unwrap(), ConvLstmShape::msc());
        assert_eq!(c.pipeline().unwrap(), FeaturePipeline::default());
        assert_eq!(c.loss(Task::SequenceRegression).unwrap(), LossSpec::CorrPlusMse { lambda_mse: 1.0 });
    }

    #[test]
    fn unknown_keys_and_bad_lines_rejected() {
        let mut c = Config::default();
        let e = c.apply_text("train.epochs=3\n\ntrain.epoch=4\n", "cfg").unwrap_err();
        assert!(e.0.contains("cfg:3") && e.0.contains("train.epoch"), "{e}");
        assert!(c.apply_text("novalue\n", "cfg").is_err());
        assert_eq!(c.get("train.epochs"), "3");
    }

    #[test]
    fn snapshot_reparses_to_same_config() {
        let mut c = Config::default();
        c.set("model.conv", "8:1:1").unwrap();
        c.set("loss", "corr+mse:0.5").unwrap();
        let mut d = Config::default();
        d.apply_text(&c.snapshot(), "snap").unwrap();
        assert_eq!(c, d);
        assert_eq!(d.shape().unwrap().conv, vec![(8, 1, 1)]);
    }

    #[test]
    fn typed_errors_name_the_key() {
        let mut c = Config::default();
        c.set("train.batch_size", "lots").unwrap();
        assert!(c.train().unwrap_err().0.contains("train.batch_size"));
        c.set("loss", "hinge").unwrap();
        assert!(c.loss(Task::SequenceRegression).unwrap_err().0.contains("loss"));
        c.set("loss", "mse").unwrap();
        assert!(c.loss(Task::Classification { n_classes: 2 }).is_err());
    }
}
