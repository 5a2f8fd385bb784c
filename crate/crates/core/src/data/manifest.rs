//! Ingestion of user corpora listed in a CSV manifest with columns
//! `id,wav_path,split,label_or_target_path`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::data::{Dataset, DatasetMetadata, LabeledExample, Split};
use crate::dsp::{AudioBuffer, FeaturePipeline};
use crate::error::{Error, Result};
use crate::losses::Target;
use crate::nn::Task;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    /// Fourth column is a class name.
    Label,
    /// Fourth column is a path to a one-column CSV sequence.
    Sequence,
}

#[derive(Debug, Clone)]
pub struct ManifestOptions {
    pub pipeline: FeaturePipeline,
    pub target_kind: TargetKind,
    /// Number of target values each regression file should carry, if known.
    pub expected_target_len: Option<usize>,
}

/// A regression target whose length differs from the expected output length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LengthWarning {
    pub row: u64,
    pub id: String,
    pub expected: usize,
    pub found: usize,
}

/// Reads a one-real-per-line CSV; blank lines are skipped.
pub fn read_target_csv<T: Scalar>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::data(format!("cannot read target {}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(T::lit)
                .ok_or_else(|| {
                    Error::data(format!("{} line {}: bad value {l:?}", path.display(), i + 1))
                })
        })
        .collect()
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

struct Row {
    line: u64,
    id: String,
    wav: PathBuf,
    split: Split,
    field: String,
}

fn row_error(line: u64, msg: impl std::fmt::Display) -> Error {
    Error::data(format!("manifest row {line}: {msg}"))
}

/// Checks the header, ids, splits and that every audio file exists.
fn read_rows(manifest_path: &Path) -> Result<Vec<Row>> {
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(manifest_path)
        .map_err(|e| Error::data(format!("cannot open manifest {}: {e}", manifest_path.display())))?;
    let headers = reader.headers()?.clone();
    let want = ["id", "wav_path", "split", "label_or_target_path"];
    if headers.iter().collect::<Vec<_>>() != want {
        return Err(Error::data(format!(
            "manifest header must be {}, found {}",
            want.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut first_row: BTreeMap<String, u64> = BTreeMap::new();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 4 {
            return Err(row_error(line, format!("expected 4 fields, found {}", record.len())));
        }
        let id = record[0].to_string();
        if id.is_empty() {
            return Err(row_error(line, "empty id"));
        }
        if let Some(prev) = first_row.insert(id.clone(), line) {
            return Err(row_error(line, format!("duplicate id {id:?} (first seen at row {prev})")));
        }
        let split: Split = record[2].parse().map_err(|e| row_error(line, e))?;
        let wav = resolve(base, &record[1]);
        if !wav.is_file() {
            return Err(row_error(line, format!("missing audio file {}", wav.display())));
        }
        rows.push(Row {
            line,
            id,
            wav,
            split,
            field: record[3].to_string(),
        });
    }
    Ok(rows)
}

/// Decoded audio of every row (or of one split), in manifest order.
pub fn load_manifest_audio<T: Scalar>(
    manifest_path: impl AsRef<Path>,
    sample_rate: u32,
    split: Option<Split>,
) -> Result<Vec<(String, AudioBuffer<T>)>> {
    read_rows(manifest_path.as_ref())?
        .into_iter()
        .filter(|r| split.is_none_or(|s| s == r.split))
        .map(|r| {
            let audio = AudioBuffer::read_wav(&r.wav, sample_rate)
                .map_err(|e| row_error(r.line, format!("{}: {e}", r.wav.display())))?;
            Ok((r.id, audio))
        })
        .collect()
}

/// Loads every row, extracting features with `opts.pipeline`. Class names map to
/// indices in first-seen order; an empty fourth column leaves the example unlabeled.
pub fn load_audio_dataset<T: Scalar>(
    manifest_path: impl AsRef<Path>,
    opts: &ManifestOptions,
) -> Result<(Dataset<T>, Vec<LengthWarning>)> {
    let manifest_path = manifest_path.as_ref();
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let rate = opts.pipeline.spectrogram.sample_rate;
    let mut classes: Vec<String> = Vec::new();
    let mut splits: BTreeMap<Split, Vec<LabeledExample<T>>> = BTreeMap::new();
    let mut warnings = Vec::new();
    for Row {
        line: row,
        id,
        wav,
        split,
        field,
    } in read_rows(manifest_path)?
    {
        let at = |msg: String| row_error(row, msg);
        let audio = AudioBuffer::<T>::read_wav(&wav, rate).map_err(|e| at(format!("{}: {e}", wav.display())))?;
        let inputs = opts.pipeline.extract(&audio).map_err(|e| at(format!("{e}")))?;

        let field = field.as_str();
        let target = match (opts.target_kind, field.is_empty()) {
            (_, true) => None,
            (TargetKind::Label, false) => {
                let idx = match classes.iter().position(|c| c == field) {
                    Some(i) => i,
                    None => {
                        classes.push(field.to_string());
                        classes.len() - 1
                    }
                };
                Some(Target::Class(idx))
            }
            (TargetKind::Sequence, false) => {
                let path = resolve(base, field);
                if !path.is_file() {
                    return Err(at(format!("missing target file {}", path.display())));
                }
                let seq = read_target_csv::<T>(&path).map_err(|e| at(format!("{e}")))?;
                if seq.is_empty() {
                    return Err(at(format!("target file {} is empty", path.display())));
                }
                if let Some(expected) = opts.expected_target_len.filter(|&n| n != seq.len()) {
                    warnings.push(LengthWarning {
                        row,
                        id: id.clone(),
                        expected,
                        found: seq.len(),
                    });
                }
                Some(Target::Sequence(seq))
            }
        };
        splits.entry(split).or_default().push(LabeledExample { id, inputs, target });
    }

    let task = match opts.target_kind {
        TargetKind::Label => Task::Classification {
            n_classes: classes.len().max(2),
        },
        TargetKind::Sequence => Task::SequenceRegression,
    };
    let mut take = |s| splits.remove(&s).unwrap_or_default();
    let metadata = DatasetMetadata {
        source: manifest_path.display().to_string(),
        seed: None,
        planted: None,
        class_names: classes,
    };
    let ds = Dataset::new(task, take(Split::Train), take(Split::Dev), take(Split::Test), metadata)?;
    Ok((ds, warnings))
}
