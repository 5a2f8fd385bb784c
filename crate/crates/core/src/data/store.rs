//! On-disk dataset directory: `dataset.txt` (key=value metadata),
//! `examples.csv` (id, split, target), one FMAT1 file per example input under
//! `features/` and one target CSV per regression example under `targets/`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::data::{load_matrix, read_target_csv, save_matrix, Dataset, DatasetMetadata, LabeledExample, Split};
use crate::error::{Error, Result};
use crate::losses::Target;
use crate::matrix::Inputs;
use crate::nn::{parse_kv, Task};
use crate::scalar::Scalar;

fn join(v: &[impl ToString]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn check_name(kind: &str, s: &str) -> Result<()> {
    let ok = !s.is_empty()
        && !s.starts_with('.')
        && s.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c));
    if ok {
        Ok(())
    } else {
        Err(Error::data(format!("{kind} {s:?} is not usable as a file name")))
    }
}

impl<T: Scalar> Dataset<T> {
    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir.join("features"))?;
        let widths = self.input_widths()?;
        let names: Vec<&String> = widths.keys().collect();
        let mut meta = String::new();
        let m = &self.metadata;
        writeln!(meta, "task={}", self.task()).ok();
        writeln!(meta, "source={}", m.source.replace('\n', " ")).ok();
        if let Some(seed) = m.seed {
            writeln!(meta, "seed={seed}").ok();
        }
        if let Some(p) = &m.planted {
            writeln!(meta, "planted={}", join(p)).ok();
        }
        writeln!(meta, "classes={}", m.class_names.join(",")).ok();
        writeln!(meta, "inputs={}", join(&names)).ok();
        std::fs::write(dir.join("dataset.txt"), meta)?;

        let mut rows = String::from("id,split,target\n");
        for split in Split::ALL {
            for ex in self.split(split) {
                check_name("example id", &ex.id)?;
                for (name, mat) in &ex.inputs {
                    check_name("input name", name)?;
                    save_matrix(dir.join("features").join(format!("{}.{name}.fmat", ex.id)), mat)?;
                }
                let target = match &ex.target {
                    None => String::new(),
                    Some(Target::Class(c)) => c.to_string(),
                    Some(Target::Sequence(seq)) => {
                        std::fs::create_dir_all(dir.join("targets"))?;
                        let rel = format!("targets/{}.csv", ex.id);
                        let body: String = seq.iter().map(|v| format!("{}\n", v.as_f64())).collect();
                        std::fs::write(dir.join(&rel), body)?;
                        rel
                    }
                };
                writeln!(rows, "{},{split},{target}", ex.id).ok();
            }
        }
        std::fs::write(dir.join("examples.csv"), rows)?;
        Ok(())
    }

    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta_text = std::fs::read_to_string(dir.join("dataset.txt"))
            .map_err(|e| Error::data(format!("{}: not a dataset directory ({e})", dir.display())))?;
        let meta: BTreeMap<&str, &str> = parse_kv(&meta_text)?.into_iter().collect();
        let get = |k: &str| meta.get(k).copied().ok_or_else(|| Error::data(format!("dataset.txt lacks {k}")));
        let task = Task::parse(get("task")?).map_err(|e| Error::data(e.to_string()))?;
        let list = |v: &str| -> Vec<String> {
            v.split(',').filter(|s| !s.is_empty()).map(str::to_string).collect()
        };
        let inputs = list(get("inputs")?);
        let planted = match meta.get("planted") {
            Some(v) => Some(
                list(v)
                    .iter()
                    .map(|s| s.parse().map_err(|_| Error::data(format!("bad planted band {s:?}"))))
                    .collect::<Result<Vec<usize>>>()?,
            ),
            None => None,
        };
        let metadata = DatasetMetadata {
            source: get("source")?.to_string(),
            seed: match meta.get("seed") {
                Some(s) => Some(s.parse().map_err(|_| Error::data(format!("bad seed {s:?}")))?),
                None => None,
            },
            planted,
            class_names: list(get("classes")?),
        };

        let mut reader = csv::Reader::from_path(dir.join("examples.csv"))?;
        let mut splits: BTreeMap<Split, Vec<LabeledExample<T>>> = BTreeMap::new();
        for record in reader.records() {
            let record = record?;
            let row = record.position().map_or(0, |p| p.line());
            if record.len() != 3 {
                return Err(Error::data(format!("examples.csv row {row}: expected 3 fields")));
            }
            let id = record[0].to_string();
            check_name("example id", &id)?;
            let split: Split = record[1].parse()?;
            let mut mats = Inputs::new();
            for name in &inputs {
                let path = dir.join("features").join(format!("{id}.{name}.fmat"));
                mats.insert(name.clone(), load_matrix(&path)?);
            }
            let field = &record[2];
            let target = if field.is_empty() {
                None
            } else if task.is_classification() {
                Some(Target::Class(field.parse().map_err(|_| {
                    Error::data(format!("examples.csv row {row}: bad class {field:?}"))
                })?))
            } else {
                Some(Target::Sequence(read_target_csv(&dir.join(field))?))
            };
            splits.entry(split).or_default().push(LabeledExample { id, inputs: mats, target });
        }
        let mut take = |s| splits.remove(&s).unwrap_or_default();
        Dataset::new(task, take(Split::Train), take(Split::Dev), take(Split::Test), metadata)
    }
}
