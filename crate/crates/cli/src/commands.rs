//! One function per subcommand. Each writes its artifacts plus `config.txt`
//! into the output directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use e2efs::data::{
    load_audio_dataset, load_manifest_audio, synth_classification, synth_regression, Dataset, ManifestOptions,
    TargetKind,
};
use e2efs::dsp::{BranchFeatures, FeaturePipeline};
use e2efs::ensemble::{train_ensemble, Ensemble};
use e2efs::eval::{benchmark_latency, evaluate, Metrics, Workload, BENCH_CSV_HEADER};
use e2efs::nn::{NetworkSpec, TrainLog};
use e2efs::scalar::exact_sum;
use e2efs::selection::{
    least_important_mask, lowest_mask, majority_vote_select, member_importances, random_mask, sffs, FeatureMask,
};

use crate::config::{Config, ConfigError, SelectionMethod};
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(dir.join(name), contents).map_err(|e| CliError::Core(e.into()))
}

fn prepare_out(cfg: &Config) -> Result<std::path::PathBuf> {
    let dir = cfg.output_dir()?;
    fs::create_dir_all(&dir).map_err(|e| CliError::Core(e.into()))?;
    write(&dir, "config.txt", cfg.snapshot())?;
    Ok(dir)
}

fn load_dataset(cfg: &Config) -> Result<Dataset<f64>> {
    Ok(Dataset::load_dir(cfg.dataset_dir()?)?)
}

fn load_ensemble(cfg: &Config) -> Result<Ensemble<f64>> {
    Ok(Ensemble::load_dir(cfg.ensemble_dir()?)?)
}

/// Narrows or derives the masked inputs an ensemble was trained on.
fn prepare_inputs(ds: &Dataset<f64>, ens: &Ensemble<f64>, cfg: &Config) -> Result<Dataset<f64>> {
    let widths = ds.input_widths()?;
    let mut out = ds.clone();
    for (name, mask) in &ens.masks {
        match widths.get(name) {
            Some(&w) if w == mask.n_features() => out = out.with_mask(name, mask)?,
            Some(_) => {}
            None => out = out.derive_input(cfg.selection_input(), name, mask)?,
        }
    }
    Ok(out)
}

fn build_spec(cfg: &Config, ds: &Dataset<f64>, inputs: &[String]) -> Result<NetworkSpec> {
    let widths = ds.input_widths()?;
    let mut pairs = Vec::new();
    for name in inputs {
        let w = widths.get(name).ok_or_else(|| {
            CliError::Config(ConfigError(format!(
                "model.inputs names {name:?}, but the dataset has {:?}",
                widths.keys().collect::<Vec<_>>()
            )))
        })?;
        pairs.push((name.as_str(), *w));
    }
    Ok(cfg.shape()?.build(ds.task(), &pairs)?)
}

fn train_log_csv(logs: &[TrainLog]) -> String {
    let mut s = String::from("member,epoch,mean_loss,degenerate\n");
    for (m, log) in logs.iter().enumerate() {
        for e in &log.epochs {
            writeln!(s, "{m},{},{},{}", e.epoch, e.mean_loss, e.degenerate).ok();
        }
    }
    s
}

/// Trains on `ds` and writes the ensemble, its log and the config.
fn train_and_save(
    cfg: &Config,
    ds: &Dataset<f64>,
    inputs: &[String],
    masks: BTreeMap<String, FeatureMask>,
) -> Result<String> {
    let spec = build_spec(cfg, ds, inputs)?;
    let loss = cfg.loss(ds.task())?;
    let (mut ens, logs) = train_ensemble(
        &spec,
        ds.train(),
        &loss,
        &cfg.train()?,
        cfg.members()?,
        cfg.base_seed()?,
        cfg.schedule()?,
    )?;
    ens.masks = masks;
    let out = prepare_out(cfg)?;
    ens.save_dir(&out)?;
    write(&out, "train_log.csv", train_log_csv(&logs))?;
    let last: Vec<f64> = logs.iter().filter_map(|l| l.epochs.last().map(|e| e.mean_loss)).collect();
    Ok(format!(
        "trained {} members ({} parameters each, loss {loss}); final epoch losses {:?}; wrote {}",
        ens.len(),
        spec.count_parameters(),
        last,
        out.display()
    ))
}

pub fn synth(cfg: &Config) -> Result<String> {
    let s = cfg.synth()?;
    let ds: Dataset<f64> = if s.regression {
        synth_regression(s.seed, s.n_examples, s.frames, s.bands, &s.planted)?
    } else {
        synth_classification(s.seed, s.n_examples, s.frames, s.bands, &s.planted, s.effect_size)?
    };
    let out = prepare_out(cfg)?;
    ds.save_dir(&out)?;
    Ok(format!(
        "wrote {} examples ({} train / {} dev / {} test) to {}",
        ds.len(),
        ds.train().len(),
        ds.dev().len(),
        ds.test().len(),
        out.display()
    ))
}

pub fn features(cfg: &Config) -> Result<String> {
    let manifest = cfg
        .manifest()?
        .ok_or_else(|| CliError::Config(ConfigError("data.manifest is not set".into())))?;
    let opts = ManifestOptions {
        pipeline: cfg.pipeline()?,
        target_kind: if cfg.target_is_sequence()? {
            TargetKind::Sequence
        } else {
            TargetKind::Label
        },
        expected_target_len: cfg.expected_target_len()?,
    };
    let (ds, warnings) = load_audio_dataset::<f64>(&manifest, &opts)?;
    let out = prepare_out(cfg)?;
    ds.save_dir(&out)?;
    let mut msg = format!("extracted features for {} clips into {}", ds.len(), out.display());
    for w in &warnings {
        write!(
            msg,
            "\nwarning: row {} ({}): target has {} values, expected {}",
            w.row, w.id, w.found, w.expected
        )
        .ok();
    }
    Ok(msg)
}

pub fn train(cfg: &Config) -> Result<String> {
    let ds = load_dataset(cfg)?;
    train_and_save(cfg, &ds, &cfg.model_inputs()?, BTreeMap::new())
}

pub fn saliency(cfg: &Config) -> Result<String> {
    let ens = load_ensemble(cfg)?;
    let ds = prepare_inputs(&load_dataset(cfg)?, &ens, cfg)?;
    let input = cfg.selection_input();
    let source = cfg.importance_source()?;
    let ivs = member_importances(&ens, ds.train(), input, source, cfg.schedule()?)?;
    let mut csv = String::from("band_index");
    for iv in &ivs {
        write!(csv, ",member_{}", iv.model_id).ok();
    }
    csv.push_str(",total\n");
    for b in 0..ivs[0].len() {
        write!(csv, "{b}").ok();
        for iv in &ivs {
            write!(csv, ",{}", iv.scores[b]).ok();
        }
        writeln!(csv, ",{}", exact_sum(ivs.iter().map(|iv| iv.scores[b]))).ok();
    }
    let mut scalars = String::from("member,source,scalars\n");
    for iv in &ivs {
        let names: Vec<String> = iv.scalars.iter().map(|s| s.to_string()).collect();
        writeln!(scalars, "{},{},{}", iv.model_id, iv.source, names.join(" ")).ok();
    }
    let out = prepare_out(cfg)?;
    write(&out, "importance.csv", csv)?;
    write(&out, "saliency_scalars.csv", scalars)?;
    Ok(format!(
        "{source} importance of {} bands of {input:?} from {} members written to {}",
        ivs[0].len(),
        ivs.len(),
        out.display()
    ))
}

pub fn select(cfg: &Config) -> Result<String> {
    let n = cfg.selection_n()?;
    let input = cfg.selection_input().to_string();
    let method = cfg.selection_method()?;
    let raw = load_dataset(cfg)?;
    let mut extra: Vec<(&str, String)> = Vec::new();
    let mask = match method {
        SelectionMethod::Vote | SelectionMethod::LeastImportant => {
            let ens = load_ensemble(cfg)?;
            let ds = prepare_inputs(&raw, &ens, cfg)?;
            let source = cfg.importance_source()?;
            let (mask, tally) = if method == SelectionMethod::Vote {
                majority_vote_select(&ens, ds.train(), &input, source, n)?
            } else {
                least_important_mask(&ens, ds.train(), &input, source, n)?
            };
            extra.push(("tally.csv", tally.to_csv()));
            mask
        }
        SelectionMethod::Lowest | SelectionMethod::Random => {
            let f = *raw.input_widths()?.get(&input).ok_or_else(|| {
                CliError::Core(e2efs::Error::Data(format!("dataset has no input {input:?}")))
            })?;
            if method == SelectionMethod::Lowest {
                lowest_mask(n, f)?
            } else {
                random_mask(n, f, cfg.selection_seed()?)?
            }
        }
        SelectionMethod::Sffs => {
            let res = sffs(raw.train(), raw.dev(), &input, n, &cfg.proxy()?)?;
            let mut csv = String::from("step,band_index,dev_uar\n");
            for (k, (b, u)) in res.added.iter().zip(&res.step_uar).enumerate() {
                writeln!(csv, "{},{b},{u}", k + 1).ok();
            }
            writeln!(csv, "# trained_models={}", res.trained_models).ok();
            extra.push(("sffs_steps.csv", csv));
            res.mask
        }
    };
    let out = prepare_out(cfg)?;
    mask.save(out.join("mask.txt"))?;
    for (name, body) in extra {
        write(&out, name, body)?;
    }
    Ok(format!(
        "selected bands {} of {input:?} ({}) into {}",
        mask.to_compact(),
        mask.origin(),
        out.join("mask.txt").display()
    ))
}

pub fn retrain(cfg: &Config) -> Result<String> {
    let mask = FeatureMask::load(cfg.mask_path()?)?;
    let input = cfg.selection_input().to_string();
    let ds = load_dataset(cfg)?.with_mask(&input, &mask)?;
    train_and_save(cfg, &ds, &cfg.model_inputs()?, BTreeMap::from([(input, mask)]))
}

pub fn fuse(cfg: &Config) -> Result<String> {
    let mask = FeatureMask::load(cfg.mask_path()?)?;
    let input = cfg.selection_input().to_string();
    let fused = format!("{input}_sel");
    let ds = load_dataset(cfg)?.derive_input(&input, &fused, &mask)?;
    let mut inputs = cfg.model_inputs()?;
    if !inputs.contains(&fused) {
        inputs.push(fused.clone());
    }
    train_and_save(cfg, &ds, &inputs, BTreeMap::from([(fused, mask)]))
}

pub fn eval(cfg: &Config) -> Result<String> {
    let ens = load_ensemble(cfg)?;
    let ds = prepare_inputs(&load_dataset(cfg)?, &ens, cfg)?;
    let split = cfg.eval_split()?;
    let examples = ds.split(split);
    let metrics = evaluate(&ens, examples)?;
    let out = prepare_out(cfg)?;
    write(&out, "metrics.csv", metrics.to_csv())?;
    let summary = match &metrics {
        Metrics::Classification { uar, .. } => {
            let agreement = ens.inter_model_agreement(examples)?;
            let mut csv = String::from("member_a,member_b,percent\n");
            for (i, row) in agreement.percent.iter().enumerate() {
                for (j, p) in row.iter().enumerate().skip(i + 1) {
                    writeln!(csv, "{i},{j},{p}").ok();
                }
            }
            writeln!(csv, "mean,,{}", agreement.mean).ok();
            write(&out, "agreement.csv", csv)?;
            format!("{split} UAR {:.4}, mean member agreement {:.1}%", uar, agreement.mean)
        }
        Metrics::Regression {
            mean_pearson, mean_mse, ..
        } => format!("{split} mean Pearson r {mean_pearson:.4}, mean MSE {mean_mse:.4}"),
    };
    Ok(format!("{summary}; wrote {}", out.join("metrics.csv").display()))
}

/// Pipeline producing every input of `ens` straight from audio, with masks
/// applied at extraction time.
fn bench_pipeline(cfg: &Config, ens: &Ensemble<f64>) -> Result<FeaturePipeline> {
    let base = cfg.pipeline()?;
    let kind_of = |name: &str| base.branches.iter().find(|b| b.name == name).map(|b| b.kind);
    let mut branches = Vec::new();
    for b in &ens.spec.branches {
        let kind = kind_of(&b.input)
            .or_else(|| ens.masks.contains_key(&b.input).then(|| kind_of(cfg.selection_input())).flatten())
            .ok_or_else(|| {
                CliError::Config(ConfigError(format!("features.branches does not produce input {:?}", b.input)))
            })?;
        branches.push(BranchFeatures {
            name: b.input.clone(),
            kind,
            mask: ens.masks.get(&b.input).cloned(),
        });
    }
    Ok(FeaturePipeline { branches, ..base })
}

pub fn bench(cfg: &Config) -> Result<String> {
    let s = cfg.bench()?;
    let ens = load_ensemble(cfg)?;
    let workload = match cfg.manifest()? {
        Some(manifest) => {
            let pipeline = bench_pipeline(cfg, &ens)?;
            let rate = pipeline.spectrogram.sample_rate;
            let clips: Vec<_> = load_manifest_audio::<f64>(&manifest, rate, Some(s.split))?
                .into_iter()
                .take(s.max_examples)
                .map(|(_, a)| a)
                .collect();
            Workload::Audio { clips, pipeline }
        }
        None => {
            let ds = prepare_inputs(&load_dataset(cfg)?, &ens, cfg)?;
            Workload::Features(
                ds.split(s.split)
                    .iter()
                    .take(s.max_examples)
                    .map(|e| e.inputs.clone())
                    .collect(),
            )
        }
    };
    let name = cfg.ensemble_dir()?.display().to_string();
    let report = benchmark_latency(&name, &ens, &workload, s.repetitions)?;
    let out = prepare_out(cfg)?;
    write(&out, "bench.csv", format!("{BENCH_CSV_HEADER}\n{}\n", report.csv_row()))?;
    write(&out, "bench.txt", format!("{}\n", report.to_text()))?;
    Ok(report.to_text())
}

pub fn keys() -> String {
    let mut s = String::new();
    for (k, v, help) in crate::config::KEYS {
        writeln!(s, "{k}={v}\n    {help}").ok();
    }
    s
}
