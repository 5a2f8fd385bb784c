//! Greedy forward selection with linear hinge-loss proxies.

use rayon::prelude::*;

use crate::data::LabeledExample;
use crate::error::{Error, Result};
use crate::eval::ConfusionMatrix;
use crate::losses::Target;
use crate::scalar::Scalar;
use crate::selection::{FeatureMask, MaskOrigin};

/// Proxy training settings: full-batch sub-gradient descent on the L2-regularised
/// hinge loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxyConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for ProxyConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            learning_rate: 0.1,
            l2: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SffsResult {
    pub mask: FeatureMask,
    /// Bands in the order they were accepted.
    pub added: Vec<usize>,
    /// Proxies trained in total.
    pub trained_models: usize,
    /// Dev UAR after each accepted step.
    pub step_uar: Vec<f64>,
}

/// Number of proxies a forward search for `n` of `f` features trains.
pub fn sffs_model_count(f: usize, n: usize) -> usize {
    (0..n).map(|k| f - k).sum()
}

struct Table {
    x: Vec<Vec<f64>>,
    y: Vec<usize>,
}

/// Time-averaged band values with their labels.
fn summarise<T: Scalar>(examples: &[LabeledExample<T>], input: &str) -> Result<Table> {
    let mut x = Vec::with_capacity(examples.len());
    let mut y = Vec::with_capacity(examples.len());
    for ex in examples {
        let m = ex
            .inputs
            .get(input)
            .ok_or_else(|| Error::data(format!("example {:?} has no input {input:?}", ex.id)))?;
        let Some(Target::Class(c)) = ex.target else {
            return Err(Error::data(format!("example {:?} lacks a class label", ex.id)));
        };
        x.push(m.column_means().into_iter().map(Scalar::as_f64).collect());
        y.push(c);
    }
    Ok(Table { x, y })
}

fn standardise(train: &mut Table, dev: &mut Table) {
    let f = train.x[0].len();
    let n = train.x.len() as f64;
    for b in 0..f {
        let mean = train.x.iter().map(|r| r[b]).sum::<f64>() / n;
        let var = train.x.iter().map(|r| (r[b] - mean).powi(2)).sum::<f64>() / n;
        let sd = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        for r in train.x.iter_mut().chain(dev.x.iter_mut()) {
            r[b] = (r[b] - mean) / sd;
        }
    }
}

/// One-vs-rest linear classifiers (a single one for two classes).
struct Proxy {
    weights: Vec<(Vec<f64>, f64)>,
}

impl Proxy {
    fn fit(t: &Table, cols: &[usize], n_classes: usize, cfg: &ProxyConfig) -> Self {
        let heads = if n_classes == 2 { 1 } else { n_classes };
        let n = t.x.len() as f64;
        let weights = (0..heads)
            .map(|h| {
                let positive = if heads == 1 { 1 } else { h };
                let mut w = vec![0.0; cols.len()];
                let mut b = 0.0;
                let mut gw = vec![0.0; cols.len()];
                for _ in 0..cfg.epochs {
                    gw.iter_mut().zip(&w).for_each(|(g, &wi)| *g = cfg.l2 * wi);
                    let mut gb = 0.0;
                    for (row, &label) in t.x.iter().zip(&t.y) {
                        let y = if label == positive { 1.0 } else { -1.0 };
                        let score: f64 = b + cols.iter().zip(&w).map(|(&c, &wi)| wi * row[c]).sum::<f64>();
                        if y * score < 1.0 {
                            for (g, &c) in gw.iter_mut().zip(cols) {
                                *g -= y * row[c] / n;
                            }
                            gb -= y / n;
                        }
                    }
                    for (wi, g) in w.iter_mut().zip(&gw) {
                        *wi -= cfg.learning_rate * g;
                    }
                    b -= cfg.learning_rate * gb;
                }
                (w, b)
            })
            .collect();
        Self { weights }
    }

    fn predict(&self, row: &[f64], cols: &[usize]) -> usize {
        let score = |(w, b): &(Vec<f64>, f64)| b + cols.iter().zip(w).map(|(&c, &wi)| wi * row[c]).sum::<f64>();
        if self.weights.len() == 1 {
            return usize::from(score(&self.weights[0]) > 0.0);
        }
        let scores: Vec<f64> = self.weights.iter().map(score).collect();
        let mut best = 0;
        for (k, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = k;
            }
        }
        best
    }
}

fn dev_uar(train: &Table, dev: &Table, cols: &[usize], n_classes: usize, cfg: &ProxyConfig) -> Result<f64> {
    let proxy = Proxy::fit(train, cols, n_classes, cfg);
    let pairs = dev.x.iter().zip(&dev.y).map(|(row, &y)| (y, proxy.predict(row, cols)));
    ConfusionMatrix::from_pairs(n_classes, pairs)?.uar()
}

/// Grows the selected set one band at a time, each step keeping the candidate
/// whose proxy scores the highest dev UAR (ties to the lower index).
pub fn sffs<T: Scalar>(
    train: &[LabeledExample<T>],
    dev: &[LabeledExample<T>],
    input: &str,
    n: usize,
    cfg: &ProxyConfig,
) -> Result<SffsResult> {
    if train.is_empty() || dev.is_empty() {
        return Err(Error::data("forward selection needs non-empty train and dev splits"));
    }
    let mut tr = summarise(train, input)?;
    let mut dv = summarise(dev, input)?;
    let f = tr.x[0].len();
    if n == 0 || n > f {
        return Err(Error::invalid(format!("cannot select {n} of {f} features")));
    }
    let n_classes = tr.y.iter().chain(&dv.y).max().map_or(0, |m| m + 1);
    let mut present = vec![false; n_classes];
    tr.y.iter().for_each(|&c| present[c] = true);
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::data("forward selection needs at least two classes in the training split"));
    }
    standardise(&mut tr, &mut dv);

    let mut selected: Vec<usize> = Vec::with_capacity(n);
    let mut trained = 0;
    let mut step_uar = Vec::with_capacity(n);
    for _ in 0..n {
        let candidates: Vec<usize> = (0..f).filter(|c| !selected.contains(c)).collect();
        let scores: Vec<Result<f64>> = candidates
            .par_iter()
            .map(|&c| {
                let mut cols = selected.clone();
                cols.push(c);
                dev_uar(&tr, &dv, &cols, n_classes, cfg)
            })
            .collect();
        trained += candidates.len();
        let mut best: Option<(usize, f64)> = None;
        for (&c, s) in candidates.iter().zip(scores) {
            let s = s?;
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((c, s));
            }
        }
        let (c, s) = best.expect("at least one candidate");
        selected.push(c);
        step_uar.push(s);
    }
    Ok(SffsResult {
        mask: FeatureMask::new(selected.clone(), f, MaskOrigin::Sffs)?,
        added: selected,
        trained_models: trained,
        step_uar,
    })
}
