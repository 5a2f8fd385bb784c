use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::LabeledExample;
use crate::ensemble::{Ensemble, Schedule};
use crate::error::{Error, Result};
use crate::scalar::{exact_sum, Scalar};
use crate::selection::{importance, FeatureMask, ImportanceSource, ImportanceVector, MaskOrigin};

fn check_n(n: usize, f: usize) -> Result<()> {
    if n == 0 || n > f {
        return Err(Error::invalid(format!("cannot select {n} of {f} features")));
    }
    Ok(())
}

/// Indices of the `n` largest scores, best first; ties go to the lower index.
pub fn top_n(scores: &[f64], n: usize) -> Result<Vec<usize>> {
    check_n(n, scores.len())?;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(n);
    Ok(idx)
}

/// Indices of the `n` smallest scores, weakest first; ties go to the lower index.
pub fn bottom_n(scores: &[f64], n: usize) -> Result<Vec<usize>> {
    check_n(n, scores.len())?;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    idx.truncate(n);
    Ok(idx)
}

/// Per-feature nominations across ensemble members.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteTally {
    pub votes: Vec<usize>,
    pub n_models: usize,
    /// Importance summed over all members.
    pub summed_scores: Vec<f64>,
}

impl VoteTally {
    /// Each vector nominates its top `n` (or bottom `n` when `reverse`).
    pub fn from_importance(ivs: &[ImportanceVector], n: usize, reverse: bool) -> Result<Self> {
        let f = ivs
            .first()
            .ok_or_else(|| Error::invalid("no importance vectors to vote with"))?
            .len();
        if ivs.iter().any(|iv| iv.len() != f) {
            return Err(Error::shape("importance vectors differ in length"));
        }
        let mut votes = vec![0; f];
        for iv in ivs {
            let chosen = if reverse { bottom_n(&iv.scores, n)? } else { top_n(&iv.scores, n)? };
            for i in chosen {
                votes[i] += 1;
            }
        }
        let summed_scores = (0..f).map(|i| exact_sum(ivs.iter().map(|iv| iv.scores[i]))).collect();
        Ok(Self {
            votes,
            n_models: ivs.len(),
            summed_scores,
        })
    }

    /// Ranks by votes (desc), then summed score (desc, or asc when `reverse`),
    /// then index (asc), and keeps the first `n`.
    pub fn select(&self, n: usize, reverse: bool, origin: MaskOrigin) -> Result<FeatureMask> {
        let f = self.votes.len();
        check_n(n, f)?;
        let mut idx: Vec<usize> = (0..f).collect();
        idx.sort_by(|&a, &b| {
            let by_score = self.summed_scores[b].total_cmp(&self.summed_scores[a]);
            let by_score = if reverse { by_score.reverse() } else { by_score };
            self.votes[b]
                .cmp(&self.votes[a])
                .then(by_score)
                .then(a.cmp(&b))
        });
        idx.truncate(n);
        FeatureMask::new(idx, f, origin)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("band_index,votes,summed_score\n");
        for (i, (v, sc)) in self.votes.iter().zip(&self.summed_scores).enumerate() {
            writeln!(s, "{i},{v},{sc}").ok();
        }
        s
    }
}

/// Importance of every member, computed in member order.
pub fn member_importances<T: Scalar>(
    ens: &Ensemble<T>,
    examples: &[LabeledExample<T>],
    input: &str,
    source: ImportanceSource,
    schedule: Schedule,
) -> Result<Vec<ImportanceVector>> {
    let one = |i: usize| {
        importance(&ens.spec, &ens.members[i], &ens.loss, examples, input, source, i)
    };
    let results: Vec<Result<ImportanceVector>> = match schedule {
        Schedule::Serial => (0..ens.len()).map(one).collect(),
        Schedule::Parallel => {
            use rayon::prelude::*;
            (0..ens.len()).into_par_iter().map(one).collect()
        }
    };
    results.into_iter().collect()
}

fn origin_for(source: ImportanceSource) -> MaskOrigin {
    match source {
        ImportanceSource::Output => MaskOrigin::OutputGrad,
        ImportanceSource::Loss => MaskOrigin::LossGrad,
    }
}

/// Every member nominates its `n` highest-scoring bands; the `n` most nominated
/// bands form the mask.
pub fn majority_vote_select<T: Scalar>(
    ens: &Ensemble<T>,
    examples: &[LabeledExample<T>],
    input: &str,
    source: ImportanceSource,
    n: usize,
) -> Result<(FeatureMask, VoteTally)> {
    let ivs = member_importances(ens, examples, input, source, Schedule::Parallel)?;
    let tally = VoteTally::from_importance(&ivs, n, false)?;
    Ok((tally.select(n, false, origin_for(source))?, tally))
}

/// Band indices `0..n`.
pub fn lowest_mask(n: usize, f: usize) -> Result<FeatureMask> {
    check_n(n, f)?;
    FeatureMask::new((0..n).collect(), f, MaskOrigin::Lowest)
}

/// Uniform sample of `n` distinct bands.
pub fn random_mask(n: usize, f: usize, seed: u64) -> Result<FeatureMask> {
    check_n(n, f)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FeatureMask::new(sample(&mut rng, f, n).into_vec(), f, MaskOrigin::Random(seed))
}

/// Majority vote over each member's `n` lowest-scoring bands.
pub fn least_important_mask<T: Scalar>(
    ens: &Ensemble<T>,
    examples: &[LabeledExample<T>],
    input: &str,
    source: ImportanceSource,
    n: usize,
) -> Result<(FeatureMask, VoteTally)> {
    let ivs = member_importances(ens, examples, input, source, Schedule::Parallel)?;
    let tally = VoteTally::from_importance(&ivs, n, true)?;
    Ok((tally.select(n, true, MaskOrigin::LeastImportant)?, tally))
}
