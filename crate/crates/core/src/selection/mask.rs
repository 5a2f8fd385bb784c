use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// How a mask was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskOrigin {
    OutputGrad,
    LossGrad,
    Lowest,
    Random(u64),
    LeastImportant,
    Sffs,
    Manual,
}

impl fmt::Display for MaskOrigin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaskOrigin::OutputGrad => f.write_str("output_grad"),
            MaskOrigin::LossGrad => f.write_str("loss_grad"),
            MaskOrigin::Lowest => f.write_str("lowest"),
            MaskOrigin::Random(seed) => write!(f, "random({seed})"),
            MaskOrigin::LeastImportant => f.write_str("least_important"),
            MaskOrigin::Sffs => f.write_str("sffs"),
            MaskOrigin::Manual => f.write_str("manual"),
        }
    }
}

impl FromStr for MaskOrigin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "output_grad" => MaskOrigin::OutputGrad,
            "loss_grad" => MaskOrigin::LossGrad,
            "lowest" => MaskOrigin::Lowest,
            "least_important" => MaskOrigin::LeastImportant,
            "sffs" => MaskOrigin::Sffs,
            "manual" => MaskOrigin::Manual,
            other => {
                let seed = other
                    .strip_prefix("random(")
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|r| r.parse().ok())
                    .ok_or_else(|| Error::invalid(format!("unknown mask origin {other:?}")))?;
                MaskOrigin::Random(seed)
            }
        })
    }
}

/// Non-empty, strictly ascending subset of `0..n_features`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureMask {
    indices: Vec<usize>,
    n_features: usize,
    origin: MaskOrigin,
}

impl FeatureMask {
    /// Sorts `indices`; duplicates, out-of-range indices and empty sets are rejected.
    pub fn new(mut indices: Vec<usize>, n_features: usize, origin: MaskOrigin) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::invalid("feature mask selects no features"));
        }
        indices.sort_unstable();
        if let Some(w) = indices.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::invalid(format!("feature index {} selected twice", w[0])));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= n_features) {
            return Err(Error::invalid(format!(
                "feature index {bad} out of range for {n_features} features"
            )));
        }
        Ok(Self {
            indices,
            n_features,
            origin,
        })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn origin(&self) -> MaskOrigin {
        self.origin
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }

    /// Indices not in the mask, or `None` when the mask covers everything.
    pub fn complement(&self) -> Option<FeatureMask> {
        let rest: Vec<usize> = (0..self.n_features).filter(|i| !self.contains(*i)).collect();
        FeatureMask::new(rest, self.n_features, MaskOrigin::Manual).ok()
    }

    /// Comma-separated indices, as used in model headers.
    pub fn to_compact(&self) -> String {
        self.indices
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "# origin={} n={} F={}\n",
            self.origin,
            self.indices.len(),
            self.n_features
        );
        for i in &self.indices {
            s.push_str(&format!("{i}\n"));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .and_then(|l| l.strip_prefix("# "))
            .ok_or_else(|| Error::corrupt("mask file lacks '# origin=..' header"))?;
        let (mut origin, mut n, mut f) = (None, None, None);
        for field in header.split_whitespace() {
            match field.split_once('=') {
                Some(("origin", v)) => origin = Some(v.parse::<MaskOrigin>()?),
                Some(("n", v)) => n = v.parse::<usize>().ok(),
                Some(("F", v)) => f = v.parse::<usize>().ok(),
                _ => return Err(Error::corrupt(format!("bad mask header field {field:?}"))),
            }
        }
        let (origin, n, f) = match (origin, n, f) {
            (Some(o), Some(n), Some(f)) => (o, n, f),
            _ => return Err(Error::corrupt("mask header needs origin, n and F")),
        };
        let indices = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::corrupt(format!("bad mask index {l:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::corrupt("mask indices must be strictly ascending"));
        }
        if indices.len() != n {
            return Err(Error::corrupt(format!(
                "mask header says n={n} but lists {} indices",
                indices.len()
            )));
        }
        FeatureMask::new(indices, f, origin)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let m = FeatureMask::new(vec![9, 2, 40], 64, MaskOrigin::Random(7)).unwrap();
        let text = m.to_text();
        assert!(text.starts_with("# origin=random(7) n=3 F=64\n2\n9\n40\n"));
        assert_eq!(FeatureMask::from_text(&text).unwrap(), m);
    }

    #[test]
    fn rejects_degenerate_masks() {
        assert!(FeatureMask::new(vec![], 4, MaskOrigin::Manual).is_err());
        assert!(FeatureMask::new(vec![1, 1], 4, MaskOrigin::Manual).is_err());
        assert!(FeatureMask::new(vec![4], 4, MaskOrigin::Manual).is_err());
        assert!(FeatureMask::from_text("# origin=lowest n=2 F=4\n2\n1\n").is_err());
        assert!(FeatureMask::from_text("0\n1\n").is_err());
    }

    #[test]
    fn complement_partitions() {
        let m = FeatureMask::new(vec![0, 3], 5, MaskOrigin::Manual).unwrap();
        assert_eq!(m.complement().unwrap().indices(), &[1, 2, 4]);
        let all = FeatureMask::new(vec![0, 1], 2, MaskOrigin::Manual).unwrap();
        assert!(all.complement().is_none());
    }
}
