//! Binary model container: `E2EFS` magic, version byte, `key=value` header lines
//! ended by a blank line, then every parameter as a little-endian `f64`.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::losses::LossSpec;
use crate::nn::{NetworkSpec, Parameters};
use crate::scalar::Scalar;
use crate::selection::{FeatureMask, MaskOrigin};

pub const MODEL_MAGIC: &[u8; 5] = b"E2EFS";
pub const MODEL_VERSION: u8 = 0x01;

/// One trained network with everything needed to rebuild and interpret it.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub spec: NetworkSpec,
    pub params: Parameters<T>,
    pub shuffle_seed: u64,
    pub loss: LossSpec,
    /// Band subset applied to each named input before it reaches its branch.
    pub masks: BTreeMap<String, FeatureMask>,
}

pub(crate) fn mask_to_value(m: &FeatureMask) -> String {
    format!("{} {} {}", m.origin(), m.n_features(), m.to_compact())
}

pub(crate) fn mask_from_value(v: &str) -> Result<FeatureMask> {
    let bad = || Error::corrupt(format!("bad mask entry {v:?}"));
    let mut parts = v.split(' ');
    let origin: MaskOrigin = parts.next().ok_or_else(bad)?.parse()?;
    let f: usize = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
    let indices = parts
        .next()
        .ok_or_else(bad)?
        .split(',')
        .map(|i| i.parse::<usize>().map_err(|_| bad()))
        .collect::<Result<Vec<_>>>()?;
    if parts.next().is_some() {
        return Err(bad());
    }
    FeatureMask::new(indices, f, origin)
}

/// Splits `key=value` lines; used by model headers and ensemble manifests.
pub(crate) fn parse_kv(text: &str) -> Result<Vec<(&str, &str)>> {
    text.lines()
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split_once('=')
                .ok_or_else(|| Error::corrupt(format!("header line without '=': {l:?}")))
        })
        .collect()
}

impl<T: Scalar> Model<T> {
    pub fn header(&self) -> Vec<(String, String)> {
        let mut kv = self.spec.to_kv();
        kv.push(("seed".into(), self.params.seed.to_string()));
        kv.push(("shuffle_seed".into(), self.shuffle_seed.to_string()));
        kv.push(("loss".into(), self.loss.to_string()));
        for (name, m) in &self.masks {
            kv.push((format!("mask.{name}"), mask_to_value(m)));
        }
        kv
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 8 * self.params.len());
        out.extend_from_slice(MODEL_MAGIC);
        out.push(MODEL_VERSION);
        for (k, v) in self.header() {
            out.extend_from_slice(format!("{k}={v}\n").as_bytes());
        }
        out.push(b'\n');
        for v in &self.params.values {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let body = bytes
            .strip_prefix(MODEL_MAGIC.as_slice())
            .ok_or_else(|| Error::corrupt("missing E2EFS magic"))?;
        let (&version, body) = body
            .split_first()
            .ok_or_else(|| Error::corrupt("missing version byte"))?;
        if version != MODEL_VERSION {
            return Err(Error::corrupt(format!("unsupported model version {version}")));
        }
        let end = body
            .windows(2)
            .position(|w| w == b"\n\n")
            .map(|p| p + 1)
            .or_else(|| body.first().filter(|&&b| b == b'\n').map(|_| 0))
            .ok_or_else(|| Error::corrupt("header is not terminated by a blank line"))?;
        let header = std::str::from_utf8(&body[..end])
            .map_err(|_| Error::corrupt("header is not UTF-8"))?;
        let payload = &body[end + 1..];

        let pairs = parse_kv(header)?;
        let spec = NetworkSpec::from_kv(pairs.iter().copied().filter(|(k, _)| k.starts_with("spec.")))?;
        let (mut seed, mut shuffle_seed, mut loss) = (None, None, None);
        let mut masks = BTreeMap::new();
        for &(k, v) in &pairs {
            match k {
                "seed" => seed = v.parse().ok(),
                "shuffle_seed" => shuffle_seed = v.parse().ok(),
                "loss" => loss = Some(v.parse::<LossSpec>()?),
                _ if k.starts_with("spec.") => {}
                _ => match k.strip_prefix("mask.") {
                    Some(name) => {
                        masks.insert(name.to_string(), mask_from_value(v)?);
                    }
                    None => return Err(Error::corrupt(format!("unknown header key {k:?}"))),
                },
            }
        }
        let missing = |what: &str| Error::corrupt(format!("header lacks a valid {what}"));
        let seed = seed.ok_or_else(|| missing("seed"))?;
        let shuffle_seed = shuffle_seed.ok_or_else(|| missing("shuffle_seed"))?;
        let loss = loss.ok_or_else(|| missing("loss"))?;

        let n = spec.count_parameters();
        if payload.len() != 8 * n {
            return Err(Error::corrupt(format!(
                "expected {} parameter bytes, found {}",
                8 * n,
                payload.len()
            )));
        }
        let values = payload
            .chunks_exact(8)
            .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8-byte chunk"))))
            .collect();
        let params = Parameters { values, seed };
        params.check(&spec)?;
        Ok(Self {
            spec,
            params,
            shuffle_seed,
            loss,
            masks,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init, ConvLstmShape, Task};

    fn model() -> Model<f64> {
        let spec = ConvLstmShape::msc()
            .build(Task::Classification { n_classes: 2 }, &[("spect", 4), ("low", 2)])
            .unwrap();
        let mut masks = BTreeMap::new();
        masks.insert(
            "low".to_string(),
            FeatureMask::new(vec![3, 7], 16, MaskOrigin::OutputGrad).unwrap(),
        );
        Model {
            params: init(&spec, 11).unwrap(),
            spec,
            shuffle_seed: 11,
            loss: LossSpec::CrossEntropy,
            masks,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model();
        let bytes = m.to_bytes();
        assert_eq!(&bytes[..6], b"E2EFS\x01");
        let back = Model::<f64>::from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let bytes = model().to_bytes();
        assert!(Model::<f64>::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(Model::<f64>::from_bytes(&wrong).is_err());
        let mut version = bytes.clone();
        version[5] = 2;
        assert!(Model::<f64>::from_bytes(&version).is_err());
        assert!(Model::<f64>::from_bytes(b"E2EFS\x01seed=1\n").is_err());
    }
}
