//! Training objectives and their gradients with respect to the prediction.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Probability floor applied before taking the log in cross-entropy.
pub const XENT_CLAMP: f64 = 1e-12;
/// Population variance below which a sequence counts as constant.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Supervision for one example.
#[derive(Debug, Clone, PartialEq)]
pub enum Target<T> {
    Class(usize),
    Sequence(Vec<T>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossSpec {
    CrossEntropy,
    Mse,
    Corr,
    CorrPlusMse { lambda_mse: f64 },
}

impl LossSpec {
    pub fn combined(lambda_mse: f64) -> Result<Self> {
        if !(lambda_mse.is_finite() && lambda_mse >= 0.0) {
            return Err(Error::invalid(format!(
                "lambda_mse must be finite and >= 0, got {lambda_mse}"
            )));
        }
        Ok(LossSpec::CorrPlusMse { lambda_mse })
    }

    pub fn is_classification(&self) -> bool {
        matches!(self, LossSpec::CrossEntropy)
    }

    /// Loss value and its gradient with respect to `pred`.
    pub fn evaluate<T: Scalar>(&self, pred: &[T], target: &Target<T>) -> Result<LossEval<T>> {
        match (self, target) {
            (LossSpec::CrossEntropy, Target::Class(label)) => Ok(LossEval {
                value: cross_entropy(pred, *label)?,
                grad: cross_entropy_grad(pred, *label)?,
                degenerate: false,
            }),
            (LossSpec::Mse, Target::Sequence(t)) => Ok(LossEval {
                value: mse(pred, t)?,
                grad: mse_grad(pred, t)?,
                degenerate: false,
            }),
            (LossSpec::Corr, Target::Sequence(t)) => {
                let (r, grad) = pearson_with_grad(pred, t)?;
                Ok(LossEval {
                    value: T::one() - r.r,
                    grad: grad.into_iter().map(|g| -g).collect(),
                    degenerate: r.degenerate,
                })
            }
            (LossSpec::CorrPlusMse { lambda_mse }, Target::Sequence(t)) => {
                let lambda = T::lit(*lambda_mse);
                let (r, rg) = pearson_with_grad(pred, t)?;
                let mg = mse_grad(pred, t)?;
                Ok(LossEval {
                    value: T::one() - r.r + lambda * mse(pred, t)?,
                    grad: rg.iter().zip(&mg).map(|(&a, &b)| lambda * b - a).collect(),
                    degenerate: r.degenerate,
                })
            }
            (loss, Target::Class(_)) => Err(Error::invalid(format!(
                "loss {loss} needs a sequence target"
            ))),
            (loss, Target::Sequence(_)) => Err(Error::invalid(format!(
                "loss {loss} needs a class label"
            ))),
        }
    }
}

impl fmt::Display for LossSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossSpec::CrossEntropy => f.write_str("xent"),
            LossSpec::Mse => f.write_str("mse"),
            LossSpec::Corr => f.write_str("corr"),
            LossSpec::CorrPlusMse { lambda_mse } => write!(f, "corr+mse:{lambda_mse}"),
        }
    }
}

impl FromStr for LossSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xent" => Ok(LossSpec::CrossEntropy),
            "mse" => Ok(LossSpec::Mse),
            "corr" => Ok(LossSpec::Corr),
            "corr+mse" => LossSpec::combined(1.0),
            other => match other.strip_prefix("corr+mse:").map(str::parse::<f64>) {
                Some(Ok(lambda)) => LossSpec::combined(lambda),
                _ => Err(Error::invalid(format!("unknown loss id {other:?}"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossEval<T> {
    pub value: T,
    pub grad: Vec<T>,
    /// A Pearson term met a constant sequence and was taken as r = 0.
    pub degenerate: bool,
}

fn check_label<T>(posterior: &[T], label: usize) -> Result<()> {
    if label >= posterior.len() {
        return Err(Error::invalid(format!(
            "label {label} out of range for {} classes",
            posterior.len()
        )));
    }
    Ok(())
}

pub fn cross_entropy<T: Scalar>(posterior: &[T], label: usize) -> Result<T> {
    check_label(posterior, label)?;
    Ok(-posterior[label].max(T::lit(XENT_CLAMP)).ln())
}

pub fn cross_entropy_grad<T: Scalar>(posterior: &[T], label: usize) -> Result<Vec<T>> {
    check_label(posterior, label)?;
    let mut g = vec![T::zero(); posterior.len()];
    let p = posterior[label];
    // inside the clamp the loss is flat
    if p > T::lit(XENT_CLAMP) {
        g[label] = -T::one() / p;
    }
    Ok(g)
}

fn check_pair<T>(pred: &[T], target: &[T], min: usize) -> Result<()> {
    if pred.len() != target.len() {
        return Err(Error::shape(format!(
            "prediction has {} steps, target has {}",
            pred.len(),
            target.len()
        )));
    }
    if pred.len() < min {
        return Err(Error::invalid(format!("need at least {min} steps, got {}", pred.len())));
    }
    Ok(())
}

pub fn mse<T: Scalar>(pred: &[T], target: &[T]) -> Result<T> {
    check_pair(pred, target, 1)?;
    let s: T = pred.iter().zip(target).map(|(&p, &t)| (p - t) * (p - t)).sum();
    Ok(s / T::from_usize_lossy(pred.len()))
}

pub fn mse_grad<T: Scalar>(pred: &[T], target: &[T]) -> Result<Vec<T>> {
    check_pair(pred, target, 1)?;
    let scale = T::lit(2.0) / T::from_usize_lossy(pred.len());
    Ok(pred.iter().zip(target).map(|(&p, &t)| scale * (p - t)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pearson<T> {
    pub r: T,
    pub degenerate: bool,
}

struct Centered<T> {
    a: Vec<T>,
    b: Vec<T>,
    sxx: T,
    syy: T,
    sxy: T,
}

fn centered<T: Scalar>(pred: &[T], target: &[T]) -> Result<Centered<T>> {
    check_pair(pred, target, 2)?;
    let n = T::from_usize_lossy(pred.len());
    let mp = pred.iter().copied().sum::<T>() / n;
    let mt = target.iter().copied().sum::<T>() / n;
    let a: Vec<T> = pred.iter().map(|&p| p - mp).collect();
    let b: Vec<T> = target.iter().map(|&t| t - mt).collect();
    let sxx = a.iter().map(|&v| v * v).sum();
    let syy = b.iter().map(|&v| v * v).sum();
    let sxy = a.iter().zip(&b).map(|(&x, &y)| x * y).sum();
    Ok(Centered { a, b, sxx, syy, sxy })
}

impl<T: Scalar> Centered<T> {
    fn degenerate(&self) -> bool {
        let n = T::from_usize_lossy(self.a.len());
        let floor = T::lit(VARIANCE_FLOOR);
        self.sxx / n < floor || self.syy / n < floor
    }

    fn r(&self) -> T {
        let r = self.sxy / (self.sxx * self.syy).sqrt();
        r.max(-T::one()).min(T::one())
    }
}

/// Sample correlation; constant inputs give `r = 0` with `degenerate` set.
pub fn pearson<T: Scalar>(pred: &[T], target: &[T]) -> Result<Pearson<T>> {
    let c = centered(pred, target)?;
    if c.degenerate() {
        return Ok(Pearson {
            r: T::zero(),
            degenerate: true,
        });
    }
    Ok(Pearson {
        r: c.r(),
        degenerate: false,
    })
}

/// `r` and `dr/dpred`; the gradient is zero in the degenerate case.
pub fn pearson_with_grad<T: Scalar>(pred: &[T], target: &[T]) -> Result<(Pearson<T>, Vec<T>)> {
    let c = centered(pred, target)?;
    if c.degenerate() {
        let r = Pearson {
            r: T::zero(),
            degenerate: true,
        };
        return Ok((r, vec![T::zero(); pred.len()]));
    }
    let norm = (c.sxx * c.syy).sqrt();
    let r = c.sxy / norm;
    let grad = c
        .a
        .iter()
        .zip(&c.b)
        .map(|(&a, &b)| b / norm - r * a / c.sxx)
        .collect();
    Ok((
        Pearson {
            r: r.max(-T::one()).min(T::one()),
            degenerate: false,
        },
        grad,
    ))
}

pub fn corr_loss<T: Scalar>(pred: &[T], target: &[T]) -> Result<T> {
    Ok(T::one() - pearson(pred, target)?.r)
}

pub fn combined_loss<T: Scalar>(pred: &[T], target: &[T], lambda_mse: f64) -> Result<T> {
    let corr = corr_loss(pred, target)?;
    if lambda_mse == 0.0 {
        return Ok(corr);
    }
    Ok(corr + T::lit(lambda_mse) * mse(pred, target)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_entropy_cases() {
        assert!(cross_entropy(&[1.0f64, 0.0], 0).unwrap().abs() < 1e-15);
        assert!((cross_entropy(&[0.5, 0.5], 1).unwrap() - 2f64.ln()).abs() < 1e-15);
        let clamped = cross_entropy(&[0.0f64, 1.0], 0).unwrap();
        assert!(clamped.is_finite() && clamped <= -(1e-12f64).ln() + 1e-9);
        assert!(cross_entropy(&[0.5, 0.5], 2).is_err());
    }

    #[test]
    fn mse_cases() {
        let t = [1.0, -2.0, 0.5];
        assert_eq!(mse(&t, &t).unwrap(), 0.0);
        let shifted: Vec<f64> = t.iter().map(|v| v + 0.3).collect();
        assert!((mse(&shifted, &t).unwrap() - 0.09).abs() < 1e-15);
        assert_eq!(mse(&[0.0, 2.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert!(mse(&[0.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn pearson_cases() {
        let t = [1.0f64, 3.0, 2.0, 5.0];
        assert!((pearson(&t, &t).unwrap().r - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = t.iter().map(|v| -v).collect();
        assert!((pearson(&neg, &t).unwrap().r + 1.0).abs() < 1e-15);
        let flat = pearson(&[2.0; 4], &t).unwrap();
        assert_eq!(flat, Pearson { r: 0.0, degenerate: true });
        assert!(pearson(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn corr_and_combined() {
        let t = [0.0f64, 1.0, 4.0, 2.0];
        assert!(corr_loss(&t, &t).unwrap().abs() < 1e-15);
        assert!(combined_loss(&t, &t, 1.0).unwrap().abs() < 1e-15);
        let affine: Vec<f64> = t.iter().map(|v| 2.0 * v + 5.0).collect();
        assert!(corr_loss(&affine, &t).unwrap().abs() < 1e-12);
        let c = combined_loss(&affine, &t, 0.5).unwrap();
        assert!((c - 0.5 * mse(&affine, &t).unwrap()).abs() < 1e-12 && c > 0.0);
    }

    #[test]
    fn loss_ids_round_trip() {
        for id in ["xent", "mse", "corr", "corr+mse:1", "corr+mse:0.25"] {
            let l: LossSpec = id.parse().unwrap();
            assert_eq!(l.to_string(), id);
        }
        assert_eq!("corr+mse".parse::<LossSpec>().unwrap(), LossSpec::CorrPlusMse { lambda_mse: 1.0 });
        assert!("corr+mse:-1".parse::<LossSpec>().is_err());
        assert!("hinge".parse::<LossSpec>().is_err());
    }

    #[test]
    fn loss_target_mismatch() {
        assert!(LossSpec::CrossEntropy.evaluate(&[0.5, 0.5], &Target::Sequence(vec![1.0, 2.0])).is_err());
        assert!(LossSpec::Mse.evaluate(&[0.5, 0.5], &Target::Class(0)).is_err());
    }
}
