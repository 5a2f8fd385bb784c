use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::LabeledExample;
use crate::error::{Error, Result};
use crate::losses::LossSpec;
use crate::nn::{backward, NetworkSpec, Parameters};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 100,
            epochs: 10,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            shuffle_seed: 0,
        }
    }
}

impl TrainConfig {
    /// A zero learning rate is accepted; it turns training into a no-op.
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::invalid(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::invalid(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Adam optimiser state for one parameter vector.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    m: Vec<T>,
    v: Vec<T>,
    step: i32,
    lr: T,
    beta1: T,
    beta2: T,
    epsilon: T,
}

impl<T: Scalar> Adam<T> {
    pub fn new(n: usize, cfg: &TrainConfig) -> Self {
        Self {
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            step: 0,
            lr: T::lit(cfg.learning_rate),
            beta1: T::lit(cfg.beta1),
            beta2: T::lit(cfg.beta2),
            epsilon: T::lit(cfg.epsilon),
        }
    }

    pub fn update(&mut self, params: &mut [T], grad: &[T]) {
        self.step += 1;
        let one = T::one();
        let c1 = one - self.beta1.powi(self.step);
        let c2 = one - self.beta2.powi(self.step);
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (one - self.beta1) * g;
            *v = self.beta2 * *v + (one - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Examples whose correlation term was degenerate this epoch.
    pub degenerate: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,mean_loss,degenerate\n");
        for e in &self.epochs {
            s.push_str(&format!("{},{},{}\n", e.epoch, e.mean_loss, e.degenerate));
        }
        s
    }
}

/// Mini-batch Adam. Each batch's gradient is the mean of per-example gradients,
/// accumulated in batch order, so results are fixed by `(params, cfg)`.
pub fn train<T: Scalar>(
    spec: &NetworkSpec,
    params: Parameters<T>,
    examples: &[LabeledExample<T>],
    loss: &LossSpec,
    cfg: &TrainConfig,
) -> Result<(Parameters<T>, TrainLog)> {
    cfg.validate()?;
    params.check(spec)?;
    if examples.is_empty() {
        return Err(Error::data("training set is empty"));
    }
    if let Some(e) = examples.iter().find(|e| e.target.is_none()) {
        return Err(Error::data(format!("training example {:?} has no target", e.id)));
    }
    if loss.is_classification() != spec.task.is_classification() {
        return Err(Error::invalid(format!("loss {loss} does not fit task {}", spec.task)));
    }

    let mut params = params;
    let mut adam = Adam::new(params.len(), cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut log = TrainLog::default();
    let mut grad = vec![T::zero(); params.len()];

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut degenerate = 0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            grad.iter_mut().for_each(|g| *g = T::zero());
            let scale = T::one() / T::from_usize_lossy(batch.len());
            for &i in batch {
                let ex = &examples[i];
                let target = ex.target.as_ref().expect("checked above");
                let (eval, bundle) = backward(spec, &params, &ex.inputs, loss, target).map_err(|e| {
                    Error::Numeric(format!("epoch {epoch}, batch {b}, example {:?}: {e}", ex.id))
                })?;
                total += eval.value.as_f64();
                degenerate += usize::from(eval.degenerate);
                for (g, &d) in grad.iter_mut().zip(&bundle.param_grads) {
                    *g += d * scale;
                }
            }
            if !total.is_finite() {
                return Err(Error::Numeric(format!("loss became NaN at epoch {epoch}, batch {b}")));
            }
            adam.update(&mut params.values, &grad);
            if let Some(index) = params.values.iter().position(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "parameter {index} became non-finite at epoch {epoch}, batch {b}"
                )));
            }
        }
        log.epochs.push(EpochRecord {
            epoch,
            mean_loss: total / examples.len() as f64,
            degenerate,
        });
    }
    Ok((params, log))
}
