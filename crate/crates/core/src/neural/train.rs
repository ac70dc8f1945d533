//! Mini-batch training with best-validation snapshot selection.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::tensor::Params;
use super::Model;
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 1024,
            epochs: 1000,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Invalid("batch_size and epochs must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Invalid(format!("learning rate {} is not a finite non-negative number", self.learning_rate)));
        }
        Ok(())
    }
}

/// Per-epoch losses; `val` is empty when no validation set was given.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossHistory {
    pub train: Vec<f64>,
    pub val: Vec<f64>,
}

impl LossHistory {
    /// `epoch,train_loss,val_loss` with 1-based epochs.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss\n");
        for (i, t) in self.train.iter().enumerate() {
            let v = self.val.get(i).map(|v| format!("{v:.8e}")).unwrap_or_default();
            let _ = writeln!(s, "{},{t:.8e},{v}", i + 1);
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub params: Params<T>,
    pub history: LossHistory,
    /// 0-based epoch of the returned snapshot.
    pub best_epoch: usize,
}

/// Trains from `init`. The train loss of an epoch is the size-weighted mean
/// of its mini-batch losses; the validation loss is evaluated after the
/// epoch's updates. The returned parameters are the snapshot with the lowest
/// validation loss, earliest on ties, or the final parameters when `val` is
/// `None`.
pub fn train<T: Real, M: Model<T>, V: Model<T>>(
    model: &M,
    val: Option<&V>,
    init: Params<T>,
    config: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    let n = model.len();
    if n == 0 || val.is_some_and(|v| v.len() == 0) {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let val_rows: Vec<usize> = val.map(|v| (0..v.len()).collect()).unwrap_or_default();
    let mut params = init;
    let mut adam = Adam::new(&model.shapes());
    let lr = T::lit(config.learning_rate);
    let mut history = LossHistory::default();
    let mut best: Option<(f64, usize, Params<T>)> = None;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let (loss, grads) = model.loss_and_grad(&params, batch)?;
            total += loss.to_f64_lossy() * batch.len() as f64;
            adam.step(&mut params, &grads, lr)?;
        }
        history.train.push(total / n as f64);
        if let Some(v) = val {
            let score = v.loss(&params, &val_rows)?.to_f64_lossy();
            history.val.push(score);
            if best.as_ref().map_or(true, |b| score < b.0) {
                best = Some((score, epoch, params.clone()));
            }
        }
    }
    let (best_epoch, params) = match best {
        Some((_, e, p)) => (e, p),
        None => (config.epochs - 1, params),
    };
    Ok(TrainOutcome {
        params,
        history,
        best_epoch,
    })
}
