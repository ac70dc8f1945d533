//! Magnitude and onset predictors, training and cross-validation.

pub mod adam;
pub(crate) mod decoder;
pub mod layers;
pub mod loocv;
pub mod magnitude;
pub mod onset;
pub mod tensor;
pub mod train;

pub use adam::Adam;
pub use layers::{loss_mse, Conv1d, Linear};
pub use loocv::{loocv, run_fold, train_models, FoldResult, LoocvConfig, Preprocessing, Standardizer, SubjectData, TrainedModels};
pub use magnitude::{EarInput, MagnitudeArch, MagnitudeData, MagnitudeNet, MagnitudeNetInput, MagnitudeProblem};
pub use onset::{OnsetArch, OnsetData, OnsetNet, OnsetNetInput, OnsetProblem};
pub use tensor::{Params, Tensor};
pub use train::{train, LossHistory, TrainConfig, TrainOutcome};

use crate::error::Result;
use crate::scalar::Real;

/// A dataset bound to a network: batch loss and its gradient.
pub trait Model<T: Real> {
    fn shapes(&self) -> Vec<Vec<usize>>;

    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Mean squared error over `rows` and its gradient.
    fn loss_and_grad(&self, params: &Params<T>, rows: &[usize]) -> Result<(T, Params<T>)>;

    fn loss(&self, params: &Params<T>, rows: &[usize]) -> Result<T>;
}

#[cfg(test)]
mod tests;
