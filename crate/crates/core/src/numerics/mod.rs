//! Numeric kernels shared by probing, concept removal and retrieval.

mod linalg;
mod logistic;
mod mlp;
mod probe;

pub(crate) use linalg::rows_to_array;
pub use linalg::{
    extend_basis, nullspace_projection, orthonormal_basis, ProjectionLoadError, ProjectionMatrix,
};
pub use logistic::{
    accuracy, loss_and_gradient, mean_loss, predict_logproba, train_logistic, Gradient,
    LinearClassifier,
};
pub use mlp::{train_mlp, MlpClassifier};
pub use probe::{fit_probe, Probe, ProbeArch};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest probability any classifier reports; bounds a single example's
/// codelength at `-log2(1e-30)` ≈ 99.66 bits.
pub const PROB_FLOOR: f64 = 1e-30;

/// Rows whose residual norm falls below this fraction of their original norm
/// are treated as linearly dependent during orthonormalisation.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum NumericsError {
    #[error("no training examples")]
    SingularInput,
    #[error("label {label} out of range for k={k}")]
    LabelOutOfRange { label: usize, k: usize },
    #[error("need at least 2 classes, got {0}")]
    InvalidArity(usize),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("non-finite input value")]
    NonFinite,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("basis rows are not orthonormal (max deviation {0:e})")]
    NotOrthonormal(f64),
    #[error("matrix is not a projection: {0}")]
    NotAProjection(String),
}

/// Mini-batch SGD settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2_penalty: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 10,
            batch_size: 32,
            l2_penalty: 1e-4,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), NumericsError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NumericsError::InvalidConfig(
                "learning_rate must be > 0".into(),
            ));
        }
        if self.epochs == 0 {
            return Err(NumericsError::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(NumericsError::InvalidConfig(
                "batch_size must be >= 1".into(),
            ));
        }
        if !(self.l2_penalty >= 0.0 && self.l2_penalty.is_finite()) {
            return Err(NumericsError::InvalidConfig(
                "l2_penalty must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

pub(crate) fn check_inputs(
    x: &ndarray::ArrayView2<'_, f32>,
    y: &[usize],
    k: usize,
) -> Result<(), NumericsError> {
    if k < 2 {
        return Err(NumericsError::InvalidArity(k));
    }
    if x.nrows() == 0 {
        return Err(NumericsError::SingularInput);
    }
    if x.nrows() != y.len() {
        return Err(NumericsError::DimMismatch {
            expected: x.nrows(),
            actual: y.len(),
        });
    }
    if let Some(&label) = y.iter().find(|&&l| l >= k) {
        return Err(NumericsError::LabelOutOfRange { label, k });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(NumericsError::NonFinite);
    }
    Ok(())
}

/// In-place log-softmax with the probability floor applied.
pub(crate) fn log_softmax_clamped(logits: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    let floor = PROB_FLOOR.ln();
    for z in logits.iter_mut() {
        *z = (*z - lse).max(floor);
    }
}

/// In-place softmax.
pub(crate) fn softmax(logits: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for z in logits.iter_mut() {
        *z = (*z - max).exp();
        sum += *z;
    }
    for z in logits.iter_mut() {
        *z /= sum;
    }
}
