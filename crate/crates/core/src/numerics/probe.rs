use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{
    check_inputs, predict_logproba, train_logistic, train_mlp, LinearClassifier, MlpClassifier,
    NumericsError, TrainConfig,
};

/// Probe family used for codelength estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProbeArch {
    /// Always predicts the uniform distribution; the null coder.
    Uniform,
    #[default]
    Linear,
    Mlp {
        hidden: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Probe {
    Uniform { k: usize, dim: usize },
    Linear(LinearClassifier),
    Mlp(MlpClassifier),
}

impl Probe {
    pub fn k(&self) -> usize {
        match self {
            Probe::Uniform { k, .. } => *k,
            Probe::Linear(c) => c.k(),
            Probe::Mlp(c) => c.k(),
        }
    }

    pub fn predict_logproba(&self, x: ArrayView2<'_, f32>) -> Result<Array2<f64>, NumericsError> {
        match self {
            Probe::Uniform { k, dim } => {
                if x.ncols() != *dim {
                    return Err(NumericsError::DimMismatch {
                        expected: *dim,
                        actual: x.ncols(),
                    });
                }
                Ok(Array2::from_elem((x.nrows(), *k), -(*k as f64).ln()))
            }
            Probe::Linear(c) => predict_logproba(c, x),
            Probe::Mlp(c) => c.predict_logproba(x),
        }
    }
}

pub fn fit_probe(
    arch: ProbeArch,
    x: ArrayView2<'_, f32>,
    y: &[usize],
    k: usize,
    cfg: &TrainConfig,
) -> Result<Probe, NumericsError> {
    match arch {
        ProbeArch::Uniform => {
            check_inputs(&x, y, k)?;
            Ok(Probe::Uniform { k, dim: x.ncols() })
        }
        ProbeArch::Linear => train_logistic(x, y, k, cfg).map(Probe::Linear),
        ProbeArch::Mlp { hidden } => train_mlp(x, y, k, hidden, cfg).map(Probe::Mlp),
    }
}
