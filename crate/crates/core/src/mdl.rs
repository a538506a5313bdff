//! Online (prequential) codelength probing.
//!
//! Labels of the train split are transmitted block by block in split order.
//! The first block is sent with the uniform code (`log2 k` bits per label);
//! every later block is sent with a probe trained from scratch on all
//! preceding examples. Compression is the uniform codelength of the whole
//! split divided by this online codelength: 1.0 means the embeddings carry no
//! usable signal about the label, larger values mean the label is easier to
//! extract.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{accuracy, fit_probe, NumericsError, ProbeArch, TrainConfig};
use crate::seed::derive_seed;
use crate::store::{LabeledDataset, Split, StoreError};

#[derive(Debug, Error)]
pub enum MdlError {
    #[error("need at least 2 classes, got {0}")]
    InvalidArity(usize),
    #[error("train split is empty")]
    EmptyTrain,
    #[error("class {0:?} never appears in the train split")]
    MissingClassInTrain(String),
    #[error("online codelength must be positive, got {0}")]
    NonPositiveOnline(f64),
    #[error("invalid block schedule: {0}")]
    InvalidSchedule(String),
    #[error("reports come from different embedding sources ({0:?} vs {1:?})")]
    SourceMismatch(String, String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Cumulative fractions of the train split at which the probe is retrained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSchedule {
    fractions: Vec<f64>,
    min_first_block: usize,
}

impl Default for BlockSchedule {
    fn default() -> Self {
        Self {
            fractions: vec![
                0.001, 0.002, 0.004, 0.008, 0.016, 0.032, 0.0625, 0.125, 0.25, 0.5, 1.0,
            ],
            min_first_block: 2,
        }
    }
}

impl BlockSchedule {
    pub fn new(fractions: Vec<f64>, min_first_block: usize) -> Result<Self, MdlError> {
        let s = Self {
            fractions,
            min_first_block,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), MdlError> {
        if self.min_first_block == 0 {
            return Err(MdlError::InvalidSchedule(
                "min_first_block must be >= 1".into(),
            ));
        }
        if self.fractions.last() != Some(&1.0) {
            return Err(MdlError::InvalidSchedule(
                "last fraction must be exactly 1.0".into(),
            ));
        }
        if self.fractions.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
            return Err(MdlError::InvalidSchedule(
                "fractions must lie in (0, 1]".into(),
            ));
        }
        if self.fractions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MdlError::InvalidSchedule(
                "fractions must strictly increase".into(),
            ));
        }
        Ok(())
    }

    pub fn fractions(&self) -> &[f64] {
        &self.fractions
    }

    pub fn min_first_block(&self) -> usize {
        self.min_first_block
    }

    /// Strictly increasing example counts ending at `n`. The first count is
    /// raised to `min_first_block`; counts that collapse onto an earlier one
    /// on small inputs are dropped.
    pub fn boundaries(&self, n: usize) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::with_capacity(self.fractions.len());
        let last = self.fractions.len() - 1;
        for (i, &f) in self.fractions.iter().enumerate() {
            let mut t = if i == last {
                n
            } else {
                (f * n as f64 + 1e-9).floor() as usize
            };
            if i == 0 {
                t = t.max(self.min_first_block);
            }
            t = t.min(n);
            if t > out.last().copied().unwrap_or(0) {
                out.push(t);
            }
        }
        out
    }
}

/// Everything that determines a probe run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ProbeConfig {
    pub schedule: BlockSchedule,
    pub arch: ProbeArch,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    /// Free-form description of the embeddings the report was computed on.
    pub source: String,
    pub n: usize,
    pub k: usize,
    pub class_names: Vec<String>,
    pub uniform_codelength: f64,
    pub online_codelength: f64,
    pub compression: f64,
    pub block_boundaries: Vec<usize>,
    pub per_block_bits: Vec<f64>,
    /// Accuracy on the test split of a probe trained on the whole train
    /// split; absent when the test split is empty.
    pub final_probe_test_accuracy: Option<f64>,
    pub config: ProbeConfig,
}

/// `n · log2 k` bits.
pub fn uniform_codelength(n: usize, k: usize) -> Result<f64, MdlError> {
    if k < 2 {
        return Err(MdlError::InvalidArity(k));
    }
    Ok(n as f64 * (k as f64).log2())
}

pub fn compression(uniform: f64, online: f64) -> Result<f64, MdlError> {
    if online <= 0.0 || !online.is_finite() {
        return Err(MdlError::NonPositiveOnline(online));
    }
    Ok(uniform / online)
}

/// Ratio of two compressions computed on the same embeddings, e.g. a
/// sensitive attribute against the task label.
pub fn compression_ratio_pair(a: &ProbeReport, b: &ProbeReport) -> Result<f64, MdlError> {
    if a.source != b.source {
        return Err(MdlError::SourceMismatch(a.source.clone(), b.source.clone()));
    }
    Ok(a.compression / b.compression)
}

/// Runs the online code over the train split of `ds`.
pub fn online_codelength(
    ds: &LabeledDataset,
    cfg: &ProbeConfig,
    source: &str,
) -> Result<ProbeReport, MdlError> {
    cfg.schedule.validate()?;
    cfg.train.validate()?;
    ds.validate_for_probing().map_err(|e| match e {
        StoreError::MissingClassInTrain(c) => MdlError::MissingClassInTrain(c),
        _ => MdlError::EmptyTrain,
    })?;

    let k = ds.k();
    let x = ds.features(Split::Train);
    let y = ds.labels(Split::Train);
    let n = y.len();
    let bounds = cfg.schedule.boundaries(n);
    let first_bits = uniform_codelength(bounds[0], k)?;

    let later: Vec<f64> = bounds
        .par_windows(2)
        .enumerate()
        .map(|(i, w)| -> Result<f64, MdlError> {
            let (start, end) = (w[0], w[1]);
            let train_cfg = cfg
                .train
                .with_seed(derive_seed(cfg.train.seed, &format!("block-{i}")));
            let probe = fit_probe(
                cfg.arch,
                x.slice(ndarray::s![..start, ..]),
                &y[..start],
                k,
                &train_cfg,
            )?;
            let lp = probe.predict_logproba(x.slice(ndarray::s![start..end, ..]))?;
            Ok(y[start..end]
                .iter()
                .enumerate()
                .map(|(j, &label)| -lp[[j, label]] / std::f64::consts::LN_2)
                .sum())
        })
        .collect::<Result<_, _>>()?;

    let mut per_block_bits = Vec::with_capacity(bounds.len());
    per_block_bits.push(first_bits);
    per_block_bits.extend(later);
    let online: f64 = per_block_bits.iter().sum();
    let uniform = uniform_codelength(n, k)?;

    let test_idx = ds.indices(Split::Test);
    let final_probe_test_accuracy = if test_idx.is_empty() {
        None
    } else {
        let train_cfg = cfg.train.with_seed(derive_seed(cfg.train.seed, "final"));
        let probe = fit_probe(cfg.arch, x.view(), &y, k, &train_cfg)?;
        let lp = probe.predict_logproba(ds.features(Split::Test).view())?;
        Some(accuracy(&lp, &ds.labels(Split::Test)))
    };

    Ok(ProbeReport {
        source: source.to_string(),
        n,
        k,
        class_names: ds.class_names().to_vec(),
        uniform_codelength: uniform,
        online_codelength: online,
        compression: compression(uniform, online)?,
        block_boundaries: bounds,
        per_block_bits,
        final_probe_test_accuracy,
        config: cfg.clone(),
    })
}
