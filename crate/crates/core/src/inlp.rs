//! Iterative nullspace projection.
//!
//! Each round trains a linear classifier for the concept on the currently
//! projected train rows and checks it on the dev rows. While it still beats
//! the majority baseline by more than the stop margin, its (class-centred)
//! weight rows are added to the removed subspace and the projection is
//! rebuilt as `I − BᵀB` from the whole accumulated basis.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdl::{online_codelength, MdlError, ProbeConfig, ProbeReport};
use crate::numerics::{
    accuracy, extend_basis, nullspace_projection, predict_logproba, rows_to_array, train_logistic,
    NumericsError, ProjectionLoadError, ProjectionMatrix, TrainConfig,
};
use crate::seed::derive_seed;
use crate::store::{write_embeddings, LabeledDataset, Split, StoreError};

#[derive(Debug, Error)]
pub enum InlpError {
    #[error("train split is empty")]
    EmptyTrain,
    #[error("max_iterations must be at least 1")]
    NoIterations,
    #[error("stop margin must be a non-negative number, got {0}")]
    InvalidMargin(f64),
    #[error("removing {needed} directions would leave nothing of a {dim}-dimensional space")]
    DegenerateDim { dim: usize, needed: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Mdl(#[from] MdlError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Load(#[from] ProjectionLoadError),
    #[error("sidecar {path}: {source}")]
    Sidecar {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The latest classifier was no better than the majority baseline plus
    /// the margin; its directions were not removed.
    ReachedBaseline,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InlpConfig {
    pub max_iterations: usize,
    pub stop_margin: f64,
    pub train: TrainConfig,
}

impl Default for InlpConfig {
    fn default() -> Self {
        Self {
            max_iterations: 30,
            stop_margin: 0.02,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct InlpResult {
    pub projection: ProjectionMatrix,
    /// Orthonormal rows spanning the removed subspace, in removal order.
    pub basis: Array2<f64>,
    pub iterations_run: usize,
    /// Dev accuracy of the classifier trained at each iteration, measured
    /// before that iteration's directions were removed.
    pub per_iteration_accuracy: Vec<f64>,
    pub majority_baseline: f64,
    pub removed_rank: usize,
    pub stop_reason: StopReason,
}

/// What the JSON sidecar next to a stored projection records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InlpMetadata {
    pub dim: usize,
    pub iterations_run: usize,
    pub per_iteration_accuracy: Vec<f64>,
    pub majority_baseline: f64,
    pub removed_rank: usize,
    pub stop_reason: StopReason,
}

impl InlpResult {
    pub fn metadata(&self) -> InlpMetadata {
        InlpMetadata {
            dim: self.projection.dim(),
            iterations_run: self.iterations_run,
            per_iteration_accuracy: self.per_iteration_accuracy.clone(),
            majority_baseline: self.majority_baseline,
            removed_rank: self.removed_rank,
            stop_reason: self.stop_reason,
        }
    }

    /// Writes the matrix as EMB1 and the metadata to [`sidecar_path`].
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), InlpError> {
        let path = path.as_ref();
        write_embeddings(&self.projection.to_embedding_matrix(), path)?;
        let side = sidecar_path(path);
        let json = serde_json::to_string_pretty(&self.metadata()).map_err(|source| {
            InlpError::Sidecar {
                path: side.clone(),
                source,
            }
        })?;
        std::fs::write(side, json + "\n")?;
        Ok(())
    }
}

/// `projection.emb1` → `projection.emb1.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Loads a stored projection and, when present, its metadata sidecar.
pub fn load_projection(
    path: impl AsRef<Path>,
) -> Result<(ProjectionMatrix, Option<InlpMetadata>), InlpError> {
    let path = path.as_ref();
    let p = ProjectionMatrix::load(path)?;
    let side = sidecar_path(path);
    let meta = if side.exists() {
        let text = std::fs::read_to_string(&side)?;
        Some(
            serde_json::from_str(&text)
                .map_err(|source| InlpError::Sidecar { path: side, source })?,
        )
    } else {
        None
    };
    Ok((p, meta))
}

/// Fraction of the most frequent class, over dev labels, or train labels
/// when the dev split is empty.
pub fn majority_baseline(ds: &LabeledDataset) -> f64 {
    let labels = if ds.indices(Split::Dev).is_empty() {
        ds.labels(Split::Train)
    } else {
        ds.labels(Split::Dev)
    };
    majority_fraction(&labels, ds.k())
}

pub(crate) fn majority_fraction(labels: &[usize], k: usize) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let mut counts = vec![0usize; k];
    labels.iter().for_each(|&y| counts[y] += 1);
    *counts.iter().max().unwrap() as f64 / labels.len() as f64
}

pub fn fit_inlp(
    ds: &LabeledDataset,
    max_iterations: usize,
    stop_margin: f64,
    cfg: &TrainConfig,
) -> Result<InlpResult, InlpError> {
    if max_iterations == 0 {
        return Err(InlpError::NoIterations);
    }
    if !(stop_margin >= 0.0 && stop_margin.is_finite()) {
        return Err(InlpError::InvalidMargin(stop_margin));
    }
    if ds.indices(Split::Train).is_empty() {
        return Err(InlpError::EmptyTrain);
    }
    cfg.validate()?;

    let d = ds.dim();
    let k = ds.k();
    let x_train = ds.features(Split::Train);
    let y_train = ds.labels(Split::Train);
    let (x_eval, y_eval) = if ds.indices(Split::Dev).is_empty() {
        (x_train.clone(), y_train.clone())
    } else {
        (ds.features(Split::Dev), ds.labels(Split::Dev))
    };
    let baseline = majority_baseline(ds);

    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut projection = ProjectionMatrix::identity(d);
    let mut accuracies = Vec::new();
    let mut stop_reason = StopReason::MaxIterations;

    for it in 0..max_iterations {
        let xt = projection.apply(x_train.view())?;
        let xe = projection.apply(x_eval.view())?;
        let iter_cfg = cfg.with_seed(derive_seed(cfg.seed, &format!("inlp-{it}")));
        let clf = train_logistic(xt.view(), &y_train, k, &iter_cfg)?;
        let acc = accuracy(&predict_logproba(&clf, xe.view())?, &y_eval);
        accuracies.push(acc);
        if acc <= baseline + stop_margin {
            stop_reason = StopReason::ReachedBaseline;
            break;
        }

        let directions = centered_rows(&clf.weights);
        let mut candidate = basis.clone();
        let added = extend_basis(&mut candidate, directions.view());
        if candidate.len() >= d {
            return Err(InlpError::DegenerateDim {
                dim: d,
                needed: candidate.len(),
            });
        }
        if added == 0 {
            // nothing new to remove; further rounds would repeat this one
            stop_reason = StopReason::ReachedBaseline;
            break;
        }
        basis = candidate;
        projection = nullspace_projection(rows_to_array(&basis, d).view(), d)?;
    }

    Ok(InlpResult {
        iterations_run: accuracies.len(),
        per_iteration_accuracy: accuracies,
        majority_baseline: baseline,
        removed_rank: basis.len(),
        basis: rows_to_array(&basis, d),
        projection,
        stop_reason,
    })
}

/// Weight rows minus their mean row. For two classes this leaves a single
/// direction (up to sign).
fn centered_rows(w: &Array2<f64>) -> Array2<f64> {
    let mean: Array1<f64> = w.mean_axis(Axis(0)).expect("at least one class");
    w - &mean.insert_axis(Axis(0))
}

/// `X · Pᵀ`.
pub fn apply_projection(
    p: &ProjectionMatrix,
    x: ArrayView2<'_, f32>,
) -> Result<Array2<f32>, NumericsError> {
    p.apply(x)
}

/// Full online-code probe on the projected embeddings of `ds`.
pub fn verify_removal(
    ds: &LabeledDataset,
    p: &ProjectionMatrix,
    cfg: &ProbeConfig,
    source: &str,
) -> Result<ProbeReport, InlpError> {
    let projected = p.apply_embeddings(ds.embeddings())?;
    let ds = ds.with_embeddings(Arc::new(projected))?;
    Ok(online_codelength(&ds, cfg, source)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{EmbeddingMatrix, LabeledRows};
    use ndarray::array;

    fn dataset(points: &[[f32; 2]], labels: &[&str]) -> LabeledDataset {
        let data: Vec<f32> = points.iter().flatten().copied().collect();
        let m = EmbeddingMatrix::with_generated_ids("x", 2, data).unwrap();
        let rows = LabeledRows::new(
            Arc::new(m),
            labels.iter().map(|l| usize::from(*l == "pos")).collect(),
            vec!["neg".into(), "pos".into()],
        )
        .unwrap();
        let n = points.len();
        let train: Vec<usize> = (0..n).filter(|i| i % 4 != 0).collect();
        let dev: Vec<usize> = (0..n).filter(|i| i % 4 == 0).collect();
        LabeledDataset::from_splits(rows, train, dev, vec![]).unwrap()
    }

    #[test]
    fn projection_examples() {
        let id = ProjectionMatrix::identity(2);
        let x = array![[3.0f32, 4.0], [-1.0, 2.5]];
        assert_eq!(apply_projection(&id, x.view()).unwrap(), x);
        let zero = ProjectionMatrix::from_matrix(Array2::zeros((2, 2)), 1e-12).unwrap();
        assert_eq!(
            apply_projection(&zero, x.view()).unwrap(),
            Array2::<f32>::zeros((2, 2))
        );
        let p = ProjectionMatrix::from_matrix(array![[0.0, 0.0], [0.0, 1.0]], 1e-12).unwrap();
        assert_eq!(
            apply_projection(&p, array![[3.0f32, 4.0]].view()).unwrap(),
            array![[0.0f32, 4.0]]
        );
        assert!(apply_projection(&p, array![[1.0f32, 2.0, 3.0]].view()).is_err());
    }

    #[test]
    fn rejects_bad_arguments() {
        let ds = dataset(
            &[[1.0, 0.0]; 8],
            &["pos", "neg", "pos", "neg", "pos", "neg", "pos", "neg"],
        );
        let cfg = TrainConfig::default();
        assert!(matches!(
            fit_inlp(&ds, 0, 0.02, &cfg),
            Err(InlpError::NoIterations)
        ));
        assert!(matches!(
            fit_inlp(&ds, 1, -0.1, &cfg),
            Err(InlpError::InvalidMargin(_))
        ));
    }

    #[test]
    fn centering_binary_rows() {
        let c = centered_rows(&array![[1.0, 3.0], [3.0, -1.0]]);
        assert_eq!(c, array![[-1.0, 2.0], [1.0, -2.0]]);
    }

    #[test]
    fn sidecar_naming() {
        assert_eq!(
            sidecar_path(Path::new("out/projection.emb1")),
            PathBuf::from("out/projection.emb1.json")
        );
    }

    #[test]
    fn majority_uses_dev_then_train() {
        let pts = [[0.0, 0.0]; 8];
        let ds = dataset(
            &pts,
            &["pos", "pos", "neg", "neg", "pos", "neg", "neg", "neg"],
        );
        // dev rows are 0 and 4, both "pos"
        assert_eq!(majority_baseline(&ds), 1.0);
        assert_eq!(majority_fraction(&[0, 1, 1], 2), 2.0 / 3.0);
        assert_eq!(majority_fraction(&[], 2), 0.0);
    }
}
