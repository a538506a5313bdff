//! Multinomial logistic regression trained with seeded mini-batch SGD.

use ndarray::{Array1, Array2, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{check_inputs, log_softmax_clamped, softmax, NumericsError, TrainConfig};
use crate::seed;

/// `k × d` weights plus a `k` bias, scoring `logits = W x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LinearClassifier {
    pub fn zeros(k: usize, d: usize) -> Self {
        Self {
            weights: Array2::zeros((k, d)),
            bias: Array1::zeros(k),
        }
    }

    pub fn k(&self) -> usize {
        self.weights.nrows()
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    fn logits_into(&self, x: &[f32], out: &mut [f64]) {
        let d = self.dim();
        let w = self.weights.as_slice().expect("standard layout");
        for (c, o) in out.iter_mut().enumerate() {
            let row = &w[c * d..(c + 1) * d];
            let mut s = self.bias[c];
            for (wj, &xj) in row.iter().zip(x) {
                s += wj * xj as f64;
            }
            *o = s;
        }
    }
}

/// Per-row log-probabilities, each clamped to at least `ln(PROB_FLOOR)`.
pub fn predict_logproba(
    clf: &LinearClassifier,
    x: ArrayView2<'_, f32>,
) -> Result<Array2<f64>, NumericsError> {
    if x.ncols() != clf.dim() {
        return Err(NumericsError::DimMismatch {
            expected: clf.dim(),
            actual: x.ncols(),
        });
    }
    let k = clf.k();
    let mut out = Array2::zeros((x.nrows(), k));
    let mut buf = vec![0.0; k];
    for (i, row) in x.rows().into_iter().enumerate() {
        let xr = row
            .to_slice()
            .map(<[f32]>::to_vec)
            .unwrap_or_else(|| row.to_vec());
        clf.logits_into(&xr, &mut buf);
        log_softmax_clamped(&mut buf);
        out.row_mut(i).assign(&Array1::from(buf.clone()));
    }
    Ok(out)
}

/// Fraction of rows whose argmax class equals the label; ties go to the
/// lowest class index.
pub fn accuracy(logproba: &Array2<f64>, y: &[usize]) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    let correct = logproba
        .rows()
        .into_iter()
        .zip(y)
        .filter(|(row, &label)| argmax(row.iter().copied()) == label)
        .count();
    correct as f64 / y.len() as f64
}

pub(crate) fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Mean cross-entropy (nats) plus `l2/2 · ‖W‖²`; the bias is not penalised.
pub fn mean_loss(clf: &LinearClassifier, x: ArrayView2<'_, f32>, y: &[usize], l2: f64) -> f64 {
    let k = clf.k();
    let mut buf = vec![0.0; k];
    let mut total = 0.0;
    for (row, &label) in x.rows().into_iter().zip(y) {
        let xr = row.to_vec();
        clf.logits_into(&xr, &mut buf);
        let max = buf.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + buf.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        total += lse - buf[label];
    }
    let penalty = 0.5 * l2 * clf.weights.iter().map(|w| w * w).sum::<f64>();
    total / y.len() as f64 + penalty
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Objective of [`mean_loss`] and its analytic gradient.
pub fn loss_and_gradient(
    clf: &LinearClassifier,
    x: ArrayView2<'_, f32>,
    y: &[usize],
    l2: f64,
) -> (f64, Gradient) {
    let (k, d) = (clf.k(), clf.dim());
    let mut gw = vec![0.0; k * d];
    let mut gb = vec![0.0; k];
    let rows: Vec<usize> = (0..y.len()).collect();
    let xs = x.as_standard_layout();
    let data = xs.as_slice().expect("standard layout");
    accumulate_batch(clf, data, d, y, &rows, &mut gw, &mut gb);
    let inv = 1.0 / y.len() as f64;
    let w = clf.weights.as_slice().expect("standard layout");
    for (g, wv) in gw.iter_mut().zip(w) {
        *g = *g * inv + l2 * wv;
    }
    gb.iter_mut().for_each(|g| *g *= inv);
    let grad = Gradient {
        weights: Array2::from_shape_vec((k, d), gw).expect("shape"),
        bias: Array1::from(gb),
    };
    (mean_loss(clf, x, y, l2), grad)
}

/// Adds `Σ (softmax(W x + b) − onehot(y)) ⊗ x` over `rows` into the buffers.
fn accumulate_batch(
    clf: &LinearClassifier,
    data: &[f32],
    d: usize,
    y: &[usize],
    rows: &[usize],
    gw: &mut [f64],
    gb: &mut [f64],
) {
    let k = clf.k();
    let mut p = vec![0.0; k];
    for &i in rows {
        let xi = &data[i * d..(i + 1) * d];
        clf.logits_into(xi, &mut p);
        softmax(&mut p);
        p[y[i]] -= 1.0;
        for c in 0..k {
            let pc = p[c];
            gb[c] += pc;
            if pc != 0.0 {
                let g = &mut gw[c * d..(c + 1) * d];
                for (gj, &xj) in g.iter_mut().zip(xi) {
                    *gj += pc * xj as f64;
                }
            }
        }
    }
}

/// Trains from zero weights with constant-step mini-batch SGD.
///
/// The train objective is evaluated after every epoch and the best
/// parameters seen (including the all-zero start, i.e. uniform prediction)
/// are returned, so the result never scores worse than uniform prediction on
/// the train objective.
pub fn train_logistic(
    x: ArrayView2<'_, f32>,
    y: &[usize],
    k: usize,
    cfg: &TrainConfig,
) -> Result<LinearClassifier, NumericsError> {
    cfg.validate()?;
    check_inputs(&x, y, k)?;
    let (n, d) = x.dim();
    let xs = x.as_standard_layout();
    let data = xs.as_slice().expect("standard layout");

    let mut clf = LinearClassifier::zeros(k, d);
    let mut best_loss = mean_loss(&clf, x, y, cfg.l2_penalty);
    let mut best = clf.clone();

    let mut rng = seed::rng(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut gw = vec![0.0; k * d];
    let mut gb = vec![0.0; k];
    for _ in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        for batch in order.chunks(cfg.batch_size) {
            gw.iter_mut().for_each(|g| *g = 0.0);
            gb.iter_mut().for_each(|g| *g = 0.0);
            accumulate_batch(&clf, data, d, y, batch, &mut gw, &mut gb);
            let step = cfg.learning_rate / batch.len() as f64;
            let decay = 1.0 - cfg.learning_rate * cfg.l2_penalty;
            let w = clf.weights.as_slice_mut().expect("standard layout");
            for (wv, g) in w.iter_mut().zip(&gw) {
                *wv = *wv * decay - step * g;
            }
            for (bv, g) in clf.bias.iter_mut().zip(&gb) {
                *bv -= step * g;
            }
        }
        if clf
            .weights
            .iter()
            .chain(clf.bias.iter())
            .any(|v| !v.is_finite())
        {
            break;
        }
        let loss = mean_loss(&clf, x, y, cfg.l2_penalty);
        if loss < best_loss {
            best_loss = loss;
            best = clf.clone();
        }
    }
    Ok(best)
}
