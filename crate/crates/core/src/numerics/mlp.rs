//! One-hidden-layer ReLU probe, the opt-in alternative to the linear probe.

use ndarray::{Array1, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{check_inputs, log_softmax_clamped, softmax, NumericsError, TrainConfig};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpClassifier {
    /// `h × d`
    pub hidden_weights: Array2<f64>,
    pub hidden_bias: Array1<f64>,
    /// `k × h`
    pub output_weights: Array2<f64>,
    pub output_bias: Array1<f64>,
}

impl MlpClassifier {
    pub fn k(&self) -> usize {
        self.output_weights.nrows()
    }

    pub fn dim(&self) -> usize {
        self.hidden_weights.ncols()
    }

    pub fn hidden(&self) -> usize {
        self.hidden_weights.nrows()
    }

    fn forward(&self, x: &[f32], hidden: &mut [f64], logits: &mut [f64]) {
        let d = self.dim();
        let w1 = self.hidden_weights.as_slice().expect("standard layout");
        for (u, h) in hidden.iter_mut().enumerate() {
            let mut s = self.hidden_bias[u];
            for (w, &xj) in w1[u * d..(u + 1) * d].iter().zip(x) {
                s += w * xj as f64;
            }
            *h = s.max(0.0);
        }
        let hn = self.hidden();
        let w2 = self.output_weights.as_slice().expect("standard layout");
        for (c, z) in logits.iter_mut().enumerate() {
            let mut s = self.output_bias[c];
            for (w, h) in w2[c * hn..(c + 1) * hn].iter().zip(hidden.iter()) {
                s += w * h;
            }
            *z = s;
        }
    }

    pub fn predict_logproba(&self, x: ArrayView2<'_, f32>) -> Result<Array2<f64>, NumericsError> {
        if x.ncols() != self.dim() {
            return Err(NumericsError::DimMismatch {
                expected: self.dim(),
                actual: x.ncols(),
            });
        }
        let mut out = Array2::zeros((x.nrows(), self.k()));
        let mut hidden = vec![0.0; self.hidden()];
        let mut logits = vec![0.0; self.k()];
        for (i, row) in x.rows().into_iter().enumerate() {
            self.forward(&row.to_vec(), &mut hidden, &mut logits);
            log_softmax_clamped(&mut logits);
            for (c, v) in logits.iter().enumerate() {
                out[[i, c]] = *v;
            }
        }
        Ok(out)
    }

    fn mean_loss(&self, data: &[f32], d: usize, y: &[usize], l2: f64) -> f64 {
        let mut hidden = vec![0.0; self.hidden()];
        let mut logits = vec![0.0; self.k()];
        let mut total = 0.0;
        for (i, &label) in y.iter().enumerate() {
            self.forward(&data[i * d..(i + 1) * d], &mut hidden, &mut logits);
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
            total += lse - logits[label];
        }
        let penalty: f64 = self
            .hidden_weights
            .iter()
            .chain(self.output_weights.iter())
            .map(|w| w * w)
            .sum();
        total / y.len() as f64 + 0.5 * l2 * penalty
    }
}

/// Trains a ReLU MLP with `hidden` units by mini-batch SGD.
///
/// Hidden weights start from N(0, 2/d) draws of the config seed and the
/// output layer from zero, so the initial prediction is uniform. As with the
/// linear trainer the best epoch by train objective is kept.
pub fn train_mlp(
    x: ArrayView2<'_, f32>,
    y: &[usize],
    k: usize,
    hidden: usize,
    cfg: &TrainConfig,
) -> Result<MlpClassifier, NumericsError> {
    cfg.validate()?;
    check_inputs(&x, y, k)?;
    if hidden == 0 {
        return Err(NumericsError::InvalidConfig(
            "hidden units must be >= 1".into(),
        ));
    }
    let (n, d) = x.dim();
    let xs = x.as_standard_layout();
    let data = xs.as_slice().expect("standard layout");

    let mut rng = seed::rng(cfg.seed);
    let init = Normal::new(0.0, (2.0 / d.max(1) as f64).sqrt()).expect("valid std");
    let mut clf = MlpClassifier {
        hidden_weights: Array2::from_shape_fn((hidden, d), |_| init.sample(&mut rng)),
        hidden_bias: Array1::zeros(hidden),
        output_weights: Array2::zeros((k, hidden)),
        output_bias: Array1::zeros(k),
    };
    let mut best_loss = clf.mean_loss(data, d, y, cfg.l2_penalty);
    let mut best = clf.clone();

    let mut order: Vec<usize> = (0..n).collect();
    let mut g1 = vec![0.0; hidden * d];
    let mut gb1 = vec![0.0; hidden];
    let mut g2 = vec![0.0; k * hidden];
    let mut gb2 = vec![0.0; k];
    let mut h = vec![0.0; hidden];
    let mut p = vec![0.0; k];
    let mut dh = vec![0.0; hidden];
    for _ in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        for batch in order.chunks(cfg.batch_size) {
            for buf in [&mut g1, &mut gb1, &mut g2, &mut gb2] {
                buf.iter_mut().for_each(|g| *g = 0.0);
            }
            for &i in batch {
                let xi = &data[i * d..(i + 1) * d];
                clf.forward(xi, &mut h, &mut p);
                softmax(&mut p);
                p[y[i]] -= 1.0;
                let w2 = clf.output_weights.as_slice().expect("standard layout");
                dh.iter_mut().for_each(|v| *v = 0.0);
                for c in 0..k {
                    gb2[c] += p[c];
                    for u in 0..hidden {
                        g2[c * hidden + u] += p[c] * h[u];
                        dh[u] += p[c] * w2[c * hidden + u];
                    }
                }
                for u in 0..hidden {
                    if h[u] <= 0.0 {
                        continue;
                    }
                    gb1[u] += dh[u];
                    let row = &mut g1[u * d..(u + 1) * d];
                    for (g, &xj) in row.iter_mut().zip(xi) {
                        *g += dh[u] * xj as f64;
                    }
                }
            }
            let step = cfg.learning_rate / batch.len() as f64;
            let decay = 1.0 - cfg.learning_rate * cfg.l2_penalty;
            let w1 = clf.hidden_weights.as_slice_mut().expect("standard layout");
            w1.iter_mut()
                .zip(&g1)
                .for_each(|(w, g)| *w = *w * decay - step * g);
            clf.hidden_bias
                .iter_mut()
                .zip(&gb1)
                .for_each(|(b, g)| *b -= step * g);
            let w2 = clf.output_weights.as_slice_mut().expect("standard layout");
            w2.iter_mut()
                .zip(&g2)
                .for_each(|(w, g)| *w = *w * decay - step * g);
            clf.output_bias
                .iter_mut()
                .zip(&gb2)
                .for_each(|(b, g)| *b -= step * g);
        }
        let loss = clf.mean_loss(data, d, y, cfg.l2_penalty);
        if !loss.is_finite() {
            break;
        }
        if loss < best_loss {
            best_loss = loss;
            best = clf.clone();
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::accuracy;
    use ndarray::array;

    #[test]
    fn learns_xor() {
        let x = array![[0.0f32, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
        let y = vec![0, 1, 1, 0];
        let cfg = TrainConfig {
            learning_rate: 0.5,
            epochs: 2000,
            batch_size: 4,
            l2_penalty: 0.0,
            seed: 3,
            shuffle: false,
        };
        let clf = train_mlp(x.view(), &y, 2, 16, &cfg).unwrap();
        let acc = accuracy(&clf.predict_logproba(x.view()).unwrap(), &y);
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn starts_uniform_and_is_seeded() {
        let x = array![[1.0f32, 2.0], [3.0, -1.0]];
        let cfg = TrainConfig::default();
        let a = train_mlp(x.view(), &[0, 1], 3, 4, &cfg).unwrap();
        let b = train_mlp(x.view(), &[0, 1], 3, 4, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(train_mlp(x.view(), &[0, 1], 3, 0, &cfg).is_err());
    }
}
