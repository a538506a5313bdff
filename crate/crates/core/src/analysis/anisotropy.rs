use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::seed;
use crate::store::EmbeddingMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnisotropyReport {
    pub n_rows: usize,
    pub n_samples: usize,
    pub n_pairs: usize,
    pub l2_mean: f64,
    pub l2_var: f64,
    pub cos_mean: f64,
    pub cos_var: f64,
    pub dot_mean: f64,
    pub dot_var: f64,
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| f64::from(*x) * f64::from(*y))
        .sum()
}

/// Population mean and variance, two passes.
fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// L2 norms over every row; cosine and dot statistics over all pairs of
/// `n_samples` rows drawn without replacement. Variances are population
/// variances.
pub fn anisotropy_report(
    emb: &EmbeddingMatrix,
    n_samples: usize,
    seed_value: u64,
) -> Result<AnisotropyReport, AnalysisError> {
    if emb.n() < 2 {
        return Err(AnalysisError::TooFewRows {
            required: 2,
            found: emb.n(),
        });
    }
    if n_samples < 2 {
        return Err(AnalysisError::TooFewPoints {
            required: 2,
            found: n_samples,
        });
    }
    let squared: Vec<f64> = (0..emb.n())
        .into_par_iter()
        .map(|i| dot(emb.row(i), emb.row(i)))
        .collect();
    let norms: Vec<f64> = squared.iter().map(|v| v.sqrt()).collect();
    let (l2_mean, l2_var) = mean_var(&norms);

    let s = n_samples.min(emb.n());
    let mut rows = sample(&mut seed::rng(seed_value), emb.n(), s).into_vec();
    rows.sort_unstable();

    // one vector of (cos, dot) per anchor row, flattened in pair order
    let pairs: Vec<(f64, f64)> = (0..s)
        .into_par_iter()
        .map(|a| {
            let i = rows[a];
            rows[a + 1..]
                .iter()
                .map(|&j| {
                    let d = dot(emb.row(i), emb.row(j));
                    // sqrt of the product keeps cos(x, x) exactly 1
                    let denom = (squared[i] * squared[j]).sqrt();
                    let c = if denom == 0.0 {
                        0.0
                    } else {
                        (d / denom).clamp(-1.0, 1.0)
                    };
                    (c, d)
                })
                .collect::<Vec<_>>()
        })
        .flatten()
        .collect();
    let cos: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let dots: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let (cos_mean, cos_var) = mean_var(&cos);
    let (dot_mean, dot_var) = mean_var(&dots);

    Ok(AnisotropyReport {
        n_rows: emb.n(),
        n_samples: s,
        n_pairs: pairs.len(),
        l2_mean,
        l2_var,
        cos_mean,
        cos_var,
        dot_mean,
        dot_var,
    })
}
