use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::AnalysisError;

/// Two-sided 97.5% standard normal quantile.
const Z_975: f64 = 1.959963984540054;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub n: usize,
    pub r: f64,
    pub spearman_rho: f64,
    /// Two-sided p-value of `r` under a t distribution with `n − 2` dof.
    pub p_value: f64,
    /// Fisher-z interval for `r`.
    pub ci95: (f64, f64),
}

fn check(x: &[f64], y: &[f64]) -> Result<(), AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(AnalysisError::TooFewPoints {
            required: 3,
            found: x.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, AnalysisError> {
    check(x, y)?;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(AnalysisError::ConstantInput);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the average of their positions.
fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = avg;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, AnalysisError> {
    check(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

pub fn correlate(x: &[f64], y: &[f64]) -> Result<CorrelationResult, AnalysisError> {
    let r = pearson(x, y)?;
    let spearman_rho = spearman(x, y)?;
    let n = x.len();
    let dof = (n - 2) as f64;

    let p_value = if r.abs() >= 1.0 {
        0.0
    } else {
        let t = r * (dof / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, dof).expect("positive dof");
        (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
    };

    let ci95 = if n <= 3 {
        // standard error of z is 1/sqrt(n-3): unbounded
        (-1.0, 1.0)
    } else if r.abs() >= 1.0 {
        (r, r)
    } else {
        let z = r.atanh();
        let half = Z_975 / ((n - 3) as f64).sqrt();
        ((z - half).tanh(), (z + half).tanh())
    };

    Ok(CorrelationResult {
        n,
        r,
        spearman_rho,
        p_value,
        ci95,
    })
}
