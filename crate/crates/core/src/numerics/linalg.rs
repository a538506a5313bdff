//! Orthonormalisation and orthogonal projections.

use ndarray::{Array2, ArrayView2};

use super::{NumericsError, RANK_TOLERANCE};
use crate::store::{EmbeddingMatrix, StoreError};

/// Appends the part of each candidate row orthogonal to `basis` (normalised)
/// using modified Gram–Schmidt with a second re-orthogonalisation pass.
/// Returns how many rows were added.
pub fn extend_basis(basis: &mut Vec<Vec<f64>>, candidates: ArrayView2<'_, f64>) -> usize {
    let before = basis.len();
    for row in candidates.rows() {
        let mut v: Vec<f64> = row.to_vec();
        let original = norm(&v);
        if original == 0.0 || !original.is_finite() {
            continue;
        }
        for _ in 0..2 {
            for b in basis.iter() {
                let c = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(vi, bi)| *vi -= c * bi);
            }
        }
        let residual = norm(&v);
        if residual <= RANK_TOLERANCE * original {
            continue;
        }
        v.iter_mut().for_each(|vi| *vi /= residual);
        basis.push(v);
    }
    basis.len() - before
}

/// Orthonormal rows spanning the row space of `v`.
pub fn orthonormal_basis(v: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut basis = Vec::new();
    extend_basis(&mut basis, v);
    rows_to_array(&basis, v.ncols())
}

pub(crate) fn rows_to_array(rows: &[Vec<f64>], d: usize) -> Array2<f64> {
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), d), flat).expect("rows share a dimension")
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Symmetric idempotent `d × d` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    matrix: Array2<f64>,
}

/// Tolerance for accepting a matrix as a projection when it was computed
/// here, and when it was read back from f32 storage.
const EXACT_TOL: f64 = 1e-8;
const STORED_TOL: f64 = 1e-4;

impl ProjectionMatrix {
    pub fn identity(d: usize) -> Self {
        Self {
            matrix: Array2::eye(d),
        }
    }

    /// Validates symmetry and idempotence within `tol` (max abs entry error).
    pub fn from_matrix(matrix: Array2<f64>, tol: f64) -> Result<Self, NumericsError> {
        if matrix.nrows() != matrix.ncols() {
            return Err(NumericsError::NotAProjection(format!(
                "not square: {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(NumericsError::NonFinite);
        }
        let asym = max_abs_diff(matrix.view(), matrix.t());
        if asym > tol {
            return Err(NumericsError::NotAProjection(format!("asymmetry {asym:e}")));
        }
        let idem = max_abs_diff(matrix.dot(&matrix).view(), matrix.view());
        if idem > tol {
            return Err(NumericsError::NotAProjection(format!(
                "P·P differs from P by {idem:e}"
            )));
        }
        Ok(Self { matrix })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    /// Rank, read off the trace (eigenvalues of a projection are 0 or 1).
    pub fn rank(&self) -> usize {
        self.matrix.diag().sum().round().max(0.0) as usize
    }

    /// `X · Pᵀ`, accumulated in f64 and rounded to f32.
    pub fn apply(&self, x: ArrayView2<'_, f32>) -> Result<Array2<f32>, NumericsError> {
        if x.ncols() != self.dim() {
            return Err(NumericsError::DimMismatch {
                expected: self.dim(),
                actual: x.ncols(),
            });
        }
        let wide = x.mapv(f64::from);
        Ok(wide.dot(&self.matrix.t()).mapv(|v| v as f32))
    }

    pub fn apply_f64(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>, NumericsError> {
        if x.ncols() != self.dim() {
            return Err(NumericsError::DimMismatch {
                expected: self.dim(),
                actual: x.ncols(),
            });
        }
        Ok(x.dot(&self.matrix.t()))
    }

    /// Projects every row of an embedding matrix, keeping ids.
    pub fn apply_embeddings(&self, m: &EmbeddingMatrix) -> Result<EmbeddingMatrix, NumericsError> {
        let projected = self.apply(m.view())?;
        let (data, _) = projected.into_raw_vec_and_offset();
        m.with_data(data).map_err(|_| NumericsError::NonFinite)
    }

    /// Rows `row_0 .. row_{d-1}` for storage in an EMB1 container.
    pub fn to_embedding_matrix(&self) -> EmbeddingMatrix {
        let d = self.dim();
        let data = self.matrix.iter().map(|&v| v as f32).collect();
        let ids = (0..d).map(|i| format!("row_{i}")).collect();
        EmbeddingMatrix::new(ids, d, data).expect("finite square matrix")
    }

    pub fn from_embedding_matrix(m: &EmbeddingMatrix) -> Result<Self, NumericsError> {
        if m.n() != m.dim() {
            return Err(NumericsError::NotAProjection(format!(
                "stored matrix is {}x{}",
                m.n(),
                m.dim()
            )));
        }
        let matrix = m.view().mapv(f64::from);
        Self::from_matrix(matrix, STORED_TOL)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, ProjectionLoadError> {
        let m = crate::store::load_embeddings(path)?;
        Ok(Self::from_embedding_matrix(&m)?)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ProjectionLoadError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

fn max_abs_diff(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// `P = I − BᵀB` for orthonormal basis rows `B`.
pub fn nullspace_projection(
    basis: ArrayView2<'_, f64>,
    d: usize,
) -> Result<ProjectionMatrix, NumericsError> {
    if basis.nrows() > 0 && basis.ncols() != d {
        return Err(NumericsError::DimMismatch {
            expected: d,
            actual: basis.ncols(),
        });
    }
    if basis.nrows() == 0 {
        return Ok(ProjectionMatrix::identity(d));
    }
    let gram = basis.dot(&basis.t());
    let dev = max_abs_diff(gram.view(), Array2::<f64>::eye(basis.nrows()).view());
    if dev > 1e-6 {
        return Err(NumericsError::NotOrthonormal(dev));
    }
    let mut p = Array2::<f64>::eye(d) - basis.t().dot(&basis);
    // exact symmetry
    let pt = p.t().to_owned();
    p.zip_mut_with(&pt, |a, b| *a = 0.5 * (*a + *b));
    ProjectionMatrix::from_matrix(p, EXACT_TOL)
}
