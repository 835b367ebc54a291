//! Invertible linear maps used as positions.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{GeomError, Result};
use crate::linalg;

/// An invertible linear map on R^n together with its inverse and
/// adjoint-inverse `T^{-*}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionMap {
    matrix: DMatrix<f64>,
    inverse: DMatrix<f64>,
    adjoint_inverse: DMatrix<f64>,
    det_normalized: bool,
    diagonal: bool,
}

impl PositionMap {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(GeomError::InvalidParameter("position map must be square".into()));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(GeomError::NonFinite);
        }
        let inverse = linalg::inverse(&matrix)?;
        let adjoint_inverse = inverse.transpose();
        let diagonal = linalg::is_diagonal(&matrix);
        let det_normalized = (matrix.determinant() - 1.0).abs() <= 1e-10;
        Ok(Self {
            matrix,
            inverse,
            adjoint_inverse,
            det_normalized,
            diagonal,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self::new(DMatrix::identity(n, n)).expect("identity is invertible")
    }

    pub fn diagonal(entries: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(entries)))
    }

    pub fn scalar(n: usize, a: f64) -> Result<Self> {
        Self::diagonal(&vec![a; n])
    }

    /// `exp(S)` for symmetric `S`; traceless `S` gives determinant one.
    pub fn from_symmetric_log(s: &DMatrix<f64>) -> Result<Self> {
        Self::new(linalg::sym_exp(s))
    }

    /// Diagonal map `diag(exp(s_i))`.
    pub fn from_log_diagonal(s: &[f64]) -> Result<Self> {
        let e: Vec<f64> = s.iter().map(|v| v.exp()).collect();
        Self::diagonal(&e)
    }

    /// Rescales to `|det| = 1`.
    pub fn normalized(&self) -> Result<Self> {
        let n = self.dim() as f64;
        let det = self.matrix.determinant();
        let scale = det.abs().powf(1.0 / n);
        let mut out = Self::new(&self.matrix / scale)?;
        out.det_normalized = true;
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn adjoint_inverse(&self) -> &DMatrix<f64> {
        &self.adjoint_inverse
    }

    pub fn is_diagonal(&self) -> bool {
        self.diagonal
    }

    pub fn is_det_normalized(&self) -> bool {
        self.det_normalized
    }

    pub fn det(&self) -> f64 {
        self.matrix.determinant()
    }

    pub fn diagonal_entries(&self) -> Option<Vec<f64>> {
        self.diagonal.then(|| self.matrix.diagonal().iter().copied().collect())
    }

    /// `T^{-*}` as a map.
    pub fn adjoint_inverse_map(&self) -> Self {
        Self {
            matrix: self.adjoint_inverse.clone(),
            inverse: self.matrix.transpose(),
            adjoint_inverse: self.matrix.clone(),
            det_normalized: self.det_normalized,
            diagonal: self.diagonal,
        }
    }

    pub fn inverse_map(&self) -> Self {
        Self {
            matrix: self.inverse.clone(),
            inverse: self.matrix.clone(),
            adjoint_inverse: self.matrix.transpose(),
            det_normalized: self.det_normalized,
            diagonal: self.diagonal,
        }
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &PositionMap) -> Result<Self> {
        Self::new(&self.matrix * &other.matrix)
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x
    }

    /// Symmetric logarithm (only meaningful for SPD maps).
    pub fn log_spd(&self) -> DMatrix<f64> {
        linalg::sym_log(&self.matrix)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.matrix
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(matrix_from_rows(rows)?)
    }
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let m = rows.len();
    if m == 0 {
        return Err(GeomError::InvalidParameter("empty matrix".into()));
    }
    let n = rows[0].len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(GeomError::InvalidParameter("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(m, n, |i, j| rows[i][j]))
}

impl Serialize for PositionMap {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PositionMap {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        PositionMap::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}
