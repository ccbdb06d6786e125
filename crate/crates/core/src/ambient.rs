use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A dense element of the ambient Euclidean space. Column vectors are stored
/// as n-by-1 matrices so that vector- and matrix-shaped manifolds share one
/// representation.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbientVector {
    data: DMatrix<f64>,
}

impl AmbientVector {
    pub fn from_matrix(data: DMatrix<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ambient vector entries".into()));
        }
        Ok(Self { data })
    }

    pub fn from_vector(v: DVector<f64>) -> Result<Self> {
        let n = v.len();
        Self::from_matrix(DMatrix::from_column_slice(n, 1, v.as_slice()))
    }

    /// Bypasses the finiteness check for values produced by internal
    /// arithmetic on already-validated inputs.
    pub(crate) fn from_matrix_unchecked(data: DMatrix<f64>) -> Self {
        Self { data }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    /// The single column of a vector-shaped element.
    pub fn column_vector(&self) -> Result<DVector<f64>> {
        if self.data.ncols() != 1 {
            return Err(Error::DimensionMismatch(format!(
                "expected a column vector, got {}x{}",
                self.data.nrows(),
                self.data.ncols()
            )));
        }
        Ok(DVector::from_column_slice(self.data.column(0).as_slice()))
    }

    pub fn shape(&self) -> (usize, usize) {
        self.data.shape()
    }

    pub fn norm(&self) -> f64 {
        self.data.norm()
    }

    /// Frobenius / Euclidean inner product.
    pub fn dot(&self, other: &AmbientVector) -> f64 {
        self.data.dotc(&other.data)
    }

    pub fn scale(&self, c: f64) -> AmbientVector {
        AmbientVector {
            data: &self.data * c,
        }
    }

    pub fn add(&self, other: &AmbientVector) -> AmbientVector {
        AmbientVector {
            data: &self.data + &other.data,
        }
    }

    pub fn sub(&self, other: &AmbientVector) -> AmbientVector {
        AmbientVector {
            data: &self.data - &other.data,
        }
    }
}
