use serde::{Deserialize, Serialize};

use super::NdiffError;

/// Dense row-major array of `f64` with explicit shape.
///
/// Networks operate on rank-3 tensors laid out as `[batch, length, channels]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, NdiffError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(NdiffError::ShapeMismatch {
                expected: shape,
                found: vec![data.len()],
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![],
            data: vec![value],
        }
    }

    /// A batch of single-channel sequences, `[rows.len(), len, 1]`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NdiffError> {
        let len = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * len);
        for row in rows {
            if row.len() != len {
                return Err(NdiffError::ShapeMismatch {
                    expected: vec![len],
                    found: vec![row.len()],
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            shape: vec![rows.len(), len, 1],
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self, NdiffError> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(NdiffError::ShapeMismatch {
                expected: shape,
                found: self.shape,
            });
        }
        self.shape = shape;
        Ok(self)
    }

    pub(crate) fn dims3(&self) -> Result<(usize, usize, usize), NdiffError> {
        match self.shape[..] {
            [b, l, c] => Ok((b, l, c)),
            _ => Err(NdiffError::Rank {
                expected: 3,
                found: self.shape.len(),
            }),
        }
    }
}
