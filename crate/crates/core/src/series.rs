use serde::{Deserialize, Serialize};

/// Real-valued samples at a fixed sampling interval.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TimeSeries {
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> TimeSeries {
        TimeSeries::new(self.values[range].to_vec())
    }
}

impl From<Vec<f64>> for TimeSeries {
    fn from(values: Vec<f64>) -> Self {
        Self::new(values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnovationsKind {
    /// Produced by an encoder from observed data.
    Encoded,
    /// Drawn IID uniform to stand in for unrealised innovations.
    Pseudo,
}

/// A sequence of values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnovationsSequence {
    values: Vec<f64>,
    kind: InnovationsKind,
}

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("innovation at index {index} is {value}, outside [0, 1]")]
pub struct OutOfRange {
    pub index: usize,
    pub value: f64,
}

impl InnovationsSequence {
    pub fn new(values: Vec<f64>, kind: InnovationsKind) -> Result<Self, OutOfRange> {
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(OutOfRange { index, value });
        }
        Ok(Self { values, kind })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn kind(&self) -> InnovationsKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}
