use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::NdiffError;

static NEXT_STORE_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_STORE_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Named parameter tensors owned by exactly one network.
///
/// Shapes are fixed at construction. Every mutation through
/// [`ParamStore::apply_update`] bumps the version, so gradients recorded
/// against an older version are rejected as stale.
#[derive(Debug, Serialize, Deserialize)]
pub struct ParamStore {
    #[serde(skip, default = "fresh_id")]
    id: u64,
    #[serde(skip)]
    version: u64,
    entries: Vec<ParamEntry>,
}

impl Clone for ParamStore {
    /// A clone is a new owner: it gets its own identity.
    fn clone(&self) -> Self {
        Self {
            id: fresh_id(),
            version: 0,
            entries: self.entries.clone(),
        }
    }
}

impl PartialEq for ParamStore {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self {
            id: fresh_id(),
            version: 0,
            entries: Vec::new(),
        }
    }

    pub(crate) fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) -> usize {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        self.entries.push(ParamEntry {
            name: name.into(),
            shape,
            values,
        });
        self.entries.len() - 1
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.entries.iter().map(|e| e.values.len()).sum()
    }

    pub fn get(&self, name: &str) -> Option<&ParamEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    #[cfg(test)]
    pub(crate) fn values(&self, index: usize) -> &[f64] {
        &self.entries[index].values
    }

    /// All parameter values concatenated in store order.
    pub fn flatten(&self) -> Vec<f64> {
        self.entries.iter().flat_map(|e| e.values.iter().copied()).collect()
    }

    /// Overwrites a single parameter; shape must be preserved.
    pub fn set(&mut self, name: &str, values: &[f64]) -> Result<(), NdiffError> {
        let entry = self
            .entries
            .iter_mut()
            .find(|e| e.name == name)
            .ok_or_else(|| NdiffError::UnknownParam(name.to_string()))?;
        if entry.values.len() != values.len() {
            return Err(NdiffError::ShapeMismatch {
                expected: entry.shape.clone(),
                found: vec![values.len()],
            });
        }
        entry.values.copy_from_slice(values);
        self.version += 1;
        Ok(())
    }

    /// Applies `f(param_index, values)` to every parameter and bumps the version.
    pub(crate) fn apply_update(&mut self, mut f: impl FnMut(usize, &mut [f64])) {
        for (i, e) in self.entries.iter_mut().enumerate() {
            f(i, &mut e.values);
        }
        self.version += 1;
    }

    /// Copies values from a store of identical layout.
    pub fn copy_from(&mut self, other: &ParamStore) -> Result<(), NdiffError> {
        if !self.same_layout(other) {
            return Err(NdiffError::LayoutMismatch);
        }
        for (dst, src) in self.entries.iter_mut().zip(&other.entries) {
            dst.values.copy_from_slice(&src.values);
        }
        self.version += 1;
        Ok(())
    }

    pub fn same_layout(&self, other: &ParamStore) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a.name == b.name && a.shape == b.shape)
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients aligned entry-by-entry with one [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradStore {
    store_id: u64,
    grads: Vec<Vec<f64>>,
}

impl GradStore {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self {
            store_id: store.id,
            grads: store.entries.iter().map(|e| vec![0.0; e.values.len()]).collect(),
        }
    }

    pub fn store_id(&self) -> u64 {
        self.store_id
    }

    pub fn grads(&self) -> &[Vec<f64>] {
        &self.grads
    }

    pub(crate) fn grads_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.grads
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.grads.iter().flatten().copied().collect()
    }

    pub fn norm(&self) -> f64 {
        self.grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().flatten().all(|g| g.is_finite())
    }

    /// Accumulates another gradient for the same store.
    pub fn accumulate(&mut self, other: &GradStore) -> Result<(), NdiffError> {
        if other.store_id != self.store_id || other.grads.len() != self.grads.len() {
            return Err(NdiffError::LayoutMismatch);
        }
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, c: f64) {
        self.grads.iter_mut().flatten().for_each(|g| *g *= c);
    }
}
