//! Named parameter collections.
//!
//! All learnable state lives in a [`ParamSet`]: an insertion-ordered map from
//! name to matrix. Vectors (biases, norm gains) are stored as `1 x n` rows so
//! the optimizer, serializer and gradient checker see one uniform shape.

use super::{NumericsError, Real, Tensor2D};
use indexmap::IndexMap;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry<T> {
    pub value: Tensor2D<T>,
    pub trainable: bool,
}

/// Ordered map of named tensors; shapes are fixed after insertion.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    entries: IndexMap<String, ParamEntry<T>>,
}

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        Self { entries: IndexMap::new() }
    }

    pub fn insert(&mut self, name: &str, value: Tensor2D<T>, trainable: bool) -> Result<(), NumericsError> {
        if self.entries.contains_key(name) {
            return Err(NumericsError::DuplicateParam(name.to_string()));
        }
        self.entries.insert(name.to_string(), ParamEntry { value, trainable });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Option<&ParamEntry<T>> {
        self.entries.get(name)
    }

    /// Borrow a tensor by name, erroring on unknown names.
    pub fn tensor(&self, name: &str) -> Result<&Tensor2D<T>, NumericsError> {
        self.entries
            .get(name)
            .map(|e| &e.value)
            .ok_or_else(|| NumericsError::MissingParam(name.to_string()))
    }

    pub fn tensor_mut(&mut self, name: &str) -> Result<&mut Tensor2D<T>, NumericsError> {
        self.entries
            .get_mut(name)
            .map(|e| &mut e.value)
            .ok_or_else(|| NumericsError::MissingParam(name.to_string()))
    }

    /// Iterate entries in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamEntry<T>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut ParamEntry<T>)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    /// Same names/shapes/flags, all values zero. Used for gradient buffers.
    pub fn zeros_like(&self) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|(k, e)| {
                (
                    k.clone(),
                    ParamEntry { value: Tensor2D::zeros(e.value.raw_dim()), trainable: e.trainable },
                )
            })
            .collect();
        Self { entries }
    }

    /// Add `scale * delta` into the named entry.
    pub fn accumulate(&mut self, name: &str, delta: &Tensor2D<T>, scale: T) -> Result<(), NumericsError> {
        let t = self.tensor_mut(name)?;
        if t.raw_dim() != delta.raw_dim() {
            return Err(NumericsError::Shape(format!(
                "accumulate into `{name}`: {:?} vs {:?}",
                t.shape(),
                delta.shape()
            )));
        }
        t.scaled_add(scale, delta);
        Ok(())
    }

    /// Total number of scalar values across all entries.
    pub fn scalar_count(&self) -> usize {
        self.entries.values().map(|e| e.value.len()).sum()
    }

    /// True when every entry with the same name has the same shape as `other`.
    pub fn same_shape(&self, other: &Self) -> bool {
        self.entries.len() == other.entries.len()
            && self.entries.iter().all(|(k, e)| {
                other
                    .entries
                    .get(k)
                    .is_some_and(|o| o.value.raw_dim() == e.value.raw_dim())
            })
    }

    /// Convert values element-wise into another precision.
    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        let entries = self
            .entries
            .iter()
            .map(|(k, e)| {
                (
                    k.clone(),
                    ParamEntry {
                        value: e.value.mapv(|x| super::real::<U>(x.to_f64().unwrap())),
                        trainable: e.trainable,
                    },
                )
            })
            .collect();
        ParamSet { entries }
    }
}

impl<T: Real> Default for ParamSet<T> {
    fn default() -> Self {
        Self::new()
    }
}
