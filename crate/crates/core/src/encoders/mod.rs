//! Pluggable text-encoder interface with a deterministic synthetic default.
//!
//! The synthetic encoder builds embeddings out of hash-derived unit vectors,
//! so concept, style and creativity directions are recoverable by
//! construction and disentanglement is testable without any pretrained
//! model:
//!
//! * fuzzy sequences are fixed slot vectors, with the style vector added to
//!   row 1 and the concept vector to row 2;
//! * augmented sequences are noisy draws around `a*u_c + b*w_s + g`, where
//!   `g` is one shared creativity offset, so transition vectors between
//!   overlapping pairs depend only on the names that changed.

mod import;
mod synthetic;

pub use import::ImportedEncoder;
pub use synthetic::{concept_vector, ConceptRole, SyntheticEncoder, SLOT_SCALE};

use crate::agents::ConceptPair;
use crate::numerics::{Real, Tensor2D, Vector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("encoder config: {0}")]
    Config(String),
    #[error("embedding sequence: {0}")]
    Invalid(String),
    #[error("no imported embeddings for pair `{0}`")]
    UnknownPair(String),
    #[error("embedding import: {0}")]
    Import(String),
    #[error(transparent)]
    Container(#[from] crate::container::ContainerError),
}

/// Mixing coefficients of the synthetic augmented construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixParams {
    /// Concept coefficient in the augmented target mean.
    pub a: f64,
    /// Style coefficient.
    pub b: f64,
    /// Norm of the shared creativity offset.
    pub g_norm: f64,
    /// Isotropic noise scale of augmented rows.
    pub noise_std: f64,
}

impl Default for MixParams {
    fn default() -> Self {
        Self { a: 1.0, b: 0.6, g_norm: 0.5, noise_std: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Sequence-embedding width.
    pub d_model: usize,
    /// Pooled global-vector width.
    pub d_global: usize,
    pub l_fuzzy: usize,
    pub l_aug: usize,
    pub seed: u64,
    pub mix: MixParams,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { d_model: 32, d_global: 16, l_fuzzy: 8, l_aug: 48, seed: 7, mix: MixParams::default() }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), EncoderError> {
        if self.d_model < 2 {
            return Err(EncoderError::Config("d_model must be at least 2".into()));
        }
        if self.l_fuzzy < 3 {
            return Err(EncoderError::Config("l_fuzzy must be at least 3".into()));
        }
        if self.l_aug <= self.l_fuzzy {
            return Err(EncoderError::Config("l_aug must exceed l_fuzzy".into()));
        }
        if self.d_global == 0 {
            return Err(EncoderError::Config("d_global must be positive".into()));
        }
        if self.mix.noise_std < 0.0 {
            return Err(EncoderError::Config("noise_std must be non-negative".into()));
        }
        Ok(())
    }
}

/// A length-by-width token matrix plus an optional pooled global vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence<T> {
    pub tokens: Tensor2D<T>,
    pub pooled_global: Option<Vector<T>>,
}

impl<T: Real> EmbeddingSequence<T> {
    pub fn new(tokens: Tensor2D<T>, pooled_global: Option<Vector<T>>) -> Result<Self, EncoderError> {
        if tokens.nrows() == 0 {
            return Err(EncoderError::Invalid("needs at least one row".into()));
        }
        if tokens.iter().any(|v| !v.is_finite())
            || pooled_global.iter().flatten().any(|v| !v.is_finite())
        {
            return Err(EncoderError::Invalid("non-finite value".into()));
        }
        Ok(Self { tokens, pooled_global })
    }

    pub fn len(&self) -> usize {
        self.tokens.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false // construction requires at least one row
    }
}

/// Anything that can produce fuzzy/augmented embeddings for a pair. Real
/// encoder outputs can be imported from files without touching training.
pub trait Encoder<T: Real> {
    fn encode_fuzzy(&self, pair: &ConceptPair) -> Result<EmbeddingSequence<T>, EncoderError>;
    fn encode_augmented(&self, pair: &ConceptPair) -> Result<EmbeddingSequence<T>, EncoderError>;
    fn d_model(&self) -> usize;
    fn d_global(&self) -> usize;
}
