//! Pool generation: matrices -> holdout split -> augment -> evaluate -> entries.

use crate::agents::{
    augment, build_fuzzy_prompt, AgentBackend, AgentError, Domain, PoolEntry, Split, Vocabulary,
};
use crate::sampler::{sample_matrices_with_base, split_holdout, SamplerError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PoolSummary {
    pub per_domain: Vec<(Domain, DomainCounts)>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DomainCounts {
    pub pairs: usize,
    pub valid: usize,
    pub train: usize,
    pub test: usize,
}

/// Generate the concept pool for the given domains with bundled
/// vocabularies. Matrix ids are unique across the whole run.
pub fn generate_pool(
    domains: &[Domain],
    matrices_per_domain: usize,
    seed: u64,
    backend: &AgentBackend,
) -> Result<(Vec<PoolEntry>, PoolSummary), PipelineError> {
    let vocabs: Vec<Vocabulary> = domains.iter().map(|&d| Vocabulary::bundled(d)).collect();
    generate_pool_with_vocabs(&vocabs, matrices_per_domain, seed, backend)
}

pub fn generate_pool_with_vocabs(
    vocabs: &[Vocabulary],
    matrices_per_domain: usize,
    seed: u64,
    backend: &AgentBackend,
) -> Result<(Vec<PoolEntry>, PoolSummary), PipelineError> {
    let mut entries = Vec::new();
    let mut summary = PoolSummary::default();
    let mut id_base = 0u64;
    for vocab in vocabs {
        let matrices = sample_matrices_with_base(vocab, matrices_per_domain, seed, id_base)?;
        id_base += matrices.len() as u64;
        let mut counts = DomainCounts::default();
        for (matrix_id, pair, split) in split_holdout(&matrices, seed) {
            let fuzzy_prompt = build_fuzzy_prompt(&pair)?;
            let augmented_prompt = augment(&pair, backend)?;
            let valid = crate::agents::evaluate(&pair, &augmented_prompt);
            counts.pairs += 1;
            counts.valid += valid as usize;
            match split {
                Split::Train => counts.train += 1,
                Split::Test => counts.test += 1,
            }
            entries.push(PoolEntry { pair, fuzzy_prompt, augmented_prompt, valid, split, matrix_id });
        }
        summary.per_domain.push((vocab.domain, counts));
    }
    Ok((entries, summary))
}
