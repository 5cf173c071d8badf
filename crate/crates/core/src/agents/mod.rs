//! Creative agent system: fuzzy-prompt construction, the deterministic mock
//! augmentor/evaluator pair, and the concept-pool record types.
//!
//! The mock augmentor emits a fixed four-sentence expansion per pair and the
//! mock evaluator scores the text-level contract (exactly four sentences,
//! both names present verbatim), so the whole data pipeline runs offline and
//! reproducibly. A remote chat-completions backend can replace the mock.

mod backend;
mod pool;
mod vocab;

pub use backend::{AgentBackend, BackendKind};
pub use pool::{pool_read, pool_write};
pub use vocab::Vocabulary;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("invalid concept pair: {0}")]
    InvalidPair(String),
    #[error("unknown domain `{0}` (expected architecture, furniture or nature)")]
    UnknownDomain(String),
    #[error("`{name}` is not in the {domain} vocabulary {part}")]
    NotInVocabulary { name: String, domain: Domain, part: &'static str },
    #[error("pool file {path}, line {line}: {message}")]
    PoolParse { path: String, line: usize, message: String },
    #[error("pool io: {0}")]
    PoolIo(#[from] std::io::Error),
    #[error("backend failure for ({concept}, {style}): {message}")]
    Backend { concept: String, style: String, message: String },
    #[error("remote backend requires an endpoint")]
    MissingEndpoint,
    #[error("vocabulary file: {0}")]
    VocabParse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Architecture,
    Furniture,
    Nature,
}

impl Domain {
    pub const ALL: [Domain; 3] = [Domain::Architecture, Domain::Furniture, Domain::Nature];

    pub fn as_str(&self) -> &'static str {
        match self {
            Domain::Architecture => "architecture",
            Domain::Furniture => "furniture",
            Domain::Nature => "nature",
        }
    }
}

impl std::fmt::Display for Domain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Domain {
    type Err = AgentError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "architecture" => Ok(Domain::Architecture),
            "furniture" => Ok(Domain::Furniture),
            "nature" => Ok(Domain::Nature),
            other => Err(AgentError::UnknownDomain(other.to_string())),
        }
    }
}

/// One (primary concept, style guide) combination with its domain label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConceptPair {
    pub domain: Domain,
    pub concept: String,
    pub style: String,
}

impl ConceptPair {
    pub fn new(domain: Domain, concept: &str, style: &str) -> Result<Self, AgentError> {
        if concept.is_empty() || style.is_empty() {
            return Err(AgentError::InvalidPair("concept and style must be non-empty".into()));
        }
        if concept == style {
            return Err(AgentError::InvalidPair(format!(
                "concept and style must differ, both are `{concept}`"
            )));
        }
        Ok(Self { domain, concept: concept.to_string(), style: style.to_string() })
    }

    /// Stable identity used for leakage bookkeeping and file naming.
    pub fn key(&self) -> String {
        format!("{}/{}/{}", self.domain, self.concept, self.style)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// A validated pair plus its prompts, evaluator score and split assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub pair: ConceptPair,
    pub fuzzy_prompt: String,
    pub augmented_prompt: String,
    /// Evaluator score: 1 accepted, 0 failed fusion.
    pub valid: u8,
    pub split: Split,
    pub matrix_id: u64,
}

impl PoolEntry {
    pub fn is_trainable(&self) -> bool {
        self.valid == 1 && self.split == Split::Train
    }
}

/// The concept-biased fuzzy prompt: `A creative {style}-inspired {concept}`.
pub fn build_fuzzy_prompt(pair: &ConceptPair) -> Result<String, AgentError> {
    if pair.concept == pair.style {
        return Err(AgentError::InvalidPair(format!(
            "concept and style must differ, both are `{}`",
            pair.concept
        )));
    }
    Ok(format!("A creative {}-inspired {}", pair.style, pair.concept))
}

/// Expand a fuzzy prompt into the four-sentence augmented prompt.
pub fn augment(pair: &ConceptPair, backend: &AgentBackend) -> Result<String, AgentError> {
    match backend.kind {
        BackendKind::Mock => Ok(mock_augment(pair)),
        BackendKind::Remote => backend.remote_augment(pair),
    }
}

/// Deterministic mock expansion following the mandatory four-slot template
/// (identity/silhouette, surface/material, micro-details, environment).
pub fn mock_augment(pair: &ConceptPair) -> String {
    let c = &pair.concept;
    let s = &pair.style;
    match pair.domain {
        Domain::Architecture | Domain::Furniture => format!(
            "A striking, highly detailed creative design taking the exact physical silhouette, \
             macro-geometry, and functional form of a {c}. \
             Its entire exterior and architectural skin are completely constructed from the \
             distinct materials, textures, and visual aesthetic of a {s}. \
             Close inspection reveals {s} patterning wrapped across every load-bearing edge, \
             catching and scattering ambient light along the seams of the {c}. \
             The structure stands in a calm, complementary environment whose atmosphere echoes \
             the {s} motif without competing with the single main form."
        ),
        Domain::Nature => format!(
            "A single, unified hybrid creature that strictly inherits the exact anatomical \
             skeleton, limb structure, and overall body posture of a {c}. \
             However, its entire epidermis is seamlessly replaced by the distinctive textures, \
             fur, scales, or biological surface of a {s}. \
             Along the spine and limbs, the {s} surface detail follows the underlying {c} \
             anatomy at a fine, believable scale. \
             The mutant organism is rendered in photorealistic macro-photography with cinematic \
             lighting against a clean, neutral background."
        ),
    }
}

/// Binary evaluator score: 1 iff the text has exactly four sentences and
/// mentions both the concept and the style verbatim.
pub fn evaluate(pair: &ConceptPair, augmented_prompt: &str) -> u8 {
    let four_sentences = count_sentences(augmented_prompt) == 4;
    let names_present =
        augmented_prompt.contains(&pair.concept) && augmented_prompt.contains(&pair.style);
    u8::from(four_sentences && names_present)
}

/// Sentences end at `.`, `!` or `?` followed by whitespace or end of text.
fn count_sentences(text: &str) -> usize {
    let chars: Vec<char> = text.chars().collect();
    let mut count = 0;
    for (i, &ch) in chars.iter().enumerate() {
        if matches!(ch, '.' | '!' | '?') {
            let at_end = chars[i + 1..].iter().all(|c| c.is_whitespace());
            let before_space = chars.get(i + 1).is_some_and(|c| c.is_whitespace());
            if at_end || before_space {
                count += 1;
            }
        }
    }
    count
}
