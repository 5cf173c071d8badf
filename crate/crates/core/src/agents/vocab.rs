//! Per-domain concept/style vocabularies.
//!
//! The three domain files are bundled into the binary; `load` reads the same
//! JSON layout from disk. A file may omit `styles`, in which case styles are
//! the concept list itself.

use super::{AgentError, ConceptPair, Domain};
use serde::Deserialize;
use std::path::Path;

#[derive(Debug, Deserialize)]
struct VocabFile {
    domain: String,
    concepts: Vec<String>,
    #[serde(default)]
    styles: Option<Vec<String>>,
}

#[derive(Debug, Clone)]
pub struct Vocabulary {
    pub domain: Domain,
    pub concepts: Vec<String>,
    pub styles: Vec<String>,
}

impl Vocabulary {
    /// The vocabulary compiled into the library.
    pub fn bundled(domain: Domain) -> Self {
        let raw = match domain {
            Domain::Architecture => include_str!("../../data/architecture.json"),
            Domain::Furniture => include_str!("../../data/furniture.json"),
            Domain::Nature => include_str!("../../data/nature.json"),
        };
        Self::from_json(raw).expect("bundled vocabulary is well-formed")
    }

    pub fn load(path: &Path) -> Result<Self, AgentError> {
        let raw = std::fs::read_to_string(path)?;
        Self::from_json(&raw)
    }

    fn from_json(raw: &str) -> Result<Self, AgentError> {
        let file: VocabFile =
            serde_json::from_str(raw).map_err(|e| AgentError::VocabParse(e.to_string()))?;
        let domain: Domain = file.domain.parse()?;
        if file.concepts.is_empty() {
            return Err(AgentError::VocabParse(format!("{domain}: empty concept list")));
        }
        let styles = file.styles.unwrap_or_else(|| file.concepts.clone());
        Ok(Self { domain, concepts: file.concepts, styles })
    }

    pub fn contains_concept(&self, name: &str) -> bool {
        self.concepts.iter().any(|c| c == name)
    }

    pub fn contains_style(&self, name: &str) -> bool {
        self.styles.iter().any(|s| s == name)
    }

    /// Build a pair after checking both names against this vocabulary.
    pub fn pair(&self, concept: &str, style: &str) -> Result<ConceptPair, AgentError> {
        if !self.contains_concept(concept) {
            return Err(AgentError::NotInVocabulary {
                name: concept.to_string(),
                domain: self.domain,
                part: "concepts",
            });
        }
        if !self.contains_style(style) {
            return Err(AgentError::NotInVocabulary {
                name: style.to_string(),
                domain: self.domain,
                part: "styles",
            });
        }
        ConceptPair::new(self.domain, concept, style)
    }
}
