//! Augmentor backend selection: deterministic mock, or a remote
//! chat-completions endpoint spoken to with a single JSON POST.
//!
//! Request body: `{"system": <instructions>, "user": <fuzzy prompt>}`.
//! Response body: `{"text": <augmented prompt>}`. Failures retry with
//! exponential backoff (factor 2) up to `max_retries` before surfacing a
//! backend error that carries the pair for re-queueing.

use super::{build_fuzzy_prompt, AgentError, ConceptPair, Domain};
use serde::Deserialize;
use std::time::Duration;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Mock,
    Remote,
}

#[derive(Debug, Clone)]
pub struct AgentBackend {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub timeout: Duration,
    pub max_retries: u32,
    /// First retry delay; doubles on each attempt. Shortened in tests.
    pub backoff_base: Duration,
}

impl AgentBackend {
    pub fn mock() -> Self {
        Self {
            kind: BackendKind::Mock,
            endpoint: None,
            timeout: Duration::from_secs(30),
            max_retries: 3,
            backoff_base: Duration::from_secs(1),
        }
    }

    pub fn remote(endpoint: &str) -> Self {
        Self {
            kind: BackendKind::Remote,
            endpoint: Some(endpoint.to_string()),
            ..Self::mock()
        }
    }

    pub(super) fn remote_augment(&self, pair: &ConceptPair) -> Result<String, AgentError> {
        let endpoint = self.endpoint.as_deref().ok_or(AgentError::MissingEndpoint)?;
        let fuzzy = build_fuzzy_prompt(pair)?;
        let body = serde_json::json!({
            "system": system_prompt(pair.domain),
            "user": fuzzy,
        });
        let agent = ureq::AgentBuilder::new()
            .timeout(self.timeout)
            .build();

        let mut last_err = String::new();
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                std::thread::sleep(self.backoff_base * 2u32.pow(attempt - 1));
            }
            match agent.post(endpoint).send_json(body.clone()) {
                Ok(resp) => match resp.into_json::<RemoteResponse>() {
                    Ok(parsed) => return Ok(parsed.text),
                    Err(e) => last_err = format!("bad response body: {e}"),
                },
                Err(e) => last_err = e.to_string(),
            }
        }
        Err(AgentError::Backend {
            concept: pair.concept.clone(),
            style: pair.style.clone(),
            message: format!("{last_err} (after {} attempts)", self.max_retries + 1),
        })
    }
}

#[derive(Deserialize)]
struct RemoteResponse {
    text: String,
}

/// Instructions forwarded to a remote augmentor. Mirrors the contract the
/// mock implements: four mandatory sentence slots, concept owns the
/// silhouette/anatomy, style owns the surface.
pub fn system_prompt(domain: Domain) -> String {
    let (role, slot1, slot2) = match domain {
        Domain::Architecture | Domain::Furniture => (
            "You are a generation agent specializing in architecture and industrial design.",
            "sentence 1 (identity & silhouette): the design takes the exact physical silhouette, \
             macro-geometry, and functional form of the concept",
            "sentence 2 (surface & material): the entire exterior skin is constructed from the \
             materials, textures, and visual aesthetic of the style",
        ),
        Domain::Nature => (
            "You are a generation agent specializing in biological and botanical fusion. \
             Generate one single, unified hybrid creature; never two entities side by side.",
            "sentence 1 (base anatomy): a single hybrid creature that strictly inherits the \
             skeleton, limb structure, and body posture of the concept",
            "sentence 2 (epidermal mapping): its entire epidermis is seamlessly replaced by the \
             surface of the style",
        ),
    };
    format!(
        "{role} Expand the user's fuzzy prompt into an augmented prompt of exactly 4 sentences: \
         {slot1}; {slot2}; sentence 3: two or three specific visual micro-details; \
         sentence 4: a complementary environment and lighting. \
         The concept dictates the unbreakable structure, the style dictates only surface and \
         atmosphere. Mention both names verbatim. Reply with the augmented prompt text only."
    )
}
