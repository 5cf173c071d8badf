//! Concept-pool persistence: UTF-8 line-delimited JSON records.
//!
//! Field names and order are part of the file contract:
//! `{domain, concept, style, fuzzy_prompt, augmented_prompt, valid, split, matrix_id}`.

use super::{AgentError, ConceptPair, Domain, PoolEntry, Split};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

#[derive(Serialize, Deserialize)]
struct PoolRecord {
    domain: Domain,
    concept: String,
    style: String,
    fuzzy_prompt: String,
    augmented_prompt: String,
    valid: u8,
    split: Split,
    matrix_id: u64,
}

impl From<&PoolEntry> for PoolRecord {
    fn from(e: &PoolEntry) -> Self {
        Self {
            domain: e.pair.domain,
            concept: e.pair.concept.clone(),
            style: e.pair.style.clone(),
            fuzzy_prompt: e.fuzzy_prompt.clone(),
            augmented_prompt: e.augmented_prompt.clone(),
            valid: e.valid,
            split: e.split,
            matrix_id: e.matrix_id,
        }
    }
}

impl PoolRecord {
    fn into_entry(self) -> Result<PoolEntry, AgentError> {
        if self.valid > 1 {
            return Err(AgentError::InvalidPair(format!("valid must be 0 or 1, got {}", self.valid)));
        }
        let pair = ConceptPair::new(self.domain, &self.concept, &self.style)?;
        Ok(PoolEntry {
            pair,
            fuzzy_prompt: self.fuzzy_prompt,
            augmented_prompt: self.augmented_prompt,
            valid: self.valid,
            split: self.split,
            matrix_id: self.matrix_id,
        })
    }
}

/// Write entries to `path`, one JSON record per line, preserving order.
pub fn pool_write(entries: &[PoolEntry], path: &Path) -> Result<(), AgentError> {
    let mut out = BufWriter::new(File::create(path)?);
    for entry in entries {
        let record = PoolRecord::from(entry);
        let line = serde_json::to_string(&record)
            .map_err(|e| AgentError::PoolParse {
                path: path.display().to_string(),
                line: 0,
                message: e.to_string(),
            })?;
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

/// Read a pool file back, reporting the 1-based line number on any bad record.
pub fn pool_read(path: &Path) -> Result<Vec<PoolEntry>, AgentError> {
    let reader = BufReader::new(File::open(path)?);
    let mut entries = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PoolRecord = serde_json::from_str(&line).map_err(|e| AgentError::PoolParse {
            path: path.display().to_string(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        entries.push(record.into_entry().map_err(|e| AgentError::PoolParse {
            path: path.display().to_string(),
            line: idx + 1,
            message: e.to_string(),
        })?);
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::mock_augment;

    fn sample_entries() -> Vec<PoolEntry> {
        let mut entries = Vec::new();
        for (i, (c, s)) in [("Skyscraper", "Honeycomb"), ("Pavilion", "Peacock Feather")]
            .iter()
            .enumerate()
        {
            let pair = ConceptPair::new(Domain::Architecture, c, s).unwrap();
            entries.push(PoolEntry {
                fuzzy_prompt: crate::agents::build_fuzzy_prompt(&pair).unwrap(),
                augmented_prompt: mock_augment(&pair),
                valid: 1,
                split: if i == 0 { Split::Train } else { Split::Test },
                matrix_id: i as u64,
                pair,
            });
        }
        entries
    }

    #[test]
    fn round_trip_preserves_everything() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pool.jsonl");
        let entries = sample_entries();
        pool_write(&entries, &path).unwrap();
        let back = pool_read(&path).unwrap();
        assert_eq!(back, entries);
    }

    #[test]
    fn empty_pool_is_an_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pool.jsonl");
        pool_write(&[], &path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap().len(), 0);
        assert!(pool_read(&path).unwrap().is_empty());
    }

    #[test]
    fn corrupted_record_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pool.jsonl");
        let entries = sample_entries();
        pool_write(&entries, &path).unwrap();
        let mut text = std::fs::read_to_string(&path).unwrap();
        text.push_str("{not json}\n");
        std::fs::write(&path, text).unwrap();
        match pool_read(&path) {
            Err(AgentError::PoolParse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn field_names_match_the_file_contract() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pool.jsonl");
        pool_write(&sample_entries(), &path).unwrap();
        let first = std::fs::read_to_string(&path).unwrap().lines().next().unwrap().to_string();
        for key in [
            "\"domain\"",
            "\"concept\"",
            "\"style\"",
            "\"fuzzy_prompt\"",
            "\"augmented_prompt\"",
            "\"valid\"",
            "\"split\"",
            "\"matrix_id\"",
        ] {
            assert!(first.contains(key), "missing {key} in {first}");
        }
    }
}
