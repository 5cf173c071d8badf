//! Embeddings produced elsewhere, loaded from a directory of container
//! files. Each file holds one pair: tensors `fuzzy` and `augmented`, optional
//! `fuzzy_global`/`augmented_global` rows, and the pair key in its metadata.

use super::{EmbeddingSequence, Encoder, EncoderError};
use crate::agents::ConceptPair;
use crate::container::TensorContainer;
use crate::numerics::{real, Real};
use ndarray::Array2;
use std::collections::HashMap;
use std::path::Path;

struct PairRecord {
    fuzzy: Array2<f32>,
    fuzzy_global: Option<Vec<f32>>,
    augmented: Array2<f32>,
    augmented_global: Option<Vec<f32>>,
}

pub struct ImportedEncoder {
    records: HashMap<String, PairRecord>,
    d_model: usize,
    d_global: usize,
}

impl ImportedEncoder {
    /// Load every `*.tensors` file under `dir`, indexed by the `pair_key`
    /// field of each file's metadata.
    pub fn load_dir(dir: &Path) -> Result<Self, EncoderError> {
        let mut records = HashMap::new();
        let mut d_model = 0usize;
        let mut d_global = 0usize;
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| EncoderError::Import(format!("{}: {e}", dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "tensors"))
            .collect();
        paths.sort();
        for path in paths {
            let container = TensorContainer::read(&path)?;
            let key = container
                .meta
                .get("pair_key")
                .and_then(|v| v.as_str())
                .ok_or_else(|| {
                    EncoderError::Import(format!("{}: missing pair_key", path.display()))
                })?
                .to_string();
            let fuzzy = container.tensor("fuzzy")?.clone();
            let augmented = container.tensor("augmented")?.clone();
            if fuzzy.ncols() != augmented.ncols() {
                return Err(EncoderError::Import(format!(
                    "{key}: fuzzy and augmented widths disagree"
                )));
            }
            if d_model == 0 {
                d_model = fuzzy.ncols();
            } else if fuzzy.ncols() != d_model {
                return Err(EncoderError::Import(format!("{key}: width {} != {d_model}", fuzzy.ncols())));
            }
            let fuzzy_global = container.tensor("fuzzy_global").ok().map(row_vec);
            let augmented_global = container.tensor("augmented_global").ok().map(row_vec);
            if let Some(g) = &augmented_global {
                if d_global == 0 {
                    d_global = g.len();
                }
            }
            records.insert(key, PairRecord { fuzzy, fuzzy_global, augmented, augmented_global });
        }
        if records.is_empty() {
            return Err(EncoderError::Import(format!("{}: no .tensors files", dir.display())));
        }
        Ok(Self { records, d_model, d_global })
    }

    fn record(&self, pair: &ConceptPair) -> Result<&PairRecord, EncoderError> {
        self.records
            .get(&pair.key())
            .ok_or_else(|| EncoderError::UnknownPair(pair.key()))
    }
}

fn row_vec(t: &Array2<f32>) -> Vec<f32> {
    t.iter().copied().collect()
}

fn to_sequence<T: Real>(
    tokens: &Array2<f32>,
    global: &Option<Vec<f32>>,
) -> Result<EmbeddingSequence<T>, EncoderError> {
    let tokens = tokens.mapv(|v| real::<T>(v as f64));
    let pooled = global
        .as_ref()
        .map(|g| g.iter().map(|&v| real::<T>(v as f64)).collect());
    EmbeddingSequence::new(tokens, pooled)
}

impl<T: Real> Encoder<T> for ImportedEncoder {
    fn encode_fuzzy(&self, pair: &ConceptPair) -> Result<EmbeddingSequence<T>, EncoderError> {
        let r = self.record(pair)?;
        to_sequence(&r.fuzzy, &r.fuzzy_global)
    }

    fn encode_augmented(&self, pair: &ConceptPair) -> Result<EmbeddingSequence<T>, EncoderError> {
        let r = self.record(pair)?;
        to_sequence(&r.augmented, &r.augmented_global)
    }

    fn d_model(&self) -> usize {
        self.d_model
    }

    fn d_global(&self) -> usize {
        self.d_global
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::Domain;
    use crate::encoders::{EncoderConfig, SyntheticEncoder};

    /// Dump synthetic encodings to disk, reload them, and compare.
    #[test]
    fn round_trip_through_the_container_format() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = EncoderConfig::default();
        let enc = SyntheticEncoder::new(cfg).unwrap();
        let pairs = [
            ConceptPair::new(Domain::Nature, "Dog", "Cabbage").unwrap(),
            ConceptPair::new(Domain::Nature, "Cat", "Cabbage").unwrap(),
        ];
        for (i, pair) in pairs.iter().enumerate() {
            let fuzzy: EmbeddingSequence<f32> = enc.encode_fuzzy(pair).unwrap();
            let aug: EmbeddingSequence<f32> = enc.encode_augmented(pair).unwrap();
            let mut c = TensorContainer::new(serde_json::json!({
                "kind": "embeddings",
                "pair_key": pair.key(),
            }));
            c.push("fuzzy", fuzzy.tokens.clone());
            c.push("augmented", aug.tokens.clone());
            let g = aug.pooled_global.clone().unwrap();
            c.push("augmented_global", Array2::from_shape_vec((1, g.len()), g.to_vec()).unwrap());
            c.write(&dir.path().join(format!("pair-{i}.tensors"))).unwrap();
        }

        let imported = ImportedEncoder::load_dir(dir.path()).unwrap();
        let direct: EmbeddingSequence<f32> = enc.encode_fuzzy(&pairs[0]).unwrap();
        let loaded: EmbeddingSequence<f32> = imported.encode_fuzzy(&pairs[0]).unwrap();
        assert_eq!(direct.tokens, loaded.tokens);
        let missing = ConceptPair::new(Domain::Nature, "Owl", "Grape").unwrap();
        assert!(matches!(
            Encoder::<f32>::encode_fuzzy(&imported, &missing),
            Err(EncoderError::UnknownPair(_))
        ));
    }
}
