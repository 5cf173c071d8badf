//! Concept-matrix generation, held-out splitting and triplet sampling.
//!
//! Matrices are 2x2 cross products of two concepts and two styles. Pairs are
//! unique across matrices within a run, so a held-out pair never has an
//! identical twin in training. Each matrix and each split decision draws
//! from its own derived RNG, making output independent of evaluation order.

use crate::agents::{ConceptPair, PoolEntry, Split, Vocabulary};
use crate::seeding::rng_from_parts;
use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::HashSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("vocabulary too small: {0}")]
    Capacity(String),
    #[error("no eligible triplet anchor in the pool")]
    NoTriplet,
    #[error(transparent)]
    Agent(#[from] crate::agents::AgentError),
}

/// A 2x2 concept matrix: two concepts crossed with two styles.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptMatrix {
    pub matrix_id: u64,
    pub concepts: [String; 2],
    pub styles: [String; 2],
    /// The four cross-product pairs, in (c1,s1), (c1,s2), (c2,s1), (c2,s2) order.
    pub entries: [ConceptPair; 4],
}

/// Draw `count` matrices with distinct concepts/styles and globally unseen
/// pairs. Deterministic in `seed`.
pub fn sample_matrices(
    vocab: &Vocabulary,
    count: usize,
    seed: u64,
) -> Result<Vec<ConceptMatrix>, SamplerError> {
    sample_matrices_with_base(vocab, count, seed, 0)
}

/// As [`sample_matrices`], with matrix ids starting at `id_base` so multiple
/// domains can share one id space.
pub fn sample_matrices_with_base(
    vocab: &Vocabulary,
    count: usize,
    seed: u64,
    id_base: u64,
) -> Result<Vec<ConceptMatrix>, SamplerError> {
    if vocab.concepts.len() < 2 {
        return Err(SamplerError::Capacity(format!(
            "{}: need at least 2 concepts, have {}",
            vocab.domain,
            vocab.concepts.len()
        )));
    }
    if vocab.styles.len() < 2 {
        return Err(SamplerError::Capacity(format!(
            "{}: need at least 2 styles, have {}",
            vocab.domain,
            vocab.styles.len()
        )));
    }

    // Consecutive failed candidates before giving up on one matrix. Large
    // enough that near-exhaustion of a small vocabulary still succeeds.
    const MAX_ATTEMPTS: usize = 200_000;

    let mut used_pairs: HashSet<(String, String)> = HashSet::new();
    let mut matrices = Vec::with_capacity(count);
    for index in 0..count {
        let matrix_id = id_base + index as u64;
        let mut rng = rng_from_parts(&[
            &seed.to_le_bytes(),
            b"matrix",
            vocab.domain.as_str().as_bytes(),
            &matrix_id.to_le_bytes(),
        ]);
        let mut found = None;
        for _ in 0..MAX_ATTEMPTS {
            let cs: Vec<&String> = vocab.concepts.choose_multiple(&mut rng, 2).collect();
            let ss: Vec<&String> = vocab.styles.choose_multiple(&mut rng, 2).collect();
            if cs.len() < 2 || ss.len() < 2 {
                break;
            }
            let combos = [(0, 0), (0, 1), (1, 0), (1, 1)];
            let valid = combos.iter().all(|&(ci, si)| {
                cs[ci] != ss[si] && !used_pairs.contains(&(cs[ci].clone(), ss[si].clone()))
            });
            if valid {
                found = Some(([cs[0].clone(), cs[1].clone()], [ss[0].clone(), ss[1].clone()]));
                break;
            }
        }
        let (concepts, styles) = found.ok_or_else(|| {
            SamplerError::Capacity(format!(
                "{}: could not place matrix {} without reusing a pair",
                vocab.domain, index
            ))
        })?;
        let entries = [
            ConceptPair::new(vocab.domain, &concepts[0], &styles[0])?,
            ConceptPair::new(vocab.domain, &concepts[0], &styles[1])?,
            ConceptPair::new(vocab.domain, &concepts[1], &styles[0])?,
            ConceptPair::new(vocab.domain, &concepts[1], &styles[1])?,
        ];
        for pair in &entries {
            used_pairs.insert((pair.concept.clone(), pair.style.clone()));
        }
        matrices.push(ConceptMatrix { matrix_id, concepts, styles, entries });
    }
    Ok(matrices)
}

/// Mark exactly one pair per matrix as held out. Returns
/// `(matrix_id, pair, split)` rows in matrix order.
pub fn split_holdout(matrices: &[ConceptMatrix], seed: u64) -> Vec<(u64, ConceptPair, Split)> {
    let mut out = Vec::with_capacity(matrices.len() * 4);
    for m in matrices {
        let mut rng = rng_from_parts(&[
            &seed.to_le_bytes(),
            b"holdout",
            &m.matrix_id.to_le_bytes(),
        ]);
        let test_idx = rng.gen_range(0..4);
        for (i, pair) in m.entries.iter().enumerate() {
            let split = if i == test_idx { Split::Test } else { Split::Train };
            out.push((m.matrix_id, pair.clone(), split));
        }
    }
    out
}

/// Three overlapping pairs: the anchor `(c_i, s_j)`, a style-varied neighbor
/// `(c_i, s_k)` and a concept-varied neighbor `(c_m, s_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletSample {
    pub anchor: PoolEntry,
    pub style_neighbor: PoolEntry,
    pub concept_neighbor: PoolEntry,
}

/// Precomputed eligibility index over the trainable entries of a pool.
pub struct TripletIndex {
    /// (anchor, same-concept neighbors, same-style neighbors), anchors eligible.
    anchors: Vec<(usize, Vec<usize>, Vec<usize>)>,
}

impl TripletIndex {
    pub fn build(pool: &[PoolEntry]) -> Self {
        let trainable: Vec<usize> =
            (0..pool.len()).filter(|&i| pool[i].is_trainable()).collect();
        let mut anchors = Vec::new();
        for &i in &trainable {
            let a = &pool[i].pair;
            let same_concept: Vec<usize> = trainable
                .iter()
                .copied()
                .filter(|&j| {
                    j != i && pool[j].pair.concept == a.concept && pool[j].pair.style != a.style
                })
                .collect();
            let same_style: Vec<usize> = trainable
                .iter()
                .copied()
                .filter(|&j| {
                    j != i && pool[j].pair.style == a.style && pool[j].pair.concept != a.concept
                })
                .collect();
            if !same_concept.is_empty() && !same_style.is_empty() {
                anchors.push((i, same_concept, same_style));
            }
        }
        Self { anchors }
    }

    pub fn eligible_anchor_count(&self) -> usize {
        self.anchors.len()
    }

    /// Uniform anchor among eligible anchors, uniform neighbors among each
    /// anchor's neighbor lists. Returns pool indices
    /// (anchor, style_neighbor, concept_neighbor).
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<(usize, usize, usize), SamplerError> {
        if self.anchors.is_empty() {
            return Err(SamplerError::NoTriplet);
        }
        let (anchor, same_concept, same_style) = &self.anchors[rng.gen_range(0..self.anchors.len())];
        // The style neighbor shares the anchor's concept; the concept
        // neighbor shares its style.
        let style_neighbor = same_concept[rng.gen_range(0..same_concept.len())];
        let concept_neighbor = same_style[rng.gen_range(0..same_style.len())];
        Ok((*anchor, style_neighbor, concept_neighbor))
    }
}

/// Draw one triplet from the pool's trainable entries.
pub fn sample_triplet<R: Rng>(pool: &[PoolEntry], rng: &mut R) -> Result<TripletSample, SamplerError> {
    let index = TripletIndex::build(pool);
    let (a, s, c) = index.sample(rng)?;
    Ok(TripletSample {
        anchor: pool[a].clone(),
        style_neighbor: pool[s].clone(),
        concept_neighbor: pool[c].clone(),
    })
}

/// One triplet per eligible held-out anchor: the anchor is a valid test
/// entry, both neighbors come from the trainable entries. Neighbor choice is
/// seeded, so repeated calls agree.
pub fn test_triplets<R: Rng>(pool: &[PoolEntry], rng: &mut R) -> Vec<TripletSample> {
    let trainable: Vec<usize> = (0..pool.len()).filter(|&i| pool[i].is_trainable()).collect();
    let mut out = Vec::new();
    for i in 0..pool.len() {
        let e = &pool[i];
        if e.split != Split::Test || e.valid != 1 {
            continue;
        }
        let same_concept: Vec<usize> = trainable
            .iter()
            .copied()
            .filter(|&j| pool[j].pair.concept == e.pair.concept && pool[j].pair.style != e.pair.style)
            .collect();
        let same_style: Vec<usize> = trainable
            .iter()
            .copied()
            .filter(|&j| pool[j].pair.style == e.pair.style && pool[j].pair.concept != e.pair.concept)
            .collect();
        if same_concept.is_empty() || same_style.is_empty() {
            continue;
        }
        let s = same_concept[rng.gen_range(0..same_concept.len())];
        let c = same_style[rng.gen_range(0..same_style.len())];
        out.push(TripletSample {
            anchor: e.clone(),
            style_neighbor: pool[s].clone(),
            concept_neighbor: pool[c].clone(),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{build_fuzzy_prompt, mock_augment, Domain};
    use crate::seeding::rng_for;

    fn entry(c: &str, s: &str, split: Split, valid: u8) -> PoolEntry {
        let pair = ConceptPair::new(Domain::Nature, c, s).unwrap();
        PoolEntry {
            fuzzy_prompt: build_fuzzy_prompt(&pair).unwrap(),
            augmented_prompt: mock_augment(&pair),
            valid,
            split,
            matrix_id: 0,
            pair,
        }
    }

    #[test]
    fn matrices_are_deterministic_and_distinct() {
        let vocab = Vocabulary::bundled(Domain::Nature);
        let a = sample_matrices(&vocab, 100, 7).unwrap();
        let b = sample_matrices(&vocab, 100, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 100);
        let mut seen = HashSet::new();
        for m in &a {
            assert_ne!(m.concepts[0], m.concepts[1]);
            assert_ne!(m.styles[0], m.styles[1]);
            for p in &m.entries {
                assert_ne!(p.concept, p.style);
                assert!(seen.insert((p.concept.clone(), p.style.clone())), "pair reused");
            }
        }
        assert_eq!(seen.len(), 400);
    }

    #[test]
    fn architecture_supports_a_full_run_without_pair_reuse() {
        let vocab = Vocabulary::bundled(Domain::Architecture);
        let matrices = sample_matrices(&vocab, 100, 7).unwrap();
        assert_eq!(matrices.len(), 100);
    }

    #[test]
    fn tiny_vocabulary_is_a_capacity_error() {
        let vocab = Vocabulary {
            domain: Domain::Nature,
            concepts: vec!["Ant".into()],
            styles: vec!["Ant".into(), "Bee".into()],
        };
        assert!(matches!(sample_matrices(&vocab, 1, 7), Err(SamplerError::Capacity(_))));
    }

    #[test]
    fn exhausted_pair_budget_is_a_capacity_error() {
        // 2 concepts x 2 styles admits exactly one matrix worth of pairs.
        let vocab = Vocabulary {
            domain: Domain::Nature,
            concepts: vec!["Ant".into(), "Bee".into()],
            styles: vec!["Cat".into(), "Dog".into()],
        };
        assert!(sample_matrices(&vocab, 1, 7).is_ok());
        assert!(matches!(sample_matrices(&vocab, 2, 7), Err(SamplerError::Capacity(_))));
    }

    #[test]
    fn holdout_marks_one_test_pair_per_matrix() {
        let vocab = Vocabulary::bundled(Domain::Nature);
        let matrices = sample_matrices(&vocab, 100, 7).unwrap();
        let rows = split_holdout(&matrices, 7);
        assert_eq!(rows.len(), 400);
        let tests = rows.iter().filter(|(_, _, s)| *s == Split::Test).count();
        assert_eq!(tests, 100);
        for m in &matrices {
            let in_matrix: Vec<_> =
                rows.iter().filter(|(id, _, _)| *id == m.matrix_id).collect();
            assert_eq!(in_matrix.len(), 4);
            assert_eq!(in_matrix.iter().filter(|(_, _, s)| *s == Split::Test).count(), 1);
        }
        assert_eq!(rows, split_holdout(&matrices, 7), "same seed, same assignment");
        assert_ne!(rows, split_holdout(&matrices, 8), "seed changes the assignment");
    }

    #[test]
    fn forced_triplet() {
        let pool = vec![
            entry("Dog", "Cabbage", Split::Train, 1),
            entry("Dog", "Lemon", Split::Train, 1),
            entry("Cat", "Cabbage", Split::Train, 1),
        ];
        let mut rng = rng_for(7, "test", "forced");
        let t = sample_triplet(&pool, &mut rng).unwrap();
        assert_eq!(t.anchor.pair.key(), pool[0].pair.key());
        assert_eq!(t.style_neighbor.pair.key(), pool[1].pair.key());
        assert_eq!(t.concept_neighbor.pair.key(), pool[2].pair.key());
    }

    #[test]
    fn disjoint_pairs_give_no_triplet() {
        let pool = vec![
            entry("Dog", "Cabbage", Split::Train, 1),
            entry("Cat", "Lemon", Split::Train, 1),
        ];
        let mut rng = rng_for(7, "test", "disjoint");
        assert!(matches!(sample_triplet(&pool, &mut rng), Err(SamplerError::NoTriplet)));
    }

    #[test]
    fn test_and_invalid_entries_never_enter_triplets() {
        let pool = vec![
            entry("Dog", "Cabbage", Split::Train, 1),
            entry("Dog", "Lemon", Split::Train, 1),
            entry("Cat", "Cabbage", Split::Train, 1),
            entry("Dog", "Grape", Split::Test, 1),
            entry("Owl", "Cabbage", Split::Train, 0),
        ];
        let index = TripletIndex::build(&pool);
        let mut rng = rng_for(7, "test", "filter");
        for _ in 0..200 {
            let (a, s, c) = index.sample(&mut rng).unwrap();
            for idx in [a, s, c] {
                assert!(pool[idx].is_trainable());
            }
            assert_eq!(pool[a].pair.concept, pool[s].pair.concept);
            assert_eq!(pool[a].pair.style, pool[c].pair.style);
            assert_ne!(s, c);
        }
    }

    #[test]
    fn anchor_frequencies_are_uniform_within_three_sigma() {
        // One full matrix: every one of the 4 pairs is an eligible anchor.
        let pool = vec![
            entry("Dog", "Cabbage", Split::Train, 1),
            entry("Dog", "Lemon", Split::Train, 1),
            entry("Cat", "Cabbage", Split::Train, 1),
            entry("Cat", "Lemon", Split::Train, 1),
        ];
        let index = TripletIndex::build(&pool);
        assert_eq!(index.eligible_anchor_count(), 4);
        let mut rng = rng_for(7, "test", "uniform");
        let draws = 10_000usize;
        let mut counts = [0usize; 4];
        for _ in 0..draws {
            let (a, _, _) = index.sample(&mut rng).unwrap();
            counts[a] += 1;
        }
        let sigma = (0.25 * 0.75 / draws as f64).sqrt();
        for &c in &counts {
            let freq = c as f64 / draws as f64;
            assert!((freq - 0.25).abs() <= 3.0 * sigma, "freq {freq}");
        }
    }

    #[test]
    fn test_triplets_anchor_on_holdout_pairs() {
        let pool = vec![
            entry("Dog", "Cabbage", Split::Test, 1),
            entry("Dog", "Lemon", Split::Train, 1),
            entry("Cat", "Cabbage", Split::Train, 1),
            entry("Cat", "Lemon", Split::Train, 1),
        ];
        let mut rng = rng_for(7, "test", "eval");
        let ts = test_triplets(&pool, &mut rng);
        assert_eq!(ts.len(), 1);
        assert_eq!(ts[0].anchor.split, Split::Test);
        assert_eq!(ts[0].style_neighbor.split, Split::Train);
        assert_eq!(ts[0].concept_neighbor.split, Split::Train);
    }
}
