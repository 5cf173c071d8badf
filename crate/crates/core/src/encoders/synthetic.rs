//! The deterministic synthetic encoder.
//!
//! All randomness is derived from `(seed, label, name)` digests and drawn in
//! `f64` before casting to the working precision, so `f32` and `f64`
//! pipelines see the same values up to rounding.

use super::{EmbeddingSequence, Encoder, EncoderConfig, EncoderError};
use crate::agents::ConceptPair;
use crate::numerics::{real, Real, Vector};
use crate::seeding::rng_from_parts;
use ndarray::{Array1, Array2};
use rand_distr::{Distribution, StandardNormal};

/// Norm of the neutral template-slot rows in fuzzy sequences. Small enough
/// that the concept/style rows dominate the pooled direction, large enough
/// that the scaffold is visible in it.
pub const SLOT_SCALE: f64 = 0.4;

/// Row of the fuzzy sequence carrying the style vector.
const STYLE_ROW: usize = 1;
/// Row carrying the concept vector.
const CONCEPT_ROW: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConceptRole {
    Concept,
    Style,
}

impl ConceptRole {
    fn label(self) -> &'static str {
        match self {
            ConceptRole::Concept => "concept",
            ConceptRole::Style => "style",
        }
    }
}

fn unit_normal(rng: &mut rand_chacha::ChaCha8Rng, d: usize) -> Array1<f64> {
    let mut v: Array1<f64> = Array1::from_shape_fn(d, |_| StandardNormal.sample(rng));
    let norm = v.dot(&v).sqrt();
    if norm > 0.0 {
        v /= norm;
    }
    v
}

/// Deterministic unit vector for a named concept or style.
pub fn concept_vector<T: Real>(name: &str, role: ConceptRole, cfg: &EncoderConfig) -> Vector<T> {
    assert!(!name.is_empty(), "concept/style name must be non-empty");
    let mut rng = rng_from_parts(&[
        &cfg.seed.to_le_bytes(),
        b"concept-vector",
        role.label().as_bytes(),
        name.as_bytes(),
    ]);
    unit_normal(&mut rng, cfg.d_model).mapv(real::<T>)
}

fn slot_vector(cfg: &EncoderConfig, index: usize) -> Array1<f64> {
    let mut rng = rng_from_parts(&[
        &cfg.seed.to_le_bytes(),
        b"slot",
        &(index as u64).to_le_bytes(),
    ]);
    unit_normal(&mut rng, cfg.d_model)
}

/// The shared creativity offset: `g_norm` times the normalized sum of the
/// fuzzy slot directions. Tying it to the scaffold keeps augmented means
/// correlated with fuzzy means, which is what the anchor term measures.
fn creativity_offset(cfg: &EncoderConfig) -> Array1<f64> {
    let mut sum = Array1::<f64>::zeros(cfg.d_model);
    for t in 0..cfg.l_fuzzy {
        sum += &slot_vector(cfg, t);
    }
    let norm = sum.dot(&sum).sqrt();
    if norm > 0.0 {
        sum *= cfg.mix.g_norm / norm;
    }
    sum
}

/// Fixed projection from the sequence space into the global space.
fn global_projection(cfg: &EncoderConfig) -> Array2<f64> {
    let mut rng = rng_from_parts(&[&cfg.seed.to_le_bytes(), b"global-projection"]);
    let scale = 1.0 / (cfg.d_model as f64).sqrt();
    Array2::from_shape_fn((cfg.d_global, cfg.d_model), |_| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z * scale
    })
}

#[derive(Debug, Clone)]
pub struct SyntheticEncoder {
    cfg: EncoderConfig,
    offset: Array1<f64>,
    projection: Array2<f64>,
}

impl SyntheticEncoder {
    pub fn new(cfg: EncoderConfig) -> Result<Self, EncoderError> {
        cfg.validate()?;
        Ok(Self { offset: creativity_offset(&cfg), projection: global_projection(&cfg), cfg })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    /// Target mean of the augmented construction for a pair, before noise.
    pub fn augmented_target_mean(&self, pair: &ConceptPair) -> Array1<f64> {
        let u_c: Array1<f64> = concept_vector(&pair.concept, ConceptRole::Concept, &self.cfg);
        let w_s: Array1<f64> = concept_vector(&pair.style, ConceptRole::Style, &self.cfg);
        u_c * self.cfg.mix.a + &(w_s * self.cfg.mix.b) + &self.offset
    }

    fn fuzzy_rows(&self, pair: &ConceptPair) -> Array2<f64> {
        let cfg = &self.cfg;
        let u_c: Array1<f64> = concept_vector(&pair.concept, ConceptRole::Concept, cfg);
        let w_s: Array1<f64> = concept_vector(&pair.style, ConceptRole::Style, cfg);
        let mut rows = Array2::<f64>::zeros((cfg.l_fuzzy, cfg.d_model));
        for t in 0..cfg.l_fuzzy {
            let mut row = slot_vector(cfg, t) * SLOT_SCALE;
            if t == STYLE_ROW {
                row += &w_s;
            }
            if t == CONCEPT_ROW {
                row += &u_c;
            }
            rows.row_mut(t).assign(&row);
        }
        rows
    }

    fn augmented_rows(&self, pair: &ConceptPair) -> Array2<f64> {
        let cfg = &self.cfg;
        let target = self.augmented_target_mean(pair);
        let mut rng = rng_from_parts(&[
            &cfg.seed.to_le_bytes(),
            b"augmented",
            pair.concept.as_bytes(),
            pair.style.as_bytes(),
        ]);
        let mut rows = Array2::<f64>::zeros((cfg.l_aug, cfg.d_model));
        for mut row in rows.rows_mut() {
            for (k, slot) in row.iter_mut().enumerate() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *slot = target[k] + cfg.mix.noise_std * z;
            }
        }
        rows
    }

    fn pooled(&self, rows: &Array2<f64>) -> Array1<f64> {
        let mean = rows.mean_axis(ndarray::Axis(0)).expect("at least one row");
        self.projection.dot(&mean)
    }

    fn finish<T: Real>(&self, rows: Array2<f64>) -> Result<EmbeddingSequence<T>, EncoderError> {
        let pooled = self.pooled(&rows).mapv(real::<T>);
        EmbeddingSequence::new(rows.mapv(real::<T>), Some(pooled))
    }
}

impl<T: Real> Encoder<T> for SyntheticEncoder {
    fn encode_fuzzy(&self, pair: &ConceptPair) -> Result<EmbeddingSequence<T>, EncoderError> {
        self.finish(self.fuzzy_rows(pair))
    }

    fn encode_augmented(&self, pair: &ConceptPair) -> Result<EmbeddingSequence<T>, EncoderError> {
        self.finish(self.augmented_rows(pair))
    }

    fn d_model(&self) -> usize {
        self.cfg.d_model
    }

    fn d_global(&self) -> usize {
        self.cfg.d_global
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::Domain;
    use crate::numerics::{cosine, seq_mean_std, COSINE_EPS};
    use approx::assert_abs_diff_eq;

    fn cfg() -> EncoderConfig {
        EncoderConfig::default()
    }

    fn pair(c: &str, s: &str) -> ConceptPair {
        ConceptPair::new(Domain::Nature, c, s).unwrap()
    }

    #[test]
    fn concept_vectors_are_deterministic_unit_vectors() {
        let cfg = cfg();
        let a: Vector<f64> = concept_vector("Owl", ConceptRole::Concept, &cfg);
        let b: Vector<f64> = concept_vector("Owl", ConceptRole::Concept, &cfg);
        assert_eq!(a, b);
        assert_abs_diff_eq!(a.dot(&a).sqrt(), 1.0, epsilon = 1e-6);
        let c: Vector<f64> = concept_vector("Owl", ConceptRole::Style, &cfg);
        assert_ne!(a, c, "roles separate the hash streams");
    }

    #[test]
    fn distinct_names_are_nearly_orthogonal_monte_carlo() {
        // 10^4 draws at d_model=32: |cos| < 0.5 should hold for >= 99%.
        let cfg = cfg();
        let mut hits = 0usize;
        let trials = 10_000usize;
        for i in 0..trials {
            let u: Vector<f64> = concept_vector(&format!("name-a-{i}"), ConceptRole::Concept, &cfg);
            let v: Vector<f64> = concept_vector(&format!("name-b-{i}"), ConceptRole::Concept, &cfg);
            let c = cosine(u.view(), v.view(), COSINE_EPS).unwrap();
            if c.abs() < 0.5 {
                hits += 1;
            }
        }
        assert!(hits as f64 / trials as f64 >= 0.99, "{hits}/{trials}");
    }

    #[test]
    fn fuzzy_shape_and_determinism() {
        let enc = SyntheticEncoder::new(cfg()).unwrap();
        let p = pair("Dog", "Cabbage");
        let e1: EmbeddingSequence<f32> = enc.encode_fuzzy(&p).unwrap();
        let e2: EmbeddingSequence<f32> = enc.encode_fuzzy(&p).unwrap();
        assert_eq!(e1.tokens.dim(), (8, 32));
        assert_eq!(e1, e2);
        assert_eq!(e1.pooled_global.as_ref().unwrap().len(), 16);
    }

    #[test]
    fn style_change_touches_only_the_style_row() {
        let enc = SyntheticEncoder::new(cfg()).unwrap();
        let e1: EmbeddingSequence<f64> = enc.encode_fuzzy(&pair("Dog", "Cabbage")).unwrap();
        let e2: EmbeddingSequence<f64> = enc.encode_fuzzy(&pair("Dog", "Lemon")).unwrap();
        for t in 0..e1.tokens.nrows() {
            let same = e1.tokens.row(t) == e2.tokens.row(t);
            assert_eq!(same, t != STYLE_ROW, "row {t}");
        }
    }

    #[test]
    fn fuzzy_ignores_the_domain_label() {
        let enc = SyntheticEncoder::new(cfg()).unwrap();
        let a = ConceptPair::new(Domain::Nature, "Butterfly", "Cactus").unwrap();
        let b = ConceptPair::new(Domain::Furniture, "Butterfly", "Cactus").unwrap();
        let ea: EmbeddingSequence<f64> = enc.encode_fuzzy(&a).unwrap();
        let eb: EmbeddingSequence<f64> = enc.encode_fuzzy(&b).unwrap();
        assert_eq!(ea, eb);
    }

    #[test]
    fn augmented_mean_approaches_target_as_noise_vanishes() {
        let mut c = cfg();
        c.mix.noise_std = 0.0;
        let enc = SyntheticEncoder::new(c).unwrap();
        let p = pair("Dog", "Cabbage");
        let e: EmbeddingSequence<f64> = enc.encode_augmented(&p).unwrap();
        let (mu, sigma) = seq_mean_std(&e.tokens).unwrap();
        let target = enc.augmented_target_mean(&p);
        for k in 0..mu.len() {
            assert_abs_diff_eq!(mu[k], target[k], epsilon = 1e-12);
            assert_abs_diff_eq!(sigma[k], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn augmented_mean_concentration_monte_carlo() {
        // ||empirical mean - target|| <= 5*noise_std/sqrt(L_aug) must hold with
        // probability >= 0.99; at d_model=4 the chi-square tail gives ~0.9999.
        let mut c = cfg();
        c.d_model = 4;
        c.d_global = 2;
        let bound = 5.0 * c.mix.noise_std / (c.l_aug as f64).sqrt();
        let trials = 2_000usize;
        let mut hits = 0usize;
        for i in 0..trials {
            let mut ci = c;
            ci.seed = 1000 + i as u64;
            let enc = SyntheticEncoder::new(ci).unwrap();
            let p = pair("Dog", "Cabbage");
            let e: EmbeddingSequence<f64> = enc.encode_augmented(&p).unwrap();
            let (mu, _) = seq_mean_std(&e.tokens).unwrap();
            let target = enc.augmented_target_mean(&p);
            let err = (&mu - &target).dot(&(&mu - &target)).sqrt();
            if err <= bound {
                hits += 1;
            }
        }
        assert!(hits as f64 / trials as f64 >= 0.99, "{hits}/{trials}");
    }

    #[test]
    fn concept_edge_transition_tracks_the_concept_difference() {
        let enc = SyntheticEncoder::new(cfg()).unwrap();
        let a: EmbeddingSequence<f64> = enc.encode_augmented(&pair("Dog", "Cabbage")).unwrap();
        let b: EmbeddingSequence<f64> = enc.encode_augmented(&pair("Cat", "Cabbage")).unwrap();
        let (mu_a, _) = seq_mean_std(&a.tokens).unwrap();
        let (mu_b, _) = seq_mean_std(&b.tokens).unwrap();
        let delta = &mu_b - &mu_a;
        let u1: Vector<f64> = concept_vector("Dog", ConceptRole::Concept, enc.config());
        let u2: Vector<f64> = concept_vector("Cat", ConceptRole::Concept, enc.config());
        let expected = (&u2 - &u1) * enc.config().mix.a;
        let c = cosine(delta.view(), expected.view(), COSINE_EPS).unwrap();
        assert!(c >= 0.95, "cosine {c}");
    }

    #[test]
    fn config_validation() {
        let mut c = cfg();
        c.l_aug = c.l_fuzzy;
        assert!(SyntheticEncoder::new(c).is_err());
        let mut c = cfg();
        c.l_fuzzy = 2;
        assert!(SyntheticEncoder::new(c).is_err());
        let mut c = cfg();
        c.mix.noise_std = -0.1;
        assert!(SyntheticEncoder::new(c).is_err());
    }
}
