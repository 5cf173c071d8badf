//! Creative prefix tokenization at desk scale.
//!
//! The pipeline: concept pairs are sampled into 2x2 matrices, expanded into
//! augmented prompts by a (mock or remote) agent, validated, and stored in a
//! concept pool. A synthetic text encoder turns pairs into fuzzy/augmented
//! embedding sequences with recoverable concept, style and creativity
//! directions. The tokenizer network maps each fuzzy embedding to an N-token
//! prefix template; training aligns creative embeddings with the augmented
//! ones via distribution matching, transition-vector disentanglement over
//! local triplets, and an elastic cosine anchor.

pub mod agents;
pub mod container;
pub mod encoders;
pub mod losses;
pub mod numerics;
pub mod pipeline;
pub mod sampler;
pub mod seeding;
pub mod tokenizer;
pub mod training;

pub use agents::{AgentBackend, ConceptPair, Domain, PoolEntry, Split};
pub use encoders::{EmbeddingSequence, Encoder, EncoderConfig, SyntheticEncoder};
pub use losses::{LossBreakdown, LossWeights};
pub use numerics::{AdamwHyper, GradReport, OptimizerState, ParamSet, Real, Tensor2D};
pub use sampler::{ConceptMatrix, TripletSample};
pub use tokenizer::{TokenTemplate, TokenizerConfig, TokenizerParams};
pub use training::{Checkpoint, MetricsRow, TrainConfig, TrainReport};
