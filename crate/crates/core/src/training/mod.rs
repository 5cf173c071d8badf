//! End-to-end training harness: epoch loop over triplet batches, AdamW
//! stepping, metric logging, checkpointing, and held-out evaluation.
//!
//! An epoch is `ceil(trainable_entries / batch)` batches of independently
//! drawn triplets. Per-pair encoder features (fuzzy tokens, augmented
//! mean/std, global target) are computed once up front; only trainable
//! entries enter that cache, and every pair whose augmented statistics reach
//! a gradient is recorded so leakage of held-out pairs is checkable.

mod checkpoint;
pub mod gradcheck;
mod metrics;

pub use checkpoint::{
    load_checkpoint, rng_from_state, rng_state_bytes, save_checkpoint, Checkpoint,
    CHECKPOINT_VERSION,
};
pub use metrics::{export_csv, read_metrics_jsonl, MetricsLogger};

use crate::agents::{ConceptPair, PoolEntry, Split};
use crate::encoders::{Encoder, EncoderConfig, EncoderError, SyntheticEncoder};
use crate::losses::{loss_total, LossBreakdown, LossError, LossWeights, MemberGrads, MemberInputs};
use crate::numerics::{
    adamw_step, cosine, seq_mean_std, AdamwHyper, NumericsError, OptimizerState, ParamSet,
    Vector, COSINE_EPS,
};
use crate::sampler::{test_triplets, SamplerError, TripletIndex, TripletSample};
use crate::seeding::rng_from_parts;
use crate::tokenizer::{
    backward, forward_cached, init_params, TokenizerConfig, TokenizerError, TokenizerParams,
};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("train config: {0}")]
    Config(String),
    #[error("no eligible triplet: {0}")]
    NoTriplet(String),
    #[error("non-finite loss at epoch {epoch}; offending batch serialized to {path}")]
    NonFinite { epoch: usize, path: PathBuf },
    #[error("evaluation: {0}")]
    Evaluation(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint integrity: {0}")]
    Integrity(String),
    #[error("metrics: {0}")]
    Metrics(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Triplets per optimizer step.
    pub batch: usize,
    pub weights: LossWeights,
    pub tokenizer: TokenizerConfig,
    pub encoder: EncoderConfig,
    pub seed: u64,
    pub log_every: usize,
    pub checkpoint_dir: PathBuf,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            lr: 1e-4,
            batch: 8,
            weights: LossWeights::default(),
            tokenizer: TokenizerConfig::default(),
            encoder: EncoderConfig::default(),
            seed: 7,
            log_every: 10,
            checkpoint_dir: PathBuf::from("runs/default"),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be at least 1".into()));
        }
        if self.lr <= 0.0 {
            return Err(TrainError::Config("lr must be positive".into()));
        }
        if self.batch == 0 {
            return Err(TrainError::Config("batch must be at least 1".into()));
        }
        if self.log_every == 0 {
            return Err(TrainError::Config("log_every must be at least 1".into()));
        }
        self.weights.validate().map_err(|e| TrainError::Config(e.to_string()))?;
        self.tokenizer.validate().map_err(|e| TrainError::Config(e.to_string()))?;
        self.encoder.validate().map_err(|e| TrainError::Config(e.to_string()))?;
        if self.tokenizer.d_model != self.encoder.d_model {
            return Err(TrainError::Config(format!(
                "tokenizer d_model {} != encoder d_model {}",
                self.tokenizer.d_model, self.encoder.d_model
            )));
        }
        if self.tokenizer.global_branch && self.tokenizer.d_global != self.encoder.d_global {
            return Err(TrainError::Config(format!(
                "tokenizer d_global {} != encoder d_global {}",
                self.tokenizer.d_global, self.encoder.d_global
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub epoch: usize,
    /// Mean training loss over the epoch's batches.
    pub breakdown: LossBreakdown,
    /// Mean edge cosine over held-out triplets; absent when the pool has none.
    pub holdout_edge_cosine: Option<f64>,
    /// Mean anchor cosine over held-out pairs; absent when the pool has none.
    pub holdout_anchor_cosine: Option<f64>,
    /// Seconds since training started (0 for evaluation-only rows).
    pub wall_time: f64,
}

#[derive(Debug)]
pub struct TrainReport {
    pub checkpoint: Checkpoint,
    /// Rows actually logged (every `log_every` epochs plus the final epoch).
    pub metrics: Vec<MetricsRow>,
    /// Mean `l_total` of every epoch, logged or not.
    pub epoch_totals: Vec<f64>,
    /// Held-out pairs whose augmented statistics reached a gradient; 0 means
    /// the leakage guard held.
    pub touched_test_pairs: usize,
}

/// Per-pair encoder outputs reused across steps.
struct PairFeatures {
    fuzzy: crate::encoders::EmbeddingSequence<f32>,
    aug_mean: Vector<f32>,
    aug_std: Vector<f32>,
    aug_global: Option<Vector<f32>>,
}

fn features_for<E: Encoder<f32>>(
    enc: &E,
    pair: &ConceptPair,
    want_global: bool,
) -> Result<PairFeatures, TrainError> {
    let fuzzy = enc.encode_fuzzy(pair)?;
    let aug = enc.encode_augmented(pair)?;
    let (aug_mean, aug_std) = seq_mean_std(&aug.tokens)?;
    let aug_global = if want_global {
        Some(aug.pooled_global.ok_or_else(|| {
            TrainError::Config(
                "tokenizer global branch is enabled but the encoder yields no pooled global"
                    .into(),
            )
        })?)
    } else {
        None
    };
    Ok(PairFeatures { fuzzy, aug_mean, aug_std, aug_global })
}

/// Forward three members, evaluate the objective, and push scaled gradients
/// into `grads`. Returns the triplet's loss breakdown.
fn triplet_step(
    params: &TokenizerParams<f32>,
    feats: [&PairFeatures; 3],
    weights: &LossWeights,
    grad_scale: f32,
    grads: &mut ParamSet<f32>,
) -> Result<LossBreakdown, TrainError> {
    let mut templates = Vec::with_capacity(3);
    let mut caches = Vec::with_capacity(3);
    for f in &feats {
        let (t, c) = forward_cached(&f.fuzzy, params)?;
        templates.push(t);
        caches.push(c);
    }
    let members: [MemberInputs<'_, f32>; 3] = [
        member_inputs(&templates[0], feats[0]),
        member_inputs(&templates[1], feats[1]),
        member_inputs(&templates[2], feats[2]),
    ];
    let (breakdown, member_grads) = loss_total(&members, weights)?;
    for ((grad, cache), f) in member_grads.into_iter().zip(&caches).zip(&feats) {
        let MemberGrads { mut d_template, d_global } = grad;
        d_template.mapv_inplace(|v| v * grad_scale);
        let d_global = d_global.map(|g| g.mapv(|v| v * grad_scale));
        backward(&d_template, d_global.as_ref(), &f.fuzzy, params, cache, grads)?;
    }
    Ok(breakdown)
}

fn member_inputs<'a>(
    template: &'a crate::tokenizer::TokenTemplate<f32>,
    f: &'a PairFeatures,
) -> MemberInputs<'a, f32> {
    MemberInputs {
        template,
        fuzzy: &f.fuzzy,
        aug_mean: &f.aug_mean,
        aug_std: &f.aug_std,
        global_target: f.aug_global.as_ref(),
    }
}

/// Mean of the creative embedding (template rows plus fuzzy rows).
fn creative_mean(
    params: &TokenizerParams<f32>,
    f: &PairFeatures,
) -> Result<Vector<f64>, TrainError> {
    let template = crate::tokenizer::forward(&f.fuzzy, params)?;
    let creative = crate::tokenizer::compose_creative(&template, &f.fuzzy)?;
    let (mu, _) = seq_mean_std(&creative.tokens)?;
    Ok(mu.mapv(|v| v as f64))
}

/// Held-out alignment metrics for a parameter set over a pool.
pub struct HoldoutMetrics {
    pub edge_cosine: Option<f64>,
    pub anchor_cosine: Option<f64>,
    /// Per-test-pair anchor cosines, in pool order.
    pub anchor_cosines: Vec<f64>,
    pub triplet_count: usize,
}

pub fn evaluate_holdout<E: Encoder<f32>>(
    params: &TokenizerParams<f32>,
    enc: &E,
    pool: &[PoolEntry],
    seed: u64,
) -> Result<HoldoutMetrics, TrainError> {
    let want_global = params.config().global_branch;
    let mut eval_rng = rng_from_parts(&[&seed.to_le_bytes(), b"eval"]);
    let triplets: Vec<TripletSample> = test_triplets(pool, &mut eval_rng);

    let mut cache: HashMap<String, PairFeatures> = HashMap::new();
    let feat = |pair: &ConceptPair, cache: &mut HashMap<String, PairFeatures>| {
        if !cache.contains_key(&pair.key()) {
            match features_for(enc, pair, want_global) {
                Ok(f) => {
                    cache.insert(pair.key(), f);
                }
                Err(e) => return Err(e),
            }
        }
        Ok(())
    };

    let mut edge_sum = 0.0;
    let mut edge_count = 0usize;
    for t in &triplets {
        let members = [&t.anchor, &t.style_neighbor, &t.concept_neighbor];
        for m in members {
            feat(&m.pair, &mut cache)?;
        }
        let mu_c: Vec<Vector<f64>> = members
            .iter()
            .map(|m| creative_mean(params, &cache[&m.pair.key()]))
            .collect::<Result<_, _>>()?;
        let mu_a: Vec<Vector<f64>> = members
            .iter()
            .map(|m| cache[&m.pair.key()].aug_mean.mapv(|v| v as f64))
            .collect();
        for &(src, dst) in &[(0usize, 1usize), (0, 2), (1, 2)] {
            let dc = &mu_c[dst] - &mu_c[src];
            let da = &mu_a[dst] - &mu_a[src];
            edge_sum += cosine(dc.view(), da.view(), COSINE_EPS)?;
            edge_count += 1;
        }
    }

    let mut anchor_cosines = Vec::new();
    for e in pool {
        if e.split != Split::Test || e.valid != 1 {
            continue;
        }
        feat(&e.pair, &mut cache)?;
        let f = &cache[&e.pair.key()];
        let mu_c = creative_mean(params, f)?;
        let (mu_f, _) = seq_mean_std(&f.fuzzy.tokens)?;
        let mu_f = mu_f.mapv(|v| v as f64);
        anchor_cosines.push(cosine(mu_c.view(), mu_f.view(), COSINE_EPS)?);
    }

    Ok(HoldoutMetrics {
        edge_cosine: (edge_count > 0).then(|| edge_sum / edge_count as f64),
        anchor_cosine: (!anchor_cosines.is_empty())
            .then(|| anchor_cosines.iter().sum::<f64>() / anchor_cosines.len() as f64),
        anchor_cosines,
        triplet_count: triplets.len(),
    })
}

/// Train with the synthetic encoder from `cfg.encoder`.
pub fn train(cfg: &TrainConfig, pool: &[PoolEntry]) -> Result<TrainReport, TrainError> {
    let enc = SyntheticEncoder::new(cfg.encoder)?;
    train_with_encoder(cfg, pool, &enc)
}

pub fn train_with_encoder<E: Encoder<f32>>(
    cfg: &TrainConfig,
    pool: &[PoolEntry],
    enc: &E,
) -> Result<TrainReport, TrainError> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.checkpoint_dir)?;

    let index = TripletIndex::build(pool);
    let trainable: Vec<&PoolEntry> = pool.iter().filter(|e| e.is_trainable()).collect();
    if index.eligible_anchor_count() == 0 {
        return Err(TrainError::NoTriplet(format!(
            "pool has {} entries, {} trainable, 0 eligible anchors",
            pool.len(),
            trainable.len()
        )));
    }

    let want_global = cfg.tokenizer.global_branch;
    // Feature cache over trainable pairs only; held-out pairs never enter it.
    let mut features: HashMap<String, PairFeatures> = HashMap::new();
    for e in &trainable {
        if !features.contains_key(&e.pair.key()) {
            features.insert(e.pair.key(), features_for(enc, &e.pair, want_global)?);
        }
    }
    let test_keys: BTreeSet<String> = pool
        .iter()
        .filter(|e| e.split == Split::Test)
        .map(|e| e.pair.key())
        .collect();
    let mut touched: BTreeSet<String> = BTreeSet::new();

    let mut params = init_params::<f32>(&cfg.tokenizer, cfg.seed)?;
    let hyper = AdamwHyper { lr: cfg.lr, ..AdamwHyper::default() };
    let mut optimizer = OptimizerState::new(params.param_set(), hyper);
    let mut rng = rng_from_parts(&[&cfg.seed.to_le_bytes(), b"train-loop"]);

    let batches_per_epoch = trainable.len().div_ceil(cfg.batch);
    let grad_scale = 1.0f32 / cfg.batch as f32;
    let start = Instant::now();
    let mut logger = MetricsLogger::create(&cfg.checkpoint_dir.join("metrics.jsonl"))?;
    let mut metrics: Vec<MetricsRow> = Vec::new();
    let mut epoch_totals: Vec<f64> = Vec::new();

    for epoch in 1..=cfg.epochs {
        let mut epoch_mean = LossBreakdown::zeros();
        for batch_idx in 0..batches_per_epoch {
            let mut grads = params.param_set().zeros_like();
            let mut batch_mean = LossBreakdown::zeros();
            let mut batch_keys: Vec<[String; 3]> = Vec::with_capacity(cfg.batch);
            for _ in 0..cfg.batch {
                let (a, s, c) = index.sample(&mut rng)?;
                let members = [&pool[a], &pool[s], &pool[c]];
                debug_assert!(members.iter().all(|m| m.is_trainable()));
                for m in members {
                    touched.insert(m.pair.key());
                }
                batch_keys.push([
                    members[0].pair.key(),
                    members[1].pair.key(),
                    members[2].pair.key(),
                ]);
                let feats = [
                    &features[&members[0].pair.key()],
                    &features[&members[1].pair.key()],
                    &features[&members[2].pair.key()],
                ];
                let b = triplet_step(&params, feats, &cfg.weights, grad_scale, &mut grads)?;
                batch_mean.add(&b);
            }
            batch_mean.scale(1.0 / cfg.batch as f64);
            if !batch_mean.l_total.is_finite() {
                let path = cfg.checkpoint_dir.join("failed_batch.json");
                let dump = serde_json::json!({
                    "epoch": epoch,
                    "batch_index": batch_idx,
                    "seed": cfg.seed,
                    "triplets": batch_keys,
                });
                std::fs::write(&path, serde_json::to_string_pretty(&dump).unwrap())?;
                return Err(TrainError::NonFinite { epoch, path });
            }
            adamw_step(params.param_set_mut(), &grads, &mut optimizer)?;
            epoch_mean.add(&batch_mean);
        }
        epoch_mean.scale(1.0 / batches_per_epoch as f64);
        epoch_totals.push(epoch_mean.l_total);

        if epoch % cfg.log_every == 0 || epoch == cfg.epochs {
            let holdout = evaluate_holdout(&params, enc, pool, cfg.seed)?;
            let row = MetricsRow {
                epoch,
                breakdown: epoch_mean,
                holdout_edge_cosine: holdout.edge_cosine,
                holdout_anchor_cosine: holdout.anchor_cosine,
                wall_time: start.elapsed().as_secs_f64(),
            };
            logger.log(&row)?;
            metrics.push(row);
        }
    }

    export_csv(&metrics, &cfg.checkpoint_dir.join("metrics.csv"))?;
    let checkpoint = Checkpoint {
        format_version: CHECKPOINT_VERSION,
        config: cfg.clone(),
        params,
        optimizer,
        rng_state: rng_state_bytes(&rng),
        metrics_tail: metrics.last().cloned().expect("final epoch always logged"),
    };
    save_checkpoint(&checkpoint, &cfg.checkpoint_dir.join("checkpoint.ckpt"))?;

    let touched_test_pairs = touched.intersection(&test_keys).count();
    Ok(TrainReport { checkpoint, metrics, epoch_totals, touched_test_pairs })
}

/// Build an untrained checkpoint: initialized parameters, a fresh optimizer,
/// and an epoch-0 metrics row measured without any updates.
pub fn init_checkpoint(cfg: &TrainConfig, pool: &[PoolEntry]) -> Result<Checkpoint, TrainError> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.checkpoint_dir)?;
    let enc = SyntheticEncoder::new(cfg.encoder)?;
    let index = TripletIndex::build(pool);
    if index.eligible_anchor_count() == 0 {
        return Err(TrainError::NoTriplet("pool has no eligible anchors".into()));
    }
    let trainable: Vec<&PoolEntry> = pool.iter().filter(|e| e.is_trainable()).collect();
    let want_global = cfg.tokenizer.global_branch;
    let mut features: HashMap<String, PairFeatures> = HashMap::new();
    for e in &trainable {
        if !features.contains_key(&e.pair.key()) {
            features.insert(e.pair.key(), features_for(&enc, &e.pair, want_global)?);
        }
    }
    let params = init_params::<f32>(&cfg.tokenizer, cfg.seed)?;
    let mut rng = rng_from_parts(&[&cfg.seed.to_le_bytes(), b"train-loop"]);
    let batches = trainable.len().div_ceil(cfg.batch);
    let mut mean = LossBreakdown::zeros();
    let mut scratch = params.param_set().zeros_like();
    for _ in 0..batches {
        for _ in 0..cfg.batch {
            let (a, s, c) = index.sample(&mut rng)?;
            let feats = [
                &features[&pool[a].pair.key()],
                &features[&pool[s].pair.key()],
                &features[&pool[c].pair.key()],
            ];
            let b = triplet_step(&params, feats, &cfg.weights, 0.0, &mut scratch)?;
            mean.add(&b);
        }
    }
    mean.scale(1.0 / (batches * cfg.batch) as f64);
    let holdout = evaluate_holdout(&params, &enc, pool, cfg.seed)?;
    let row = MetricsRow {
        epoch: 0,
        breakdown: mean,
        holdout_edge_cosine: holdout.edge_cosine,
        holdout_anchor_cosine: holdout.anchor_cosine,
        wall_time: 0.0,
    };
    let checkpoint = Checkpoint {
        format_version: CHECKPOINT_VERSION,
        config: cfg.clone(),
        optimizer: OptimizerState::new(params.param_set(), AdamwHyper {
            lr: cfg.lr,
            ..AdamwHyper::default()
        }),
        params,
        rng_state: rng_state_bytes(&rng),
        metrics_tail: row,
    };
    save_checkpoint(&checkpoint, &cfg.checkpoint_dir.join("checkpoint.ckpt"))?;
    Ok(checkpoint)
}

/// Held-out metrics for a checkpoint; no parameter updates. The returned
/// row's `wall_time` is 0 so repeated evaluations are identical.
pub fn evaluate_model(ckpt: &Checkpoint, pool: &[PoolEntry]) -> Result<MetricsRow, TrainError> {
    let enc = SyntheticEncoder::new(ckpt.config.encoder)?;
    let holdout = evaluate_holdout(&ckpt.params, &enc, pool, ckpt.config.seed)?;
    if holdout.triplet_count == 0 {
        return Err(TrainError::Evaluation(
            "pool contains no held-out triplets (test anchors with trainable neighbors)".into(),
        ));
    }
    Ok(MetricsRow {
        epoch: ckpt.metrics_tail.epoch,
        breakdown: ckpt.metrics_tail.breakdown,
        holdout_edge_cosine: holdout.edge_cosine,
        holdout_anchor_cosine: holdout.anchor_cosine,
        wall_time: 0.0,
    })
}
