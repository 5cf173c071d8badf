//! Checkpointing on top of the tensor container: parameters, optimizer
//! moments, RNG position and the last metrics row, all restorable
//! bit-exactly.

use super::{MetricsRow, TrainConfig, TrainError};
use crate::container::{ContainerError, TensorContainer};
use crate::numerics::{AdamwHyper, OptimizerState, ParamSet};
use crate::tokenizer::TokenizerParams;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: TrainConfig,
    pub params: TokenizerParams<f32>,
    pub optimizer: OptimizerState<f32>,
    /// Opaque serialized RNG position of the training loop.
    pub rng_state: Vec<u8>,
    pub metrics_tail: MetricsRow,
}

/// 32 seed bytes followed by the 128-bit word position, little endian.
pub fn rng_state_bytes(rng: &ChaCha8Rng) -> Vec<u8> {
    let mut out = Vec::with_capacity(48);
    out.extend_from_slice(&rng.get_seed());
    out.extend_from_slice(&rng.get_word_pos().to_le_bytes());
    out
}

pub fn rng_from_state(bytes: &[u8]) -> Result<ChaCha8Rng, TrainError> {
    if bytes.len() != 48 {
        return Err(TrainError::Checkpoint(format!(
            "rng state must be 48 bytes, got {}",
            bytes.len()
        )));
    }
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&bytes[..32]);
    let mut pos = [0u8; 16];
    pos.copy_from_slice(&bytes[32..]);
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_word_pos(u128::from_le_bytes(pos));
    Ok(rng)
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &std::path::Path) -> Result<(), TrainError> {
    let meta = serde_json::json!({
        "kind": "checkpoint",
        "checkpoint_version": CHECKPOINT_VERSION,
        "config": ckpt.config,
        "step": ckpt.optimizer.step,
        "hyper": ckpt.optimizer.hyper,
        "metrics_tail": ckpt.metrics_tail,
        "non_trainable": ckpt
            .params
            .param_set()
            .iter()
            .filter(|(_, e)| !e.trainable)
            .map(|(n, _)| n.to_string())
            .collect::<Vec<_>>(),
    });
    let mut container = TensorContainer::new(meta);
    for (name, entry) in ckpt.params.param_set().iter() {
        container.push(&format!("param.{name}"), entry.value.clone());
    }
    for (name, m) in ckpt.optimizer.first_moment.iter() {
        container.push(&format!("adam.m.{name}"), m.clone());
    }
    for (name, v) in ckpt.optimizer.second_moment.iter() {
        container.push(&format!("adam.v.{name}"), v.clone());
    }
    container.rng_state = Some(ckpt.rng_state.clone());
    container.write(path)?;
    Ok(())
}

pub fn load_checkpoint(path: &std::path::Path) -> Result<Checkpoint, TrainError> {
    let container = TensorContainer::read(path)?;
    let meta = &container.meta;
    let version = meta
        .get("checkpoint_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| TrainError::Checkpoint("missing checkpoint_version".into()))?
        as u32;
    if version != CHECKPOINT_VERSION {
        return Err(TrainError::Checkpoint(format!(
            "unsupported checkpoint version {version} (this build reads version {CHECKPOINT_VERSION})"
        )));
    }
    let config: TrainConfig = serde_json::from_value(
        meta.get("config")
            .cloned()
            .ok_or_else(|| TrainError::Checkpoint("missing config".into()))?,
    )
    .map_err(|e| TrainError::Checkpoint(format!("config: {e}")))?;
    let hyper: AdamwHyper = serde_json::from_value(
        meta.get("hyper")
            .cloned()
            .ok_or_else(|| TrainError::Checkpoint("missing hyper".into()))?,
    )
    .map_err(|e| TrainError::Checkpoint(format!("hyper: {e}")))?;
    let step = meta.get("step").and_then(|v| v.as_u64()).unwrap_or(0);
    let metrics_tail: MetricsRow = serde_json::from_value(
        meta.get("metrics_tail")
            .cloned()
            .ok_or_else(|| TrainError::Checkpoint("missing metrics_tail".into()))?,
    )
    .map_err(|e| TrainError::Checkpoint(format!("metrics_tail: {e}")))?;
    let non_trainable: Vec<String> = meta
        .get("non_trainable")
        .and_then(|v| serde_json::from_value(v.clone()).ok())
        .unwrap_or_default();

    let mut set = ParamSet::<f32>::new();
    for (name, tensor) in &container.tensors {
        if let Some(param_name) = name.strip_prefix("param.") {
            let trainable = !non_trainable.iter().any(|n| n == param_name);
            set.insert(param_name, tensor.clone(), trainable)
                .map_err(|e| TrainError::Checkpoint(e.to_string()))?;
        }
    }
    let params = TokenizerParams::from_parts(config.tokenizer, set)
        .map_err(|e| TrainError::Checkpoint(e.to_string()))?;

    let mut optimizer = OptimizerState::new(params.param_set(), hyper);
    optimizer.step = step;
    for (name, tensor) in &container.tensors {
        if let Some(n) = name.strip_prefix("adam.m.") {
            optimizer.first_moment.insert(n.to_string(), tensor.clone());
        } else if let Some(n) = name.strip_prefix("adam.v.") {
            optimizer.second_moment.insert(n.to_string(), tensor.clone());
        }
    }
    let rng_state = container
        .rng_state
        .clone()
        .ok_or_else(|| TrainError::Checkpoint("missing rng state".into()))?;
    Ok(Checkpoint { format_version: version, config, params, optimizer, rng_state, metrics_tail })
}

impl From<ContainerError> for TrainError {
    fn from(e: ContainerError) -> Self {
        match e {
            ContainerError::Version { found, supported } => TrainError::Checkpoint(format!(
                "unsupported container version {found} (this build reads version {supported})"
            )),
            ContainerError::Integrity(msg) => TrainError::Integrity(msg),
            other => TrainError::Checkpoint(other.to_string()),
        }
    }
}
