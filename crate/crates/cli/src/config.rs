//! Layered configuration: built-in defaults, then an optional TOML file,
//! then command-line flags, highest last.

use anyhow::{bail, Context, Result};
use ctok_core::agents::Domain;
use ctok_core::encoders::EncoderConfig;
use ctok_core::losses::LossWeights;
use ctok_core::tokenizer::TokenizerConfig;
use ctok_core::training::TrainConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub pool: PoolSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub weights: WeightsSection,
    #[serde(default)]
    pub tokenizer: TokenizerSection,
    #[serde(default)]
    pub encoder: EncoderSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolSection {
    pub domains: Option<Vec<String>>,
    pub matrices: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub batch: Option<usize>,
    pub log_every: Option<usize>,
    pub checkpoint_dir: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsSection {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub margin: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenizerSection {
    pub n_tokens: Option<usize>,
    pub d_basis: Option<usize>,
    pub d_model: Option<usize>,
    pub n_layers: Option<usize>,
    pub n_heads: Option<usize>,
    pub mlp_hidden: Option<usize>,
    pub global_branch: Option<bool>,
    pub d_global: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSection {
    pub d_model: Option<usize>,
    pub d_global: Option<usize>,
    pub l_fuzzy: Option<usize>,
    pub l_aug: Option<usize>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub g_norm: Option<f64>,
    pub noise_std: Option<f64>,
}

/// Everything a run needs, after defaults, file and flags are folded in.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub seed: u64,
    pub domains: Vec<Domain>,
    pub matrices: usize,
    pub train: TrainConfig,
}

pub fn load_file(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config file {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing config file {}", p.display()))
        }
    }
}

pub fn parse_domains(csv: &str) -> Result<Vec<Domain>> {
    let mut out = Vec::new();
    for part in csv.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let d: Domain = part.parse().map_err(|e| anyhow::anyhow!("{e}"))?;
        if !out.contains(&d) {
            out.push(d);
        }
    }
    if out.is_empty() {
        bail!("no domains given");
    }
    Ok(out)
}

/// Fold defaults <- file into a full config; flag overrides are applied by
/// the caller on the returned value.
pub fn resolve(file: &FileConfig, seed_flag: Option<u64>) -> Result<Resolved> {
    let seed = seed_flag.or(file.seed).unwrap_or(7);

    let domains = match &file.pool.domains {
        None => Domain::ALL.to_vec(),
        Some(list) => {
            let mut out = Vec::new();
            for name in list {
                out.push(name.parse::<Domain>().map_err(|e| anyhow::anyhow!("{e}"))?);
            }
            if out.is_empty() {
                bail!("config file lists no domains");
            }
            out
        }
    };

    let mut tokenizer = TokenizerConfig::default();
    let t = &file.tokenizer;
    if let Some(v) = t.n_tokens {
        tokenizer.n_tokens = v;
    }
    if let Some(v) = t.d_basis {
        tokenizer.d_basis = v;
    }
    if let Some(v) = t.d_model {
        tokenizer.d_model = v;
    }
    if let Some(v) = t.n_layers {
        tokenizer.n_layers = v;
    }
    if let Some(v) = t.n_heads {
        tokenizer.n_heads = v;
    }
    if let Some(v) = t.mlp_hidden {
        tokenizer.mlp_hidden = v;
    }
    if let Some(v) = t.global_branch {
        tokenizer.global_branch = v;
    }
    if let Some(v) = t.d_global {
        tokenizer.d_global = v;
    }

    let mut encoder = EncoderConfig { seed, ..EncoderConfig::default() };
    let e = &file.encoder;
    if let Some(v) = e.d_model {
        encoder.d_model = v;
    }
    if let Some(v) = e.d_global {
        encoder.d_global = v;
    }
    if let Some(v) = e.l_fuzzy {
        encoder.l_fuzzy = v;
    }
    if let Some(v) = e.l_aug {
        encoder.l_aug = v;
    }
    if let Some(v) = e.a {
        encoder.mix.a = v;
    }
    if let Some(v) = e.b {
        encoder.mix.b = v;
    }
    if let Some(v) = e.g_norm {
        encoder.mix.g_norm = v;
    }
    if let Some(v) = e.noise_std {
        encoder.mix.noise_std = v;
    }

    let mut weights = LossWeights::default();
    if let Some(v) = file.weights.alpha {
        weights.alpha = v;
    }
    if let Some(v) = file.weights.beta {
        weights.beta = v;
    }
    if let Some(v) = file.weights.margin {
        weights.margin = v;
    }

    let train = TrainConfig {
        epochs: file.train.epochs.unwrap_or(500),
        lr: file.train.lr.unwrap_or(1e-4),
        batch: file.train.batch.unwrap_or(8),
        weights,
        tokenizer,
        encoder,
        seed,
        log_every: file.train.log_every.unwrap_or(10),
        checkpoint_dir: file
            .train
            .checkpoint_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("runs/default")),
    };

    Ok(Resolved { seed, domains, matrices: file.pool.matrices.unwrap_or(100), train })
}
