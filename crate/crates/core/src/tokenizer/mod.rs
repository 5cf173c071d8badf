//! The prefix-generating tokenizer network.
//!
//! Forward pass, in order: mean-pool the fuzzy tokens into a global context
//! `f_mean`; a 2-layer GELU MLP predicts mixing weights that are reshaped to
//! `N x d_basis` and multiplied by the shared basis dictionary, giving the
//! dynamic prefix; the prefix is concatenated above the unpooled fuzzy
//! tokens (no positional encodings) and run through a pre-LayerNorm
//! transformer encoder; the first `N` output rows are added back onto the
//! dynamic prefix and normalized by a terminal LayerNorm. An optional global
//! head maps `f_mean` into the pooled-embedding space.

mod layers;

use crate::encoders::EmbeddingSequence;
use crate::numerics::{real, ParamSet, Real, Tensor2D, Vector};
use crate::seeding::rng_from_parts;
use layers::{
    attention_backward, attention_forward, layer_norm_backward, layer_norm_forward, mlp_backward,
    mlp_forward, sum_rows, AttnCache, AttnWeights, LayerNormCache, MlpCache,
};
use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("tokenizer config: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Numerics(#[from] crate::numerics::NumericsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    /// Number of generated template tokens (N).
    pub n_tokens: usize,
    pub d_basis: usize,
    /// Width of the sequence embeddings the tokenizer operates in.
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    /// Hidden width of the prefix and global MLP heads.
    pub mlp_hidden: usize,
    pub global_branch: bool,
    pub d_global: usize,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            n_tokens: 64,
            d_basis: 256,
            d_model: 32,
            n_layers: 2,
            n_heads: 8,
            mlp_hidden: 64,
            global_branch: true,
            d_global: 16,
        }
    }
}

impl TokenizerConfig {
    pub fn validate(&self) -> Result<(), TokenizerError> {
        if self.n_tokens == 0 || self.d_basis == 0 || self.d_model == 0 {
            return Err(TokenizerError::Config("n_tokens, d_basis, d_model must be positive".into()));
        }
        if self.n_layers == 0 || self.mlp_hidden == 0 {
            return Err(TokenizerError::Config("n_layers and mlp_hidden must be positive".into()));
        }
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(TokenizerError::Config(format!(
                "d_model {} must be divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.global_branch && self.d_global == 0 {
            return Err(TokenizerError::Config("global branch needs d_global > 0".into()));
        }
        Ok(())
    }

    fn ffn_hidden(&self) -> usize {
        4 * self.d_model
    }
}

/// The generated prefix: `N x d_model` tokens plus the optional global vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenTemplate<T> {
    pub tokens: Tensor2D<T>,
    pub global_vector: Option<Vector<T>>,
}

/// All learnable tensors, stored in a [`ParamSet`] under stable names.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenizerParams<T> {
    cfg: TokenizerConfig,
    set: ParamSet<T>,
}

impl<T: Real> TokenizerParams<T> {
    pub fn config(&self) -> &TokenizerConfig {
        &self.cfg
    }

    pub fn param_set(&self) -> &ParamSet<T> {
        &self.set
    }

    pub fn param_set_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.set
    }

    /// Replace the values with a set of identical names and shapes.
    pub fn replace_set(&mut self, set: ParamSet<T>) -> Result<(), TokenizerError> {
        if !self.set.same_shape(&set) {
            return Err(TokenizerError::Shape("parameter set layout differs".into()));
        }
        self.set = set;
        Ok(())
    }

    pub fn from_parts(cfg: TokenizerConfig, set: ParamSet<T>) -> Result<Self, TokenizerError> {
        cfg.validate()?;
        let reference = init_params::<T>(&cfg, 0)?;
        if !reference.set.same_shape(&set) {
            return Err(TokenizerError::Shape(
                "parameter set does not match the config layout".into(),
            ));
        }
        Ok(Self { cfg, set })
    }

    pub fn cast<U: Real>(&self) -> TokenizerParams<U> {
        TokenizerParams { cfg: self.cfg, set: self.set.cast() }
    }

    pub fn scalar_count(&self) -> usize {
        self.set.scalar_count()
    }

    fn t(&self, name: &str) -> &Tensor2D<T> {
        self.set.get(name).map(|e| &e.value).expect("parameter name fixed at init")
    }

    fn row(&self, name: &str) -> ndarray::ArrayView1<'_, T> {
        self.t(name).row(0)
    }

    fn attn_weights(&self, i: usize) -> AttnWeights<'_, T> {
        AttnWeights {
            wq: self.t(&format!("block{i}.attn.wq")),
            bq: self.row(&format!("block{i}.attn.bq")),
            wk: self.t(&format!("block{i}.attn.wk")),
            wv: self.t(&format!("block{i}.attn.wv")),
            bv: self.row(&format!("block{i}.attn.bv")),
            wo: self.t(&format!("block{i}.attn.wo")),
            bo: self.row(&format!("block{i}.attn.bo")),
        }
    }
}

/// Deterministic initialization: fan-in-scaled uniform affine weights, zero
/// biases, basis entries at scale `1/sqrt(d_basis)`, norm gain 1 / bias 0.
pub fn init_params<T: Real>(cfg: &TokenizerConfig, seed: u64) -> Result<TokenizerParams<T>, TokenizerError> {
    cfg.validate()?;
    let mut set = ParamSet::new();

    let affine = |set: &mut ParamSet<T>, name: &str, rows: usize, cols: usize| {
        let bound = 1.0 / (rows as f64).sqrt();
        let mut rng = rng_from_parts(&[&seed.to_le_bytes(), b"init", name.as_bytes()]);
        let w = Array2::from_shape_fn((rows, cols), |_| real::<T>(rng.gen_range(-bound..bound)));
        set.insert(name, w, true).expect("unique init names");
        let bias_name = bias_of(name);
        set.insert(&bias_name, Array2::zeros((1, cols)), true).expect("unique init names");
    };
    let norm = |set: &mut ParamSet<T>, prefix: &str, d: usize| {
        set.insert(&format!("{prefix}.gain"), Array2::ones((1, d)), true).unwrap();
        set.insert(&format!("{prefix}.bias"), Array2::zeros((1, d)), true).unwrap();
    };

    affine(&mut set, "prefix.w1", cfg.d_model, cfg.mlp_hidden);
    affine(&mut set, "prefix.w2", cfg.mlp_hidden, cfg.n_tokens * cfg.d_basis);

    {
        let bound = 1.0 / (cfg.d_basis as f64).sqrt();
        let mut rng = rng_from_parts(&[&seed.to_le_bytes(), b"init", b"basis"]);
        let b = Array2::from_shape_fn((cfg.d_basis, cfg.d_model), |_| {
            real::<T>(rng.gen_range(-bound..bound))
        });
        set.insert("basis", b, true).unwrap();
    }

    for i in 0..cfg.n_layers {
        norm(&mut set, &format!("block{i}.ln1"), cfg.d_model);
        for part in ["wq", "wv", "wo"] {
            affine(&mut set, &format!("block{i}.attn.{part}"), cfg.d_model, cfg.d_model);
        }
        // Key projection is bias-free; see the attention layer notes.
        {
            let name = format!("block{i}.attn.wk");
            let bound = 1.0 / (cfg.d_model as f64).sqrt();
            let mut rng = rng_from_parts(&[&seed.to_le_bytes(), b"init", name.as_bytes()]);
            let w = Array2::from_shape_fn((cfg.d_model, cfg.d_model), |_| {
                real::<T>(rng.gen_range(-bound..bound))
            });
            set.insert(&name, w, true).expect("unique init names");
        }
        norm(&mut set, &format!("block{i}.ln2"), cfg.d_model);
        affine(&mut set, &format!("block{i}.ffn.w1"), cfg.d_model, cfg.ffn_hidden());
        affine(&mut set, &format!("block{i}.ffn.w2"), cfg.ffn_hidden(), cfg.d_model);
    }
    norm(&mut set, "final_ln", cfg.d_model);
    if cfg.global_branch {
        affine(&mut set, "global.w1", cfg.d_model, cfg.mlp_hidden);
        affine(&mut set, "global.w2", cfg.mlp_hidden, cfg.d_global);
    }
    Ok(TokenizerParams { cfg: *cfg, set })
}

fn bias_of(weight_name: &str) -> String {
    // "prefix.w1" -> "prefix.b1", "block0.attn.wq" -> "block0.attn.bq"
    let (head, tail) = weight_name.rsplit_once('.').expect("dotted parameter names");
    format!("{head}.{}", tail.replacen('w', "b", 1))
}

/// Intermediates of one forward pass, kept for the backward pass.
pub struct ForwardCache<T> {
    prefix_mlp: MlpCache<T>,
    mix: Array2<T>,
    blocks: Vec<BlockCache<T>>,
    final_ln: LayerNormCache<T>,
    global_mlp: Option<MlpCache<T>>,
}

struct BlockCache<T> {
    ln1: LayerNormCache<T>,
    y1: Array2<T>,
    attn: AttnCache<T>,
    ln2: LayerNormCache<T>,
    y2: Array2<T>,
    ffn_z: Array2<T>,
    ffn_h: Array2<T>,
    ffn_t: Array2<T>,
}

/// Run the tokenizer on one fuzzy embedding sequence.
pub fn forward<T: Real>(
    fuzzy: &EmbeddingSequence<T>,
    params: &TokenizerParams<T>,
) -> Result<TokenTemplate<T>, TokenizerError> {
    forward_cached(fuzzy, params).map(|(t, _)| t)
}

/// Forward pass that also returns the cache needed by [`backward`].
pub fn forward_cached<T: Real>(
    fuzzy: &EmbeddingSequence<T>,
    params: &TokenizerParams<T>,
) -> Result<(TokenTemplate<T>, ForwardCache<T>), TokenizerError> {
    let cfg = &params.cfg;
    let f = &fuzzy.tokens;
    if f.ncols() != cfg.d_model {
        return Err(TokenizerError::Shape(format!(
            "fuzzy embedding width {} != d_model {}",
            f.ncols(),
            cfg.d_model
        )));
    }

    let f_mean = f.mean_axis(Axis(0)).expect("fuzzy sequence is non-empty");

    let (mix_flat, prefix_mlp) = mlp_forward(
        &f_mean,
        params.t("prefix.w1"),
        params.row("prefix.b1"),
        params.t("prefix.w2"),
        params.row("prefix.b2"),
    );
    let mix = mix_flat
        .into_shape_with_order((cfg.n_tokens, cfg.d_basis))
        .expect("mlp output sized N*d_basis");
    let p_dyn = mix.dot(params.t("basis"));

    let mut x = concatenate(Axis(0), &[p_dyn.view(), f.view()]).expect("widths match");
    let mut blocks = Vec::with_capacity(cfg.n_layers);
    for i in 0..cfg.n_layers {
        let x_in = x;
        let (y1, ln1) = layer_norm_forward(
            &x_in,
            params.row(&format!("block{i}.ln1.gain")),
            params.row(&format!("block{i}.ln1.bias")),
        );
        let (attn_out, attn) = attention_forward(&y1, &params.attn_weights(i), cfg.n_heads);
        let x_mid = &x_in + &attn_out;
        let (y2, ln2) = layer_norm_forward(
            &x_mid,
            params.row(&format!("block{i}.ln2.gain")),
            params.row(&format!("block{i}.ln2.bias")),
        );
        let mut ffn_z = y2.dot(params.t(&format!("block{i}.ffn.w1")));
        layers::add_row_inplace(&mut ffn_z, params.row(&format!("block{i}.ffn.b1")));
        let mut ffn_h = Array2::zeros(ffn_z.raw_dim());
        let mut ffn_t = Array2::zeros(ffn_z.raw_dim());
        ndarray::Zip::from(&mut ffn_h)
            .and(&mut ffn_t)
            .and(&ffn_z)
            .for_each(|h, t, &z| {
                let (hv, tv) = crate::numerics::gelu_parts(z);
                *h = hv;
                *t = tv;
            });
        let mut ffn_out = ffn_h.dot(params.t(&format!("block{i}.ffn.w2")));
        layers::add_row_inplace(&mut ffn_out, params.row(&format!("block{i}.ffn.b2")));
        x = &x_mid + &ffn_out;
        blocks.push(BlockCache { ln1, y1, attn, ln2, y2, ffn_z, ffn_h, ffn_t });
    }

    let p_updated = x.slice(s![..cfg.n_tokens, ..]);
    let final_input = &p_dyn + &p_updated;
    let (tokens, final_ln) = layer_norm_forward(
        &final_input,
        params.row("final_ln.gain"),
        params.row("final_ln.bias"),
    );

    let (global_vector, global_mlp) = if cfg.global_branch {
        let (g, cache) = mlp_forward(
            &f_mean,
            params.t("global.w1"),
            params.row("global.b1"),
            params.t("global.w2"),
            params.row("global.b2"),
        );
        (Some(g), Some(cache))
    } else {
        (None, None)
    };

    Ok((
        TokenTemplate { tokens, global_vector },
        ForwardCache { prefix_mlp, mix, blocks, final_ln, global_mlp },
    ))
}

/// Accumulate parameter gradients for one member given the loss gradients
/// w.r.t. its template tokens and (optionally) its predicted global vector.
pub fn backward<T: Real>(
    d_tokens: &Tensor2D<T>,
    d_global: Option<&Vector<T>>,
    fuzzy: &EmbeddingSequence<T>,
    params: &TokenizerParams<T>,
    cache: &ForwardCache<T>,
    grads: &mut ParamSet<T>,
) -> Result<(), TokenizerError> {
    let cfg = &params.cfg;
    let n = cfg.n_tokens;
    let one = T::one();

    // Terminal LayerNorm.
    let mut dgain = Array1::zeros(cfg.d_model);
    let mut dbias = Array1::zeros(cfg.d_model);
    let ds = layer_norm_backward(d_tokens, &cache.final_ln, params.row("final_ln.gain"), &mut dgain, &mut dbias);
    grads.accumulate("final_ln.gain", &dgain.insert_axis(Axis(0)), one)?;
    grads.accumulate("final_ln.bias", &dbias.insert_axis(Axis(0)), one)?;

    // Residual split: into the dynamic prefix and into the encoder output.
    let mut dp_dyn = ds.clone();
    let seq_len = n + fuzzy.tokens.nrows();
    let mut dx = Array2::zeros((seq_len, cfg.d_model));
    dx.slice_mut(s![..n, ..]).assign(&ds);

    // Encoder blocks, reversed.
    for i in (0..cfg.n_layers).rev() {
        let b = &cache.blocks[i];
        // x_out = x_mid + ffn(ln2(x_mid))
        let dffn_out = dx.clone();
        let mut dx_mid = dx;
        let db2 = sum_rows(&dffn_out);
        let dw2 = b.ffn_h.t().dot(&dffn_out);
        let dh = dffn_out.dot(&params.t(&format!("block{i}.ffn.w2")).t());
        let mut dz = dh;
        ndarray::Zip::from(&mut dz)
            .and(&b.ffn_z)
            .and(&b.ffn_t)
            .for_each(|d, &z, &t| *d = *d * crate::numerics::gelu_prime_from_tanh(z, t));
        let dw1 = b.y2.t().dot(&dz);
        let db1 = sum_rows(&dz);
        let dy2 = dz.dot(&params.t(&format!("block{i}.ffn.w1")).t());
        grads.accumulate(&format!("block{i}.ffn.w1"), &dw1, one)?;
        grads.accumulate(&format!("block{i}.ffn.b1"), &db1.insert_axis(Axis(0)), one)?;
        grads.accumulate(&format!("block{i}.ffn.w2"), &dw2, one)?;
        grads.accumulate(&format!("block{i}.ffn.b2"), &db2.insert_axis(Axis(0)), one)?;

        let mut dg2 = Array1::zeros(cfg.d_model);
        let mut db2n = Array1::zeros(cfg.d_model);
        let dx_from_ln2 = layer_norm_backward(
            &dy2,
            &b.ln2,
            params.row(&format!("block{i}.ln2.gain")),
            &mut dg2,
            &mut db2n,
        );
        grads.accumulate(&format!("block{i}.ln2.gain"), &dg2.insert_axis(Axis(0)), one)?;
        grads.accumulate(&format!("block{i}.ln2.bias"), &db2n.insert_axis(Axis(0)), one)?;
        dx_mid += &dx_from_ln2;

        // x_mid = x_in + attn(ln1(x_in))
        let dattn_out = dx_mid.clone();
        let mut dx_in = dx_mid;
        let attn_grads = attention_backward(
            &dattn_out,
            &b.y1,
            &params.attn_weights(i),
            &b.attn,
            cfg.n_heads,
        );
        for (name, value) in [
            ("wq", &attn_grads.dwq),
            ("wk", &attn_grads.dwk),
            ("wv", &attn_grads.dwv),
            ("wo", &attn_grads.dwo),
        ] {
            grads.accumulate(&format!("block{i}.attn.{name}"), value, one)?;
        }
        for (name, value) in [
            ("bq", &attn_grads.dbq),
            ("bv", &attn_grads.dbv),
            ("bo", &attn_grads.dbo),
        ] {
            grads.accumulate(&format!("block{i}.attn.{name}"), &value.clone().insert_axis(Axis(0)), one)?;
        }
        let mut dg1 = Array1::zeros(cfg.d_model);
        let mut db1n = Array1::zeros(cfg.d_model);
        let dx_from_ln1 = layer_norm_backward(
            &attn_grads.dy,
            &b.ln1,
            params.row(&format!("block{i}.ln1.gain")),
            &mut dg1,
            &mut db1n,
        );
        grads.accumulate(&format!("block{i}.ln1.gain"), &dg1.insert_axis(Axis(0)), one)?;
        grads.accumulate(&format!("block{i}.ln1.bias"), &db1n.insert_axis(Axis(0)), one)?;
        dx_in += &dx_from_ln1;
        dx = dx_in;
    }

    // Encoder input was [p_dyn; fuzzy]; only the prefix rows reach parameters.
    dp_dyn += &dx.slice(s![..n, ..]);

    // Dynamic prefix: p_dyn = mix . basis
    let dmix = dp_dyn.dot(&params.t("basis").t());
    let dbasis = cache.mix.t().dot(&dp_dyn);
    grads.accumulate("basis", &dbasis, one)?;

    let dmix_flat = dmix
        .into_shape_with_order(n * cfg.d_basis)
        .expect("contiguous mix gradient");
    let mlp_grads = mlp_backward(&dmix_flat, &cache.prefix_mlp, params.t("prefix.w2"));
    grads.accumulate("prefix.w1", &mlp_grads.dw1, one)?;
    grads.accumulate("prefix.b1", &mlp_grads.db1.insert_axis(Axis(0)), one)?;
    grads.accumulate("prefix.w2", &mlp_grads.dw2, one)?;
    grads.accumulate("prefix.b2", &mlp_grads.db2.insert_axis(Axis(0)), one)?;

    if let (Some(dg), Some(cache_g)) = (d_global, &cache.global_mlp) {
        let g_grads = mlp_backward(dg, cache_g, params.t("global.w2"));
        grads.accumulate("global.w1", &g_grads.dw1, one)?;
        grads.accumulate("global.b1", &g_grads.db1.insert_axis(Axis(0)), one)?;
        grads.accumulate("global.w2", &g_grads.dw2, one)?;
        grads.accumulate("global.b2", &g_grads.db2.insert_axis(Axis(0)), one)?;
    }
    Ok(())
}

/// Concatenate the template above the fuzzy tokens to form the creative
/// embedding; its pooled global vector is the template's.
pub fn compose_creative<T: Real>(
    template: &TokenTemplate<T>,
    fuzzy: &EmbeddingSequence<T>,
) -> Result<EmbeddingSequence<T>, TokenizerError> {
    if template.tokens.ncols() != fuzzy.tokens.ncols() {
        return Err(TokenizerError::Shape(format!(
            "template width {} != fuzzy width {}",
            template.tokens.ncols(),
            fuzzy.tokens.ncols()
        )));
    }
    let tokens = concatenate(Axis(0), &[template.tokens.view(), fuzzy.tokens.view()])
        .expect("widths checked");
    EmbeddingSequence::new(tokens, template.global_vector.clone())
        .map_err(|e| TokenizerError::Shape(e.to_string()))
}
