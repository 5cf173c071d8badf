// Bisect forward/backward overhead across geometry variants.
use ctok_core::agents::{ConceptPair, Domain};
use ctok_core::encoders::{Encoder, EncoderConfig, SyntheticEncoder};
use ctok_core::tokenizer::{backward, forward_cached, init_params, TokenizerConfig};
use std::time::Instant;

fn measure(label: &str, tok_cfg: TokenizerConfig) {
    let enc = SyntheticEncoder::new(EncoderConfig::default()).unwrap();
    let pair = ConceptPair::new(Domain::Nature, "Dog", "Cabbage").unwrap();
    let fuzzy: ctok_core::encoders::EmbeddingSequence<f32> = enc.encode_fuzzy(&pair).unwrap();
    let params = init_params::<f32>(&tok_cfg, 7).unwrap();
    let n = 3000;
    let mut sink = 0f32;
    let t0 = Instant::now();
    for _ in 0..n {
        let (t, _) = forward_cached(&fuzzy, &params).unwrap();
        sink += t.tokens[[0, 0]];
    }
    let fwd = t0.elapsed().as_secs_f64() / n as f64;
    let (t1, c1) = forward_cached(&fuzzy, &params).unwrap();
    let dt = t1.tokens.mapv(|v| v * 0.001);
    let dg = t1.global_vector.as_ref().map(|g| g.mapv(|v| v * 0.001));
    let mut grads = params.param_set().zeros_like();
    let t0 = Instant::now();
    for _ in 0..n {
        backward(&dt, dg.as_ref(), &fuzzy, &params, &c1, &mut grads).unwrap();
    }
    let bwd = t0.elapsed().as_secs_f64() / n as f64;
    println!("{label:28} fwd {:7.1} us   bwd {:7.1} us", fwd * 1e6, bwd * 1e6);
    let _ = sink;
}

fn main() {
    let base = TokenizerConfig {
        n_tokens: 16, d_basis: 64, d_model: 32, n_layers: 2, n_heads: 8,
        mlp_hidden: 64, global_branch: true, d_global: 16,
    };
    measure("desk (L2 H8 db64)", base);
    measure("heads=1", TokenizerConfig { n_heads: 1, ..base });
    measure("layers=1", TokenizerConfig { n_layers: 1, ..base });
    measure("d_basis=8", TokenizerConfig { d_basis: 8, ..base });
    measure("mlp_hidden=8", TokenizerConfig { mlp_hidden: 8, ..base });
    measure("n_tokens=4", TokenizerConfig { n_tokens: 4, ..base });
}
