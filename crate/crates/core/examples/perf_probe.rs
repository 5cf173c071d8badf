// Scratch timing probe for the desk-scale training step.
use ctok_core::agents::{AgentBackend, Domain};
use ctok_core::encoders::{Encoder, EncoderConfig, SyntheticEncoder};
use ctok_core::losses::{loss_total, LossWeights, MemberInputs};
use ctok_core::numerics::seq_mean_std;
use ctok_core::pipeline::generate_pool;
use ctok_core::tokenizer::{backward, forward_cached, init_params, TokenizerConfig};
use std::time::Instant;

fn main() {
    let enc_cfg = EncoderConfig::default();
    let tok_cfg = TokenizerConfig {
        n_tokens: 16,
        d_basis: 64,
        d_model: 32,
        n_layers: 2,
        n_heads: 8,
        mlp_hidden: 64,
        global_branch: true,
        d_global: 16,
    };
    let enc = SyntheticEncoder::new(enc_cfg).unwrap();
    let (pool, _) = generate_pool(&[Domain::Nature], 4, 7, &AgentBackend::mock()).unwrap();
    let params = init_params::<f32>(&tok_cfg, 7).unwrap();

    let fuzzy: Vec<_> = pool.iter().take(3).map(|e| {
        let f: ctok_core::encoders::EmbeddingSequence<f32> = enc.encode_fuzzy(&e.pair).unwrap();
        let a: ctok_core::encoders::EmbeddingSequence<f32> = enc.encode_augmented(&e.pair).unwrap();
        let (m, s) = seq_mean_std(&a.tokens).unwrap();
        (f, m, s, a.pooled_global.unwrap())
    }).collect();

    let n = 2000;
    let t0 = Instant::now();
    let mut sink = 0f32;
    for _ in 0..n {
        let (t, _) = forward_cached(&fuzzy[0].0, &params).unwrap();
        sink += t.tokens[[0, 0]];
    }
    let fwd = t0.elapsed().as_secs_f64() / n as f64;

    let (t1, c1) = forward_cached(&fuzzy[0].0, &params).unwrap();
    let dt = t1.tokens.mapv(|v| v * 0.001);
    let dg = t1.global_vector.as_ref().map(|g| g.mapv(|v| v * 0.001));
    let t0 = Instant::now();
    for _ in 0..n {
        let mut grads = params.param_set().zeros_like();
        backward(&dt, dg.as_ref(), &fuzzy[0].0, &params, &c1, &mut grads).unwrap();
        sink += grads.tensor("basis").unwrap()[[0, 0]];
    }
    let bwd = t0.elapsed().as_secs_f64() / n as f64;

    let t0 = Instant::now();
    for _ in 0..n {
        let mut grads = params.param_set().zeros_like();
        sink += grads.tensor("basis").unwrap()[[0, 0]];
    }
    let zeros = t0.elapsed().as_secs_f64() / n as f64;

    let templates: Vec<_> = (0..3).map(|i| forward_cached(&fuzzy[i].0, &params).unwrap().0).collect();
    let t0 = Instant::now();
    for _ in 0..n {
        let members: [MemberInputs<'_, f32>; 3] = [0, 1, 2].map(|i| MemberInputs {
            template: &templates[i],
            fuzzy: &fuzzy[i].0,
            aug_mean: &fuzzy[i].1,
            aug_std: &fuzzy[i].2,
            global_target: Some(&fuzzy[i].3),
        });
        let (b, _) = loss_total(&members, &LossWeights::default()).unwrap();
        sink += b.l_total as f32;
    }
    let loss = t0.elapsed().as_secs_f64() / n as f64;

    println!("forward  {:9.1} us", fwd * 1e6);
    println!("backward {:9.1} us (incl zeros_like)", bwd * 1e6);
    println!("zeros    {:9.1} us", zeros * 1e6);
    println!("loss3    {:9.1} us (3 members + grads)", loss * 1e6);
    println!("est batch (24 fwd + 24 bwd + 8 loss3): {:.1} ms", (24.0*(fwd+bwd-zeros) + 8.0*loss + 0.0)*1e3);
    println!("sink {sink}");
}
