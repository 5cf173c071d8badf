// Measure the anchor-alignment ceiling of the synthetic construction:
// cos(target augmented mean, fuzzy mean) per pair, plus component norms.
use ctok_core::agents::{AgentBackend, Domain};
use ctok_core::encoders::{Encoder, EncoderConfig, SyntheticEncoder};
use ctok_core::numerics::{cosine, seq_mean_std, COSINE_EPS};
use ctok_core::pipeline::generate_pool;

fn main() {
    let enc = SyntheticEncoder::new(EncoderConfig::default()).unwrap();
    let (pool, _) = generate_pool(&Domain::ALL, 20, 7, &AgentBackend::mock()).unwrap();
    let mut cosines = Vec::new();
    for e in pool.iter() {
        let fuzzy: ctok_core::encoders::EmbeddingSequence<f64> = enc.encode_fuzzy(&e.pair).unwrap();
        let (mu_f, _) = seq_mean_std(&fuzzy.tokens).unwrap();
        let target = enc.augmented_target_mean(&e.pair);
        let c = cosine(target.view(), mu_f.view(), COSINE_EPS).unwrap();
        cosines.push(c);
        if cosines.len() <= 3 {
            let nf = mu_f.dot(&mu_f).sqrt();
            let nt = target.dot(&target).sqrt();
            println!("{:40} cos {:.4}  |mu_f| {:.4} |target| {:.4}", e.pair.key(), c, nf, nt);
        }
    }
    cosines.sort_by(|a, b| a.total_cmp(b));
    let n = cosines.len();
    println!("pairs {n}  min {:.4}  p05 {:.4}  median {:.4}  mean {:.4}  max {:.4}",
        cosines[0], cosines[n/20], cosines[n/2],
        cosines.iter().sum::<f64>()/n as f64, cosines[n-1]);
}
