//! Robustness of FFN- and BN-trained models to input noise and blur: mean
//! test IoU per degradation level.
//!
//! cargo run --release --example noise_sweep -- [seed]
use stochnet::evaluate::Decision;
use stochnet::experiment::BlobProtocol;
use stochnet::segment::{degradation_sweep, Degradation};

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let protocol = BlobProtocol::default();
    let run = protocol.run(seed).unwrap();
    let (_, test) = protocol.data(seed);
    let mut levels: Vec<Degradation> = [0.0, 0.1, 0.2, 0.3, 0.4].into_iter().map(Degradation::Noise).collect();
    levels.extend([1, 2, 3].map(Degradation::Blur));
    let decision = Decision::Sampled { samples: 100 };
    let size = protocol.size;
    let ffn = degradation_sweep(&run.ebp_net, &test.examples, size, size, &levels, Decision::Deterministic, seed).unwrap();
    let bn = degradation_sweep(&run.bn_net, &test.examples, size, size, &levels, decision, seed).unwrap();
    println!("{:<10} {:>8} {:>8}", "level", "FFN", "BN");
    for (f, b) in ffn.iter().zip(&bn) {
        println!("{:<10} {:>8.3} {:>8.3}", f.level.tag(), f.mean_iou, b.mean_iou);
    }
}
