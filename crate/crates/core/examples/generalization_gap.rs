//! Paired FFN/BN training on the synthetic blob task; prints per-seed
//! train/test IoU and the mean generalization gap of both models.
//!
//! cargo run --release --example generalization_gap -- [seeds] [iterations]
use stochnet::experiment::BlobProtocol;

fn main() {
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);
    let mut protocol = BlobProtocol::default();
    if let Some(it) = args.next().and_then(|s| s.parse().ok()) {
        protocol.iterations = it;
    }
    let start = std::time::Instant::now();
    let (mut ebp, mut bn) = (0.0, 0.0);
    for seed in 0..seeds {
        let r = protocol.run(seed).expect("training diverged");
        println!(
            "seed {seed}  FFN train {:.3} test {:.3} gap {:+.3}   BN train {:.3} test {:.3} gap {:+.3}",
            r.ebp.train,
            r.ebp.test,
            r.ebp.gap(),
            r.bn.train,
            r.bn.test,
            r.bn.gap()
        );
        ebp += r.ebp.gap() / seeds as f64;
        bn += r.bn.gap() / seeds as f64;
    }
    println!("mean gap FFN {ebp:+.4}  BN {bn:+.4}  ({:.1}s)", start.elapsed().as_secs_f64());
}
