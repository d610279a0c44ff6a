//! The three forward passes of a small mixed network: the deterministic
//! (feed-forward) approximation, ancestral samples, and a pass that keeps
//! sampled lower layers and runs the rest deterministically.
use stochnet::model::UnitKind;
use stochnet::oracle::random_net;
use stochnet::propagation::{forward_deterministic, forward_from, forward_sample};
use stochnet::rng::RngStream;

fn main() {
    let net = random_net(3, &[(UnitKind::Tanh, 4), (UnitKind::ReluSum(3), 3), (UnitKind::Sigmoid, 2)], 1.0, 7);
    let x = [0.5, -1.0, 0.25];

    let det = forward_deterministic(&net, &x).unwrap();
    println!("deterministic output means {:.4?}", det.output());

    let mut rng = RngStream::new(1);
    let n = 20_000;
    let mut mean = vec![0.0; net.output_count()];
    for _ in 0..n {
        let s = forward_sample(&net, &x, &mut rng).unwrap();
        for (m, v) in mean.iter_mut().zip(s.output()) {
            *m += v / n as f64;
        }
    }
    println!("ancestral mean of {n} samples {mean:.4?}");

    let s = forward_sample(&net, &x, &mut RngStream::new(2)).unwrap();
    println!("one sample, hidden layer 1 states {:?}", s.states[0]);
    let mixed = forward_from(&net, &x, &s.states[..1], 1).unwrap();
    println!("layer 1 fixed, rest deterministic {:.4?}", mixed.output());
}
