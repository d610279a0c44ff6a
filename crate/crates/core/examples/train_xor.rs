//! Trains the same initialisation on XOR with back-propagation through the
//! deterministic pass (EBP) and with the sampled estimator (BN), printing the
//! metrics rows of both runs.
use stochnet::data::Example;
use stochnet::evaluate::Metric;
use stochnet::learning::{train, TrainConfig, TrainMode};
use stochnet::model::{Init, Network, NetworkSpec, UnitKind};

fn main() {
    let xor: Vec<Example> = [(0., 0., 0.), (0., 1., 1.), (1., 0., 1.), (1., 1., 0.)]
        .iter()
        .map(|&(a, b, y)| Example { x: vec![a, b], y: vec![y] })
        .collect();
    let spec = NetworkSpec::chain(2, &[(UnitKind::Sigmoid, 8), (UnitKind::Sigmoid, 1)]);
    let init = Network::new(spec, Init { scale: 1.0, seed: 3 }).unwrap();
    for mode in [TrainMode::Ebp, TrainMode::Bn] {
        let mut net = init.clone();
        let cfg = TrainConfig {
            mode,
            step_size: 0.5,
            iterations: 4000,
            batch_size: 4,
            eval_period: 500,
            ..Default::default()
        };
        let log = train(&mut net, &xor, &[], Metric::Accuracy, &cfg).unwrap();
        for r in &log.rows {
            println!("{:?} iter {:5} accuracy {:.3} bound {:.4}", r.mode, r.iter, r.train_metric, r.lower_bound_estimate);
        }
    }
}
