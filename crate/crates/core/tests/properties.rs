use proptest::prelude::*;

use stochnet::data::{read_pnm, save_vectors, load_vectors, split, write_pnm, Example, Pnm, VectorDataset};
use stochnet::inference::enumerate_posterior;
use stochnet::model::{checkpoint, UnitKind};
use stochnet::oracle::random_net;
use stochnet::propagation::forward_sample;
use stochnet::rng::RngStream;

fn kind() -> impl Strategy<Value = UnitKind> {
    prop_oneof![
        Just(UnitKind::Sigmoid),
        Just(UnitKind::Tanh),
        Just(UnitKind::Delta),
        (1u32..4).prop_map(UnitKind::ReluSum)
    ]
}

fn output_kind() -> impl Strategy<Value = UnitKind> {
    prop_oneof![Just(UnitKind::Sigmoid), Just(UnitKind::Tanh)]
}

fn tiny_layers() -> impl Strategy<Value = Vec<(UnitKind, usize)>> {
    (prop::collection::vec((kind(), 1usize..3), 0..3), output_kind(), 1usize..3).prop_map(|(mut h, k, n)| {
        h.push((k, n));
        h
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// exp(-E) summed over every configuration is one, and each enumerated
    /// probability is exp(-E) of its configuration.
    #[test]
    fn energy_normalises(layers in tiny_layers(), seed in 0u64..1000, x in prop::collection::vec(-1.0f64..1.0, 2)) {
        let net = random_net(2, &layers, 1.5, seed);
        let table = enumerate_posterior(&net, &x).unwrap();
        let mut total = 0.0;
        for (asg, p) in &table.entries {
            let q = (-net.energy(asg).unwrap()).exp();
            prop_assert!((p - q).abs() <= 1e-12 * q.max(1.0));
            total += q;
        }
        prop_assert!((total - 1.0).abs() < 1e-10, "total {}", total);
    }

    /// Ancestral samples always have finite energy.
    #[test]
    fn samples_are_supported(layers in tiny_layers(), seed in 0u64..1000) {
        let net = random_net(2, &layers, 2.0, seed);
        let trace = forward_sample(&net, &[0.3, -0.7], &mut RngStream::new(seed)).unwrap();
        let asg = trace.to_assignment().unwrap();
        prop_assert!(net.energy(&asg).unwrap().is_finite());
    }

    #[test]
    fn checkpoint_round_trip(layers in tiny_layers(), seed in 0u64..1000, scale in 0.01f64..10.0) {
        let net = random_net(3, &layers, scale, seed);
        let back = checkpoint::parse(&checkpoint::to_string(&net)).unwrap();
        prop_assert_eq!(back.params(), net.params());
        prop_assert_eq!(back.spec(), net.spec());
    }

    #[test]
    fn split_partitions(n in 2usize..60, frac in 0.0f64..1.0, seed in any::<u64>()) {
        let items: Vec<usize> = (0..n).collect();
        let k = 1 + ((n - 2) as f64 * frac) as usize;
        let (a, b) = split(&items, k, seed).unwrap();
        prop_assert_eq!(a.len(), k);
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, items.clone());
        prop_assert_eq!(split(&items, k, seed).unwrap(), (a, b));
    }

    #[test]
    fn pnm_round_trip(w in 1usize..20, h in 1usize..20, rgb in any::<bool>(), fill in any::<u64>()) {
        let c = if rgb { 3 } else { 1 };
        let mut rng = RngStream::new(fill);
        let data: Vec<u8> = (0..w * h * c).map(|_| rng.below(256) as u8).collect();
        let img = if rgb { Pnm::rgb(w, h, data) } else { Pnm::gray(w, h, data) };
        prop_assert_eq!(read_pnm(&write_pnm(&img)).unwrap(), img);
    }

    #[test]
    fn vectors_round_trip(rows in prop::collection::vec((prop::collection::vec(-1e6f64..1e6, 3), any::<bool>()), 1..20)) {
        let examples: Vec<Example> = rows.into_iter().map(|(x, y)| Example { x, y: vec![y as u8 as f64] }).collect();
        let data = VectorDataset { examples, feature_count: 3, output_count: 1 };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.csv");
        save_vectors(&path, &data).unwrap();
        prop_assert_eq!(load_vectors(&path, 1, false).unwrap(), data);
    }

    #[test]
    fn rng_split_is_a_pure_function(seed in any::<u64>(), a in any::<u64>(), b in any::<u64>()) {
        let root = RngStream::new(seed);
        let draw = |mut r: RngStream| (0..4).map(|_| r.next_word()).collect::<Vec<_>>();
        prop_assert_eq!(draw(root.split(a)), draw(root.split(a)));
        let mut used = root.clone();
        used.next_word();
        prop_assert_eq!(draw(used.split(a)), draw(root.split(a)));
        if a != b {
            prop_assert_ne!(draw(root.split(a)), draw(root.split(b)));
        }
    }
}
