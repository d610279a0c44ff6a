//! Saves a network to the text checkpoint format, prints it and loads it back.
use stochnet::model::{checkpoint, UnitKind};
use stochnet::oracle::random_net;

fn main() {
    let net = random_net(2, &[(UnitKind::Tanh, 2), (UnitKind::Sigmoid, 1)], 1.0, 5);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiny.ckpt");
    checkpoint::save(&net, &path).unwrap();
    print!("{}", std::fs::read_to_string(&path).unwrap());
    let back = checkpoint::load(&path).unwrap();
    assert_eq!(back.params(), net.params());
    println!("round trip exact: {} parameters", back.parameter_count());
    let corrupt = checkpoint::parse("STOCHNET v9\n");
    println!("corrupt input: {}", corrupt.unwrap_err());
}
