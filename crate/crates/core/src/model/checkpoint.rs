//! Text checkpoint format.
//!
//! ```text
//! STOCHNET v1
//! input 768 grid 16x16x3
//! layers 2
//! layer sigmoid 256 grid 16x16 local depth=1 radius=1 image
//! layer sigmoid 256 grid 16x16 local depth=1 radius=1
//! params
//! 0.01 -0.02 ... 0.0
//! ...
//! end
//! ```
//!
//! One parameter row per unit in layer-then-unit order, bias last. Floats
//! use the shortest round-trip representation, so writing the same network
//! twice yields identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use super::network::{ModelError, Network};
use super::spec::{InputGrid, LayerSpec, NetworkSpec};

pub const HEADER: &str = "STOCHNET v1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad checkpoint header: expected `{HEADER}`")]
    Header,
    #[error("checkpoint line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub fn to_string(net: &Network) -> String {
    let spec = net.spec();
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    match spec.input_grid {
        Some(g) => writeln!(out, "input {} grid {g}", spec.input_count),
        None => writeln!(out, "input {}", spec.input_count),
    }
    .unwrap();
    writeln!(out, "layers {}", spec.layers.len()).unwrap();
    for layer in &spec.layers {
        writeln!(out, "layer {layer}").unwrap();
    }
    out.push_str("params\n");
    for w in net.params().iter().flatten() {
        let row: Vec<String> = w.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out.push_str("end\n");
    out
}

pub fn parse(text: &str) -> Result<Network, CheckpointError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let err = |line: usize, message: String| CheckpointError::Parse { line, message };

    match lines.next() {
        Some((_, h)) if h == HEADER => {}
        _ => return Err(CheckpointError::Header),
    }

    let (ln, input_line) = lines.next().ok_or_else(|| err(2, "missing input line".into()))?;
    let toks: Vec<&str> = input_line.split_whitespace().collect();
    let (input_count, input_grid) = match toks.as_slice() {
        ["input", n] => (n.parse().map_err(|_| err(ln, format!("bad input count `{n}`")))?, None),
        ["input", n, "grid", g] => (
            n.parse().map_err(|_| err(ln, format!("bad input count `{n}`")))?,
            Some(g.parse::<InputGrid>().map_err(|m| err(ln, m))?),
        ),
        _ => return Err(err(ln, "expected `input <n> [grid HxWxC]`".into())),
    };

    let (ln, count_line) = lines.next().ok_or_else(|| err(ln + 1, "missing layer count".into()))?;
    let layer_count: usize = count_line
        .strip_prefix("layers ")
        .and_then(|n| n.trim().parse().ok())
        .ok_or_else(|| err(ln, "expected `layers <n>`".into()))?;

    let mut layers = Vec::with_capacity(layer_count);
    let mut last = ln;
    for _ in 0..layer_count {
        let (ln, line) = lines.next().ok_or_else(|| err(last + 1, "missing layer line".into()))?;
        let body = line
            .strip_prefix("layer ")
            .ok_or_else(|| err(ln, "expected `layer ...`".into()))?;
        layers.push(body.parse::<LayerSpec>().map_err(|m| err(ln, m))?);
        last = ln;
    }
    let spec = NetworkSpec {
        input_count,
        input_grid,
        layers,
    };
    let mut net = Network::zeros(spec)?;

    match lines.next() {
        Some((_, "params")) => {}
        Some((ln, _)) => return Err(err(ln, "expected `params`".into())),
        None => return Err(err(last + 1, "missing params section".into())),
    }
    let mut params = net.params().clone();
    for w in params.iter_mut().flatten() {
        let (ln, line) = lines.next().ok_or_else(|| err(0, "missing parameter rows".into()))?;
        let row = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| err(ln, format!("bad number `{t}`"))))
            .collect::<Result<Vec<f64>, _>>()?;
        if row.len() != w.len() {
            return Err(err(ln, format!("expected {} values, found {}", w.len(), row.len())));
        }
        *w = row;
    }
    match lines.next() {
        Some((_, "end")) => {}
        Some((ln, _)) => return Err(err(ln, "expected `end`".into())),
        None => return Err(err(0, "missing `end`".into())),
    }
    net.set_params(params)?;
    Ok(net)
}

pub fn save(net: &Network, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    std::fs::write(path, to_string(net))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Network, CheckpointError> {
    parse(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::network::Init;
    use crate::model::unit::UnitKind;

    fn sample_net() -> Network {
        let input = InputGrid {
            height: 3,
            width: 4,
            channels: 3,
        };
        let mut spec = NetworkSpec::local_stack(input, 1, 1, 1, 2);
        spec.layers[0].kind = UnitKind::ReluSum(5);
        Network::new(spec, Init { scale: 0.7, seed: 5 }).unwrap()
    }

    #[test]
    fn roundtrip_is_exact() {
        let net = sample_net();
        let text = to_string(&net);
        assert!(text.starts_with("STOCHNET v1\n"));
        let back = parse(&text).unwrap();
        assert_eq!(back, net);
        assert_eq!(to_string(&back), text);
    }

    #[test]
    fn dense_roundtrip() {
        let spec = NetworkSpec::chain(2, &[(UnitKind::Tanh, 3), (UnitKind::Sigmoid, 1)]);
        let net = Network::new(spec, Init { scale: 1e-9, seed: 1 }).unwrap();
        assert_eq!(parse(&to_string(&net)).unwrap(), net);
    }

    #[test]
    fn corrupt_header() {
        let text = to_string(&sample_net()).replacen("STOCHNET v1", "STOCHNET v2", 1);
        assert!(matches!(parse(&text), Err(CheckpointError::Header)));
        assert!(matches!(parse(""), Err(CheckpointError::Header)));
    }

    #[test]
    fn short_row_reports_line() {
        let text = to_string(&sample_net());
        let mut lines: Vec<&str> = text.lines().collect();
        let idx = lines.iter().position(|l| *l == "params").unwrap() + 1;
        lines[idx] = "0.5 0.5";
        match parse(&lines.join("\n")) {
            Err(CheckpointError::Parse { line, .. }) => assert_eq!(line, idx + 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_finite_rejected() {
        let text = "STOCHNET v1\ninput 1\nlayers 1\nlayer sigmoid 1 dense 0\nparams\nNaN 0.0\nend\n";
        assert!(matches!(parse(text), Err(CheckpointError::Model(ModelError::NonFinite { .. }))));
    }
}
