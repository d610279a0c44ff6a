//! Forward passes.
//!
//! The deterministic pass replaces every layer by its expectation given the
//! previous layer's expectation (the ordinary feed-forward evaluation). The
//! sampled pass draws each layer from its conditional given the sampled
//! previous layers, which yields exact independent samples of the joint
//! distribution.

use crate::model::{Assignment, Event, ModelError, Network, UnitKind};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceMode {
    Deterministic,
    Sampled,
}

/// Pre-activations and states of every layer from one forward pass.
///
/// `states` holds means in deterministic mode and encoded sampled events in
/// sampled mode; `events` is present only in sampled mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub mode: TraceMode,
    pub input: Vec<f64>,
    pub pre: Vec<Vec<f64>>,
    pub states: Vec<Vec<f64>>,
    pub events: Option<Vec<Vec<Event>>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.states.last().expect("trace has no layers")
    }

    pub fn output_pre(&self) -> &[f64] {
        self.pre.last().expect("trace has no layers")
    }

    /// The sampled assignment, for sampled traces.
    pub fn to_assignment(&self) -> Option<Assignment> {
        let events = self.events.as_ref()?;
        let (output, hidden) = events.split_last()?;
        Some(Assignment {
            x: self.input.clone(),
            hidden: hidden.to_vec(),
            output: output.clone(),
        })
    }
}

/// E[ξ | a] for a unit of the given kind.
pub fn unit_mean(kind: UnitKind, a: f64) -> f64 {
    kind.mean(a)
}

/// One draw from `p(· | a)`.
pub fn unit_sample(kind: UnitKind, a: f64, rng: &mut RngStream) -> Event {
    kind.sample(a, rng)
}

fn check_input(net: &Network, x: &[f64]) -> Result<(), ModelError> {
    if x.len() != net.input_count() {
        return Err(ModelError::Dimension {
            what: "input vector",
            expected: net.input_count(),
            got: x.len(),
        });
    }
    Ok(())
}

/// Sequential approximation: `z̄_1(x)`, `z̄_2(z̄_1)`, ..., `ȳ`.
pub fn forward_deterministic(net: &Network, x: &[f64]) -> Result<ForwardTrace, ModelError> {
    check_input(net, x)?;
    let mut pre = Vec::with_capacity(net.layer_count());
    let mut states: Vec<Vec<f64>> = Vec::with_capacity(net.layer_count());
    for l in 0..net.layer_count() {
        let kind = net.kind(l);
        let a: Vec<f64> = (0..net.units(l)).map(|u| net.preactivation(l, u, x, &states)).collect();
        states.push(a.iter().map(|&v| kind.mean(v)).collect());
        pre.push(a);
    }
    Ok(ForwardTrace {
        mode: TraceMode::Deterministic,
        input: x.to_vec(),
        pre,
        states,
        events: None,
    })
}

/// Ancestral sample of every hidden layer and the output.
pub fn forward_sample(net: &Network, x: &[f64], rng: &mut RngStream) -> Result<ForwardTrace, ModelError> {
    check_input(net, x)?;
    let mut pre = Vec::with_capacity(net.layer_count());
    let mut states: Vec<Vec<f64>> = Vec::with_capacity(net.layer_count());
    let mut events = Vec::with_capacity(net.layer_count());
    for l in 0..net.layer_count() {
        let kind = net.kind(l);
        let a: Vec<f64> = (0..net.units(l)).map(|u| net.preactivation(l, u, x, &states)).collect();
        let ev: Vec<Event> = a.iter().map(|&v| kind.sample(v, rng)).collect();
        states.push(ev.iter().map(|e| kind.encode(e)).collect());
        events.push(ev);
        pre.push(a);
    }
    Ok(ForwardTrace {
        mode: TraceMode::Sampled,
        input: x.to_vec(),
        pre,
        states,
        events: Some(events),
    })
}

/// Deterministic trace of layers `start..` with the states of layers
/// `..start` held fixed (e.g. at sampled values). Rows `..start` of the
/// returned trace are the given states; their pre-activations are recomputed.
pub fn forward_from(net: &Network, x: &[f64], lower: &[Vec<f64>], start: usize) -> Result<ForwardTrace, ModelError> {
    check_input(net, x)?;
    assert!(start <= lower.len() && start < net.layer_count());
    let mut pre = Vec::with_capacity(net.layer_count());
    let mut states: Vec<Vec<f64>> = Vec::with_capacity(net.layer_count());
    for l in 0..net.layer_count() {
        let a: Vec<f64> = (0..net.units(l)).map(|u| net.preactivation(l, u, x, &states)).collect();
        if l < start {
            states.push(lower[l].clone());
        } else {
            let kind = net.kind(l);
            states.push(a.iter().map(|&v| kind.mean(v)).collect());
        }
        pre.push(a);
    }
    Ok(ForwardTrace {
        mode: TraceMode::Deterministic,
        input: x.to_vec(),
        pre,
        states,
        events: None,
    })
}

/// Trace built from an explicit assignment (used when enumerating the
/// sampling distribution instead of drawing from it).
pub fn trace_of_assignment(net: &Network, asg: &Assignment) -> Result<ForwardTrace, ModelError> {
    check_input(net, &asg.x)?;
    let mut pre = Vec::with_capacity(net.layer_count());
    let mut states: Vec<Vec<f64>> = Vec::with_capacity(net.layer_count());
    let mut events = Vec::with_capacity(net.layer_count());
    for l in 0..net.layer_count() {
        let kind = net.kind(l);
        let ev = asg.layer(l);
        if ev.len() != net.units(l) {
            return Err(ModelError::Dimension {
                what: "layer size",
                expected: net.units(l),
                got: ev.len(),
            });
        }
        let a: Vec<f64> = (0..net.units(l)).map(|u| net.preactivation(l, u, &asg.x, &states)).collect();
        states.push(ev.iter().map(|e| kind.encode(e)).collect());
        events.push(ev.to_vec());
        pre.push(a);
    }
    Ok(ForwardTrace {
        mode: TraceMode::Sampled,
        input: asg.x.clone(),
        pre,
        states,
        events: Some(events),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sigmoid, NetworkSpec};
    use approx::assert_abs_diff_eq;

    #[test]
    fn unit_mean_fixtures() {
        assert_eq!(unit_mean(UnitKind::Sigmoid, 0.0), 0.5);
        assert_eq!(unit_mean(UnitKind::Tanh, 0.0), 0.0);
        assert_eq!(unit_mean(UnitKind::Delta, -1.25), -1.25);
    }

    #[test]
    fn saturated_sigmoid_always_fires() {
        let mut rng = RngStream::new(5);
        for _ in 0..10_000 {
            assert_eq!(unit_sample(UnitKind::Sigmoid, 50.0, &mut rng), Event::Bits(1));
        }
    }

    #[test]
    fn fair_sigmoid_frequency() {
        let mut rng = RngStream::new(6);
        let n = 100_000;
        let ones = (0..n)
            .filter(|_| unit_sample(UnitKind::Sigmoid, 0.0, &mut rng) == Event::Bits(1))
            .count();
        let mean = ones as f64 / n as f64;
        assert!((mean - 0.5).abs() < 0.005, "{mean}");
    }

    #[test]
    fn relusum_sample_mean() {
        let kind = UnitKind::ReluSum(6);
        let mut rng = RngStream::new(8);
        let n = 50_000;
        let total: f64 = (0..n).map(|_| kind.encode(&unit_sample(kind, 2.3, &mut rng))).sum();
        // variance of the count is at most k/4
        let bound = 3.0 * (6.0f64 / 4.0 / n as f64).sqrt();
        assert!((total / n as f64 - kind.mean(2.3)).abs() < bound);
    }

    #[test]
    fn identity_delta_chain() {
        let spec = NetworkSpec::chain(2, &[(UnitKind::Delta, 2), (UnitKind::Delta, 2)]);
        let eye = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]];
        let net = crate::model::Network::from_params(spec, vec![eye.clone(), eye]).unwrap();
        let x = [0.25, -3.0];
        let det = forward_deterministic(&net, &x).unwrap();
        assert_eq!(det.output(), &x);
        let mut rng = RngStream::new(0);
        let sam = forward_sample(&net, &x, &mut rng).unwrap();
        assert_eq!(sam.states, det.states);
        assert_eq!(sam.pre, det.pre);
    }

    #[test]
    fn single_sigmoid_unit() {
        let spec = NetworkSpec::chain(1, &[(UnitKind::Sigmoid, 1)]);
        let net = crate::model::Network::from_params(spec, vec![vec![vec![1.0, 0.0]]]).unwrap();
        assert_eq!(forward_deterministic(&net, &[0.0]).unwrap().output(), &[0.5]);
    }

    #[test]
    fn two_layer_hand_composed() {
        let spec = NetworkSpec::chain(2, &[(UnitKind::Tanh, 2), (UnitKind::Sigmoid, 1)]);
        let p = vec![
            vec![vec![0.3, -0.7, 0.1], vec![1.1, 0.4, -0.2]],
            vec![vec![0.9, -1.3, 0.05]],
        ];
        let net = crate::model::Network::from_params(spec, p).unwrap();
        let x = [0.6, -1.4];
        let h0 = (0.3 * 0.6 + -0.7 * -1.4 + 0.1f64).tanh();
        let h1 = (1.1 * 0.6 + 0.4 * -1.4 + -0.2f64).tanh();
        let y = sigmoid(0.9 * h0 + -1.3 * h1 + 0.05);
        let out = forward_deterministic(&net, &x).unwrap().output()[0];
        assert_abs_diff_eq!(out, y, epsilon = 1e-15);
    }

    #[test]
    fn fixed_seed_reproducible() {
        let spec = NetworkSpec::chain(3, &[(UnitKind::Sigmoid, 4), (UnitKind::ReluSum(3), 3), (UnitKind::Tanh, 2)]);
        let net = crate::model::Network::new(spec, crate::model::Init { scale: 1.0, seed: 2 }).unwrap();
        let x = [0.1, 0.2, 0.3];
        let a = forward_sample(&net, &x, &mut RngStream::new(77)).unwrap();
        let b = forward_sample(&net, &x, &mut RngStream::new(77)).unwrap();
        assert_eq!(a, b);
        assert_eq!(trace_of_assignment(&net, &a.to_assignment().unwrap()).unwrap(), a);
    }

    #[test]
    fn dimension_mismatch() {
        let spec = NetworkSpec::chain(3, &[(UnitKind::Sigmoid, 1)]);
        let net = crate::model::Network::zeros(spec).unwrap();
        assert!(forward_deterministic(&net, &[1.0]).is_err());
        assert!(forward_sample(&net, &[1.0], &mut RngStream::new(0)).is_err());
    }

    #[test]
    fn forward_from_start_zero_is_deterministic_pass() {
        let spec = NetworkSpec::chain(2, &[(UnitKind::Sigmoid, 3), (UnitKind::Sigmoid, 2)]);
        let net = crate::model::Network::new(spec, crate::model::Init { scale: 1.0, seed: 9 }).unwrap();
        let x = [0.5, -0.5];
        assert_eq!(
            forward_from(&net, &x, &[], 0).unwrap(),
            forward_deterministic(&net, &x).unwrap()
        );
    }
}
