//! Predictions and task metrics for trained networks.

use rayon::prelude::*;

use crate::data::Example;
use crate::inference::{iou, max_marginal_decide, mc_marginals, InferenceError, MarginalField};
use crate::model::{Event, ModelError, Network, UnitKind};
use crate::propagation::forward_deterministic;
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// Fraction of examples whose whole output vector is decided correctly.
    Accuracy,
    /// Mean per-image intersection over union of the foreground masks.
    Iou,
}

/// How output marginals are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    /// `p(y_v | ȳ_{L})` from the sequential approximation (the FFN reading).
    Deterministic,
    /// Monte-Carlo marginals of the Bayesian network from ancestral samples.
    Sampled { samples: usize },
}

impl std::str::FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "accuracy" => Ok(Metric::Accuracy),
            "iou" => Ok(Metric::Iou),
            _ => Err(format!("unknown metric {s:?} (accuracy|iou)")),
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Metric::Accuracy => "accuracy",
            Metric::Iou => "iou",
        })
    }
}

/// Probability of the positive output event given the deterministic trace.
pub fn deterministic_marginals(net: &Network, x: &[f64]) -> Result<MarginalField, ModelError> {
    let trace = forward_deterministic(net, x)?;
    let kind = net.kind(net.output_layer());
    let outputs = trace
        .output_pre()
        .iter()
        .map(|&a| match kind {
            UnitKind::Delta => (a > 0.5) as u8 as f64,
            _ => kind.log_prob(&Event::Bits(1), a).exp(),
        })
        .collect();
    Ok(MarginalField::new(outputs, 1).with_grid(net.spec().output().grid))
}

pub fn predict(net: &Network, x: &[f64], decision: Decision, rng: &mut RngStream) -> Result<MarginalField, InferenceError> {
    match decision {
        Decision::Deterministic => Ok(deterministic_marginals(net, x)?),
        Decision::Sampled { samples } => mc_marginals(net, x, samples, rng),
    }
}

/// Score of one decided output vector against encoded targets.
pub fn score(metric: Metric, decided: &[bool], target: &[f64]) -> Result<f64, InferenceError> {
    let truth: Vec<bool> = target.iter().map(|&t| t > 0.5).collect();
    match metric {
        Metric::Iou => iou(decided, &truth),
        Metric::Accuracy => {
            if decided.len() != truth.len() {
                return Err(InferenceError::ShapeMismatch {
                    pred: decided.len(),
                    gt: truth.len(),
                });
            }
            Ok((decided == truth.as_slice()) as u8 as f64)
        }
    }
}

/// Mean metric over a dataset. Example `i` uses substream `i` of `seed`.
pub fn evaluate(
    net: &Network,
    examples: &[Example],
    metric: Metric,
    decision: Decision,
    seed: u64,
) -> Result<f64, InferenceError> {
    if examples.is_empty() {
        return Ok(f64::NAN);
    }
    let root = RngStream::new(seed);
    let scores = examples
        .par_iter()
        .enumerate()
        .map(|(i, ex)| {
            let m = predict(net, &ex.x, decision, &mut root.split(i as u64))?;
            score(metric, &max_marginal_decide(&m), &ex.y)
        })
        .collect::<Result<Vec<f64>, _>>()?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Init, NetworkSpec};

    #[test]
    fn zero_net_is_half() {
        let net = Network::zeros(NetworkSpec::chain(2, &[(UnitKind::Tanh, 3)])).unwrap();
        let m = deterministic_marginals(&net, &[1.0, 2.0]).unwrap();
        assert!(m.outputs.iter().all(|&p| (p - 0.5).abs() < 1e-15));
    }

    #[test]
    fn scores() {
        assert_eq!(score(Metric::Accuracy, &[true, false], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(score(Metric::Accuracy, &[true, true], &[1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(score(Metric::Accuracy, &[true], &[1.0]).unwrap(), 1.0);
        assert_eq!(score(Metric::Iou, &[true, true], &[1.0, -1.0]).unwrap(), 0.5);
    }

    #[test]
    fn evaluate_reproducible() {
        let spec = NetworkSpec::chain(2, &[(UnitKind::Sigmoid, 3), (UnitKind::Sigmoid, 1)]);
        let net = Network::new(spec, Init { scale: 2.0, seed: 3 }).unwrap();
        let data: Vec<Example> = (0..6)
            .map(|i| Example {
                x: vec![i as f64 * 0.3, 1.0],
                y: vec![(i % 2) as f64],
            })
            .collect();
        let d = Decision::Sampled { samples: 50 };
        let a = evaluate(&net, &data, Metric::Accuracy, d, 1).unwrap();
        assert_eq!(a, evaluate(&net, &data, Metric::Accuracy, d, 1).unwrap());
        assert!((0.0..=1.0).contains(&a));
    }
}
