//! Gradients of the conditional log-likelihood.
//!
//! Two trainers share one backward pass:
//!
//! * error back-propagation (EBP) runs it on the deterministic trace with
//!   output error `y - ȳ`, which is the exact gradient of the sequential
//!   approximation's log-likelihood;
//! * the stochastic learner runs it on an ancestrally sampled trace with
//!   output error `y - ŷ`. For the output layer this is the stochastic
//!   gradient `∂f(y, ẑ_L)/∂θ - ∂f(ŷ, ẑ_L)/∂θ` of the Jensen bound
//!   `Σ_{z_L} p(z_L|x) ln p(y|z_L)`; for a hidden unit it is
//!   `δ_v · ∂E[z_v | ẑ_{l-1}]/∂a · ẑ_{l-1}` with δ back-propagated through
//!   the feed-forward approximation of the layers above, evaluated at the
//!   sampled pre-activations.
//!
//! For `Delta` outputs the log-likelihood is replaced by the score
//! `-(y - a)^2 / 2`, whose gradient `y - a` is what both trainers use.

mod train;

pub use train::{train, MetricsRow, TrainConfig, TrainError, TrainLog, TrainMode};

use crate::data::Example;
use crate::model::{source_value, Event, ModelError, Network, Params, Source, UnitKind};
use crate::propagation::{forward_deterministic, forward_from, forward_sample, ForwardTrace};
use crate::rng::RngStream;

/// Per-parameter gradient sums with the number of examples behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientAccumulator {
    pub grads: Params,
    pub samples: usize,
}

impl GradientAccumulator {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            grads: net
                .params()
                .iter()
                .map(|l| l.iter().map(|w| vec![0.0; w.len()]).collect())
                .collect(),
            samples: 0,
        }
    }

    /// Whether the buffer has exactly the shape of the network's θ.
    pub fn matches(&self, net: &Network) -> bool {
        self.grads.len() == net.params().len()
            && self.grads.iter().zip(net.params()).all(|(g, p)| {
                g.len() == p.len() && g.iter().zip(p).all(|(gw, pw)| gw.len() == pw.len())
            })
    }

    pub fn merge(&mut self, other: &GradientAccumulator) {
        for (a, b) in self.grads.iter_mut().flatten().zip(other.grads.iter().flatten()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self.samples += other.samples;
    }

    /// Average gradient over the accumulated examples.
    pub fn mean(&self) -> Params {
        let n = self.samples.max(1) as f64;
        self.grads
            .iter()
            .map(|l| l.iter().map(|w| w.iter().map(|g| g / n).collect()).collect())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.grads.iter().flatten().flatten().fold(0.0, |m, g| m.max(g.abs()))
    }
}

/// Back-propagated errors `δ_lv`, one per unit, with respect to unit outputs.
/// The output layer holds the output error with respect to pre-activations.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSignal {
    pub deltas: Vec<Vec<f64>>,
}

fn target_event(kind: UnitKind, target: f64) -> Event {
    kind.event_for_value(target)
        .unwrap_or(Event::Value(f64::NAN))
}

/// `ln p(y_v | a)` for binary outputs; `-(y - a)^2 / 2` for `Delta` outputs.
pub fn output_score(kind: UnitKind, target: f64, a: f64) -> f64 {
    match kind {
        UnitKind::Delta => -0.5 * (target - a) * (target - a),
        _ => kind.log_prob(&target_event(kind, target), a),
    }
}

/// Output error of the stochastic learner, `ξ(y) - ξ(ŷ)`.
pub fn bn_output_error(target: f64, sample: f64) -> f64 {
    target - sample
}

/// Stochastic gradient of one output unit with log-linear `f(y, z) = ξ(y)·⟨z, w⟩`:
/// `(ξ(y) - ξ(ŷ)) · z` over the bias-augmented input `z`.
pub fn bn_output_gradient(target: f64, sample: f64, inputs: &[f64]) -> Vec<f64> {
    let e = bn_output_error(target, sample);
    inputs.iter().map(|z| e * z).collect()
}

/// Stochastic gradient of one hidden unit:
/// `δ · dE[ξ | a]/da · z` over the bias-augmented sampled input `z`, with
/// `a = ⟨z, w⟩`. For sigmoid units the middle factor is `e^a / (1 + e^a)^2`.
pub fn bn_hidden_gradient(kind: UnitKind, delta: f64, inputs: &[f64], a: f64) -> Vec<f64> {
    let g = delta * kind.mean_derivative(a);
    inputs.iter().map(|z| g * z).collect()
}

/// Shared backward pass over a trace, given the output error (with respect
/// to output pre-activations). Layers below `stop` are left untouched.
pub fn backward(net: &Network, trace: &ForwardTrace, output_error: &[f64], stop: usize) -> (Params, ErrorSignal) {
    let out = net.output_layer();
    let mut grads: Params = net
        .params()
        .iter()
        .map(|l| l.iter().map(|w| vec![0.0; w.len()]).collect())
        .collect();
    let mut deltas: Vec<Vec<f64>> = (0..net.layer_count()).map(|l| vec![0.0; net.units(l)]).collect();
    deltas[out].copy_from_slice(output_error);
    for l in (stop..=out).rev() {
        let kind = net.kind(l);
        for u in 0..net.units(l) {
            let g = if l == out {
                output_error[u]
            } else {
                deltas[l][u] * kind.mean_derivative(trace.pre[l][u])
            };
            let w = net.weights(l, u);
            let srcs = net.inputs(l, u);
            let gw = &mut grads[l][u];
            for (k, &s) in srcs.iter().enumerate() {
                gw[k] += g * source_value(&trace.input, &trace.states, s);
                if let Source::Unit(sl, su) = s {
                    let sl = sl as usize;
                    if sl >= stop {
                        deltas[sl][su as usize] += g * w[k];
                    }
                }
            }
            gw[srcs.len()] += g;
        }
    }
    (grads, ErrorSignal { deltas })
}

fn check_example(net: &Network, ex: &Example) -> Result<(), ModelError> {
    if ex.y.len() != net.output_count() {
        return Err(ModelError::Dimension {
            what: "target vector",
            expected: net.output_count(),
            got: ex.y.len(),
        });
    }
    Ok(())
}

/// Exact gradient of the deterministic network's log-likelihood for one example.
pub fn ebp_gradient(net: &Network, ex: &Example) -> Result<Params, ModelError> {
    check_example(net, ex)?;
    let trace = forward_deterministic(net, &ex.x)?;
    let err: Vec<f64> = ex.y.iter().zip(trace.output()).map(|(t, m)| t - m).collect();
    Ok(backward(net, &trace, &err, 0).0)
}

/// One-sample stochastic gradient: one sampled forward pass, one backward pass.
pub fn bn_gradient(net: &Network, ex: &Example, rng: &mut RngStream) -> Result<Params, ModelError> {
    check_example(net, ex)?;
    let trace = forward_sample(net, &ex.x, rng)?;
    Ok(bn_gradient_from_trace(net, &trace, &ex.y))
}

/// Backward pass of the stochastic learner on a given sampled trace.
pub fn bn_gradient_from_trace(net: &Network, trace: &ForwardTrace, target: &[f64]) -> Params {
    let err: Vec<f64> = target
        .iter()
        .zip(trace.output())
        .map(|(&t, &s)| bn_output_error(t, s))
        .collect();
    backward(net, trace, &err, 0).0
}

fn accumulate(net: &Network, grads: impl Iterator<Item = Params>) -> GradientAccumulator {
    let mut acc = GradientAccumulator::zeros_like(net);
    for g in grads {
        for (a, b) in acc.grads.iter_mut().flatten().zip(g.iter().flatten()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        acc.samples += 1;
    }
    acc
}

/// Summed EBP gradient over a batch.
pub fn ebp_step(net: &Network, batch: &[Example]) -> Result<GradientAccumulator, ModelError> {
    let grads = batch.iter().map(|ex| ebp_gradient(net, ex)).collect::<Result<Vec<_>, _>>()?;
    Ok(accumulate(net, grads.into_iter()))
}

/// Stochastic-learner gradient for one example.
pub fn bn_step(net: &Network, ex: &Example, rng: &mut RngStream) -> Result<GradientAccumulator, ModelError> {
    let g = bn_gradient(net, ex, rng)?;
    Ok(accumulate(net, std::iter::once(g)))
}

/// Log-likelihood (score) of the target under the sequential approximation.
pub fn deterministic_log_likelihood(net: &Network, ex: &Example) -> Result<f64, ModelError> {
    check_example(net, ex)?;
    let trace = forward_deterministic(net, &ex.x)?;
    Ok(output_log_score(net, trace.output_pre(), &ex.y))
}

pub(crate) fn output_log_score(net: &Network, pre: &[f64], target: &[f64]) -> f64 {
    let kind = net.kind(net.output_layer());
    target.iter().zip(pre).map(|(&t, &a)| output_score(kind, t, a)).sum()
}

/// Monte-Carlo estimate of the Jensen bound `E_{p(z|x)}[ln p(y | z)]` from
/// `n` ancestral samples of the hidden layers.
pub fn lower_bound_estimate(net: &Network, ex: &Example, n: usize, rng: &mut RngStream) -> Result<f64, ModelError> {
    check_example(net, ex)?;
    let kind = net.kind(net.output_layer());
    let mut total = 0.0;
    for _ in 0..n.max(1) {
        let trace = forward_sample(net, &ex.x, rng)?;
        total += ex
            .y
            .iter()
            .zip(trace.output_pre())
            .map(|(&t, &a)| kind.log_prob(&target_event(kind, t), a))
            .sum::<f64>();
    }
    Ok(total / n.max(1) as f64)
}

/// `ln p̃(y | z̄_l(z_{<l}))`: the states of layers below `layer` are fixed at
/// `lower` and everything from `layer` up is evaluated deterministically.
pub fn surrogate_log_likelihood(net: &Network, ex: &Example, lower: &[Vec<f64>], layer: usize) -> Result<f64, ModelError> {
    check_example(net, ex)?;
    let trace = forward_from(net, &ex.x, lower, layer)?;
    Ok(output_log_score(net, trace.output_pre(), &ex.y))
}

/// Gradient of [`surrogate_log_likelihood`] with respect to the parameters of
/// `layer` (the per-layer split variant of the stochastic learner).
pub fn surrogate_layer_gradient(
    net: &Network,
    ex: &Example,
    lower: &[Vec<f64>],
    layer: usize,
) -> Result<Vec<Vec<f64>>, ModelError> {
    check_example(net, ex)?;
    let trace = forward_from(net, &ex.x, lower, layer)?;
    let err: Vec<f64> = ex.y.iter().zip(trace.output()).map(|(t, m)| t - m).collect();
    let (mut grads, _) = backward(net, &trace, &err, layer);
    Ok(std::mem::take(&mut grads[layer]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Init, NetworkSpec};
    use approx::assert_abs_diff_eq;

    fn ex(x: &[f64], y: &[f64]) -> Example {
        Example {
            x: x.to_vec(),
            y: y.to_vec(),
        }
    }

    #[test]
    fn logistic_regression_gradient() {
        let spec = NetworkSpec::chain(3, &[(UnitKind::Sigmoid, 1)]);
        let net = Network::zeros(spec).unwrap();
        let g = ebp_gradient(&net, &ex(&[0.2, -1.0, 3.0], &[1.0])).unwrap();
        assert_eq!(g[0][0], vec![0.1, -0.5, 1.5, 0.5]);
    }

    #[test]
    fn output_gradient_cases() {
        let z = [1.0, 0.0, 1.0, 1.0];
        assert!(bn_output_gradient(1.0, 1.0, &z).iter().all(|&g| g == 0.0));
        assert_eq!(bn_output_gradient(1.0, 0.0, &z), z.to_vec());
        assert_eq!(bn_output_gradient(-1.0, 1.0, &[1.0, -1.0]), vec![-2.0, 2.0]);
    }

    #[test]
    fn hidden_gradient_cases() {
        let z = [1.0, 0.0, 1.0];
        assert_eq!(bn_hidden_gradient(UnitKind::Sigmoid, 1.0, &z, 0.0), vec![0.25, 0.0, 0.25]);
        assert!(bn_hidden_gradient(UnitKind::Sigmoid, 0.0, &z, 1.3).iter().all(|&g| g == 0.0));
        let a: f64 = 0.7;
        let t = bn_hidden_gradient(UnitKind::Tanh, 2.0, &[1.0], a)[0];
        assert_abs_diff_eq!(t, 2.0 * (1.0 - a.tanh().powi(2)), epsilon = 1e-15);
    }

    #[test]
    fn backward_uses_unit_rules() {
        let spec = NetworkSpec::chain(2, &[(UnitKind::Sigmoid, 3), (UnitKind::Sigmoid, 2)]);
        let net = Network::new(spec, Init { scale: 1.0, seed: 4 }).unwrap();
        let e = ex(&[0.3, 0.9], &[1.0, 0.0]);
        let mut rng = RngStream::new(8);
        let trace = forward_sample(&net, &e.x, &mut rng).unwrap();
        let g = bn_gradient_from_trace(&net, &trace, &e.y);
        for v in 0..2 {
            let z = net.gather_inputs(1, v, &trace.input, &trace.states);
            assert_eq!(g[1][v], bn_output_gradient(e.y[v], trace.output()[v], &z));
        }
        let err: Vec<f64> = (0..2).map(|v| e.y[v] - trace.output()[v]).collect();
        for u in 0..3 {
            let delta: f64 = (0..2).map(|v| err[v] * net.weights(1, v)[u]).sum();
            let z = net.gather_inputs(0, u, &trace.input, &trace.states);
            let expected = bn_hidden_gradient(UnitKind::Sigmoid, delta, &z, trace.pre[0][u]);
            for (a, b) in g[0][u].iter().zip(&expected) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn accumulator_mirrors_params() {
        let spec = NetworkSpec::chain(2, &[(UnitKind::ReluSum(3), 4), (UnitKind::Tanh, 2)]);
        let net = Network::new(spec, Init::default()).unwrap();
        let batch = vec![ex(&[0.1, 0.2], &[1.0, -1.0]), ex(&[0.4, -0.2], &[-1.0, -1.0])];
        let acc = ebp_step(&net, &batch).unwrap();
        assert!(acc.matches(&net));
        assert_eq!(acc.samples, 2);
        let b = bn_step(&net, &batch[0], &mut RngStream::new(1)).unwrap();
        assert!(b.matches(&net));
    }

    #[test]
    fn bn_step_reproducible() {
        let spec = NetworkSpec::chain(2, &[(UnitKind::Sigmoid, 4), (UnitKind::Sigmoid, 1)]);
        let net = Network::new(spec, Init { scale: 1.0, seed: 1 }).unwrap();
        let e = ex(&[0.5, -0.5], &[1.0]);
        assert_eq!(
            bn_step(&net, &e, &mut RngStream::new(3)).unwrap(),
            bn_step(&net, &e, &mut RngStream::new(3)).unwrap()
        );
    }

    #[test]
    fn wrong_target_length() {
        let spec = NetworkSpec::chain(2, &[(UnitKind::Sigmoid, 1)]);
        let net = Network::zeros(spec).unwrap();
        assert!(ebp_gradient(&net, &ex(&[0.0, 0.0], &[1.0, 0.0])).is_err());
    }

    #[test]
    fn surrogate_at_bottom_is_ebp() {
        let spec = NetworkSpec::chain(2, &[(UnitKind::Tanh, 3), (UnitKind::Sigmoid, 2)]);
        let net = Network::new(spec, Init { scale: 1.0, seed: 2 }).unwrap();
        let e = ex(&[0.5, 1.5], &[0.0, 1.0]);
        let full = ebp_gradient(&net, &e).unwrap();
        assert_eq!(surrogate_layer_gradient(&net, &e, &[], 0).unwrap(), full[0]);
        assert_eq!(
            surrogate_log_likelihood(&net, &e, &[], 0).unwrap(),
            deterministic_log_likelihood(&net, &e).unwrap()
        );
    }
}
