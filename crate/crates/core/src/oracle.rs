//! Brute-force references for small networks and the verification suite
//! behind `stochnet oracle`.
//!
//! Everything here enumerates hidden configurations exactly, so it is only
//! usable while the enumerated layers hold at most
//! [`MAX_ENUM_SITES`](crate::inference::MAX_ENUM_SITES) binary sites.

use crate::data::Example;
use crate::inference::{
    enumerate_layers, enumerate_posterior, gibbs_clamped, mc_marginals, ClampSet, GibbsConfig, InferenceError,
};
use crate::learning::{bn_step, ebp_step, output_score, surrogate_layer_gradient, surrogate_log_likelihood, deterministic_log_likelihood};
use crate::model::{Event, Init, Network, NetworkSpec, Params, UnitKind};
use crate::rng::RngStream;

fn zeros_like(net: &Network) -> Params {
    net.params()
        .iter()
        .map(|l| l.iter().map(|w| vec![0.0; w.len()]).collect())
        .collect()
}

/// `p(z_L | x)`, hidden states and output pre-activations of one configuration.
type HiddenConfig = (f64, Vec<Vec<f64>>, Vec<f64>);

fn hidden_configs(net: &Network, x: &[f64]) -> Result<Vec<HiddenConfig>, InferenceError> {
    let out = net.output_layer();
    Ok(enumerate_layers(net, x, out)?
        .into_iter()
        .map(|c| {
            let a = (0..net.output_count())
                .map(|v| net.preactivation(out, v, x, &c.states))
                .collect();
            (c.prob, c.states, a)
        })
        .collect())
}

fn target_score(net: &Network, y: &[f64], a: &[f64]) -> f64 {
    let kind = net.kind(net.output_layer());
    y.iter().zip(a).map(|(&t, &a)| output_score(kind, t, a)).sum()
}

/// `ln p(y | x) = ln Σ_z p(z | x) p(y | z)`.
pub fn exact_log_likelihood(net: &Network, ex: &Example) -> Result<f64, InferenceError> {
    let terms: Vec<(f64, f64)> = hidden_configs(net, &ex.x)?
        .into_iter()
        .filter(|(p, _, _)| *p > 0.0)
        .map(|(p, _, a)| (p.ln(), target_score(net, &ex.y, &a)))
        .collect();
    let m = terms.iter().map(|(lp, s)| lp + s).fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return Ok(m);
    }
    Ok(m + terms.iter().map(|(lp, s)| (lp + s - m).exp()).sum::<f64>().ln())
}

/// The Jensen bound `Σ_z p(z | x) ln p(y | z)`.
pub fn jensen_bound(net: &Network, ex: &Example) -> Result<f64, InferenceError> {
    Ok(hidden_configs(net, &ex.x)?
        .iter()
        .filter(|(p, _, _)| *p > 0.0)
        .map(|(p, _, a)| p * target_score(net, &ex.y, a))
        .sum())
}

/// Bias-augmented input of output unit `v` given the hidden states.
fn output_inputs(net: &Network, x: &[f64], states: &[Vec<f64>], v: usize) -> Vec<f64> {
    net.gather_inputs(net.output_layer(), v, x, states)
}

/// Gradient of the Jensen bound with respect to the output-layer parameters:
/// `Σ_z p(z | x) (ξ(y_v) - E[ξ(y_v) | z]) · z`. Other layers are zero.
pub fn jensen_bound_output_gradient(net: &Network, ex: &Example) -> Result<Params, InferenceError> {
    let out = net.output_layer();
    let kind = net.kind(out);
    let mut g = zeros_like(net);
    for (p, states, a) in hidden_configs(net, &ex.x)? {
        for v in 0..net.output_count() {
            let z = output_inputs(net, &ex.x, &states, v);
            let e = ex.y[v] - kind.mean(a[v]);
            for (gk, zk) in g[out][v].iter_mut().zip(&z) {
                *gk += p * e * zk;
            }
        }
    }
    Ok(g)
}

/// Expectation of the stochastic output gradient `(ξ(y) - ξ(ŷ)) · ẑ_L`,
/// weighting every hidden configuration and every output event `ŷ_v` by its
/// exact probability.
pub fn expected_bn_output_gradient(net: &Network, ex: &Example) -> Result<Params, InferenceError> {
    let out = net.output_layer();
    let kind = net.kind(out);
    let mut g = zeros_like(net);
    for (p, states, a) in hidden_configs(net, &ex.x)? {
        for v in 0..net.output_count() {
            let z = output_inputs(net, &ex.x, &states, v);
            let outcomes: Vec<(f64, f64)> = match kind {
                UnitKind::Delta => vec![(1.0, a[v])],
                _ => kind
                    .enumerate_events()
                    .iter()
                    .map(|e| (kind.log_prob(e, a[v]).exp(), kind.encode(e)))
                    .collect(),
            };
            for (q, yhat) in outcomes {
                let grad = crate::learning::bn_output_gradient(ex.y[v], yhat, &z);
                for (gk, d) in g[out][v].iter_mut().zip(grad) {
                    *gk += p * q * d;
                }
            }
        }
    }
    Ok(g)
}

/// Per-layer surrogate objective: `Σ_{z_{<l}} p(z_{<l} | x) ln p̃(y | z_{<l})`
/// with layers `l..` evaluated deterministically.
pub fn surrogate_objective(net: &Network, ex: &Example, layer: usize) -> Result<f64, InferenceError> {
    let mut total = 0.0;
    for c in enumerate_layers(net, &ex.x, layer)? {
        if c.prob > 0.0 {
            total += c.prob * surrogate_log_likelihood(net, ex, &c.states, layer)?;
        }
    }
    Ok(total)
}

/// Exact expectation of the stochastic hidden gradient of `layer` over its
/// enumerated inputs. Only layer `layer` is non-zero.
pub fn expected_surrogate_gradient(net: &Network, ex: &Example, layer: usize) -> Result<Params, InferenceError> {
    let mut g = zeros_like(net);
    for c in enumerate_layers(net, &ex.x, layer)? {
        let part = surrogate_layer_gradient(net, ex, &c.states, layer)?;
        for (gu, pu) in g[layer].iter_mut().zip(&part) {
            for (a, b) in gu.iter_mut().zip(pu) {
                *a += c.prob * b;
            }
        }
    }
    Ok(g)
}

/// Central differences `(f(θ + h e_i) - f(θ - h e_i)) / 2h` for every
/// parameter of the given layers; other entries are zero.
pub fn finite_difference<E>(
    net: &Network,
    layers: std::ops::Range<usize>,
    h: f64,
    f: impl Fn(&Network) -> Result<f64, E>,
) -> Result<Params, E> {
    let mut g = zeros_like(net);
    let mut probe = net.clone();
    for l in layers {
        for u in 0..net.units(l) {
            for k in 0..net.weights(l, u).len() {
                let w = net.params()[l][u][k];
                probe.params_mut()[l][u][k] = w + h;
                let up = f(&probe)?;
                probe.params_mut()[l][u][k] = w - h;
                let down = f(&probe)?;
                probe.params_mut()[l][u][k] = w;
                g[l][u][k] = (up - down) / (2.0 * h);
            }
        }
    }
    Ok(g)
}

/// `max |a - b| / max |b|`, or the absolute error when `b` is all zeros.
pub fn relative_error(a: &Params, b: &Params) -> f64 {
    let (mut diff, mut scale) = (0.0f64, 0.0f64);
    for (x, y) in a.iter().flatten().flatten().zip(b.iter().flatten().flatten()) {
        diff = diff.max((x - y).abs());
        scale = scale.max(y.abs());
    }
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// A random dense chain with uniform weights in `[-scale, scale]`.
pub fn random_net(input: usize, layers: &[(UnitKind, usize)], scale: f64, seed: u64) -> Network {
    Network::new(NetworkSpec::chain(input, layers), Init { scale, seed }).expect("valid chain")
}

/// A random example whose targets are legal for the output kind.
pub fn random_example(net: &Network, rng: &mut RngStream) -> Example {
    let kind = net.kind(net.output_layer());
    Example {
        x: (0..net.input_count()).map(|_| 2.0 * rng.uniform() - 1.0).collect(),
        y: (0..net.output_count())
            .map(|_| match kind {
                UnitKind::Delta => 2.0 * rng.uniform() - 1.0,
                k => crate::data::label_value(k, rng.bernoulli(0.5)),
            })
            .collect(),
    }
}

/// Outcome of one oracle check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    fn new(name: impl Into<String>, max_error: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            max_error,
            tolerance,
            passed: max_error <= tolerance,
        }
    }
}

impl std::fmt::Display for CheckResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {}: max error {:.3e} (tolerance {:.0e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.max_error,
            self.tolerance
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub seed: u64,
    /// Random networks per sampling check.
    pub nets: usize,
    pub mc_samples: usize,
    pub gibbs: GibbsConfig,
    pub jensen_nets: usize,
    pub fd_step: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            nets: 5,
            mc_samples: 100_000,
            gibbs: GibbsConfig {
                burn_in: 1000,
                sweeps: 100_000,
                thinning: 1,
            },
            jensen_nets: 100,
            fd_step: 1e-5,
        }
    }
}

const KINDS: [UnitKind; 3] = [UnitKind::Sigmoid, UnitKind::Tanh, UnitKind::ReluSum(3)];

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `exp(-E)` against the product of conditionals on every assignment.
pub fn check_energy(net: &Network, x: &[f64]) -> Result<f64, InferenceError> {
    let table = enumerate_posterior(net, x)?;
    let mut worst = 0.0f64;
    for (asg, _) in &table.entries {
        let product: f64 = net.log_conditionals(asg)?.iter().flatten().map(|lp| lp.exp()).product();
        worst = worst.max(((-net.energy(asg)?).exp() - product).abs());
    }
    Ok(worst)
}

/// Monte-Carlo output marginals against enumeration.
pub fn check_sampler(net: &Network, x: &[f64], samples: usize, rng: &mut RngStream) -> Result<f64, InferenceError> {
    let exact = enumerate_posterior(net, x)?.output_marginals();
    let mc = mc_marginals(net, x, samples, rng)?;
    Ok(max_abs_diff(&mc.outputs, &exact))
}

/// Gibbs marginals (outputs and hidden sites) against exact conditionals.
pub fn check_gibbs(
    net: &Network,
    x: &[f64],
    clamp: &ClampSet,
    cfg: GibbsConfig,
    rng: &mut RngStream,
) -> Result<f64, InferenceError> {
    let table = enumerate_posterior(net, x)?;
    let field = gibbs_clamped(net, x, clamp, cfg, rng)?;
    let exact_out = table
        .conditional_output_marginals(clamp)
        .ok_or(InferenceError::NonErgodic { unit: 0 })?;
    let exact_hidden = table.conditional_hidden_marginals(clamp).unwrap_or_default();
    let mut worst = max_abs_diff(&field.outputs, &exact_out);
    if let Some(h) = &field.hidden {
        for (a, b) in h.iter().zip(&exact_hidden) {
            worst = worst.max(max_abs_diff(a, b));
        }
    }
    Ok(worst)
}

/// Runs every check on freshly drawn tiny networks.
pub fn run_suite(cfg: &SuiteConfig) -> Result<Vec<CheckResult>, InferenceError> {
    let root = RngStream::new(cfg.seed);
    let mut results = Vec::new();

    let mut worst = 0.0f64;
    for (i, kinds) in [
        [UnitKind::Sigmoid, UnitKind::Tanh, UnitKind::Sigmoid],
        [UnitKind::ReluSum(3), UnitKind::Delta, UnitKind::Tanh],
        [UnitKind::Tanh, UnitKind::ReluSum(2), UnitKind::Sigmoid],
    ]
    .iter()
    .enumerate()
    {
        let mut rng = root.split(1).split(i as u64);
        let net = random_net(2, &[(kinds[0], 2), (kinds[1], 2), (kinds[2], 2)], 1.5, rng.next_word());
        let ex = random_example(&net, &mut rng);
        worst = worst.max(check_energy(&net, &ex.x)?);
    }
    results.push(CheckResult::new("energy identity exp(-E) = Π p", worst, 1e-12));

    let mut worst = 0.0f64;
    for i in 0..cfg.nets {
        let mut rng = root.split(2).split(i as u64);
        let net = random_net(3, &[(UnitKind::Sigmoid, 4), (UnitKind::Sigmoid, 4), (UnitKind::Sigmoid, 3)], 2.0, rng.next_word());
        let ex = random_example(&net, &mut rng);
        worst = worst.max(check_sampler(&net, &ex.x, cfg.mc_samples, &mut rng)?);
    }
    results.push(CheckResult::new(format!("ancestral marginals vs enumeration ({} nets)", cfg.nets), worst, 0.005));

    let mut worst = 0.0f64;
    for (i, kind) in KINDS.iter().chain(&[UnitKind::Delta]).enumerate() {
        let mut rng = root.split(3).split(i as u64);
        let out = if *kind == UnitKind::ReluSum(3) { UnitKind::Sigmoid } else { *kind };
        let net = random_net(2, &[(*kind, 3), (out, 2)], 1.5, rng.next_word());
        let ex = random_example(&net, &mut rng);
        let expected = expected_bn_output_gradient(&net, &ex)?;
        let analytic = jensen_bound_output_gradient(&net, &ex)?;
        worst = worst.max(relative_error(&expected, &analytic));
    }
    results.push(CheckResult::new("E[output gradient] = bound gradient", worst, 1e-10));

    for (i, kind) in KINDS.iter().enumerate() {
        let mut rng = root.split(4).split(i as u64);
        let net = random_net(2, &[(*kind, 3), (*kind, 2), (UnitKind::Sigmoid, 2)], 1.0, rng.next_word());
        let ex = random_example(&net, &mut rng);
        let analytic = ebp_step(&net, std::slice::from_ref(&ex))?.grads;
        let fd = finite_difference(&net, 0..net.layer_count(), cfg.fd_step, |n| deterministic_log_likelihood(n, &ex))?;
        results.push(CheckResult::new(format!("EBP gradient vs finite differences ({kind})"), relative_error(&analytic, &fd), 1e-5));
        let mut worst = 0.0f64;
        for layer in 0..net.layer_count() {
            let analytic = expected_surrogate_gradient(&net, &ex, layer)?;
            let fd = finite_difference(&net, layer..layer + 1, cfg.fd_step, |n| surrogate_objective(n, &ex, layer))?;
            worst = worst.max(relative_error(&analytic, &fd));
        }
        results.push(CheckResult::new(format!("per-layer surrogate gradient vs finite differences ({kind})"), worst, 1e-5));
    }

    let mut worst = f64::NEG_INFINITY;
    for i in 0..cfg.jensen_nets {
        let mut rng = root.split(5).split(i as u64);
        let net = random_jensen_net(&mut rng);
        let ex = random_example(&net, &mut rng);
        worst = worst.max(jensen_bound(&net, &ex)? - exact_log_likelihood(&net, &ex)?);
    }
    results.push(CheckResult::new(format!("Jensen bound <= ln p(y|x) ({} nets, max bound - ll)", cfg.jensen_nets), worst, 1e-12));

    let mut worst = 0.0f64;
    for i in 0..cfg.nets.min(3) {
        let mut rng = root.split(6).split(i as u64);
        let net = random_net(2, &[(UnitKind::Sigmoid, 3), (UnitKind::Sigmoid, 3), (UnitKind::Sigmoid, 3)], 1.5, rng.next_word());
        let ex = random_example(&net, &mut rng);
        worst = worst.max(check_gibbs(&net, &ex.x, &ClampSet::new(3), cfg.gibbs, &mut rng)?);
        let mut clamp = ClampSet::new(3);
        clamp.set(0, Event::Bits(1));
        clamp.set(2, Event::Bits(0));
        worst = worst.max(check_gibbs(&net, &ex.x, &clamp, cfg.gibbs, &mut rng)?);
    }
    results.push(CheckResult::new("Gibbs marginals vs exact conditionals", worst, 0.01));

    let mut rng = root.split(7);
    let net = random_net(2, &[(UnitKind::Delta, 3), (UnitKind::Delta, 2)], 1.0, rng.next_word());
    let ex = random_example(&net, &mut rng);
    let same = bn_step(&net, &ex, &mut rng.split(0))?.grads == ebp_step(&net, std::slice::from_ref(&ex))?.grads;
    results.push(CheckResult::new("all-Delta BN step = EBP step", if same { 0.0 } else { f64::INFINITY }, 0.0));

    Ok(results)
}

fn random_jensen_net(rng: &mut RngStream) -> Network {
    let hidden = [UnitKind::Sigmoid, UnitKind::Tanh, UnitKind::ReluSum(2), UnitKind::Delta];
    let outputs = [UnitKind::Sigmoid, UnitKind::Tanh];
    let depth = 1 + rng.below(2) as usize;
    let mut layers: Vec<(UnitKind, usize)> = (0..depth)
        .map(|_| (hidden[rng.below(4) as usize], 1 + rng.below(3) as usize))
        .collect();
    layers.push((outputs[rng.below(2) as usize], 1 + rng.below(2) as usize));
    let scale = 0.5 + 2.5 * rng.uniform();
    random_net(1 + rng.below(3) as usize, &layers, scale, rng.next_word())
}

/// Oracle checks for one user-supplied network (energy, sampler, Jensen bound).
pub fn check_network(net: &Network, ex: &Example, samples: usize, seed: u64) -> Result<Vec<CheckResult>, InferenceError> {
    let mut rng = RngStream::new(seed);
    Ok(vec![
        CheckResult::new("energy identity exp(-E) = Π p", check_energy(net, &ex.x)?, 1e-12),
        CheckResult::new("ancestral marginals vs enumeration", check_sampler(net, &ex.x, samples, &mut rng)?, 0.005),
        CheckResult::new(
            "Jensen bound <= ln p(y|x)",
            jensen_bound(net, ex)? - exact_log_likelihood(net, ex)?,
            1e-12,
        ),
    ])
}
