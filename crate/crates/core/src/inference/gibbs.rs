//! Systematic-scan Gibbs sampling of `p(y_d, z | x, y_u)`.
//!
//! Every stochastic hidden site and every unclamped output site is a
//! variable (a `ReluSum(k)` unit contributes `k` sites). The conditional of a
//! site combines its own log-odds with the change it causes in every
//! downstream unit's log-probability; deterministic (`Delta`) units are
//! followed through to the stochastic units they feed. Sweeps alternate
//! between topological and reverse topological order.
//!
//! Marginals are Rao-Blackwellized: at each recorded sweep the estimator
//! adds `p(site on | rest)` instead of the sampled indicator.

use std::collections::BTreeMap;

use super::{ClampSet, InferenceError, MarginalField};
use crate::model::{sigmoid, Event, Network, UnitKind};
use crate::propagation::forward_sample;
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GibbsConfig {
    pub burn_in: usize,
    pub sweeps: usize,
    pub thinning: usize,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self {
            burn_in: 1000,
            sweeps: 10_000,
            thinning: 10,
        }
    }
}

type UnitRef = (usize, usize);

struct Chain<'a> {
    net: &'a Network,
    x: &'a [f64],
    events: Vec<Vec<Event>>,
    states: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    /// Downstream units reading each unit, with the weight index used.
    children: Vec<Vec<Vec<(u32, u32, u32)>>>,
    clamped: Vec<bool>,
    has_delta: bool,
}

impl<'a> Chain<'a> {
    fn new(net: &'a Network, x: &'a [f64], clamp: &ClampSet, rng: &mut RngStream) -> Result<Self, InferenceError> {
        let trace = forward_sample(net, x, rng)?;
        let mut events = trace.events.expect("sampled trace");
        let mut states = trace.states;
        let pre = trace.pre;
        let out = net.output_layer();
        let out_kind = net.kind(out);
        let mut clamped = vec![false; net.output_count()];
        for (v, e) in clamp.iter() {
            if out_kind.log_prob(e, pre[out][v]) == f64::NEG_INFINITY {
                return Err(InferenceError::NonErgodic { unit: v });
            }
            events[out][v] = *e;
            states[out][v] = out_kind.encode(e);
            clamped[v] = true;
        }
        let mut children: Vec<Vec<Vec<(u32, u32, u32)>>> =
            (0..net.layer_count()).map(|l| vec![Vec::new(); net.units(l)]).collect();
        for l in 0..net.layer_count() {
            for u in 0..net.units(l) {
                for (k, s) in net.inputs(l, u).iter().enumerate() {
                    if let crate::model::Source::Unit(pl, pu) = *s {
                        children[pl as usize][pu as usize].push((l as u32, u as u32, k as u32));
                    }
                }
            }
        }
        let has_delta = (0..net.layer_count()).any(|l| net.kind(l) == UnitKind::Delta);
        Ok(Self {
            net,
            x,
            events,
            states,
            pre,
            children,
            clamped,
            has_delta,
        })
    }

    fn is_clamped_output(&self, l: usize, u: usize) -> bool {
        l == self.net.output_layer() && self.clamped[u]
    }

    /// `ln p(site on | rest) - ln p(site off | rest)`.
    fn log_odds(&self, l: usize, u: usize, site: u32) -> f64 {
        let kind = self.net.kind(l);
        let Event::Bits(mask) = self.events[l][u] else {
            unreachable!("stochastic unit holds bits")
        };
        let bit = 1u64 << site;
        let cur_on = mask & bit != 0;
        let dv = kind.encode(&Event::Bits(mask | bit)) - kind.encode(&Event::Bits(mask & !bit));
        let mut lo = kind.site_logit(self.pre[l][u], site);

        let term = |cl: usize, cu: usize, da: f64| -> f64 {
            let ck = self.net.kind(cl);
            let a = self.pre[cl][cu];
            let (a_on, a_off) = if cur_on { (a, a - da) } else { (a + da, a) };
            let e = &self.events[cl][cu];
            ck.log_prob(e, a_on) - ck.log_prob(e, a_off)
        };

        if !self.has_delta {
            for &(cl, cu, k) in &self.children[l][u] {
                let (cl, cu) = (cl as usize, cu as usize);
                let da = self.net.weights(cl, cu)[k as usize] * dv;
                if da != 0.0 {
                    lo += term(cl, cu, da);
                }
            }
            return lo;
        }

        // Accumulate pre-activation changes per descendant in topological
        // order, passing through deterministic units.
        let mut pending: BTreeMap<UnitRef, f64> = BTreeMap::new();
        let push_children = |pending: &mut BTreeMap<UnitRef, f64>, pl: usize, pu: usize, d: f64| {
            for &(cl, cu, k) in &self.children[pl][pu] {
                let (cl, cu) = (cl as usize, cu as usize);
                *pending.entry((cl, cu)).or_insert(0.0) += self.net.weights(cl, cu)[k as usize] * d;
            }
        };
        push_children(&mut pending, l, u, dv);
        while let Some(((cl, cu), da)) = pending.pop_first() {
            if da == 0.0 {
                continue;
            }
            if self.net.kind(cl) == UnitKind::Delta {
                if self.is_clamped_output(cl, cu) {
                    // the current state satisfies the clamp; the other one cannot
                    return if cur_on { f64::INFINITY } else { f64::NEG_INFINITY };
                }
                push_children(&mut pending, cl, cu, da);
            } else {
                lo += term(cl, cu, da);
            }
        }
        lo
    }

    fn set_site(&mut self, l: usize, u: usize, site: u32, on: bool) {
        let kind = self.net.kind(l);
        let Event::Bits(mask) = self.events[l][u] else {
            unreachable!()
        };
        let new = if on { mask | (1 << site) } else { mask & !(1 << site) };
        if new == mask {
            return;
        }
        self.events[l][u] = Event::Bits(new);
        self.states[l][u] = kind.encode(&Event::Bits(new));
        self.refresh_children(l, u);
    }

    fn refresh_children(&mut self, l: usize, u: usize) {
        let mut queue: BTreeMap<UnitRef, ()> = BTreeMap::new();
        for &(cl, cu, _) in &self.children[l][u] {
            queue.insert((cl as usize, cu as usize), ());
        }
        while let Some(((cl, cu), ())) = queue.pop_first() {
            let a = self.net.preactivation(cl, cu, self.x, &self.states);
            self.pre[cl][cu] = a;
            if self.net.kind(cl) == UnitKind::Delta && !self.is_clamped_output(cl, cu) {
                self.events[cl][cu] = Event::Value(a);
                self.states[cl][cu] = a;
                for &(gl, gu, _) in &self.children[cl][cu] {
                    queue.insert((gl as usize, gu as usize), ());
                }
            }
        }
    }
}

/// Marginals of the free outputs and hidden sites under `p(y_d, z | x, y_u)`.
///
/// Clamped outputs report exactly 0 or 1. The chain starts from an
/// ancestral sample with the clamps imposed; `burn_in` sweeps are
/// discarded, then every `thinning`-th of `sweeps` sweeps is recorded.
pub fn gibbs_clamped(
    net: &Network,
    x: &[f64],
    clamp: &ClampSet,
    cfg: GibbsConfig,
    rng: &mut RngStream,
) -> Result<MarginalField, InferenceError> {
    let out = net.output_layer();
    let out_kind = net.kind(out);
    clamp.check(out_kind, net.output_count())?;
    if x.len() != net.input_count() {
        return Err(crate::model::ModelError::Dimension {
            what: "input vector",
            expected: net.input_count(),
            got: x.len(),
        }
        .into());
    }
    let mut chain = Chain::new(net, x, clamp, rng)?;

    let mut vars: Vec<(usize, usize, u32)> = Vec::new();
    for l in 0..net.layer_count() {
        let kind = net.kind(l);
        for u in 0..net.units(l) {
            if l == out && chain.clamped[u] {
                continue;
            }
            for s in 0..kind.sites() {
                vars.push((l, u, s));
            }
        }
    }

    let site_offset = |l: usize, u: usize, s: u32| u * net.kind(l).sites() as usize + s as usize;
    let mut hidden_acc: Vec<Vec<f64>> = (0..out)
        .map(|l| vec![0.0; net.units(l) * net.kind(l).sites() as usize])
        .collect();
    let mut out_acc = vec![0.0; net.output_count()];
    let mut recorded = 0u64;
    let thinning = cfg.thinning.max(1);
    let total = cfg.burn_in + cfg.sweeps;

    let mut probs = vec![0.0; vars.len()];
    for t in 0..total {
        let forward = t % 2 == 0;
        for step in 0..vars.len() {
            let i = if forward { step } else { vars.len() - 1 - step };
            let (l, u, s) = vars[i];
            let p_on = sigmoid(chain.log_odds(l, u, s));
            probs[i] = p_on;
            let on = rng.bernoulli(p_on);
            chain.set_site(l, u, s, on);
        }
        let post = t + 1;
        if post > cfg.burn_in && (post - cfg.burn_in).is_multiple_of(thinning) {
            recorded += 1;
            for (i, &(l, u, s)) in vars.iter().enumerate() {
                if l == out {
                    if s == 0 {
                        out_acc[u] += probs[i];
                    }
                } else {
                    hidden_acc[l][site_offset(l, u, s)] += probs[i];
                }
            }
            if out_kind == UnitKind::Delta {
                for (v, acc) in out_acc.iter_mut().enumerate() {
                    if !chain.clamped[v] {
                        *acc += out_kind.is_positive(&chain.events[out][v]) as u8 as f64;
                    }
                }
            }
        }
    }

    if recorded == 0 {
        // no recorded sweep: report the current state
        recorded = 1;
        for l in 0..out {
            let k = net.kind(l).sites();
            for u in 0..net.units(l) {
                if let Event::Bits(m) = chain.events[l][u] {
                    for s in 0..k {
                        hidden_acc[l][site_offset(l, u, s)] = ((m >> s) & 1) as f64;
                    }
                }
            }
        }
        for (v, acc) in out_acc.iter_mut().enumerate() {
            *acc = out_kind.is_positive(&chain.events[out][v]) as u8 as f64;
        }
    }

    let n = recorded as f64;
    let outputs = out_acc
        .iter()
        .enumerate()
        .map(|(v, &a)| match clamp.get(v) {
            Some(e) => out_kind.is_positive(e) as u8 as f64,
            None => a / n,
        })
        .collect();
    let hidden = hidden_acc
        .into_iter()
        .map(|l| l.into_iter().map(|a| a / n).collect())
        .collect();
    Ok(MarginalField {
        outputs,
        samples: recorded,
        hidden: Some(hidden),
        grid: net.spec().output().grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::enumerate_posterior;
    use crate::model::{Init, NetworkSpec};

    fn tiny(seed: u64) -> Network {
        let spec = NetworkSpec::chain(2, &[(UnitKind::Sigmoid, 2), (UnitKind::Sigmoid, 2), (UnitKind::Sigmoid, 3)]);
        Network::new(spec, Init { scale: 1.5, seed }).unwrap()
    }

    fn short() -> GibbsConfig {
        GibbsConfig {
            burn_in: 200,
            sweeps: 20_000,
            thinning: 1,
        }
    }

    #[test]
    fn unclamped_matches_enumeration() {
        let net = tiny(1);
        let x = [0.4, -1.0];
        let exact = enumerate_posterior(&net, &x).unwrap();
        let clamp = ClampSet::new(3);
        let g = gibbs_clamped(&net, &x, &clamp, short(), &mut RngStream::new(2)).unwrap();
        let eo = exact.output_marginals();
        for (a, b) in g.outputs.iter().zip(&eo) {
            assert!((a - b).abs() < 0.02, "{a} vs {b}");
        }
        let eh = exact.conditional_hidden_marginals(&clamp).unwrap();
        for (a, b) in g.hidden.as_ref().unwrap().iter().flatten().zip(eh.iter().flatten()) {
            assert!((a - b).abs() < 0.02, "{a} vs {b}");
        }
    }

    #[test]
    fn partial_clamp_matches_conditional() {
        let net = tiny(3);
        let x = [1.0, 0.5];
        let exact = enumerate_posterior(&net, &x).unwrap();
        let mut clamp = ClampSet::new(3);
        clamp.set(1, Event::Bits(1));
        let g = gibbs_clamped(&net, &x, &clamp, short(), &mut RngStream::new(4)).unwrap();
        let e = exact.conditional_output_marginals(&clamp).unwrap();
        assert_eq!(g.outputs[1], 1.0);
        for (a, b) in g.outputs.iter().zip(&e) {
            assert!((a - b).abs() < 0.02, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_weights_give_half() {
        let spec = NetworkSpec::chain(2, &[(UnitKind::Sigmoid, 3), (UnitKind::Sigmoid, 4)]);
        let net = Network::zeros(spec).unwrap();
        let mut clamp = ClampSet::new(4);
        clamp.set(0, Event::Bits(1));
        clamp.set(3, Event::Bits(0));
        let g = gibbs_clamped(&net, &[1.0, 2.0], &clamp, short(), &mut RngStream::new(0)).unwrap();
        assert_eq!(g.outputs[0], 1.0);
        assert_eq!(g.outputs[3], 0.0);
        // every conditional is exactly 1/2, so the Rao-Blackwellized estimate is exact
        assert_eq!(g.outputs[1], 0.5);
        assert_eq!(g.outputs[2], 0.5);
        assert!(g.hidden.unwrap().iter().flatten().all(|&p| p == 0.5));
    }

    #[test]
    fn delta_layers_are_followed() {
        let spec = NetworkSpec::chain(1, &[(UnitKind::Sigmoid, 2), (UnitKind::Delta, 2), (UnitKind::Tanh, 2)]);
        let net = Network::new(spec, Init { scale: 1.5, seed: 6 }).unwrap();
        let x = [0.8];
        let exact = enumerate_posterior(&net, &x).unwrap();
        let mut clamp = ClampSet::new(2);
        clamp.set(0, Event::Bits(0));
        let g = gibbs_clamped(&net, &x, &clamp, short(), &mut RngStream::new(5)).unwrap();
        let eh = exact.conditional_hidden_marginals(&clamp).unwrap();
        let gh = g.hidden.unwrap();
        for (a, b) in gh[0].iter().zip(&eh[0]) {
            assert!((a - b).abs() < 0.02, "{a} vs {b}");
        }
        assert!(gh[1].is_empty());
    }

    #[test]
    fn impossible_delta_clamp_is_non_ergodic() {
        let spec = NetworkSpec::chain(1, &[(UnitKind::Sigmoid, 2), (UnitKind::Delta, 1)]);
        let net = Network::new(spec, Init { scale: 1.0, seed: 2 }).unwrap();
        let mut clamp = ClampSet::new(1);
        clamp.set(0, Event::Value(123.0));
        assert_eq!(
            gibbs_clamped(&net, &[0.1], &clamp, short(), &mut RngStream::new(1)),
            Err(InferenceError::NonErgodic { unit: 0 })
        );
    }

    #[test]
    fn zero_sweeps_reports_state() {
        let net = tiny(2);
        let cfg = GibbsConfig {
            burn_in: 3,
            sweeps: 0,
            thinning: 10,
        };
        let g = gibbs_clamped(&net, &[0.0, 0.0], &ClampSet::new(3), cfg, &mut RngStream::new(1)).unwrap();
        assert_eq!(g.samples, 1);
        assert!(g.outputs.iter().all(|&p| p == 0.0 || p == 1.0));
    }
}
