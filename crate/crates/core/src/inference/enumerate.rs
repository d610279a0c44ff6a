//! Exhaustive enumeration of the joint distribution of small networks.
//! This is the reference every sampler and gradient estimator is checked
//! against.

use super::{ClampSet, InferenceError};
use crate::model::{Assignment, Event, Network, UnitKind};

/// Largest number of binary sites enumerated (2^20 joint states).
pub const MAX_ENUM_SITES: usize = 20;

/// One joint configuration of layers `0..upto` and its probability given x.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerConfig {
    pub events: Vec<Vec<Event>>,
    pub states: Vec<Vec<f64>>,
    pub prob: f64,
}

/// Enumerates all configurations of layers `0..upto` with their joint
/// probability `Π p(event_v | inputs_v)`. `Delta` units take their forced
/// value, so they add no branching.
pub fn enumerate_layers(net: &Network, x: &[f64], upto: usize) -> Result<Vec<LayerConfig>, InferenceError> {
    if x.len() != net.input_count() {
        return Err(crate::model::ModelError::Dimension {
            what: "input vector",
            expected: net.input_count(),
            got: x.len(),
        }
        .into());
    }
    let sites: usize = (0..upto).map(|l| net.units(l) * net.kind(l).sites() as usize).sum();
    if sites > MAX_ENUM_SITES {
        return Err(InferenceError::StateSpaceTooLarge {
            sites,
            max: MAX_ENUM_SITES,
        });
    }
    let mut configs = vec![(Vec::new(), Vec::new(), 0.0f64)];
    for l in 0..upto {
        let kind = net.kind(l);
        let units = net.units(l);
        let mut next = Vec::new();
        for (events, states, logp) in configs {
            let a: Vec<f64> = (0..units).map(|u| net.preactivation(l, u, x, &states)).collect();
            if kind == UnitKind::Delta {
                let ev: Vec<Event> = a.iter().map(|&v| Event::Value(v)).collect();
                let mut ev_all: Vec<Vec<Event>> = events;
                let mut st_all: Vec<Vec<f64>> = states;
                st_all.push(a);
                ev_all.push(ev);
                next.push((ev_all, st_all, logp));
                continue;
            }
            let choices = kind.enumerate_events();
            let radix = choices.len();
            let combos = radix.pow(units as u32);
            for mut code in 0..combos {
                let mut ev = Vec::with_capacity(units);
                let mut lp = logp;
                for av in &a {
                    let e = choices[code % radix];
                    code /= radix;
                    lp += kind.log_prob(&e, *av);
                    ev.push(e);
                }
                let st: Vec<f64> = ev.iter().map(|e| kind.encode(e)).collect();
                let mut ev_all = events.clone();
                let mut st_all = states.clone();
                ev_all.push(ev);
                st_all.push(st);
                next.push((ev_all, st_all, lp));
            }
        }
        configs = next;
    }
    Ok(configs
        .into_iter()
        .map(|(events, states, logp)| LayerConfig {
            events,
            states,
            prob: logp.exp(),
        })
        .collect())
}

/// Exact table of `p(y, z | x)` over every joint assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorTable {
    pub entries: Vec<(Assignment, f64)>,
    kinds: Vec<UnitKind>,
}

/// Enumerates `p(y, z | x)` for all assignments of a small network.
pub fn enumerate_posterior(net: &Network, x: &[f64]) -> Result<PosteriorTable, InferenceError> {
    let configs = enumerate_layers(net, x, net.layer_count())?;
    let entries = configs
        .into_iter()
        .map(|mut c| {
            let output = c.events.pop().expect("at least one layer");
            (
                Assignment {
                    x: x.to_vec(),
                    hidden: c.events,
                    output,
                },
                c.prob,
            )
        })
        .collect();
    Ok(PosteriorTable {
        entries,
        kinds: (0..net.layer_count()).map(|l| net.kind(l)).collect(),
    })
}

impl PosteriorTable {
    pub fn total(&self) -> f64 {
        self.entries.iter().map(|(_, p)| p).sum()
    }

    fn consistent(asg: &Assignment, clamp: Option<&ClampSet>) -> bool {
        clamp.is_none_or(|c| c.iter().all(|(v, e)| asg.output[v] == *e))
    }

    /// `p(y | x)` for a full output event vector.
    pub fn output_probability(&self, y: &[Event]) -> f64 {
        self.entries
            .iter()
            .filter(|(a, _)| a.output == y)
            .map(|(_, p)| p)
            .sum()
    }

    /// `p(y_v = positive | x)` per output.
    pub fn output_marginals(&self) -> Vec<f64> {
        self.conditional_output_marginals(&ClampSet::new(0)).unwrap_or_default()
    }

    /// `p(y_v = positive | x, y_u)` per output; clamped outputs report
    /// their clamp exactly. `None` if the clamps have probability zero.
    pub fn conditional_output_marginals(&self, clamp: &ClampSet) -> Option<Vec<f64>> {
        let kind = *self.kinds.last()?;
        let n = self.entries.first()?.0.output.len();
        let clamp_opt = (clamp.outputs() > 0).then_some(clamp);
        let mut acc = vec![0.0; n];
        let mut mass = 0.0;
        for (asg, p) in &self.entries {
            if !Self::consistent(asg, clamp_opt) {
                continue;
            }
            mass += p;
            for (v, e) in asg.output.iter().enumerate() {
                if kind.is_positive(e) {
                    acc[v] += p;
                }
            }
        }
        if mass <= 0.0 {
            return None;
        }
        for (v, a) in acc.iter_mut().enumerate() {
            *a = match clamp_opt.and_then(|c| c.get(v)) {
                Some(e) => kind.is_positive(e) as u8 as f64,
                None => *a / mass,
            };
        }
        Some(acc)
    }

    /// `p(site on | x, y_u)` for every hidden site, layer by layer.
    pub fn conditional_hidden_marginals(&self, clamp: &ClampSet) -> Option<Vec<Vec<f64>>> {
        let clamp_opt = (clamp.outputs() > 0).then_some(clamp);
        let first = &self.entries.first()?.0;
        let mut acc: Vec<Vec<f64>> = first
            .hidden
            .iter()
            .enumerate()
            .map(|(l, ev)| vec![0.0; ev.len() * self.kinds[l].sites() as usize])
            .collect();
        let mut mass = 0.0;
        for (asg, p) in &self.entries {
            if !Self::consistent(asg, clamp_opt) {
                continue;
            }
            mass += p;
            for (l, layer) in asg.hidden.iter().enumerate() {
                let k = self.kinds[l].sites() as usize;
                for (u, e) in layer.iter().enumerate() {
                    if let Event::Bits(m) = e {
                        for i in 0..k {
                            if (m >> i) & 1 == 1 {
                                acc[l][u * k + i] += p;
                            }
                        }
                    }
                }
            }
        }
        if mass <= 0.0 {
            return None;
        }
        for v in acc.iter_mut().flatten() {
            *v /= mass;
        }
        Some(acc)
    }

    /// Distribution of the last hidden layer's encoded state, `p(z_L | x)`,
    /// as `(states, probability)` pairs with equal states merged.
    pub fn last_hidden_marginal(&self) -> Vec<(Vec<f64>, f64)> {
        let mut out: Vec<(Vec<f64>, f64)> = Vec::new();
        let Some(l) = self.kinds.len().checked_sub(2) else {
            return out;
        };
        for (asg, p) in &self.entries {
            let st: Vec<f64> = asg.hidden[l].iter().map(|e| self.kinds[l].encode(e)).collect();
            match out.iter_mut().find(|(s, _)| *s == st) {
                Some((_, q)) => *q += p,
                None => out.push((st, *p)),
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Init, NetworkSpec};
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_output_half() {
        let net = Network::zeros(NetworkSpec::chain(2, &[(UnitKind::Sigmoid, 1)])).unwrap();
        let t = enumerate_posterior(&net, &[0.4, 1.0]).unwrap();
        assert_eq!(t.entries.len(), 2);
        assert_abs_diff_eq!(t.output_marginals()[0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn normalized_with_mixed_kinds() {
        let spec = NetworkSpec::chain(
            2,
            &[
                (UnitKind::Tanh, 2),
                (UnitKind::Delta, 2),
                (UnitKind::ReluSum(3), 2),
                (UnitKind::Sigmoid, 2),
            ],
        );
        let net = Network::new(spec, Init { scale: 1.5, seed: 4 }).unwrap();
        let t = enumerate_posterior(&net, &[0.3, -0.8]).unwrap();
        assert_eq!(t.entries.len(), 4 * 64 * 4);
        assert_abs_diff_eq!(t.total(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn matches_energy() {
        let spec = NetworkSpec::chain(2, &[(UnitKind::Sigmoid, 3), (UnitKind::Tanh, 2)]);
        let net = Network::new(spec, Init { scale: 2.0, seed: 8 }).unwrap();
        let t = enumerate_posterior(&net, &[1.0, -0.5]).unwrap();
        for (asg, p) in &t.entries {
            assert_abs_diff_eq!((-net.energy(asg).unwrap()).exp(), *p, epsilon = 1e-14);
        }
    }

    #[test]
    fn guard_rejects_large_nets() {
        let spec = NetworkSpec::chain(2, &[(UnitKind::Sigmoid, 15), (UnitKind::Sigmoid, 6)]);
        let net = Network::zeros(spec).unwrap();
        assert_eq!(
            enumerate_posterior(&net, &[0.0, 0.0]).unwrap_err(),
            InferenceError::StateSpaceTooLarge { sites: 21, max: 20 }
        );
    }

    #[test]
    fn clamped_marginals_report_clamps() {
        let spec = NetworkSpec::chain(1, &[(UnitKind::Sigmoid, 2), (UnitKind::Sigmoid, 2)]);
        let net = Network::new(spec, Init { scale: 1.0, seed: 1 }).unwrap();
        let t = enumerate_posterior(&net, &[0.5]).unwrap();
        let mut c = ClampSet::new(2);
        c.set(0, Event::Bits(1));
        let m = t.conditional_output_marginals(&c).unwrap();
        assert_eq!(m[0], 1.0);
        assert!(m[1] > 0.0 && m[1] < 1.0);
        let h = t.conditional_hidden_marginals(&ClampSet::new(2)).unwrap();
        assert_eq!(h.len(), 1);
        assert_eq!(h[0].len(), 2);
    }

    #[test]
    fn last_hidden_marginal_sums_to_one() {
        let spec = NetworkSpec::chain(1, &[(UnitKind::Sigmoid, 2), (UnitKind::Sigmoid, 3), (UnitKind::Sigmoid, 1)]);
        let net = Network::new(spec, Init { scale: 1.0, seed: 2 }).unwrap();
        let t = enumerate_posterior(&net, &[0.5]).unwrap();
        let m = t.last_hidden_marginal();
        assert_eq!(m.len(), 8);
        assert_abs_diff_eq!(m.iter().map(|(_, p)| p).sum::<f64>(), 1.0, epsilon = 1e-12);
    }
}
