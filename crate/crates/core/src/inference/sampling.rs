use rayon::prelude::*;

use super::{InferenceError, MarginalField};
use crate::model::{Event, Network};
use crate::propagation::forward_sample;
use crate::rng::RngStream;

const CHUNK: usize = 1024;

#[derive(Clone)]
struct Counts {
    outputs: Vec<u64>,
    hidden: Vec<Vec<u64>>,
}

impl Counts {
    fn new(net: &Network) -> Self {
        Self {
            outputs: vec![0; net.output_count()],
            hidden: (0..net.output_layer())
                .map(|l| vec![0; net.units(l) * net.kind(l).sites() as usize])
                .collect(),
        }
    }

    fn merge(mut self, other: Counts) -> Self {
        for (a, b) in self.outputs.iter_mut().zip(other.outputs) {
            *a += b;
        }
        for (la, lb) in self.hidden.iter_mut().zip(other.hidden) {
            for (a, b) in la.iter_mut().zip(lb) {
                *a += b;
            }
        }
        self
    }
}

/// Output (and hidden-site) marginals estimated from `n` ancestral samples.
///
/// Samples are drawn in fixed-size chunks, each from its own substream, so
/// the result depends only on the seed and `n`, not on the thread count.
pub fn mc_marginals(net: &Network, x: &[f64], n: usize, rng: &mut RngStream) -> Result<MarginalField, InferenceError> {
    if n == 0 {
        return Err(InferenceError::NoSamples);
    }
    if x.len() != net.input_count() {
        return Err(crate::model::ModelError::Dimension {
            what: "input vector",
            expected: net.input_count(),
            got: x.len(),
        }
        .into());
    }
    let base = RngStream::new(rng.next_word());
    let out_kind = net.kind(net.output_layer());
    let chunks = n.div_ceil(CHUNK);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut local = base.split(c as u64);
            let mut counts = Counts::new(net);
            let len = CHUNK.min(n - c * CHUNK);
            for _ in 0..len {
                let trace = forward_sample(net, x, &mut local).expect("input checked");
                let events = trace.events.as_ref().expect("sampled trace");
                let (out, hidden) = events.split_last().expect("nonempty");
                for (v, e) in out.iter().enumerate() {
                    counts.outputs[v] += out_kind.is_positive(e) as u64;
                }
                for (l, layer) in hidden.iter().enumerate() {
                    let k = net.kind(l).sites() as usize;
                    for (u, e) in layer.iter().enumerate() {
                        if let Event::Bits(m) = e {
                            for i in 0..k {
                                counts.hidden[l][u * k + i] += (m >> i) & 1;
                            }
                        }
                    }
                }
            }
            counts
        })
        .reduce(|| Counts::new(net), Counts::merge);
    let nf = n as f64;
    Ok(MarginalField {
        outputs: counts.outputs.iter().map(|&c| c as f64 / nf).collect(),
        samples: n as u64,
        hidden: Some(
            counts
                .hidden
                .iter()
                .map(|l| l.iter().map(|&c| c as f64 / nf).collect())
                .collect(),
        ),
        grid: net.spec().output().grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::enumerate_posterior;
    use crate::model::{Init, NetworkSpec, UnitKind};

    #[test]
    fn matches_enumeration() {
        let spec = NetworkSpec::chain(2, &[(UnitKind::Sigmoid, 3), (UnitKind::Sigmoid, 2)]);
        let net = Network::new(spec, Init { scale: 2.0, seed: 12 }).unwrap();
        let x = [0.7, -0.2];
        let exact = enumerate_posterior(&net, &x).unwrap().output_marginals();
        let mc = mc_marginals(&net, &x, 100_000, &mut RngStream::new(3)).unwrap();
        for (m, e) in mc.outputs.iter().zip(&exact) {
            assert!((m - e).abs() < 0.005, "{m} vs {e}");
        }
    }

    #[test]
    fn all_delta_marginals_are_binary() {
        let spec = NetworkSpec::chain(2, &[(UnitKind::Delta, 2), (UnitKind::Delta, 3)]);
        let net = Network::new(spec, Init { scale: 1.0, seed: 3 }).unwrap();
        let m = mc_marginals(&net, &[0.5, 1.5], 50, &mut RngStream::new(0)).unwrap();
        assert!(m.outputs.iter().all(|&p| p == 0.0 || p == 1.0));
    }

    #[test]
    fn reproducible_and_rejects_zero() {
        let spec = NetworkSpec::chain(1, &[(UnitKind::Sigmoid, 4), (UnitKind::Sigmoid, 2)]);
        let net = Network::new(spec, Init { scale: 1.0, seed: 5 }).unwrap();
        let a = mc_marginals(&net, &[1.0], 3000, &mut RngStream::new(9)).unwrap();
        let b = mc_marginals(&net, &[1.0], 3000, &mut RngStream::new(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            mc_marginals(&net, &[1.0], 0, &mut RngStream::new(9)),
            Err(InferenceError::NoSamples)
        );
    }
}
