use thiserror::Error;

use super::spec::{Connectivity, NetworkSpec, ValidationReport};
use super::unit::{Event, UnitKind};
use crate::rng::RngStream;

/// Where a unit reads one of its inputs from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Source {
    Input(u32),
    /// `(layer, unit)`, layers zero-based.
    Unit(u32, u32),
}

/// Weights per layer per unit. The last entry of each unit is its bias.
pub type Params = Vec<Vec<Vec<f64>>>;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Invalid(#[from] ValidationReport),
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("illegal event for unit ({layer}, {unit})")]
    IllegalEvent { layer: usize, unit: usize },
    #[error("non-finite parameter at unit ({layer}, {unit})")]
    NonFinite { layer: usize, unit: usize },
}

/// Values of all variables: inputs, hidden events, output events.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub x: Vec<f64>,
    pub hidden: Vec<Vec<Event>>,
    pub output: Vec<Event>,
}

impl Assignment {
    /// Layer `l` of the assignment (the output is the last layer).
    pub fn layer(&self, l: usize) -> &[Event] {
        if l < self.hidden.len() {
            &self.hidden[l]
        } else {
            &self.output
        }
    }
}

/// Parameter initialization: uniform in `[-scale, scale]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Init {
    pub scale: f64,
    pub seed: u64,
}

impl Default for Init {
    fn default() -> Self {
        Self { scale: 0.1, seed: 0 }
    }
}

/// A validated spec together with its parameters θ.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    inputs: Vec<Vec<Vec<Source>>>,
    params: Params,
}

#[inline]
pub(crate) fn source_value(x: &[f64], states: &[Vec<f64>], s: Source) -> f64 {
    match s {
        Source::Input(i) => x[i as usize],
        Source::Unit(l, u) => states[l as usize][u as usize],
    }
}

/// `⟨inputs, w⟩ + bias`, summed in input order with the bias last. Every
/// code path computes pre-activations through here so deterministic units
/// reproduce bit-identical values.
#[inline]
pub(crate) fn preactivation(weights: &[f64], sources: &[Source], x: &[f64], states: &[Vec<f64>]) -> f64 {
    let mut a = 0.0;
    for (w, &s) in weights.iter().zip(sources) {
        a += w * source_value(x, states, s);
    }
    a + weights[sources.len()]
}

impl Network {
    /// Builds the network with parameters drawn from `init`.
    pub fn new(spec: NetworkSpec, init: Init) -> Result<Self, ModelError> {
        let mut net = Self::zeros(spec)?;
        let mut rng = RngStream::new(init.seed);
        for w in net.params.iter_mut().flatten().flatten() {
            *w = init.scale * (2.0 * rng.uniform() - 1.0);
        }
        Ok(net)
    }

    /// Builds the network with all parameters zero.
    pub fn zeros(spec: NetworkSpec) -> Result<Self, ModelError> {
        spec.validate()?;
        let inputs = compile_inputs(&spec);
        let params = inputs
            .iter()
            .map(|layer| layer.iter().map(|srcs| vec![0.0; srcs.len() + 1]).collect())
            .collect();
        Ok(Self { spec, inputs, params })
    }

    /// Builds the network with explicit parameters.
    pub fn from_params(spec: NetworkSpec, params: Params) -> Result<Self, ModelError> {
        let mut net = Self::zeros(spec)?;
        net.set_params(params)?;
        Ok(net)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layer_count(&self) -> usize {
        self.spec.layers.len()
    }

    pub fn output_layer(&self) -> usize {
        self.layer_count() - 1
    }

    pub fn input_count(&self) -> usize {
        self.spec.input_count
    }

    pub fn units(&self, layer: usize) -> usize {
        self.spec.layers[layer].units
    }

    pub fn output_count(&self) -> usize {
        self.units(self.output_layer())
    }

    pub fn kind(&self, layer: usize) -> UnitKind {
        self.spec.layers[layer].kind
    }

    pub fn inputs(&self, layer: usize, unit: usize) -> &[Source] {
        &self.inputs[layer][unit]
    }

    pub fn weights(&self, layer: usize, unit: usize) -> &[f64] {
        &self.params[layer][unit]
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().flatten().map(Vec::len).sum()
    }

    /// Replaces θ after checking shape and finiteness.
    pub fn set_params(&mut self, params: Params) -> Result<(), ModelError> {
        check_shape(&self.params, &params)?;
        for (l, layer) in params.iter().enumerate() {
            for (u, w) in layer.iter().enumerate() {
                if w.iter().any(|v| !v.is_finite()) {
                    return Err(ModelError::NonFinite { layer: l, unit: u });
                }
            }
        }
        self.params = params;
        Ok(())
    }

    /// First unit `(layer, unit)` holding a non-finite parameter.
    pub fn first_non_finite(&self) -> Option<(usize, usize)> {
        for (l, layer) in self.params.iter().enumerate() {
            for (u, w) in layer.iter().enumerate() {
                if w.iter().any(|v| !v.is_finite()) {
                    return Some((l, u));
                }
            }
        }
        None
    }

    /// Total number of binary sites over hidden and output units.
    pub fn site_count(&self) -> usize {
        self.spec
            .layers
            .iter()
            .map(|l| l.units * l.kind.sites() as usize)
            .sum()
    }

    /// Pre-activation of `(layer, unit)` given the input and the encoded
    /// states of earlier layers.
    #[inline]
    pub fn preactivation(&self, layer: usize, unit: usize, x: &[f64], states: &[Vec<f64>]) -> f64 {
        preactivation(&self.params[layer][unit], &self.inputs[layer][unit], x, states)
    }

    /// Input vector of `(layer, unit)` augmented with the constant-1 bias slot.
    pub fn gather_inputs(&self, layer: usize, unit: usize, x: &[f64], states: &[Vec<f64>]) -> Vec<f64> {
        let mut v: Vec<f64> = self.inputs[layer][unit]
            .iter()
            .map(|&s| source_value(x, states, s))
            .collect();
        v.push(1.0);
        v
    }

    /// `ln p(event | inputs)` for unit `(layer, unit)`; `inputs` carries the
    /// bias slot as its last element.
    pub fn log_conditional(&self, layer: usize, unit: usize, event: &Event, inputs: &[f64]) -> Result<f64, ModelError> {
        let w = &self.params[layer][unit];
        if inputs.len() != w.len() {
            return Err(ModelError::Dimension {
                what: "unit input vector",
                expected: w.len(),
                got: inputs.len(),
            });
        }
        let mut a = 0.0;
        for (wi, xi) in w[..w.len() - 1].iter().zip(inputs) {
            a += wi * xi;
        }
        let a = a + w[w.len() - 1] * inputs[w.len() - 1];
        Ok(self.kind(layer).log_prob(event, a))
    }

    fn check_assignment(&self, asg: &Assignment) -> Result<(), ModelError> {
        if asg.x.len() != self.input_count() {
            return Err(ModelError::Dimension {
                what: "input vector",
                expected: self.input_count(),
                got: asg.x.len(),
            });
        }
        if asg.hidden.len() + 1 != self.layer_count() {
            return Err(ModelError::Dimension {
                what: "hidden layer count",
                expected: self.layer_count() - 1,
                got: asg.hidden.len(),
            });
        }
        for l in 0..self.layer_count() {
            let events = asg.layer(l);
            if events.len() != self.units(l) {
                return Err(ModelError::Dimension {
                    what: "layer size",
                    expected: self.units(l),
                    got: events.len(),
                });
            }
            for (u, e) in events.iter().enumerate() {
                if !self.kind(l).is_legal(e) {
                    return Err(ModelError::IllegalEvent { layer: l, unit: u });
                }
            }
        }
        Ok(())
    }

    /// Per-unit `ln p(event_v | inputs_v)` for a full assignment, layer by layer.
    pub fn log_conditionals(&self, asg: &Assignment) -> Result<Vec<Vec<f64>>, ModelError> {
        self.check_assignment(asg)?;
        let mut states: Vec<Vec<f64>> = Vec::with_capacity(self.layer_count());
        let mut out = Vec::with_capacity(self.layer_count());
        for l in 0..self.layer_count() {
            let kind = self.kind(l);
            let events = asg.layer(l);
            let mut logs = Vec::with_capacity(events.len());
            for (u, e) in events.iter().enumerate() {
                let a = self.preactivation(l, u, &asg.x, &states);
                logs.push(kind.log_prob(e, a));
            }
            states.push(events.iter().map(|e| kind.encode(e)).collect());
            out.push(logs);
        }
        Ok(out)
    }

    /// Energy `E(x, y, z) = Σ_v -ln p(event_v | inputs_v)`, so that
    /// `exp(-E) = p(y, z | x)`. Returns `+inf` when a deterministic unit
    /// is assigned a value other than the one its inputs force.
    pub fn energy(&self, asg: &Assignment) -> Result<f64, ModelError> {
        let logs = self.log_conditionals(asg)?;
        let mut e = 0.0;
        for lp in logs.iter().flatten() {
            if *lp == f64::NEG_INFINITY {
                return Ok(f64::INFINITY);
            }
            e -= lp;
        }
        Ok(e)
    }
}

fn check_shape(expected: &Params, got: &Params) -> Result<(), ModelError> {
    if expected.len() != got.len() {
        return Err(ModelError::Dimension {
            what: "parameter layers",
            expected: expected.len(),
            got: got.len(),
        });
    }
    for (e, g) in expected.iter().zip(got) {
        if e.len() != g.len() {
            return Err(ModelError::Dimension {
                what: "parameter units",
                expected: e.len(),
                got: g.len(),
            });
        }
        for (ew, gw) in e.iter().zip(g) {
            if ew.len() != gw.len() {
                return Err(ModelError::Dimension {
                    what: "unit parameter vector",
                    expected: ew.len(),
                    got: gw.len(),
                });
            }
        }
    }
    Ok(())
}

/// Resolves the connectivity rules into explicit input lists. Assumes a
/// validated spec.
fn compile_inputs(spec: &NetworkSpec) -> Vec<Vec<Vec<Source>>> {
    let mut all = Vec::with_capacity(spec.layers.len());
    for (idx, layer) in spec.layers.iter().enumerate() {
        let l = idx + 1;
        let mut units = Vec::with_capacity(layer.units);
        match &layer.connectivity {
            Connectivity::Dense { from } => {
                let mut srcs = Vec::new();
                for &s in from {
                    if s == 0 {
                        srcs.extend((0..spec.input_count as u32).map(Source::Input));
                    } else {
                        let n = spec.layers[s - 1].units as u32;
                        srcs.extend((0..n).map(|u| Source::Unit(s as u32 - 1, u)));
                    }
                }
                units.resize(layer.units, srcs);
            }
            Connectivity::Local { depth, radius, image } => {
                let grid = layer.grid.expect("validated local layer has a grid");
                let first = l.saturating_sub(*depth).max(1);
                for row in 0..grid.height {
                    for col in 0..grid.width {
                        let mut srcs = Vec::new();
                        if *image {
                            let ig = spec.input_grid.expect("validated image access");
                            for (r, c) in grid.window(row, col, *radius) {
                                let base = (r * grid.width + c) * ig.channels;
                                srcs.extend((base..base + ig.channels).map(|i| Source::Input(i as u32)));
                            }
                        }
                        for s in first..l {
                            for (r, c) in grid.window(row, col, *radius) {
                                srcs.push(Source::Unit(s as u32 - 1, (r * grid.width + c) as u32));
                            }
                        }
                        units.push(srcs);
                    }
                }
            }
        }
        all.push(units);
    }
    all
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::spec::{Grid, InputGrid, LayerSpec};
    use approx::assert_abs_diff_eq;

    #[test]
    fn parameter_vector_has_bias_slot() {
        let spec = NetworkSpec::chain(3, &[(UnitKind::Sigmoid, 2), (UnitKind::Tanh, 1)]);
        let net = Network::new(spec, Init::default()).unwrap();
        assert_eq!(net.weights(0, 1).len(), 4);
        assert_eq!(net.weights(1, 0).len(), 3);
        assert_eq!(net.parameter_count(), 11);
        assert!(net.params().iter().flatten().flatten().all(|w| w.abs() <= 0.1));
    }

    #[test]
    fn init_is_seeded() {
        let spec = NetworkSpec::chain(2, &[(UnitKind::Sigmoid, 3), (UnitKind::Sigmoid, 1)]);
        let a = Network::new(spec.clone(), Init { scale: 0.5, seed: 3 }).unwrap();
        let b = Network::new(spec.clone(), Init { scale: 0.5, seed: 3 }).unwrap();
        let c = Network::new(spec, Init { scale: 0.5, seed: 4 }).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_spec_rejected() {
        let mut spec = NetworkSpec::chain(2, &[(UnitKind::Sigmoid, 1)]);
        spec.layers[0].units = 0;
        assert!(matches!(Network::zeros(spec), Err(ModelError::Invalid(_))));
    }

    #[test]
    fn local_receptive_fields() {
        let input = InputGrid {
            height: 3,
            width: 3,
            channels: 2,
        };
        let spec = NetworkSpec::local_stack(input, 2, 2, 1, 1);
        let net = Network::zeros(spec).unwrap();
        // corner of layer 0: 4 pixels x 2 channels
        assert_eq!(net.inputs(0, 0).len(), 8);
        // center of layer 1: 9 units of layer 0, no image
        assert_eq!(net.inputs(1, 4).len(), 9);
        // layer 2 reads layers 0 and 1
        assert_eq!(net.inputs(2, 4).len(), 18);
        assert_eq!(net.inputs(2, 0)[0], Source::Unit(0, 0));
        assert_eq!(net.inputs(0, 4)[0], Source::Input(0));
        assert_eq!(net.inputs(0, 8).last(), Some(&Source::Input(17)));
    }

    #[test]
    fn one_by_one_grid_single_input_field() {
        let input = InputGrid {
            height: 1,
            width: 1,
            channels: 1,
        };
        let spec = NetworkSpec::with_input_grid(
            input,
            vec![
                LayerSpec::local(UnitKind::Sigmoid, Grid::new(1, 1), 1, 1, true),
                LayerSpec::local(UnitKind::Sigmoid, Grid::new(1, 1), 1, 1, false),
            ],
        );
        let net = Network::zeros(spec).unwrap();
        assert_eq!(net.inputs(0, 0), &[Source::Input(0)]);
        assert_eq!(net.inputs(1, 0), &[Source::Unit(0, 0)]);
    }

    #[test]
    fn log_conditional_checks_dimension() {
        let spec = NetworkSpec::chain(2, &[(UnitKind::Sigmoid, 1)]);
        let net = Network::from_params(spec, vec![vec![vec![2.0, 0.0, 0.0]]]).unwrap();
        let lp = net.log_conditional(0, 0, &Event::Bits(1), &[1.0, 5.0, 1.0]).unwrap();
        assert_abs_diff_eq!(lp, -(1.0 + (-2.0f64).exp()).ln(), epsilon = 1e-15);
        assert!(matches!(
            net.log_conditional(0, 0, &Event::Bits(1), &[1.0, 1.0]),
            Err(ModelError::Dimension { .. })
        ));
    }

    #[test]
    fn single_output_energy_is_ln2() {
        let spec = NetworkSpec::chain(1, &[(UnitKind::Sigmoid, 1)]);
        let net = Network::zeros(spec).unwrap();
        for e in [Event::Bits(0), Event::Bits(1)] {
            let asg = Assignment {
                x: vec![0.3],
                hidden: vec![],
                output: vec![e],
            };
            assert_abs_diff_eq!(net.energy(&asg).unwrap(), std::f64::consts::LN_2, epsilon = 1e-15);
        }
    }

    #[test]
    fn all_delta_energy() {
        let spec = NetworkSpec::chain(2, &[(UnitKind::Delta, 2), (UnitKind::Delta, 1)]);
        let params = vec![
            vec![vec![1.0, 0.5, 0.0], vec![-1.0, 2.0, 0.25]],
            vec![vec![0.5, 0.5, 1.0]],
        ];
        let net = Network::from_params(spec, params).unwrap();
        let x = vec![1.0, 2.0];
        let z = [2.0, 3.25];
        let y = 0.5 * 2.0 + 0.5 * 3.25 + 1.0;
        let asg = Assignment {
            x: x.clone(),
            hidden: vec![z.iter().map(|&v| Event::Value(v)).collect()],
            output: vec![Event::Value(y)],
        };
        assert_eq!(net.energy(&asg).unwrap(), 0.0);
        let bad = Assignment {
            output: vec![Event::Value(y + 1.0)],
            ..asg
        };
        assert_eq!(net.energy(&bad).unwrap(), f64::INFINITY);
    }

    #[test]
    fn energy_rejects_bad_assignments() {
        let spec = NetworkSpec::chain(1, &[(UnitKind::Sigmoid, 2), (UnitKind::Sigmoid, 1)]);
        let net = Network::zeros(spec).unwrap();
        let short = Assignment {
            x: vec![],
            hidden: vec![vec![Event::Bits(0); 2]],
            output: vec![Event::Bits(0)],
        };
        assert!(matches!(net.energy(&short), Err(ModelError::Dimension { .. })));
        let illegal = Assignment {
            x: vec![0.0],
            hidden: vec![vec![Event::Bits(0), Event::Bits(2)]],
            output: vec![Event::Bits(0)],
        };
        assert_eq!(net.energy(&illegal), Err(ModelError::IllegalEvent { layer: 0, unit: 1 }));
    }

    #[test]
    fn set_params_rejects_nan() {
        let spec = NetworkSpec::chain(1, &[(UnitKind::Sigmoid, 1)]);
        let mut net = Network::zeros(spec).unwrap();
        assert_eq!(
            net.set_params(vec![vec![vec![f64::NAN, 0.0]]]),
            Err(ModelError::NonFinite { layer: 0, unit: 0 })
        );
        assert!(matches!(net.set_params(vec![vec![vec![0.0]]]), Err(ModelError::Dimension { .. })));
    }
}
