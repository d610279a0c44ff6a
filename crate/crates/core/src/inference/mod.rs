//! Inference: exact enumeration for small networks, Monte-Carlo output
//! marginals from ancestral samples, Gibbs sampling of the posterior with
//! clamped outputs, max-marginal decisions and IoU.

mod enumerate;
mod gibbs;
mod sampling;

pub use enumerate::{enumerate_layers, enumerate_posterior, LayerConfig, PosteriorTable, MAX_ENUM_SITES};
pub use gibbs::{gibbs_clamped, GibbsConfig};
pub use sampling::mc_marginals;

use thiserror::Error;

use crate::model::{Event, Grid, ModelError, UnitKind};

#[derive(Debug, Error, PartialEq)]
pub enum InferenceError {
    #[error("state space too large: {sites} binary sites (limit {max})")]
    StateSpaceTooLarge { sites: usize, max: usize },
    #[error("mask shape mismatch: {pred} vs {gt}")]
    ShapeMismatch { pred: usize, gt: usize },
    #[error("clamp set covers {got} outputs, network has {expected}")]
    ClampSize { expected: usize, got: usize },
    #[error("illegal clamp value for output {unit}")]
    IllegalClamp { unit: usize },
    #[error("non-ergodic configuration: output {unit} is clamped to a value its deterministic inputs cannot produce")]
    NonErgodic { unit: usize },
    #[error("sample count must be positive")]
    NoSamples,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Estimated per-variable probabilities of the positive event.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalField {
    /// `p(y_v = positive | ·)` per output unit.
    pub outputs: Vec<f64>,
    /// Number of samples behind the estimates (1 for exact or deterministic fields).
    pub samples: u64,
    /// Optional per-layer, per-site marginals of hidden units
    /// (site index `unit * sites + i`).
    pub hidden: Option<Vec<Vec<f64>>>,
    /// Spatial layout of the outputs, when they form an image.
    pub grid: Option<Grid>,
}

impl MarginalField {
    pub fn new(outputs: Vec<f64>, samples: u64) -> Self {
        Self {
            outputs,
            samples,
            hidden: None,
            grid: None,
        }
    }

    pub fn with_grid(mut self, grid: Option<Grid>) -> Self {
        self.grid = grid;
        self
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    /// 8-bit gray level per output, `round(p * 255)`.
    pub fn to_gray(&self) -> Vec<u8> {
        self.outputs
            .iter()
            .map(|p| (p.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }
}

/// Per-variable argmax of the marginal. A tie at exactly 0.5 resolves to
/// the negative event.
pub fn max_marginal_decide(marginals: &MarginalField) -> Vec<bool> {
    marginals.outputs.iter().map(|&p| p > 0.5).collect()
}

/// Intersection over union of two binary masks; 1 when both are empty.
pub fn iou(pred: &[bool], gt: &[bool]) -> Result<f64, InferenceError> {
    if pred.len() != gt.len() {
        return Err(InferenceError::ShapeMismatch {
            pred: pred.len(),
            gt: gt.len(),
        });
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &g) in pred.iter().zip(gt) {
        inter += (p && g) as usize;
        union += (p || g) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Output variables fixed by the user. Unclamped outputs are `None`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClampSet {
    values: Vec<Option<Event>>,
}

impl ClampSet {
    pub fn new(outputs: usize) -> Self {
        Self {
            values: vec![None; outputs],
        }
    }

    /// Clamp every output to the given event.
    pub fn full(events: &[Event]) -> Self {
        Self {
            values: events.iter().copied().map(Some).collect(),
        }
    }

    pub fn outputs(&self) -> usize {
        self.values.len()
    }

    pub fn set(&mut self, unit: usize, event: Event) {
        self.values[unit] = Some(event);
    }

    /// Returns whether the unit was clamped.
    pub fn clear(&mut self, unit: usize) -> bool {
        self.values[unit].take().is_some()
    }

    pub fn get(&self, unit: usize) -> Option<&Event> {
        self.values[unit].as_ref()
    }

    /// Number of clamped outputs (|Y_u|).
    pub fn len(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &Event)> {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.as_ref().map(|e| (i, e)))
    }

    /// Unclamped outputs (Y_d).
    pub fn free(&self) -> impl Iterator<Item = usize> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.is_none().then_some(i))
    }

    pub(crate) fn check(&self, kind: UnitKind, outputs: usize) -> Result<(), InferenceError> {
        if self.values.len() != outputs {
            return Err(InferenceError::ClampSize {
                expected: outputs,
                got: self.values.len(),
            });
        }
        for (unit, e) in self.iter() {
            if !kind.is_legal(e) {
                return Err(InferenceError::IllegalClamp { unit });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decision_rule() {
        let m = MarginalField::new(vec![0.7, 0.5, 0.2, 0.5000001], 10);
        assert_eq!(max_marginal_decide(&m), vec![true, false, false, true]);
    }

    #[test]
    fn decision_invariant_under_monotone_transform() {
        let p = vec![0.1, 0.49, 0.5, 0.51, 0.93];
        let base = max_marginal_decide(&MarginalField::new(p.clone(), 1));
        // strictly increasing map that fixes 0.5
        let q: Vec<f64> = p.iter().map(|&v| 0.5 + (v - 0.5f64).powi(3) * 4.0).collect();
        assert_eq!(max_marginal_decide(&MarginalField::new(q, 1)), base);
    }

    #[test]
    fn iou_cases() {
        assert_eq!(iou(&[true, false, true], &[true, false, true]).unwrap(), 1.0);
        assert_eq!(iou(&[true, false], &[false, true]).unwrap(), 0.0);
        assert_eq!(iou(&[true, true], &[true, false]).unwrap(), 0.5);
        assert_eq!(iou(&[false, false], &[false, false]).unwrap(), 1.0);
        assert_eq!(
            iou(&[true], &[true, false]),
            Err(InferenceError::ShapeMismatch { pred: 1, gt: 2 })
        );
    }

    #[test]
    fn clamp_set_bookkeeping() {
        let mut c = ClampSet::new(4);
        assert!(c.is_empty());
        c.set(2, Event::Bits(1));
        c.set(0, Event::Bits(0));
        assert_eq!(c.len(), 2);
        assert_eq!(c.free().collect::<Vec<_>>(), vec![1, 3]);
        assert!(c.clear(2));
        assert!(!c.clear(2));
        assert_eq!(c.len(), 1);
        assert!(c.check(UnitKind::Sigmoid, 4).is_ok());
        c.set(1, Event::Bits(3));
        assert_eq!(c.check(UnitKind::Sigmoid, 4), Err(InferenceError::IllegalClamp { unit: 1 }));
        assert!(matches!(c.check(UnitKind::Sigmoid, 5), Err(InferenceError::ClampSize { .. })));
    }

    #[test]
    fn gray_levels() {
        let m = MarginalField::new(vec![0.0, 0.5, 1.0, 0.25], 1);
        assert_eq!(m.to_gray(), vec![0, 128, 255, 64]);
    }
}
