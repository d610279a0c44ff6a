//! Per-pixel segmentation with a trained network: marginal fields, user
//! scribbles as output clamps, and robustness sweeps over degraded inputs.

use rayon::prelude::*;

use crate::data::{gaussian_blur, gaussian_noise, label_value, to_byte, ImageExample, Pnm};
use crate::evaluate::{predict, Decision};
use crate::inference::{gibbs_clamped, iou, max_marginal_decide, ClampSet, GibbsConfig, InferenceError, MarginalField};
use crate::model::{Event, Network, UnitKind};
use crate::rng::RngStream;

/// Scribble gray levels: 0 clamps background, 255 clamps foreground, any
/// other value (conventionally 128) leaves the pixel free.
pub fn clamps_from_scribble(scribble: &Pnm, kind: UnitKind) -> ClampSet {
    let mut c = ClampSet::new(scribble.data.len());
    for (i, &v) in scribble.data.iter().enumerate() {
        match v {
            0 => c.set(i, label_event(kind, false)),
            255 => c.set(i, label_event(kind, true)),
            _ => {}
        }
    }
    c
}

/// Output event for a foreground/background label, matching the training
/// targets of `label_value`.
pub fn label_event(kind: UnitKind, foreground: bool) -> Event {
    kind.event_for_value(label_value(kind, foreground))
        .expect("0/1 and -1/1 labels are legal for every output kind")
}

/// Marginals of one image: Gibbs sampling of the clamped posterior when any
/// output is clamped, otherwise the given decision rule.
pub fn segment_image(
    net: &Network,
    image: &[f64],
    clamp: Option<&ClampSet>,
    decision: Decision,
    gibbs: GibbsConfig,
    rng: &mut RngStream,
) -> Result<MarginalField, InferenceError> {
    match clamp {
        Some(c) if !c.is_empty() => gibbs_clamped(net, image, c, gibbs, rng),
        _ => predict(net, image, decision, rng),
    }
}

fn grid_dims(field: &MarginalField) -> (usize, usize) {
    field.grid.map_or((field.len(), 1), |g| (g.width, g.height))
}

/// Gray-coded foreground marginals, `round(p * 255)`.
pub fn marginal_pgm(field: &MarginalField) -> Pnm {
    let (w, h) = grid_dims(field);
    Pnm::gray(w, h, field.to_gray())
}

/// Max-marginal decision as a 0/255 mask.
pub fn decision_pgm(field: &MarginalField) -> Pnm {
    let (w, h) = grid_dims(field);
    Pnm::gray(w, h, max_marginal_decide(field).iter().map(|&b| if b { 255 } else { 0 }).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Degradation {
    /// Additive Gaussian pixel noise with this standard deviation.
    Noise(f64),
    /// Gaussian blur with this kernel radius.
    Blur(usize),
}

impl Degradation {
    pub fn apply(&self, image: &[f64], height: usize, width: usize, rng: &mut RngStream) -> Vec<f64> {
        match *self {
            Degradation::Noise(s) => gaussian_noise(image, s, rng),
            Degradation::Blur(r) => gaussian_blur(image, height, width, 3, r),
        }
    }

    /// Short tag used in file names, e.g. `noise0.1` or `blur2`.
    pub fn tag(&self) -> String {
        match self {
            Degradation::Noise(s) => format!("noise{s}"),
            Degradation::Blur(r) => format!("blur{r}"),
        }
    }
}

/// One level of a sweep: the degraded marginals of every image and their mean IoU.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepLevel {
    pub level: Degradation,
    pub fields: Vec<MarginalField>,
    pub mean_iou: f64,
}

/// Degrades every image at each level and segments it. Image `i` at level
/// `k` uses noise substream `(k, i)` and decision substream `(k, i)`, so two
/// models swept with the same seed see identical degraded inputs.
pub fn degradation_sweep(
    net: &Network,
    images: &[ImageExample],
    height: usize,
    width: usize,
    levels: &[Degradation],
    decision: Decision,
    seed: u64,
) -> Result<Vec<SweepLevel>, InferenceError> {
    let root = RngStream::new(seed);
    levels
        .iter()
        .enumerate()
        .map(|(k, level)| {
            let noise = root.split(0).split(k as u64);
            let dec = root.split(1).split(k as u64);
            let results = images
                .par_iter()
                .enumerate()
                .map(|(i, ex)| {
                    let img = level.apply(&ex.image, height, width, &mut noise.split(i as u64));
                    let field = predict(net, &img, decision, &mut dec.split(i as u64))?;
                    let score = iou(&max_marginal_decide(&field), &ex.mask)?;
                    Ok((field, score))
                })
                .collect::<Result<Vec<_>, InferenceError>>()?;
            let mean_iou = results.iter().map(|(_, s)| s).sum::<f64>() / results.len().max(1) as f64;
            Ok(SweepLevel {
                level: *level,
                fields: results.into_iter().map(|(f, _)| f).collect(),
                mean_iou,
            })
        })
        .collect()
}

/// Whether a sequence never rises by more than `tolerance` over any earlier value.
pub fn non_increasing_within(values: &[f64], tolerance: f64) -> bool {
    let mut lowest = f64::INFINITY;
    for &v in values {
        if !v.is_finite() || v > lowest + tolerance {
            return false;
        }
        lowest = lowest.min(v);
    }
    true
}

/// RGB preview bytes of an image in `[0,1]`.
pub fn image_ppm(image: &[f64], height: usize, width: usize) -> Pnm {
    Pnm::rgb(width, height, image.iter().map(|&v| to_byte(v)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_blob_task;
    use crate::model::{InputGrid, NetworkSpec};

    fn zero_net() -> Network {
        Network::zeros(NetworkSpec::local_stack(InputGrid { height: 6, width: 5, channels: 3 }, 1, 1, 1, 1)).unwrap()
    }

    #[test]
    fn scribble_levels() {
        let c = clamps_from_scribble(&Pnm::gray(4, 1, vec![0, 128, 255, 17]), UnitKind::Sigmoid);
        assert_eq!(c.get(0), Some(&Event::Bits(0)));
        assert_eq!(c.get(2), Some(&Event::Bits(1)));
        assert_eq!(c.len(), 2);
        let c = clamps_from_scribble(&Pnm::gray(2, 1, vec![0, 255]), UnitKind::Delta);
        assert_eq!(c.get(0), Some(&Event::Value(0.0)));
        assert_eq!(c.get(1), Some(&Event::Value(1.0)));
        assert_eq!(label_event(UnitKind::Tanh, false), Event::Bits(0));
    }

    #[test]
    fn zero_model_is_mid_gray() {
        let net = zero_net();
        let f = segment_image(&net, &[0.3; 90], None, Decision::Deterministic, GibbsConfig::default(), &mut RngStream::new(0)).unwrap();
        let img = marginal_pgm(&f);
        assert_eq!((img.width, img.height), (5, 6));
        assert!(img.data.iter().all(|&v| v == 128));
        assert!(decision_pgm(&f).data.iter().all(|&v| v == 0));
    }

    #[test]
    fn full_scribble_fixes_decision() {
        let net = zero_net();
        let scribble = Pnm::gray(5, 6, (0..30).map(|i| if i % 3 == 0 { 255 } else { 0 }).collect());
        let clamp = clamps_from_scribble(&scribble, UnitKind::Sigmoid);
        let cfg = GibbsConfig { burn_in: 5, sweeps: 20, thinning: 1 };
        let f = segment_image(&net, &[0.5; 90], Some(&clamp), Decision::Deterministic, cfg, &mut RngStream::new(1)).unwrap();
        assert_eq!(decision_pgm(&f).data, scribble.data);
    }

    #[test]
    fn sweep_shapes() {
        let data = synth_blob_task(3, 6, 5, 2);
        let net = zero_net();
        let levels = [Degradation::Noise(0.0), Degradation::Noise(0.2), Degradation::Blur(1)];
        let s = degradation_sweep(&net, &data.examples, 6, 5, &levels, Decision::Sampled { samples: 20 }, 4).unwrap();
        assert_eq!(s.len(), 3);
        assert!(s.iter().all(|l| l.fields.len() == 3));
        assert_eq!(s, degradation_sweep(&net, &data.examples, 6, 5, &levels, Decision::Sampled { samples: 20 }, 4).unwrap());
        assert_eq!(levels[1].tag(), "noise0.2");
    }

    #[test]
    fn monotone_with_jitter() {
        assert!(non_increasing_within(&[0.8, 0.7, 0.72, 0.5], 0.05));
        assert!(!non_increasing_within(&[0.8, 0.7, 0.9], 0.05));
        assert!(!non_increasing_within(&[0.5, 0.4, 0.56], 0.05));
    }
}
