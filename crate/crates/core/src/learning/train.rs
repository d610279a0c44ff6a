use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use super::{bn_gradient, ebp_gradient, lower_bound_estimate, GradientAccumulator};
use crate::data::Example;
use crate::evaluate::{evaluate, Decision, Metric};
use crate::inference::InferenceError;
use crate::model::{ModelError, Network, Params};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TrainMode {
    /// Back-propagation on the deterministic network.
    #[serde(rename = "EBP")]
    Ebp,
    /// Stochastic likelihood learning of the Bayesian network.
    #[serde(rename = "BN")]
    Bn,
}

impl std::str::FromStr for TrainMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "ebp" | "ffn" => Ok(TrainMode::Ebp),
            "bn" => Ok(TrainMode::Bn),
            _ => Err(format!("unknown mode {s:?} (ebp|bn)")),
        }
    }
}

impl std::fmt::Display for TrainMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TrainMode::Ebp => "EBP",
            TrainMode::Bn => "BN",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mode: TrainMode,
    /// Fixed ascent step on the mean batch gradient.
    pub step_size: f64,
    /// Number of parameter updates.
    pub iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Metrics are logged every `eval_period` updates and after the last one.
    pub eval_period: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Ancestral samples per example when a BN-trained model is evaluated.
    pub decision_samples: usize,
    /// Samples per example behind the logged Jensen-bound estimate.
    pub bound_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Ebp,
            step_size: 0.1,
            iterations: 1000,
            batch_size: 1,
            seed: 0,
            eval_period: 100,
            momentum: 0.0,
            weight_decay: 0.0,
            decision_samples: 1000,
            bound_samples: 8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.step_size.is_finite() && self.step_size >= 0.0) {
            return bad("step_size must be finite and non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.eval_period == 0 {
            return bad("eval_period must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad("weight_decay must be finite and non-negative");
        }
        if self.decision_samples == 0 || self.bound_samples == 0 {
            return bad("sample counts must be positive");
        }
        Ok(())
    }

    /// How models trained in this mode are evaluated.
    pub fn decision(&self) -> Decision {
        match self.mode {
            TrainMode::Ebp => Decision::Deterministic,
            TrainMode::Bn => Decision::Sampled {
                samples: self.decision_samples,
            },
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("training set is empty")]
    EmptyDataset,
    #[error("non-finite parameter at layer {layer}, unit {unit} after iteration {iteration}; lower the step size")]
    NonFinite { iteration: usize, layer: usize, unit: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub iter: usize,
    pub wall_ms: u64,
    pub mode: TrainMode,
    pub train_metric: f64,
    pub test_metric: Option<f64>,
    pub lower_bound_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub rows: Vec<MetricsRow>,
}

impl TrainLog {
    pub fn last(&self) -> Option<&MetricsRow> {
        self.rows.last()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

const ORDER: u64 = 0;
const GRADIENT: u64 = 1;
const EVAL: u64 = 2;
const BOUND: u64 = 3;

/// Fixed-step stochastic gradient ascent on the conditional log-likelihood.
///
/// Each update averages one gradient per batch example; example `i` of
/// iteration `t` draws from substream `(t, i)` so results do not depend on
/// the thread count. Batches walk a per-epoch shuffle of the training set.
pub fn train(
    net: &mut Network,
    train: &[Example],
    test: &[Example],
    metric: Metric,
    cfg: &TrainConfig,
) -> Result<TrainLog, TrainError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let root = RngStream::new(cfg.seed);
    let start = Instant::now();
    let mut log = TrainLog::default();
    let mut velocity: Option<Params> = None;
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut epoch = 0u64;
    log.rows.push(metrics_row(net, train, test, metric, cfg, 0, start, &root)?);
    for t in 1..=cfg.iterations {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        while batch.len() < cfg.batch_size {
            if cursor == order.len() {
                order = (0..train.len()).collect();
                root.split(ORDER).split(epoch).shuffle(&mut order);
                epoch += 1;
                cursor = 0;
            }
            batch.push(order[cursor]);
            cursor += 1;
        }
        let stream = root.split(GRADIENT).split(t as u64);
        let model = &*net;
        let grads = batch
            .par_iter()
            .enumerate()
            .map(|(i, &e)| match cfg.mode {
                TrainMode::Ebp => ebp_gradient(model, &train[e]),
                TrainMode::Bn => bn_gradient(model, &train[e], &mut stream.split(i as u64)),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut acc = GradientAccumulator::zeros_like(net);
        for g in grads {
            acc.merge(&GradientAccumulator { grads: g, samples: 1 });
        }
        apply_update(net, &acc.mean(), cfg, &mut velocity);
        if let Some((layer, unit)) = net.first_non_finite() {
            return Err(TrainError::NonFinite {
                iteration: t,
                layer,
                unit,
            });
        }
        if t % cfg.eval_period == 0 || t == cfg.iterations {
            log.rows.push(metrics_row(net, train, test, metric, cfg, t, start, &root)?);
        }
    }
    Ok(log)
}

fn apply_update(net: &mut Network, grad: &Params, cfg: &TrainConfig, velocity: &mut Option<Params>) {
    let plain = cfg.momentum == 0.0 && cfg.weight_decay == 0.0;
    let params = net.params_mut();
    if plain {
        for (p, g) in params.iter_mut().flatten().zip(grad.iter().flatten()) {
            for (w, d) in p.iter_mut().zip(g) {
                *w += cfg.step_size * d;
            }
        }
        return;
    }
    let v = velocity.get_or_insert_with(|| grad.iter().map(|l| l.iter().map(|u| vec![0.0; u.len()]).collect()).collect());
    for ((p, g), vel) in params.iter_mut().flatten().zip(grad.iter().flatten()).zip(v.iter_mut().flatten()) {
        for ((w, d), m) in p.iter_mut().zip(g).zip(vel.iter_mut()) {
            *m = cfg.momentum * *m + d - cfg.weight_decay * *w;
            *w += cfg.step_size * *m;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn metrics_row(
    net: &Network,
    train: &[Example],
    test: &[Example],
    metric: Metric,
    cfg: &TrainConfig,
    iter: usize,
    start: Instant,
    root: &RngStream,
) -> Result<MetricsRow, TrainError> {
    let decision = cfg.decision();
    let eval_seed = root.split(EVAL).next_word();
    let train_metric = evaluate(net, train, metric, decision, eval_seed)?;
    let test_metric = if test.is_empty() {
        None
    } else {
        Some(evaluate(net, test, metric, decision, eval_seed ^ 1)?)
    };
    let bound = root.split(BOUND).split(iter as u64);
    let total = train
        .par_iter()
        .enumerate()
        .map(|(i, ex)| lower_bound_estimate(net, ex, cfg.bound_samples, &mut bound.split(i as u64)))
        .collect::<Result<Vec<f64>, _>>()?
        .iter()
        .sum::<f64>();
    Ok(MetricsRow {
        iter,
        wall_ms: start.elapsed().as_millis() as u64,
        mode: cfg.mode,
        train_metric,
        test_metric,
        lower_bound_estimate: total / train.len() as f64,
    })
}
