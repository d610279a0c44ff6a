//! Paired FFN-vs-BN training on the synthetic blob segmentation task: both
//! models start from the same initialisation and use the same fixed step
//! size, then their train/test IoU is compared.

use crate::data::{split, synth_blob_task, ImageDataset};
use crate::evaluate::Metric;
use crate::learning::{train, TrainConfig, TrainError, TrainMode};
use crate::model::{Init, InputGrid, Network, NetworkSpec, UnitKind};

#[derive(Debug, Clone, PartialEq)]
pub struct BlobProtocol {
    pub size: usize,
    pub train_count: usize,
    pub test_count: usize,
    /// Hidden layers below the output; every layer is local with this radius.
    pub hidden: usize,
    pub depth: usize,
    pub radius: usize,
    /// How many of the lowest layers see the image directly.
    pub image_layers: usize,
    pub init_scale: f64,
    pub step_size: f64,
    pub iterations: usize,
    pub decision_samples: usize,
}

impl Default for BlobProtocol {
    fn default() -> Self {
        Self {
            size: 16,
            train_count: 20,
            test_count: 80,
            hidden: 2,
            depth: 2,
            radius: 1,
            image_layers: 1,
            init_scale: 0.1,
            step_size: 0.5,
            iterations: 3000,
            decision_samples: 100,
        }
    }
}

/// Final IoU of one model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub train: f64,
    pub test: f64,
}

impl Scores {
    pub fn gap(&self) -> f64 {
        self.train - self.test
    }
}

#[derive(Debug, Clone)]
pub struct PairedRun {
    pub seed: u64,
    pub ebp: Scores,
    pub bn: Scores,
    pub ebp_net: Network,
    pub bn_net: Network,
}

impl BlobProtocol {
    pub fn network(&self, seed: u64) -> Network {
        let input = InputGrid {
            height: self.size,
            width: self.size,
            channels: 3,
        };
        let spec = NetworkSpec::local_stack(input, self.hidden, self.depth, self.radius, self.image_layers);
        Network::new(spec, Init { scale: self.init_scale, seed }).expect("valid local stack")
    }

    /// Blob images for `seed` split into train and test sets.
    pub fn data(&self, seed: u64) -> (ImageDataset, ImageDataset) {
        let data = synth_blob_task(self.train_count + self.test_count, self.size, self.size, 1000 + seed);
        let (tr, te) = split(&data.examples, self.train_count, seed).expect("valid counts");
        (data.subset(tr), data.subset(te))
    }

    pub fn train_config(&self, mode: TrainMode, seed: u64) -> TrainConfig {
        TrainConfig {
            mode,
            step_size: self.step_size,
            iterations: self.iterations,
            eval_period: self.iterations.max(1),
            seed,
            decision_samples: self.decision_samples,
            ..Default::default()
        }
    }

    pub fn run(&self, seed: u64) -> Result<PairedRun, TrainError> {
        let (tr, te) = self.data(seed);
        let tr = tr.to_examples(UnitKind::Sigmoid);
        let te = te.to_examples(UnitKind::Sigmoid);
        let init = self.network(seed);
        let fit = |mode| -> Result<(Scores, Network), TrainError> {
            let mut net = init.clone();
            let log = train(&mut net, &tr, &te, Metric::Iou, &self.train_config(mode, seed))?;
            let r = log.last().expect("final row");
            Ok((
                Scores {
                    train: r.train_metric,
                    test: r.test_metric.expect("test set"),
                },
                net,
            ))
        };
        let (ebp, ebp_net) = fit(TrainMode::Ebp)?;
        let (bn, bn_net) = fit(TrainMode::Bn)?;
        Ok(PairedRun {
            seed,
            ebp,
            bn,
            ebp_net,
            bn_net,
        })
    }
}
