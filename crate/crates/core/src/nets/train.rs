use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::lstm::{argmax, LstmClassifierParams};
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::optim::{Optimizer, OptimizerKind};
use crate::seed;

/// Settings for plain supervised training of a classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            lr: 1e-3,
            batch_size: 16,
            optimizer: OptimizerKind::Adam,
            seed: 0,
        }
    }
}

/// Mini-batch training on `samples`, reshuffled every epoch. Only tensors
/// that require grad move. `on_epoch` sees the network after each epoch.
/// Returns the mean training loss of each epoch.
pub fn train_classifier(
    net: &mut LstmClassifierParams,
    samples: &[Sample],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(usize, &LstmClassifierParams) -> Result<()>,
) -> Result<Vec<f64>> {
    if config.epochs == 0 {
        return Ok(Vec::new());
    }
    if samples.is_empty() {
        return Err(Error::Contract("training set is empty".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    if let Some(s) = samples.iter().find(|s| s.label >= net.classes()) {
        return Err(Error::Contract(format!(
            "label {} exceeds head width {}",
            s.label,
            net.classes()
        )));
    }
    let mut rng = seed::rng(config.seed);
    let mut opt = Optimizer::new(config.optimizer, config.lr)?;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut curve = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let windows: Vec<&[f64]> = chunk.iter().map(|&i| samples[i].window.as_slice()).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| samples[i].label).collect();
            let eval = net.loss_and_grad(&windows, &labels).map_err(|e| {
                Error::Training(format!("epoch {epoch}: {e}"))
            })?;
            if !eval.loss.is_finite() {
                return Err(Error::Training(format!("non-finite loss at epoch {epoch}")));
            }
            total += eval.loss * chunk.len() as f64;
            opt.step(net.params_mut(), &eval.grads)?;
        }
        curve.push(total / samples.len() as f64);
        on_epoch(epoch, net)?;
    }
    Ok(curve)
}

/// Fraction of samples whose argmax prediction matches the label.
pub fn accuracy(net: &LstmClassifierParams, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Contract("accuracy of an empty set".into()));
    }
    let mut correct = 0;
    for chunk in samples.chunks(256) {
        let windows: Vec<&[f64]> = chunk.iter().map(|s| s.window.as_slice()).collect();
        for (out, s) in net.forward_batch(&windows)?.iter().zip(chunk) {
            if argmax(out.probs.values()) == s.label {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}
