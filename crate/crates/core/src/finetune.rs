//! Target adaptation: keep the first `l` meta-trained layers fixed, stack
//! fresh layers and a fresh head on top, and train on the target samples.

use crate::autodiff::{ModelParams, Tensor};
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::nets::{
    argmax, layer_names, train_classifier, uniform_init, LstmClassifierParams, TrainConfig, HEAD_B,
    HEAD_W,
};
use crate::seed;

/// A classifier whose first `frozen_layers` LSTM layers never move.
///
/// Layer order is: the `l` frozen layers, the remaining `L - l` meta-trained
/// layers, then `n_new` freshly initialised layers, then a new head.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenModel {
    net: LstmClassifierParams,
    frozen_layers: usize,
    original_layers: usize,
    new_layers: usize,
}

/// Builds a [`FrozenModel`] from meta-trained parameters. The head is always
/// replaced by a fresh one sized for `classes`.
pub fn freeze_layers(
    theta: &LstmClassifierParams,
    l: usize,
    n_new: usize,
    classes: usize,
    seed: u64,
) -> Result<FrozenModel> {
    let depth = theta.layers();
    if l == 0 || l > depth {
        return Err(Error::Config(format!(
            "frozen layer count {l} outside 1..={depth}"
        )));
    }
    if classes == 0 {
        return Err(Error::Config("target class count must be positive".into()));
    }
    let h = theta.hidden_size();
    let mut rng = seed::rng(seed);
    let mut params = ModelParams::new();
    for i in 0..depth {
        for name in layer_names(i) {
            let mut t = theta.params().get(&name).unwrap().clone();
            t.set_requires_grad(i >= l);
            t.set_grad(None)?;
            params.push(name, t)?;
        }
    }
    for i in depth..depth + n_new {
        let [w_ih, w_hh, b] = layer_names(i);
        params.push(w_ih, uniform_init(&mut rng, vec![h, 4 * h], h)?)?;
        params.push(w_hh, uniform_init(&mut rng, vec![h, 4 * h], h)?)?;
        params.push(b, uniform_init(&mut rng, vec![1, 4 * h], h)?)?;
    }
    params.push(HEAD_W, uniform_init(&mut rng, vec![h, classes], h)?)?;
    params.push(HEAD_B, uniform_init(&mut rng, vec![1, classes], h)?)?;
    let net = LstmClassifierParams::from_params(params, theta.arch().timesteps)?;
    Ok(FrozenModel {
        net,
        frozen_layers: l,
        original_layers: depth,
        new_layers: n_new,
    })
}

impl FrozenModel {
    /// Rewraps a network saved from a [`FrozenModel`] with the same layer
    /// split.
    pub fn restore(mut net: LstmClassifierParams, frozen_layers: usize, new_layers: usize) -> Result<Self> {
        let depth = net.layers();
        if frozen_layers == 0 || frozen_layers + new_layers > depth {
            return Err(Error::Config(format!(
                "{frozen_layers} frozen and {new_layers} new layers do not fit a {depth}-layer network"
            )));
        }
        for i in 0..frozen_layers {
            for name in layer_names(i) {
                net.params_mut().get_mut(&name).unwrap().set_requires_grad(false);
            }
        }
        Ok(FrozenModel {
            net,
            frozen_layers,
            original_layers: depth - new_layers,
            new_layers,
        })
    }

    pub fn net(&self) -> &LstmClassifierParams {
        &self.net
    }

    pub fn frozen_layers(&self) -> usize {
        self.frozen_layers
    }

    pub fn original_layers(&self) -> usize {
        self.original_layers
    }

    pub fn new_layers(&self) -> usize {
        self.new_layers
    }

    pub fn classes(&self) -> usize {
        self.net.classes()
    }

    /// Copies of the frozen tensors, in order.
    pub fn frozen_params(&self) -> Vec<(String, Tensor)> {
        (0..self.frozen_layers)
            .flat_map(layer_names)
            .map(|n| {
                let t = self.net.params().get(&n).unwrap().clone();
                (n, t)
            })
            .collect()
    }

    pub fn trainable_names(&self) -> Vec<String> {
        self.net
            .params()
            .iter()
            .filter(|(_, t)| t.requires_grad())
            .map(|(n, _)| n.to_string())
            .collect()
    }
}

/// Trains the unfrozen part of `model` on `samples`; returns the per-epoch
/// mean loss.
pub fn fine_tune(model: &mut FrozenModel, samples: &[Sample], config: &TrainConfig) -> Result<Vec<f64>> {
    if samples.is_empty() && config.epochs > 0 {
        return Err(Error::Contract("fine-tuning set is empty".into()));
    }
    let before = model.frozen_params();
    let curve = train_classifier(&mut model.net, samples, config, |_, _| Ok(()))?;
    if model.frozen_params() != before {
        return Err(Error::Training("frozen parameters changed during fine-tuning".into()));
    }
    Ok(curve)
}

/// Most probable class (lowest index on ties) and the full distribution.
pub fn predict(model: &FrozenModel, window: &[f64]) -> Result<(usize, Vec<f64>)> {
    let out = model.net.forward(window)?;
    let probs = out.probs.values().to_vec();
    Ok((argmax(&probs), probs))
}

/// One row of a prediction dump.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub index: usize,
    pub truth: usize,
    pub predicted: usize,
    pub max_prob: f64,
    /// Final top-layer hidden state, for embedding plots.
    pub hidden: Vec<f64>,
}

pub fn predict_all(model: &FrozenModel, samples: &[Sample]) -> Result<Vec<Prediction>> {
    let mut out = Vec::with_capacity(samples.len());
    for (c, chunk) in samples.chunks(256).enumerate() {
        let windows: Vec<&[f64]> = chunk.iter().map(|s| s.window.as_slice()).collect();
        for (j, (f, s)) in model.net.forward_batch(&windows)?.into_iter().zip(chunk).enumerate() {
            let probs = f.probs.values();
            let predicted = argmax(probs);
            out.push(Prediction {
                index: c * 256 + j,
                truth: s.label,
                predicted,
                max_prob: probs[predicted],
                hidden: f.hidden.values().to_vec(),
            });
        }
    }
    Ok(out)
}
