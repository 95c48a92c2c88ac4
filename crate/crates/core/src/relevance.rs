//! Auxiliary-to-target task relevance.
//!
//! An autoencoder is trained on the pooled windows of every auxiliary task
//! plus the target's training split. Each task is summarised by the mean of
//! its latent codes, and relevance decays with the Euclidean distance between
//! an auxiliary mean and the target mean:
//!
//! ```text
//! gamma = 1 / sqrt(1 + sum_k (mu_i[k] - mu_t[k])^2)
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::TaskDataset;
use crate::error::{Error, Result};
use crate::nets::{normalize_window, Activation, AutoencoderArch, AutoencoderParams};
use crate::optim::{Optimizer, OptimizerKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AutoencoderConfig {
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    pub activation: Activation,
    pub epochs: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        AutoencoderConfig {
            hidden: vec![128],
            latent_dim: 16,
            activation: Activation::Tanh,
            epochs: 300,
            lr: 1e-3,
            optimizer: OptimizerKind::Adam,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedAutoencoder {
    pub params: AutoencoderParams,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Full-batch training on the z-scored windows of all given tasks.
pub fn train_autoencoder(tasks: &[&TaskDataset], config: &AutoencoderConfig) -> Result<TrainedAutoencoder> {
    let windows: Vec<Vec<f64>> = tasks
        .iter()
        .flat_map(|t| t.samples().iter().map(|s| normalize_window(&s.window)))
        .collect();
    let Some(first) = windows.first() else {
        return Err(Error::Input("autoencoder needs at least one sample".into()));
    };
    let d = first.len();
    if windows.iter().any(|w| w.len() != d) {
        return Err(Error::Input("tasks disagree on window length".into()));
    }
    let arch = AutoencoderArch {
        input_dim: d,
        hidden: config.hidden.clone(),
        latent_dim: config.latent_dim,
        activation: config.activation,
    };
    let refs: Vec<&[f64]> = windows.iter().map(|w| w.as_slice()).collect();
    fit_autoencoder(&arch, &refs, config)
}

/// Trains an autoencoder on already-prepared inputs.
pub fn fit_autoencoder(
    arch: &AutoencoderArch,
    inputs: &[&[f64]],
    config: &AutoencoderConfig,
) -> Result<TrainedAutoencoder> {
    let mut ae = AutoencoderParams::init(arch, config.seed)?;
    let initial_loss = ae.loss(inputs)?;
    let mut loss = initial_loss;
    if config.epochs > 0 {
        let mut opt = Optimizer::new(config.optimizer, config.lr)?;
        let mut params = ae.params().clone();
        for epoch in 0..config.epochs {
            let (l, grads) = ae.loss_and_grad(inputs).map_err(|e| {
                Error::Training(format!("autoencoder epoch {epoch}: {e}"))
            })?;
            if !l.is_finite() {
                return Err(Error::Training(format!("autoencoder loss {l} at epoch {epoch}")));
            }
            opt.step(&mut params, &grads)?;
            ae.set_params(params.clone())?;
        }
        loss = ae.loss(inputs)?;
        if !loss.is_finite() {
            return Err(Error::Training(format!("final autoencoder loss {loss}")));
        }
    }
    Ok(TrainedAutoencoder {
        params: ae,
        initial_loss,
        final_loss: loss,
    })
}

/// Coordinate-wise mean of the latent codes of every window in `task`.
pub fn latent_mean(task: &TaskDataset, encoder: &AutoencoderParams) -> Result<Vec<f64>> {
    if task.is_empty() {
        return Err(Error::Input(format!("task `{}` is empty", task.condition_id())));
    }
    let windows: Vec<Vec<f64>> = task
        .samples()
        .iter()
        .map(|s| normalize_window(&s.window))
        .collect();
    let refs: Vec<&[f64]> = windows.iter().map(|w| w.as_slice()).collect();
    latent_mean_of(&refs, encoder)
}

/// [`latent_mean`] over already-prepared inputs.
pub fn latent_mean_of(inputs: &[&[f64]], encoder: &AutoencoderParams) -> Result<Vec<f64>> {
    if inputs.is_empty() {
        return Err(Error::Input("latent mean of no samples".into()));
    }
    let k = encoder.latent_dim();
    let codes = encoder.encode_batch(inputs)?;
    let mut mean = vec![0.0; k];
    for row in codes.chunks_exact(k) {
        for (m, z) in mean.iter_mut().zip(row) {
            *m += z;
        }
    }
    let n = inputs.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(mean)
}

/// Relevance of an auxiliary latent mean to the target latent mean.
pub fn task_relevance(aux_mean: &[f64], target_mean: &[f64]) -> Result<f64> {
    if aux_mean.len() != target_mean.len() {
        return Err(Error::Dimension(format!(
            "latent means of length {} and {}",
            aux_mean.len(),
            target_mean.len()
        )));
    }
    let sq: f64 = aux_mean
        .iter()
        .zip(target_mean)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let gamma = 1.0 / (1.0 + sq).sqrt();
    if !gamma.is_finite() {
        return Err(Error::Domain("relevance of non-finite latent means".into()));
    }
    Ok(gamma)
}

/// Relevance of every auxiliary condition, fixed before meta-training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceTable {
    pub gamma: BTreeMap<String, f64>,
    pub latent_means: BTreeMap<String, Vec<f64>>,
    pub target_mean: Vec<f64>,
    pub latent_dim: usize,
    pub recon_loss: f64,
}

impl RelevanceTable {
    pub fn gamma(&self, condition_id: &str) -> Result<f64> {
        self.gamma.get(condition_id).copied().ok_or_else(|| {
            Error::Contract(format!("no relevance for condition `{condition_id}`"))
        })
    }

    /// Every condition at relevance 1, the plain-MAML setting.
    pub fn uniform<'a>(conditions: impl IntoIterator<Item = &'a str>) -> Self {
        RelevanceTable {
            gamma: conditions.into_iter().map(|c| (c.to_string(), 1.0)).collect(),
            latent_means: BTreeMap::new(),
            target_mean: Vec::new(),
            latent_dim: 0,
            recon_loss: 0.0,
        }
    }

    /// Rescales so the most relevant condition sits at exactly 1, keeping
    /// every value inside (0, 1].
    pub fn renormalized(&self) -> Self {
        let max = self.gamma.values().copied().fold(0.0, f64::max);
        let mut out = self.clone();
        if max > 0.0 {
            out.gamma.values_mut().for_each(|g| *g /= max);
        }
        out
    }
}

/// Trains the autoencoder on the auxiliary pools plus the target's training
/// split and scores each auxiliary condition.
pub fn build_relevance_table(
    auxiliary: &[TaskDataset],
    target_train: &TaskDataset,
    config: &AutoencoderConfig,
) -> Result<RelevanceTable> {
    let mut pooled: Vec<&TaskDataset> = auxiliary.iter().collect();
    pooled.push(target_train);
    let trained = train_autoencoder(&pooled, config)?;
    let target_mean = latent_mean(target_train, &trained.params)?;
    let mut gamma = BTreeMap::new();
    let mut latent_means = BTreeMap::new();
    for task in auxiliary {
        let mu = latent_mean(task, &trained.params)?;
        gamma.insert(task.condition_id().to_string(), task_relevance(&mu, &target_mean)?);
        latent_means.insert(task.condition_id().to_string(), mu);
    }
    Ok(RelevanceTable {
        gamma,
        latent_means,
        target_mean,
        latent_dim: config.latent_dim,
        recon_loss: trained.final_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::autodiff::{ModelParams, Tensor};
    use crate::data::Sample;

    #[test]
    fn identical_means_give_one() {
        assert_eq!(task_relevance(&[0.3, -1.0], &[0.3, -1.0]).unwrap(), 1.0);
    }

    #[test]
    fn three_four_difference() {
        let g = task_relevance(&[3.0, 4.0], &[0.0, 0.0]).unwrap();
        assert!((g - 1.0 / 26f64.sqrt()).abs() < 1e-12);
        assert!((g - 0.196116).abs() < 1e-6);
    }

    #[test]
    fn larger_difference_is_less_relevant() {
        let near = task_relevance(&[1.0, 1.0], &[0.0, 0.0]).unwrap();
        let far = task_relevance(&[2.0, 2.0], &[0.0, 0.0]).unwrap();
        assert!(far < near);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(task_relevance(&[1.0], &[1.0, 2.0]), Err(Error::Dimension(_))));
    }

    fn identity_encoder(d: usize) -> AutoencoderParams {
        let arch = AutoencoderArch {
            input_dim: d,
            hidden: vec![],
            latent_dim: d,
            activation: Activation::Identity,
        };
        let mut p = ModelParams::new();
        p.push("enc0.w", Tensor::identity(d).unwrap()).unwrap();
        p.push("enc0.b", Tensor::zeros(vec![1, d]).unwrap()).unwrap();
        p.push("dec0.w", Tensor::identity(d).unwrap()).unwrap();
        p.push("dec0.b", Tensor::zeros(vec![1, d]).unwrap()).unwrap();
        AutoencoderParams::from_params(&arch, p).unwrap()
    }

    #[test]
    fn latent_mean_arithmetic() {
        let enc = identity_encoder(2);
        let m = latent_mean_of(&[&[0.0, 0.0], &[2.0, 4.0]], &enc).unwrap();
        assert_eq!(m, vec![1.0, 2.0]);
        let single = latent_mean_of(&[&[2.0, 4.0]], &enc).unwrap();
        assert_eq!(single, vec![2.0, 4.0]);
    }

    fn toy_task(n: usize) -> TaskDataset {
        let samples = (0..n)
            .map(|i| Sample {
                window: (0..8).map(|k| ((k * (i + 2)) as f64).sin()).collect(),
                label: i % 2,
            })
            .collect();
        TaskDataset::new("toy", 8, samples).unwrap()
    }

    #[test]
    fn duplicated_dataset_same_mean() {
        let cfg = AutoencoderConfig {
            hidden: vec![4],
            latent_dim: 2,
            epochs: 0,
            ..Default::default()
        };
        let t = toy_task(5);
        let ae = train_autoencoder(&[&t], &cfg).unwrap().params;
        let mut doubled = t.samples().to_vec();
        doubled.extend(t.samples().iter().cloned());
        let t2 = TaskDataset::new("toy2", 8, doubled).unwrap();
        let a = latent_mean(&t, &ae).unwrap();
        let b = latent_mean(&t2, &ae).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_epochs_is_initialisation() {
        let cfg = AutoencoderConfig {
            hidden: vec![4],
            latent_dim: 2,
            epochs: 0,
            seed: 3,
            ..Default::default()
        };
        let t = toy_task(4);
        let trained = train_autoencoder(&[&t], &cfg).unwrap();
        let arch = trained.params.arch().clone();
        assert_eq!(trained.params, AutoencoderParams::init(&arch, 3).unwrap());
        assert_eq!(trained.initial_loss, trained.final_loss);
    }

    #[test]
    fn training_does_not_increase_loss() {
        let cfg = AutoencoderConfig {
            hidden: vec![6],
            latent_dim: 3,
            epochs: 50,
            lr: 1e-2,
            seed: 1,
            ..Default::default()
        };
        let t = toy_task(10);
        let trained = train_autoencoder(&[&t], &cfg).unwrap();
        assert!(trained.final_loss <= trained.initial_loss);
    }

    #[test]
    fn constant_data_is_learned() {
        let samples = (0..6)
            .map(|_| Sample {
                window: vec![0.5, -1.0, 2.0, 0.0, 1.5, -0.5, 0.25, 1.0],
                label: 0,
            })
            .collect();
        let t = TaskDataset::new("const", 8, samples).unwrap();
        let cfg = AutoencoderConfig {
            hidden: vec![8],
            latent_dim: 2,
            epochs: 500,
            lr: 1e-2,
            seed: 2,
            ..Default::default()
        };
        let trained = train_autoencoder(&[&t], &cfg).unwrap();
        assert!(trained.final_loss < 1e-4, "loss {}", trained.final_loss);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(train_autoencoder(&[], &AutoencoderConfig::default()).is_err());
    }

    #[test]
    fn renormalized_keeps_range() {
        let mut t = RelevanceTable::uniform(["a", "b"]);
        t.gamma.insert("a".into(), 0.5);
        t.gamma.insert("b".into(), 0.25);
        let r = t.renormalized();
        assert_eq!(r.gamma["a"], 1.0);
        assert_eq!(r.gamma["b"], 0.5);
    }

    proptest! {
        #[test]
        fn relevance_range_symmetry_monotone(
            a in prop::collection::vec(-50.0f64..50.0, 4),
            b in prop::collection::vec(-50.0f64..50.0, 4),
            t in 1.01f64..4.0,
        ) {
            let g = task_relevance(&a, &b).unwrap();
            prop_assert!(g > 0.0 && g <= 1.0);
            prop_assert_eq!(g, task_relevance(&b, &a).unwrap());
            // pushing b further from a along the same line lowers relevance
            let far: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + t * (y - x)).collect();
            if a != b {
                prop_assert!(task_relevance(&a, &far).unwrap() < g);
            }
        }
    }
}
