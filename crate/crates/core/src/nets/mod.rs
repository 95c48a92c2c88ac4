//! Networks built on the tape: a stacked LSTM sequence classifier and an MLP
//! autoencoder.

mod autoencoder;
mod loss;
mod lstm;
mod train;

pub use autoencoder::{Activation, AutoencoderArch, AutoencoderOutput, AutoencoderParams};
pub use loss::{cross_entropy, cross_entropy_loss, PROB_FLOOR};
pub use lstm::{BatchEval, ForwardOutput, LstmArch, LstmClassifierParams, NetConfig};
pub use train::{accuracy, train_classifier, TrainConfig};

pub(crate) use lstm::{argmax, layer_names, HEAD_B, HEAD_W};

use rand::Rng as _;

use crate::autodiff::Tensor;
use crate::error::Result;
use crate::seed::Rng;

/// Z-scores a window: mean 0, standard deviation 1 (floored at 1e-8).
pub fn normalize_window(window: &[f64]) -> Vec<f64> {
    let n = window.len() as f64;
    let mean = window.iter().sum::<f64>() / n;
    let var = window.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    window.iter().map(|x| (x - mean) / std).collect()
}

/// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
pub(crate) fn uniform_init(rng: &mut Rng, shape: Vec<usize>, fan_in: usize) -> Result<Tensor> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let values = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
    Ok(Tensor::new(shape, values)?.with_grad(true))
}
