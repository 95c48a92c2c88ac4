//! Fully connected autoencoder. Hidden layers use the configured activation;
//! the latent code and the reconstruction are linear.

use serde::{Deserialize, Serialize};

use super::uniform_init;
use crate::autodiff::{ModelParams, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AutoencoderArch {
    pub input_dim: usize,
    /// Hidden widths between input and latent; the decoder mirrors them.
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    #[serde(default)]
    pub activation: Activation,
}

impl AutoencoderArch {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.latent_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::Config(format!(
                "autoencoder widths must be positive: {self:?}"
            )));
        }
        Ok(())
    }

    fn encoder_widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(&self.hidden);
        w.push(self.latent_dim);
        w
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderParams {
    arch: AutoencoderArch,
    params: ModelParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderOutput {
    pub latent: Tensor,
    pub recon: Tensor,
    pub recon_loss: f64,
}

impl AutoencoderParams {
    pub fn init(arch: &AutoencoderArch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = seed::rng(seed);
        let enc = arch.encoder_widths();
        let mut params = ModelParams::new();
        for (i, pair) in enc.windows(2).enumerate() {
            params.push(format!("enc{i}.w"), uniform_init(&mut rng, vec![pair[0], pair[1]], pair[0])?)?;
            params.push(format!("enc{i}.b"), uniform_init(&mut rng, vec![1, pair[1]], pair[0])?)?;
        }
        let dec: Vec<usize> = enc.iter().rev().copied().collect();
        for (i, pair) in dec.windows(2).enumerate() {
            params.push(format!("dec{i}.w"), uniform_init(&mut rng, vec![pair[0], pair[1]], pair[0])?)?;
            params.push(format!("dec{i}.b"), uniform_init(&mut rng, vec![1, pair[1]], pair[0])?)?;
        }
        Ok(AutoencoderParams {
            arch: arch.clone(),
            params,
        })
    }

    /// Wraps hand-built weights. Layout must match what `init` would build.
    pub fn from_params(arch: &AutoencoderArch, params: ModelParams) -> Result<Self> {
        let reference = Self::init(arch, 0)?;
        reference.params.check_same_layout(&params)?;
        Ok(AutoencoderParams {
            arch: arch.clone(),
            params,
        })
    }

    pub fn arch(&self) -> &AutoencoderArch {
        &self.arch
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn set_params(&mut self, params: ModelParams) -> Result<()> {
        self.params.check_same_layout(&params)?;
        self.params = params;
        Ok(())
    }

    pub fn latent_dim(&self) -> usize {
        self.arch.latent_dim
    }

    fn stack(&self, tape: &mut Tape, input: Var, vars: &[Var], prefix_offset: usize, depth: usize) -> Result<Var> {
        let mut x = input;
        for layer in 0..depth {
            let w = vars[prefix_offset + 2 * layer];
            let b = vars[prefix_offset + 2 * layer + 1];
            x = tape.matmul(x, w)?;
            x = tape.add(x, b)?;
            if layer + 1 < depth {
                x = match self.arch.activation {
                    Activation::Tanh => tape.tanh(x)?,
                    Activation::Identity => x,
                };
            }
        }
        Ok(x)
    }

    /// Records encoder, decoder and mean-squared reconstruction error for a
    /// `[batch, input_dim]` matrix. Returns `(latent, recon, loss)`.
    pub fn record(&self, tape: &mut Tape, batch: &[&[f64]]) -> Result<(Var, Var, Var)> {
        let d = self.arch.input_dim;
        if batch.is_empty() {
            return Err(Error::Contract("empty batch".into()));
        }
        let mut flat = Vec::with_capacity(batch.len() * d);
        for x in batch {
            if x.len() != d {
                return Err(Error::Dimension(format!(
                    "autoencoder expects length {d}, got {}",
                    x.len()
                )));
            }
            flat.extend_from_slice(x);
        }
        let input = tape.constant(vec![batch.len(), d], flat)?;
        let vars = self.params.record(tape);
        let depth = self.arch.hidden.len() + 1;
        let latent = self.stack(tape, input, &vars, 0, depth)?;
        let recon = self.stack(tape, latent, &vars, 2 * depth, depth)?;
        let diff = tape.sub(recon, input)?;
        let sq = tape.mul(diff, diff)?;
        let loss = tape.mean(sq)?;
        Ok((latent, recon, loss))
    }

    pub fn forward(&self, x: &[f64]) -> Result<AutoencoderOutput> {
        let mut tape = Tape::no_grad();
        let (latent, recon, loss) = self.record(&mut tape, &[x])?;
        Ok(AutoencoderOutput {
            latent: Tensor::new(vec![self.arch.latent_dim], tape.value(latent).to_vec())?,
            recon: Tensor::new(vec![self.arch.input_dim], tape.value(recon).to_vec())?,
            recon_loss: tape.value(loss)[0],
        })
    }

    /// Latent codes for a batch, row-major `[batch, latent_dim]`.
    pub fn encode_batch(&self, batch: &[&[f64]]) -> Result<Vec<f64>> {
        let mut tape = Tape::no_grad();
        let (latent, _, _) = self.record(&mut tape, batch)?;
        Ok(tape.value(latent).to_vec())
    }

    pub fn loss(&self, batch: &[&[f64]]) -> Result<f64> {
        let mut tape = Tape::no_grad();
        let (_, _, loss) = self.record(&mut tape, batch)?;
        Ok(tape.value(loss)[0])
    }

    pub fn loss_and_grad(&self, batch: &[&[f64]]) -> Result<(f64, ModelParams)> {
        let mut tape = Tape::new();
        let (_, _, loss) = self.record(&mut tape, batch)?;
        let grads = tape.backward(loss)?;
        Ok((tape.value(loss)[0], self.params.grads_from(&grads)))
    }
}
