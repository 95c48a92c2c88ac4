//! First-order optimizers for the single-task training loops (autoencoder,
//! teacher, fine-tuning). Meta-training applies its own plain gradient steps.

use serde::{Deserialize, Serialize};

use crate::autodiff::ModelParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    step: i32,
    first: Option<ModelParams>,
    second: Option<ModelParams>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        Ok(Optimizer {
            kind,
            lr,
            step: 0,
            first: None,
            second: None,
        })
    }

    /// Updates every tensor of `params` that requires grad.
    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams) -> Result<()> {
        match self.kind {
            OptimizerKind::Sgd => params.sgd_step(self.lr, grads),
            OptimizerKind::Adam => self.adam(params, grads),
        }
    }

    fn adam(&mut self, params: &mut ModelParams, grads: &ModelParams) -> Result<()> {
        params.check_same_layout(grads)?;
        let m = self.first.get_or_insert_with(|| grads.zeros_like());
        let v = self.second.get_or_insert_with(|| grads.zeros_like());
        self.step += 1;
        let bc1 = 1.0 - BETA1.powi(self.step);
        let bc2 = 1.0 - BETA2.powi(self.step);
        let lr = self.lr;
        for ((((_, p), (_, g)), (_, m)), (_, v)) in params
            .iter_mut()
            .zip(grads.iter())
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            if !p.requires_grad() {
                continue;
            }
            let (pv, gv) = (p.values_mut(), g.values());
            let (mv, vv) = (m.values_mut(), v.values_mut());
            for i in 0..pv.len() {
                mv[i] = BETA1 * mv[i] + (1.0 - BETA1) * gv[i];
                vv[i] = BETA2 * vv[i] + (1.0 - BETA2) * gv[i] * gv[i];
                let mhat = mv[i] / bc1;
                let vhat = vv[i] / bc2;
                pv[i] -= lr * mhat / (vhat.sqrt() + EPS);
            }
        }
        if !params.is_finite() {
            return Err(Error::Domain("optimizer step produced non-finite values".into()));
        }
        Ok(())
    }
}
