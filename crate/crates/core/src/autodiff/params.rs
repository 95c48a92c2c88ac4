use super::tape::{Gradients, Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Ordered collection of named tensors. Used both for parameters and for
/// gradients with the same layout.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelParams {
    entries: Vec<(String, Tensor)>,
}

impl ModelParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.get(&name).is_some() {
            return Err(Error::Contract(format!("duplicate parameter `{name}`")));
        }
        self.entries.push((name, tensor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar values.
    pub fn num_values(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|(_, t)| t.is_finite())
    }

    /// Same names and shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        ModelParams {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), t.zeros_like()))
                .collect(),
        }
    }

    pub fn check_same_layout(&self, other: &ModelParams) -> Result<()> {
        if self.entries.len() != other.entries.len() {
            return Err(Error::Dimension(format!(
                "parameter sets differ in length: {} vs {}",
                self.entries.len(),
                other.entries.len()
            )));
        }
        for ((a, ta), (b, tb)) in self.entries.iter().zip(&other.entries) {
            if a != b || ta.shape() != tb.shape() {
                return Err(Error::Dimension(format!(
                    "parameter layout mismatch: `{a}` {:?} vs `{b}` {:?}",
                    ta.shape(),
                    tb.shape()
                )));
            }
        }
        Ok(())
    }

    /// `self += scale * other`, in place, over tensors whose names match.
    pub fn axpy(&mut self, scale: f64, other: &ModelParams) -> Result<()> {
        self.check_same_layout(other)?;
        for ((_, t), (_, o)) in self.entries.iter_mut().zip(&other.entries) {
            for (x, y) in t.values_mut().iter_mut().zip(o.values()) {
                *x += scale * y;
            }
        }
        if !self.is_finite() {
            return Err(Error::Domain("parameter update produced non-finite values".into()));
        }
        Ok(())
    }

    /// `self -= lr * grads`, restricted to trainable tensors.
    pub fn sgd_step(&mut self, lr: f64, grads: &ModelParams) -> Result<()> {
        self.check_same_layout(grads)?;
        for ((_, t), (_, g)) in self.entries.iter_mut().zip(&grads.entries) {
            if !t.requires_grad() {
                continue;
            }
            for (x, y) in t.values_mut().iter_mut().zip(g.values()) {
                *x -= lr * y;
            }
        }
        if !self.is_finite() {
            return Err(Error::Domain("parameter update produced non-finite values".into()));
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for (_, t) in &mut self.entries {
            t.values_mut().iter_mut().for_each(|x| *x *= s);
        }
    }

    /// Euclidean norm over every value.
    pub fn norm(&self) -> f64 {
        self.entries
            .iter()
            .flat_map(|(_, t)| t.values())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    /// Records each tensor on the tape as a named leaf, in order.
    pub fn record(&self, tape: &mut Tape) -> Vec<Var> {
        self.entries.iter().map(|(n, t)| tape.param(n, t)).collect()
    }

    /// Builds a gradient set with this layout from a reverse sweep. Tensors
    /// that were not recorded (or are frozen) get zeros.
    pub fn grads_from(&self, grads: &Gradients) -> ModelParams {
        let named = grads.named();
        let entries = self
            .entries
            .iter()
            .map(|(n, t)| {
                let g = named
                    .iter()
                    .find(|(gn, _)| gn == n)
                    .map(|(_, g)| g.clone())
                    .unwrap_or_else(|| t.zeros_like());
                (n.clone(), g.with_grad(false))
            })
            .collect();
        ModelParams { entries }
    }

    /// Copies gradients into each tensor's derivative slot.
    pub fn attach_grads(&mut self, grads: &ModelParams) -> Result<()> {
        self.check_same_layout(grads)?;
        for ((_, t), (_, g)) in self.entries.iter_mut().zip(&grads.entries) {
            if t.requires_grad() {
                t.set_grad(Some(g.values().to_vec()))?;
            }
        }
        Ok(())
    }

    /// All values, concatenated in order.
    pub fn flatten(&self) -> Vec<f64> {
        self.entries
            .iter()
            .flat_map(|(_, t)| t.values().iter().copied())
            .collect()
    }

    pub fn set_requires_grad(&mut self, requires_grad: bool) {
        for (_, t) in &mut self.entries {
            t.set_requires_grad(requires_grad);
        }
    }
}

impl FromIterator<(String, Tensor)> for ModelParams {
    fn from_iter<I: IntoIterator<Item = (String, Tensor)>>(iter: I) -> Self {
        ModelParams {
            entries: iter.into_iter().collect(),
        }
    }
}
