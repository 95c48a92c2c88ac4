//! Stacked LSTM classifier.
//!
//! A window of length `D` is z-scored and read as `T` timesteps of
//! `F = D / T` features. Each layer runs the standard gate equations
//! (input, forget, cell candidate, output, in that column order):
//!
//! ```text
//! z   = x_t W_ih + h_{t-1} W_hh + b
//! c_t = sigmoid(z_f) * c_{t-1} + sigmoid(z_i) * tanh(z_g)
//! h_t = sigmoid(z_o) * tanh(c_t)
//! ```
//!
//! The top layer's last hidden state feeds a linear head and a softmax.

use serde::{Deserialize, Serialize};

use super::loss::cross_entropy;
use super::{normalize_window, uniform_init};
use crate::autodiff::{ModelParams, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LstmArch {
    pub window_len: usize,
    pub timesteps: usize,
    pub hidden_size: usize,
    pub layers: usize,
    pub classes: usize,
}

impl LstmArch {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("window_len", self.window_len),
            ("timesteps", self.timesteps),
            ("hidden_size", self.hidden_size),
            ("layers", self.layers),
            ("classes", self.classes),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.window_len % self.timesteps != 0 {
            return Err(Error::Config(format!(
                "window length {} is not divisible by {} timesteps",
                self.window_len, self.timesteps
            )));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.window_len / self.timesteps
    }
}

/// Shape of the classifier independent of the data it is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub timesteps: usize,
    pub hidden_size: usize,
    pub layers: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            timesteps: 32,
            hidden_size: 64,
            layers: 4,
        }
    }
}

impl NetConfig {
    pub fn arch(&self, window_len: usize, classes: usize) -> LstmArch {
        LstmArch {
            window_len,
            timesteps: self.timesteps,
            hidden_size: self.hidden_size,
            layers: self.layers,
            classes,
        }
    }
}

/// Output of one forward pass for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// Top-layer hidden state at the last timestep.
    pub hidden: Tensor,
    /// Class distribution.
    pub probs: Tensor,
}

/// Loss, gradients and hit count over a labelled batch.
#[derive(Debug, Clone)]
pub struct BatchEval {
    pub loss: f64,
    pub grads: ModelParams,
    pub correct: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmClassifierParams {
    params: ModelParams,
    timesteps: usize,
    input_width: usize,
    hidden_size: usize,
    layers: usize,
    classes: usize,
}

pub(crate) fn layer_names(i: usize) -> [String; 3] {
    [
        format!("lstm{i}.w_ih"),
        format!("lstm{i}.w_hh"),
        format!("lstm{i}.b"),
    ]
}

pub(crate) const HEAD_W: &str = "head.w";
pub(crate) const HEAD_B: &str = "head.b";

impl LstmClassifierParams {
    /// Seeded initialisation. Each matrix is drawn uniformly within
    /// `1/sqrt(fan_in)`, where `fan_in` is the width it reads from.
    pub fn init(arch: &LstmArch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = seed::rng(seed);
        let (f, h) = (arch.input_width(), arch.hidden_size);
        let mut params = ModelParams::new();
        for i in 0..arch.layers {
            let input = if i == 0 { f } else { h };
            let [w_ih, w_hh, b] = layer_names(i);
            params.push(w_ih, uniform_init(&mut rng, vec![input, 4 * h], input)?)?;
            params.push(w_hh, uniform_init(&mut rng, vec![h, 4 * h], h)?)?;
            params.push(b, uniform_init(&mut rng, vec![1, 4 * h], h)?)?;
        }
        params.push(HEAD_W, uniform_init(&mut rng, vec![h, arch.classes], h)?)?;
        params.push(HEAD_B, uniform_init(&mut rng, vec![1, arch.classes], h)?)?;
        Ok(LstmClassifierParams {
            params,
            timesteps: arch.timesteps,
            input_width: f,
            hidden_size: h,
            layers: arch.layers,
            classes: arch.classes,
        })
    }

    /// Rebuilds a classifier from a parameter set, inferring widths from the
    /// tensor shapes.
    pub fn from_params(params: ModelParams, timesteps: usize) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint(m);
        let head = params
            .get(HEAD_W)
            .ok_or_else(|| bad("missing head.w".into()))?;
        let (hidden_size, classes) = head.dims2()?;
        let mut layers = 0;
        while params.get(&layer_names(layers)[0]).is_some() {
            layers += 1;
        }
        if layers == 0 {
            return Err(bad("no LSTM layers".into()));
        }
        let input_width = params.get(&layer_names(0)[0]).unwrap().dims2()?.0;
        for i in 0..layers {
            let [w_ih, w_hh, b] = layer_names(i);
            let input = if i == 0 { input_width } else { hidden_size };
            let expect = [
                (w_ih, vec![input, 4 * hidden_size]),
                (w_hh, vec![hidden_size, 4 * hidden_size]),
                (b, vec![1, 4 * hidden_size]),
            ];
            for (name, shape) in expect {
                match params.get(&name) {
                    Some(t) if t.shape() == shape.as_slice() => {}
                    _ => return Err(bad(format!("`{name}` missing or not {shape:?}"))),
                }
            }
        }
        match params.get(HEAD_B) {
            Some(t) if t.shape() == [1, classes] => {}
            _ => return Err(bad("`head.b` missing or misshapen".into())),
        }
        if params.len() != 3 * layers + 2 {
            return Err(bad("unexpected extra tensors".into()));
        }
        Ok(LstmClassifierParams {
            params,
            timesteps,
            input_width,
            hidden_size,
            layers,
            classes,
        })
    }

    pub fn arch(&self) -> LstmArch {
        LstmArch {
            window_len: self.timesteps * self.input_width,
            timesteps: self.timesteps,
            hidden_size: self.hidden_size,
            layers: self.layers,
            classes: self.classes,
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.params
    }

    /// Replaces the parameter values; the layout must not change.
    pub fn set_params(&mut self, params: ModelParams) -> Result<()> {
        self.params.check_same_layout(&params)?;
        self.params = params;
        Ok(())
    }

    pub fn into_params(self) -> ModelParams {
        self.params
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_size
    }

    pub fn window_len(&self) -> usize {
        self.timesteps * self.input_width
    }

    /// Records the network on `tape` for a batch of windows, returning the
    /// final hidden state `[batch, hidden]` and probabilities `[batch, classes]`.
    pub fn record(&self, tape: &mut Tape, windows: &[&[f64]]) -> Result<(Var, Var)> {
        let (top, logits) = self.record_logits(tape, windows)?;
        let probs = tape.softmax_rows(logits)?;
        Ok((top, probs))
    }

    /// Like [`record`](Self::record) but stops before the softmax.
    pub fn record_logits(&self, tape: &mut Tape, windows: &[&[f64]]) -> Result<(Var, Var)> {
        let d = self.window_len();
        if windows.is_empty() {
            return Err(Error::Contract("empty batch".into()));
        }
        let batch = windows.len();
        let mut inputs: Vec<Vec<f64>> =
            vec![Vec::with_capacity(batch * self.input_width); self.timesteps];
        for w in windows {
            if w.len() != d {
                return Err(Error::Dimension(format!(
                    "window of length {} given to a network expecting {d}",
                    w.len()
                )));
            }
            let z = normalize_window(w);
            for (t, chunk) in z.chunks_exact(self.input_width).enumerate() {
                inputs[t].extend_from_slice(chunk);
            }
        }
        let mut seq = Vec::with_capacity(self.timesteps);
        for values in inputs {
            seq.push(tape.constant(vec![batch, self.input_width], values)?);
        }

        let vars = self.params.record(tape);
        let h = self.hidden_size;
        for layer in 0..self.layers {
            let (w_ih, w_hh, b) = (vars[3 * layer], vars[3 * layer + 1], vars[3 * layer + 2]);
            let mut hidden: Option<Var> = None;
            let mut cell: Option<Var> = None;
            for x in seq.iter_mut() {
                let mut z = tape.matmul(*x, w_ih)?;
                if let Some(hp) = hidden {
                    let r = tape.matmul(hp, w_hh)?;
                    z = tape.add(z, r)?;
                }
                z = tape.add(z, b)?;
                let i = tape.slice(z, 0, h)?;
                let i = tape.sigmoid(i)?;
                let f = tape.slice(z, h, 2 * h)?;
                let f = tape.sigmoid(f)?;
                let g = tape.slice(z, 2 * h, 3 * h)?;
                let g = tape.tanh(g)?;
                let o = tape.slice(z, 3 * h, 4 * h)?;
                let o = tape.sigmoid(o)?;
                let ig = tape.mul(i, g)?;
                let c = match cell {
                    Some(cp) => {
                        let fc = tape.mul(f, cp)?;
                        tape.add(fc, ig)?
                    }
                    None => ig,
                };
                let tc = tape.tanh(c)?;
                let hn = tape.mul(o, tc)?;
                cell = Some(c);
                hidden = Some(hn);
                *x = hn;
            }
        }
        let top = *seq.last().unwrap();
        let logits = tape.matmul(top, vars[3 * self.layers])?;
        let logits = tape.add(logits, vars[3 * self.layers + 1])?;
        Ok((top, logits))
    }

    /// Forward pass for one window. Pure: no state survives the call.
    pub fn forward(&self, window: &[f64]) -> Result<ForwardOutput> {
        Ok(self.forward_batch(&[window])?.remove(0))
    }

    pub fn forward_batch(&self, windows: &[&[f64]]) -> Result<Vec<ForwardOutput>> {
        let mut tape = Tape::no_grad();
        let (hidden, probs) = self.record(&mut tape, windows)?;
        let hv = tape.value(hidden);
        let pv = tape.value(probs);
        (0..windows.len())
            .map(|r| {
                Ok(ForwardOutput {
                    hidden: Tensor::new(
                        vec![self.hidden_size],
                        hv[r * self.hidden_size..(r + 1) * self.hidden_size].to_vec(),
                    )?,
                    probs: Tensor::new(
                        vec![self.classes],
                        pv[r * self.classes..(r + 1) * self.classes].to_vec(),
                    )?,
                })
            })
            .collect()
    }

    /// Mean cross-entropy over a batch.
    pub fn loss(&self, windows: &[&[f64]], labels: &[usize]) -> Result<f64> {
        let mut tape = Tape::no_grad();
        let (_, probs) = self.record(&mut tape, windows)?;
        let loss = cross_entropy(&mut tape, probs, labels)?;
        Ok(tape.value(loss)[0])
    }

    /// Mean cross-entropy, its gradient with respect to every trainable
    /// tensor, and the number of correctly classified windows.
    pub fn loss_and_grad(&self, windows: &[&[f64]], labels: &[usize]) -> Result<BatchEval> {
        if windows.len() != labels.len() {
            return Err(Error::Contract(format!(
                "{} windows but {} labels",
                windows.len(),
                labels.len()
            )));
        }
        let mut tape = Tape::new();
        let (_, probs) = self.record(&mut tape, windows)?;
        let correct = count_correct(tape.value(probs), self.classes, labels);
        let loss = cross_entropy(&mut tape, probs, labels)?;
        let grads = tape.backward(loss)?;
        Ok(BatchEval {
            loss: tape.value(loss)[0],
            grads: self.params.grads_from(&grads),
            correct,
        })
    }
}

impl LstmClassifierParams {
    /// Cross-entropy with the softmax restricted to the head columns in
    /// `allowed`; every other class is masked out. Labels are head indices
    /// and must be listed in `allowed`.
    pub fn loss_and_grad_masked(
        &self,
        windows: &[&[f64]],
        labels: &[usize],
        allowed: &[usize],
    ) -> Result<BatchEval> {
        if allowed.len() == self.classes && allowed.iter().enumerate().all(|(i, &c)| i == c) {
            return self.loss_and_grad(windows, labels);
        }
        if windows.len() != labels.len() {
            return Err(Error::Contract(format!(
                "{} windows but {} labels",
                windows.len(),
                labels.len()
            )));
        }
        let k = allowed.len();
        let mut select = vec![0.0; self.classes * k];
        for (j, &c) in allowed.iter().enumerate() {
            if c >= self.classes {
                return Err(Error::Contract(format!(
                    "class {c} outside a {}-class head",
                    self.classes
                )));
            }
            select[c * k + j] = 1.0;
        }
        let positions = labels
            .iter()
            .map(|l| {
                allowed.iter().position(|c| c == l).ok_or_else(|| {
                    Error::Contract(format!("label {l} is masked out"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut tape = Tape::new();
        let (_, logits) = self.record_logits(&mut tape, windows)?;
        let s = tape.constant(vec![self.classes, k], select)?;
        let kept = tape.matmul(logits, s)?;
        let probs = tape.softmax_rows(kept)?;
        let correct = count_correct(tape.value(probs), k, &positions);
        let loss = cross_entropy(&mut tape, probs, &positions)?;
        let grads = tape.backward(loss)?;
        Ok(BatchEval {
            loss: tape.value(loss)[0],
            grads: self.params.grads_from(&grads),
            correct,
        })
    }
}

/// Argmax with ties resolved toward the lowest index.
pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn count_correct(probs: &[f64], classes: usize, labels: &[usize]) -> usize {
    probs
        .chunks_exact(classes)
        .zip(labels)
        .filter(|(row, &l)| argmax(row) == l)
        .count()
}
