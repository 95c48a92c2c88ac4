use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Probabilities are clamped from below before the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Mean one-hot cross-entropy `-mean_r log(max(probs[r, label_r], floor))`
/// over the rows of a `[batch, classes]` probability matrix.
pub fn cross_entropy(tape: &mut Tape, probs: Var, labels: &[usize]) -> Result<Var> {
    let classes = *tape.shape(probs).last().unwrap();
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Contract(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    let picked = tape.select_cols(probs, labels)?;
    let clamped = tape.clamp_min(picked, PROB_FLOOR)?;
    let logs = tape.log(clamped)?;
    let mean = tape.mean(logs)?;
    tape.scale(mean, -1.0)
}

/// Cross-entropy of a single probability vector against a class index.
pub fn cross_entropy_loss(probs: &Tensor, label: usize) -> Result<Tensor> {
    let mut tape = Tape::new();
    let n = probs.len();
    let p = tape.constant(vec![1, n], probs.values().to_vec())?;
    let loss = cross_entropy(&mut tape, p, &[label])?;
    tape.tensor(loss)
}
