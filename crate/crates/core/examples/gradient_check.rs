//! Compares tape gradients of a small LSTM classifier against five-point
//! central differences.

use rtacm::autodiff::{finite_diff_oracle_o4, max_relative_error};
use rtacm::nets::{LstmClassifierParams, NetConfig};

fn main() -> rtacm::Result<()> {
    let cfg = NetConfig {
        timesteps: 3,
        hidden_size: 4,
        layers: 2,
    };
    let net = LstmClassifierParams::init(&cfg.arch(12, 3), 7)?;
    let windows: Vec<Vec<f64>> = (0..4)
        .map(|i| (0..12).map(|t| ((t * (i + 2)) as f64 * 0.37).sin()).collect())
        .collect();
    let refs: Vec<&[f64]> = windows.iter().map(Vec::as_slice).collect();
    let labels = [0, 1, 2, 1];

    let tape = net.loss_and_grad(&refs, &labels)?;
    let oracle = finite_diff_oracle_o4(
        |p| {
            let mut probe = net.clone();
            probe.set_params(p.clone())?;
            probe.loss(&refs, &labels)
        },
        net.params(),
        3e-3,
    )?;
    // coordinates under 1e-6 are compared in absolute terms
    let err = max_relative_error(&tape.grads, &oracle, 1e-6)?;
    println!("parameters {}", net.params().flatten().len());
    println!("loss {:.6}", tape.loss);
    println!("max relative error {err:.2e}");
    Ok(())
}
