//! Target accuracy against the number of frozen layers, or against the number
//! of inner steps with `local_steps` as the first argument.

use rtacm::pipeline::{sweep_csv, sweep_in_memory, RunConfig, SweepAxis};

fn main() -> rtacm::Result<()> {
    let axis = match std::env::args().nth(1).as_deref() {
        Some("local_steps") => SweepAxis::LocalSteps,
        _ => SweepAxis::FrozenLayers,
    };
    let rows = sweep_in_memory(&RunConfig::quick(), axis)?;
    print!("{}", sweep_csv(axis, &rows));
    Ok(())
}
