//! Rates auxiliary conditions with teacher classifiers, then shows which
//! ones the pacing schedule opens at each step and a few sampled batches.

use std::collections::BTreeMap;

use rtacm::curriculum::{pacing_available, sample_task_batch, PacingState, SamplingMode};
use rtacm::pipeline::{compute_difficulty, load_tasks, RunConfig};

fn main() -> rtacm::Result<()> {
    let config = RunConfig::quick().resolved();
    let tasks = load_tasks(&config)?;
    let table = compute_difficulty(&config, &tasks)?;
    for id in table.ordered() {
        let e = table.get(id).unwrap();
        println!("rank {} {id:<8} best valid acc {:.3} difficulty {:.3}", e.rank, e.phi_star, e.delta);
    }

    let ordered = table.ordered();
    let warmup = config.meta.warmup_steps();
    for step in [0, warmup / 4, warmup / 2, warmup] {
        let state = PacingState {
            step,
            warmup_steps: warmup,
            total_steps: config.meta.total_steps,
            f0: config.meta.curriculum.f0,
        };
        let open = pacing_available(&state, ordered.len())?;
        println!("step {step:>4}: open {:?}", &ordered[..open]);
    }

    let losses: BTreeMap<String, f64> = [("aux_a", 0.2), ("aux_b", 0.5), ("aux_far", 1.5)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    for mode in [SamplingMode::Uniform, SamplingMode::HardBiased] {
        let batch = sample_task_batch(&ordered, 8, mode, &losses, 3)?;
        println!("{mode:?}: {batch:?}");
    }
    Ok(())
}
