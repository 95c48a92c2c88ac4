//! Meta-trains an initialisation on the synthetic auxiliary conditions and
//! prints the query loss and accuracy as training proceeds.

use rtacm::pipeline::{compute_difficulty, compute_relevance, load_tasks, run_meta_training, RunConfig};

fn main() -> rtacm::Result<()> {
    let config = RunConfig::quick().resolved();
    let tasks = load_tasks(&config)?;
    let relevance = compute_relevance(&config, &tasks)?;
    let difficulty = compute_difficulty(&config, &tasks)?;
    let (_, history) = run_meta_training(&config, &tasks, &relevance, &difficulty, |_| Ok(()))?;
    for chunk in history.chunks(100) {
        let loss = chunk.iter().map(|r| r.loss).sum::<f64>() / chunk.len() as f64;
        let acc = chunk.iter().map(|r| r.accuracy).sum::<f64>() / chunk.len() as f64;
        println!(
            "steps {:>4}-{:<4} query loss {loss:.3} accuracy {acc:.3}",
            chunk[0].step,
            chunk[chunk.len() - 1].step
        );
    }
    Ok(())
}
