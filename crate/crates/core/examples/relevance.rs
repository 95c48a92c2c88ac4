//! Scores each auxiliary condition against the target through an
//! autoencoder's latent space.

use rtacm::pipeline::{compute_relevance, load_tasks, RunConfig};
use rtacm::relevance::task_relevance;

fn main() -> rtacm::Result<()> {
    // identical means score 1, distance 5 scores 1/sqrt(26)
    println!("same point {:.6}", task_relevance(&[0.0, 0.0], &[0.0, 0.0])?);
    println!("distance 5 {:.6}", task_relevance(&[3.0, 4.0], &[0.0, 0.0])?);

    let config = RunConfig::quick().resolved();
    let tasks = load_tasks(&config)?;
    let table = compute_relevance(&config, &tasks)?;
    println!("reconstruction loss {:.4}", table.recon_loss);
    for (id, g) in &table.gamma {
        println!("{id:<8} gamma {g:.4}");
    }
    Ok(())
}
