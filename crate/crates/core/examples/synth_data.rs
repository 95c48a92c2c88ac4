//! Generates the standard synthetic suite, prints per-condition statistics
//! and writes it to disk as a manifest plus signal files.

use rtacm::data::generate_synthetic_task;
use rtacm::pipeline::{write_synthetic_dataset, DataSource, RunConfig};

fn main() -> rtacm::Result<()> {
    let config = RunConfig::quick();
    let DataSource::Synthetic(suite) = &config.data else {
        unreachable!()
    };
    for spec in &suite.conditions {
        let task = generate_synthetic_task(spec, 1)?;
        let rms = |c: usize| {
            let w = &task.samples()[task.class_indices(c)[0]].window;
            (w.iter().map(|x| x * x).sum::<f64>() / w.len() as f64).sqrt()
        };
        println!(
            "{:<8} windows {:>4} classes {:?} rms of first window per class {:.2} {:.2} {:.2}",
            task.condition_id(),
            task.len(),
            task.class_set(),
            rms(0),
            rms(1),
            rms(2)
        );
    }
    let dir = std::env::temp_dir().join("rtacm-synth-example");
    let manifest = write_synthetic_dataset(&config, &dir)?;
    println!("manifest at {}", manifest.display());
    Ok(())
}
