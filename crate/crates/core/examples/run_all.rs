//! Runs the whole pipeline and lists the artifacts it wrote.

use rtacm::pipeline::{run_all, RunConfig};

fn main() -> rtacm::Result<()> {
    let out_dir = std::env::temp_dir().join("rtacm-run-all-example");
    let _ = std::fs::remove_dir_all(&out_dir);
    let config = RunConfig {
        out_dir: out_dir.clone(),
        ..RunConfig::quick()
    };
    let outcome = run_all(&config)?;
    println!("accuracy {:.4}", outcome.metrics.accuracy);
    println!("gamma {:?}", outcome.relevance.gamma);
    let mut files: Vec<_> = std::fs::read_dir(&out_dir)
        .map_err(|e| rtacm::Error::io(&out_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect();
    files.sort();
    println!("{} -> {files:?}", out_dir.display());
    Ok(())
}
