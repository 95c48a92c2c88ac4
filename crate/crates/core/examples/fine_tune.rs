//! Freezes the first layers of a meta-trained network, fine-tunes on five
//! target windows per class and classifies the target test windows.

use rtacm::finetune::{fine_tune, freeze_layers, predict_all};
use rtacm::metrics::compute_metrics;
use rtacm::pipeline::{compute_difficulty, compute_relevance, load_tasks, run_meta_training, RunConfig};

fn main() -> rtacm::Result<()> {
    let config = RunConfig::quick().resolved();
    let tasks = load_tasks(&config)?;
    let relevance = compute_relevance(&config, &tasks)?;
    let difficulty = compute_difficulty(&config, &tasks)?;
    let (theta, _) = run_meta_training(&config, &tasks, &relevance, &difficulty, |_| Ok(()))?;

    let ft = &config.finetune;
    let mut model = freeze_layers(&theta, ft.frozen_layers, ft.new_layers, config.meta.n_way, 5)?;
    println!("trainable tensors {:?}", model.trainable_names());
    let curve = fine_tune(&mut model, tasks.target_train.samples(), &ft.train)?;
    println!("loss {:.3} -> {:.3}", curve[0], curve[curve.len() - 1]);

    let predictions = predict_all(&model, tasks.target_test.samples())?;
    let pairs: Vec<_> = predictions.iter().map(|p| (p.truth, p.predicted)).collect();
    let report = compute_metrics(&pairs, config.meta.n_way)?;
    println!("accuracy {:.4} macro-F1 {:.4}", report.accuracy, report.macro_f1);
    print!("{}", report.confusion_csv());
    Ok(())
}
