//! Driving the open-world harness from a CSV of pre-extracted features
//! instead of synthetic Gaussian tasks. The file format is
//! `task_id,label,f0,...,f{d-1}`, one sample per row.
//!
//! ```bash
//! cargo run -p h2st --example feature_file
//! ```

use h2st::{DetectorChoice, Experiment, ExperimentConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    // Write a small feature file: three tasks, two classes each, 4-dim
    // features in well-separated clusters.
    let dir = std::env::temp_dir().join("h2st_feature_file_example");
    std::fs::create_dir_all(&dir).unwrap();
    let csv_path = dir.join("features.csv");
    let mut rows = String::from("task_id,label,f0,f1,f2,f3\n");
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for task in 1..=3usize {
        for i in 0..400 {
            let label = i % 2;
            let f: Vec<String> = (0..4)
                .map(|d| {
                    // Tasks occupy different axes; the label shifts the
                    // shared last dimension.
                    let task_bump = if d == task - 1 { 5.0 } else { 0.0 };
                    let label_bump = if d == 3 && label == 1 { 2.5 } else { 0.0 };
                    format!("{:.4}", task_bump + label_bump + rng.gen_range(-0.6..0.6))
                })
                .collect();
            rows.push_str(&format!("{task},{label},{}\n", f.join(",")));
        }
    }
    std::fs::write(&csv_path, rows).unwrap();
    println!("wrote {}", csv_path.display());

    let mut config = ExperimentConfig::default();
    config.seed = 21;
    config.strategy = DetectorChoice::H2st;
    config.feature_file = Some(csv_path);
    config.classifier.learning_rate = 0.15;
    config.stream.num_tasks = 3;
    config.stream.ood_round_size = 200;
    config.stream.id_round_size = 100;
    config.stream.batch_size = 10;
    config.stream.task_block_size = Some(20);
    config.stream.eval_per_task = 100;
    config.memory.capacity_per_task = 100;
    config.model.hidden_layers = vec![16, 8];

    let mut experiment = Experiment::new(config).unwrap();
    let report = experiment.run().unwrap().report;
    println!(
        "ingested run: F1 = {:.2}, TA = {:.2}, ACC = {:.2}",
        report.f1_mean.unwrap(),
        report.ta_mean.unwrap(),
        report.acc.unwrap()
    );
    for phase in &report.per_phase {
        println!(
            "  task {} phase: F1 = {}",
            phase.task,
            phase.f1.map_or("-".into(), |v| format!("{v:.2}"))
        );
    }
}
