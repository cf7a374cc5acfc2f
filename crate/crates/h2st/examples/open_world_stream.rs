//! A full open-world run: five synthetic tasks arrive one by one, each
//! first as out-of-distribution data that the hierarchical cascade must
//! flag, label, and learn, followed by in-distribution rounds over
//! everything learned so far.
//!
//! ```bash
//! cargo run -p h2st --example open_world_stream
//! ```

use h2st::{DetectorChoice, Experiment, ExperimentConfig};

fn main() {
    let mut config = ExperimentConfig::default();
    config.seed = 1;
    config.strategy = DetectorChoice::H2st;
    config.classifier.learning_rate = 0.15;
    config.stream.batch_size = 13;
    config.stream.task_block_size = Some(26);

    let mut experiment = Experiment::new(config).unwrap();
    let output = experiment.run().unwrap();
    let report = output.report;

    println!("round | role   | TP   FP   TN   FN   | F1     | TA");
    for round in &report.per_round {
        println!(
            "{:>5} | {:<6} | {:<4} {:<4} {:<4} {:<4} | {:<6} | {}",
            round.round,
            round.role,
            round.true_pos,
            round.false_pos,
            round.true_neg,
            round.false_neg,
            round.f1.map_or("-".into(), |v| format!("{v:.2}")),
            round.ta.map_or("-".into(), |v| format!("{v:.2}")),
        );
    }

    println!("\nper detection phase (introduction round + its ID rounds):");
    for phase in &report.per_phase {
        println!(
            "  task {}: F1 = {}, TA = {}",
            phase.task,
            phase.f1.map_or("-".into(), |v| format!("{v:.2}")),
            phase.ta.map_or("-".into(), |v| format!("{v:.2}")),
        );
    }

    println!("\naggregates:");
    println!("  F1 mean          = {:.2}", report.f1_mean.unwrap());
    println!("  TA mean          = {:.2}", report.ta_mean.unwrap());
    println!("  ACC              = {:.2}", report.acc.unwrap());
    println!("  FT               = {:.2}", report.ft.unwrap());
    println!("  mean layer visits = {:.2}", report.mean_layer_visits.unwrap());
    println!("  degenerate rounds = {}", report.degenerate_rounds);
}
