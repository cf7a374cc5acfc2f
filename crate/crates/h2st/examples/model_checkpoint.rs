//! Saving and restoring the task model as a flat binary checkpoint:
//! magic `H2ST-MDL\0`, one version byte, the dimension table, then the
//! weight arrays as little-endian f64 in layer order.
//!
//! ```bash
//! cargo run -p h2st --example model_checkpoint
//! ```

use h2st::{MemoryStore, Sample, TaskModel, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut store = MemoryStore::new(50, 6);
    let config = TrainConfig {
        hidden_layers: vec![16, 8],
        seed: 12,
        ..TrainConfig::default()
    };
    let mut model = TaskModel::new(6, config.clone()).unwrap();
    for task in 1..=2usize {
        let data: Vec<Sample> = (0..60)
            .map(|i| {
                let label = i % 2;
                let center = task as f64 * 3.0;
                let features = (0..6)
                    .map(|d| center + if d == label { 1.5 } else { 0.0 } + rng.gen_range(-0.3..0.3))
                    .collect();
                Sample::new(features, task, label)
            })
            .collect();
        model.train_increment(task, &data, &mut store).unwrap();
    }

    let path = std::env::temp_dir().join("h2st_model_checkpoint_example.bin");
    model.save_checkpoint(&path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    println!("checkpoint: {} ({} bytes)", path.display(), bytes.len());
    println!("magic + version: {:?} {}", &bytes[..9], bytes[9]);

    let restored = TaskModel::load_checkpoint(&path, config).unwrap();
    let probe = vec![3.1, 4.4, 3.0, 2.9, 3.2, 3.0];
    println!("tasks restored: {:?}", restored.tasks());
    println!("feature dim: {}", restored.feature_dim());
    assert_eq!(
        model.extract(&probe).unwrap(),
        restored.extract(&probe).unwrap()
    );
    for task in 1..=2 {
        assert_eq!(
            model.logits(&probe, task).unwrap(),
            restored.logits(&probe, task).unwrap()
        );
    }
    println!("restored model reproduces the original outputs bit for bit");
}
