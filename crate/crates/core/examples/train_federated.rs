//! Trains a federated ensemble on a synthetic three-party task and reports
//! test accuracy and the per-party lookup table sizes.
//!
//! cargo run --release --example train_federated -- [rows] [trees]

use vfboost::datasets::{prepare, synthetic};
use vfboost::{Classifier, TrainConfig};

fn main() -> vfboost::Result<()> {
    let mut args = std::env::args().skip(1);
    let rows: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(4000);
    let trees: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(50);

    let table = synthetic(rows, 12, 7)?;
    let (train, test) = prepare(&table, 3, 0.2, 7)?;
    let config = TrainConfig {
        trees,
        seed: 7,
        ..TrainConfig::default()
    };
    let start = std::time::Instant::now();
    let model = Classifier::train(config, &train)?;
    println!("trained {} trees in {:.2?}", model.members[0].model().trees.len(), start.elapsed());
    println!("test accuracy {:.4}", model.accuracy(&test)?);
    for h in model.members[0].holders() {
        println!("{}: {} features, {} lookup records", h.party, h.features.len(), h.lookup.len());
    }
    Ok(())
}
