//! Trains on a synthetic two-party task, forgets 5% of the training records
//! and compares against retraining from scratch.
//!
//! cargo run --release --example unlearn_instances -- [rows]

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vfboost::datasets::{prepare, synthetic};
use vfboost::metrics::forgetfulness_report;
use vfboost::{Classifier, ScoreKind, TrainConfig, UnlearnRequest};

fn main() -> vfboost::Result<()> {
    let rows: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(20_000);
    let (train, test) = prepare(&synthetic(rows, 10, 1)?, 2, 0.2, 1)?;
    let config = TrainConfig::default();

    let original = Classifier::train(config.clone(), &train)?;
    let mut ids = train.ids.clone();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
    let request = UnlearnRequest::instances(ids.into_iter().take(train.len() / 20));

    let mut unlearned = original.clone();
    let report = unlearned.unlearn(&request)?;
    let start = std::time::Instant::now();
    let retrained = Classifier::retrain_baseline(config, &train, &request)?;
    let retrain_secs = start.elapsed().as_secs_f64();

    println!(
        "unlearned {} records in {:.2}s (retrain {:.2}s): {} splits re-chosen, {} subtrees retrained, {} leaves updated",
        report.removed,
        report.seconds,
        retrain_secs,
        report.rechosen(),
        report.retrained(),
        report.trees.iter().map(|t| t.leaves_updated).sum::<usize>()
    );
    let r = forgetfulness_report(&original, &unlearned, &retrained, &test, ScoreKind::Probability)?;
    println!("accuracy: original {:.4}, unlearned {:.4}, retrained {:.4}", r.acc_original, r.acc_unlearned, r.acc_retrained);
    println!("W1 to retrained: unlearned {:.5}, original {:.5}", r.wass_unlearned, r.wass_original);
    Ok(())
}
