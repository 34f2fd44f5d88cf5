//! Trains the full method and each single-component ablation on the same
//! data, unlearns 5% of the records, and reports accuracy, forgetfulness and
//! how many splits had to be rebuilt.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vfboost::datasets::{prepare, synthetic};
use vfboost::metrics::forgetfulness_report;
use vfboost::{Classifier, ScoreKind, TrainConfig, UnlearnRequest};

fn main() -> vfboost::Result<()> {
    let (train, test) = prepare(&synthetic(8000, 10, 5)?, 2, 0.2, 5)?;
    let mut ids = train.ids.clone();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(5));
    let request = UnlearnRequest::instances(ids.into_iter().take(train.len() / 20));

    let base = TrainConfig {
        trees: 50,
        ..TrainConfig::default()
    };
    let variants = [
        ("full", base.clone()),
        ("no bucket tree", TrainConfig { use_bucket_tree: false, ..base.clone() }),
        ("no robust features", TrainConfig { use_robust_features: false, ..base.clone() }),
        ("no neighborhood", TrainConfig { use_neighborhood: false, ..base.clone() }),
    ];
    println!("{:<20} {:>8} {:>8} {:>10} {:>9} {:>9}", "variant", "Acc(Md)", "Acc(Mr)", "Wass x1e3", "rebuilt", "unlearn_s");
    for (name, config) in variants {
        let original = Classifier::train(config.clone(), &train)?;
        let mut unlearned = original.clone();
        let report = unlearned.unlearn(&request)?;
        let retrained = Classifier::retrain_baseline(config, &train, &request)?;
        let r = forgetfulness_report(&original, &unlearned, &retrained, &test, ScoreKind::Probability)?;
        println!(
            "{:<20} {:>8.4} {:>8.4} {:>10.3} {:>9} {:>9.2}",
            name,
            r.acc_unlearned,
            r.acc_retrained,
            r.wass_unlearned * 1e3,
            report.retrained() + report.collapsed(),
            report.seconds
        );
    }
    Ok(())
}
