//! Removes two feature columns from a trained model and checks that nothing
//! in the model or any party's lookup table refers to them afterwards.

use vfboost::datasets::{prepare, synthetic};
use vfboost::unlearning::unlearn;
use vfboost::{Federation, TrainConfig, UnlearnRequest};

fn main() -> vfboost::Result<()> {
    let (train, test) = prepare(&synthetic(10_000, 10, 3)?, 3, 0.2, 3)?;
    let config = TrainConfig {
        trees: 60,
        ..TrainConfig::default()
    };
    let mut fed = Federation::train(config.clone(), &train)?;
    let used = fed.model().referenced_features();
    let dropped: Vec<_> = used.iter().take(2).copied().collect();
    println!("model uses {} features; deleting {:?}", used.len(), dropped);

    let report = unlearn(&mut fed, &UnlearnRequest::features(dropped.clone()))?;
    println!(
        "{} splits moved to a robust alternative, {} subtrees regrown, {} extra trees, {:.2}s",
        report.transferred(),
        report.retrained(),
        report.extra_rounds,
        report.seconds
    );
    let still_used = fed.model().referenced_features();
    let in_lookups = fed
        .holders()
        .iter()
        .flat_map(|h| h.lookup.entries.iter())
        .filter(|e| dropped.contains(&e.feature))
        .count();
    println!(
        "deleted features still referenced: {} in splits, {} in lookup tables",
        dropped.iter().filter(|f| still_used.contains(f)).count(),
        in_lookups
    );

    let labels = test.labels().expect("labelled test set");
    let acc = |f: &Federation| -> vfboost::Result<f64> {
        let p = f.predict_proba(&test)?;
        let hits = p.iter().zip(labels).filter(|(p, y)| f64::from(u8::from(**p >= 0.5)) == **y).count();
        Ok(hits as f64 / labels.len() as f64)
    };
    let retrained = vfboost::unlearning::retrain_baseline(config, &train, &UnlearnRequest::features(dropped))?;
    println!("accuracy: unlearned {:.4}, retrained {:.4}", acc(&fed)?, acc(&retrained)?);
    Ok(())
}
