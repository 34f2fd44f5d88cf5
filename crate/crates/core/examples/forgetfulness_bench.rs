//! Runs the full train / unlearn / retrain / compare pipeline on the bundled
//! digits data and prints one table row per unlearning kind.
//!
//! cargo run --release --example forgetfulness_bench -- [trees]

use vfboost::datasets::DatasetSpec;
use vfboost::experiment::{cmd_bench, ExperimentConfig, UnlearnKind};
use vfboost::metrics::ForgetfulnessReport;

fn main() -> vfboost::Result<()> {
    let trees: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(30);
    let dir = tempfile::tempdir().map_err(|e| vfboost::Error::Config(e.to_string()))?;
    let mut config = ExperimentConfig::new(DatasetSpec::Optdigits, dir.path());
    config.train.trees = trees;

    let rows = cmd_bench(&config, &UnlearnKind::ALL)?;
    println!("{}", ForgetfulnessReport::header());
    for r in &rows {
        println!("{r}");
    }
    println!("artifacts were written under {}", dir.path().display());
    Ok(())
}
