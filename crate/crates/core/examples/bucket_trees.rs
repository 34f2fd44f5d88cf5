//! Builds a median bucket tree over a skewed column and shows that deleting
//! records leaves every remaining record's bucket and the candidate list as they were.

use vfboost::bucketing::BucketTree;
use vfboost::data::FeatureId;

fn main() -> vfboost::Result<()> {
    // Heavy-tailed with many ties at zero.
    let values: Vec<f64> = (0..2000u32)
        .map(|i| if i % 3 == 0 { 0.0 } else { ((i * 7919) % 1000) as f64 / 10.0 * (1.0 + (i % 17) as f64) })
        .collect();
    let tree = BucketTree::build(FeatureId(0), &values, 64)?;
    println!(
        "{} buckets, height {}, first thresholds {:?}",
        tree.bucket_count(),
        tree.height,
        &tree.split_candidates()[..5]
    );

    let before: Vec<u32> = values.iter().map(|&v| tree.assign(v)).collect();
    let survivors: Vec<usize> = (0..values.len()).filter(|i| i % 10 != 0).collect();
    let unchanged = survivors.iter().all(|&i| tree.assign(values[i]) == before[i]);
    println!("after deleting 10% of records, survivors keep their buckets: {unchanged}");

    let zeros: std::collections::BTreeSet<u32> = values.iter().filter(|&&v| v == 0.0).map(|&v| tree.assign(v)).collect();
    println!("tied values share one bucket: {}", zeros.len() == 1);
    Ok(())
}
