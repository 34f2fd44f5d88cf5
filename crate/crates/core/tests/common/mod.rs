#![allow(dead_code)]

use vfboost::boost::{grad_hess, Leaf, Loss, TreeNode};
use vfboost::crypto::FixedPointCodec;
use vfboost::data::AlignedDataset;
use vfboost::datasets::{prepare, synthetic};
use vfboost::federation::{route_training_rows, Federation};

pub fn toy(rows: usize, features: usize, parties: usize, seed: u64) -> (AlignedDataset, AlignedDataset) {
    let table = synthetic(rows, features, seed).unwrap();
    prepare(&table, parties, 0.2, seed).unwrap()
}

/// Rows of `data` still live in `fed`, as positions into `data`.
pub fn surviving_positions(fed: &Federation, data: &AlignedDataset) -> Vec<usize> {
    let live: std::collections::BTreeSet<&str> = fed.live_ids().into_iter().collect();
    (0..data.len()).filter(|&r| live.contains(data.ids[r].as_str())).collect()
}

/// Replays boosting over the surviving rows of `data` routed through the
/// current model and checks every cached statistic against it: leaf sums and
/// weights, split totals and neighborhood prefix sums. Returns the number of
/// mismatches with a description of the first few.
pub fn check_cached_statistics(fed: &Federation, data: &AlignedDataset) -> Vec<String> {
    let codec = FixedPointCodec::default();
    let model = fed.model();
    let lambda = model.config.lambda;
    let survivors = surviving_positions(fed, data);
    let sub = data.subset(&survivors);
    let leaves = route_training_rows(fed, &sub).unwrap();
    let labels = sub.labels().unwrap();
    let mut margins = vec![model.base_score; sub.len()];
    let mut problems = Vec::new();
    for (t, tree) in model.trees.iter().enumerate() {
        let stats: Vec<(i64, i64)> = (0..sub.len())
            .map(|r| {
                let gh = grad_hess(Loss::BinaryLogistic, labels[r], margins[r]).unwrap();
                (codec.encode(gh.g).unwrap(), codec.encode(gh.h).unwrap())
            })
            .collect();
        for (&id, node) in &tree.nodes {
            let reach: Vec<usize> = (0..sub.len())
                .filter(|&r| vfboost::boost::in_subtree(leaves[t][r], id))
                .collect();
            let (g, h) = reach
                .iter()
                .fold((0i64, 0i64), |(g, h), &r| (g + stats[r].0, h + stats[r].1));
            match node {
                TreeNode::Leaf(leaf) => {
                    let want = Leaf::from_sums(&codec, g, h, lambda);
                    if *leaf != want {
                        problems.push(format!("tree {t} leaf {id}: have {leaf:?}, want {want:?}"));
                    }
                }
                TreeNode::Split(s) => {
                    if (s.grad_sum, s.hess_sum) != (g, h) {
                        problems.push(format!("tree {t} node {id}: totals ({}, {}) vs ({g}, {h})", s.grad_sum, s.hess_sum));
                    }
                    let holder = fed.holder(s.owner).unwrap();
                    let feature = holder.features.iter().find(|f| f.id == s.feature).unwrap();
                    let col = sub.shard(s.owner).unwrap();
                    let j = col.features.iter().position(|&f| f == s.feature).unwrap();
                    for (k, &c) in s.neighborhood.candidates.iter().enumerate() {
                        let (pg, ph) = reach
                            .iter()
                            .filter(|&&r| feature.bucketizer.assign(col.columns[j][r]) <= c)
                            .fold((0i64, 0i64), |(g, h), &r| (g + stats[r].0, h + stats[r].1));
                        if (s.neighborhood.prefix_grad[k], s.neighborhood.prefix_hess[k]) != (pg, ph) {
                            problems.push(format!("tree {t} node {id}: neighborhood candidate {c} stale"));
                        }
                    }
                    let entry = holder.lookup.get(s.record).unwrap();
                    let thresholds = feature.bucketizer.split_candidates();
                    if entry.feature != s.feature || entry.threshold != thresholds[s.neighborhood.chosen as usize] {
                        problems.push(format!("tree {t} node {id}: lookup entry disagrees with the split"));
                    }
                }
            }
        }
        for r in 0..sub.len() {
            margins[r] += model.learning_rate * tree.leaf_weight(leaves[t][r]).unwrap();
        }
    }
    problems
}
