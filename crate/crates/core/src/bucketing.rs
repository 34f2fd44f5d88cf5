//! Per-feature binary bucketing trees.
//!
//! Each party builds one [`BucketTree`] per local feature by recursive median
//! splits. The terminals are the instance buckets and the internal thresholds
//! are the split candidates. Trees are never rebuilt, so deleting records
//! cannot move any surviving record to another bucket.

use serde::{Deserialize, Serialize};

use crate::data::FeatureId;
use crate::error::{Error, Result};

/// Bucket id marking a purged (deleted) record.
pub const PURGED: u32 = u32::MAX;

/// Default maximum bucket size: about 256 buckets per feature.
pub fn default_bucket_size(n: usize) -> usize {
    n.div_ceil(256).max(1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum BucketNodeKind {
    Split { threshold: f64, left: u32, right: u32 },
    Terminal { bucket: u32 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketNode {
    pub min: f64,
    pub max: f64,
    /// Instance count at build time.
    pub count: usize,
    pub kind: BucketNodeKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketTree {
    pub feature: FeatureId,
    pub max_bucket_size: usize,
    /// Arena; node 0 is the root.
    pub nodes: Vec<BucketNode>,
    pub height: usize,
    thresholds: Vec<f64>,
}

impl BucketTree {
    pub fn build(feature: FeatureId, values: &[f64], max_bucket_size: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("bucket tree needs at least one value"));
        }
        if max_bucket_size < 1 {
            return Err(Error::param("max_bucket_size", "must be at least 1"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("values", "non-finite feature value"));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);

        let mut tree = BucketTree {
            feature,
            max_bucket_size,
            nodes: Vec::new(),
            height: 0,
            thresholds: Vec::new(),
        };
        let mut next_bucket = 0u32;
        tree.grow(&sorted, 0, &mut next_bucket);
        tree.thresholds = tree.collect_thresholds();
        Ok(tree)
    }

    fn grow(&mut self, slice: &[f64], depth: usize, next_bucket: &mut u32) -> u32 {
        let id = self.nodes.len() as u32;
        let (min, max) = (slice[0], slice[slice.len() - 1]);
        self.height = self.height.max(depth);
        self.nodes.push(BucketNode {
            min,
            max,
            count: slice.len(),
            kind: BucketNodeKind::Terminal { bucket: 0 },
        });
        if slice.len() > self.max_bucket_size && min < max {
            let mut threshold = slice[(slice.len() - 1) / 2];
            if threshold == max {
                // Lower median sits on the maximum; fall back to the largest smaller value.
                threshold = slice[slice.partition_point(|v| *v < max) - 1];
            }
            let cut = slice.partition_point(|v| *v <= threshold);
            let left = self.grow(&slice[..cut], depth + 1, next_bucket);
            let right = self.grow(&slice[cut..], depth + 1, next_bucket);
            self.nodes[id as usize].kind = BucketNodeKind::Split { threshold, left, right };
        } else {
            self.nodes[id as usize].kind = BucketNodeKind::Terminal { bucket: *next_bucket };
            *next_bucket += 1;
        }
        id
    }

    fn collect_thresholds(&self) -> Vec<f64> {
        fn walk(t: &BucketTree, node: u32, out: &mut Vec<f64>) {
            if let BucketNodeKind::Split { threshold, left, right } = t.nodes[node as usize].kind {
                walk(t, left, out);
                out.push(threshold);
                walk(t, right, out);
            }
        }
        let mut out = Vec::new();
        walk(self, 0, &mut out);
        out
    }

    /// Descends by threshold comparisons (`<=` goes left). Values outside the
    /// build range land in the first or last bucket.
    pub fn assign(&self, value: f64) -> u32 {
        let mut node = 0usize;
        loop {
            match self.nodes[node].kind {
                BucketNodeKind::Split { threshold, left, right } => {
                    node = if value <= threshold { left } else { right } as usize;
                }
                BucketNodeKind::Terminal { bucket } => return bucket,
            }
        }
    }

    /// Number of comparisons `assign` performs for `value`.
    pub fn path_len(&self, value: f64) -> usize {
        let mut node = 0usize;
        let mut steps = 0;
        while let BucketNodeKind::Split { threshold, left, right } = self.nodes[node].kind {
            node = if value <= threshold { left } else { right } as usize;
            steps += 1;
        }
        steps
    }

    /// Bucket boundaries in ascending order; candidate `i` separates buckets `<= i` from `> i`.
    pub fn split_candidates(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn bucket_count(&self) -> usize {
        self.thresholds.len() + 1
    }
}

/// Fixed-width histogram over [min, max]; the "normal histogram" ablation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformHistogram {
    pub feature: FeatureId,
    edges: Vec<f64>,
}

impl UniformHistogram {
    pub fn build(feature: FeatureId, values: &[f64], bins: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("histogram needs at least one value"));
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let bins = bins.max(1);
        let mut edges: Vec<f64> = (1..bins)
            .map(|i| min + (max - min) * i as f64 / bins as f64)
            .filter(|e| *e < max)
            .collect();
        edges.dedup();
        Ok(UniformHistogram { feature, edges })
    }

    pub fn assign(&self, value: f64) -> u32 {
        self.edges.partition_point(|e| *e < value) as u32
    }
}

/// What a party uses to bucket one feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bucketizer {
    Tree(BucketTree),
    Uniform(UniformHistogram),
}

impl Bucketizer {
    /// Median bucket tree, or equal-width bins when `use_tree` is false (same bin budget).
    pub fn build(feature: FeatureId, values: &[f64], max_bucket_size: usize, use_tree: bool) -> Result<Self> {
        if use_tree {
            return BucketTree::build(feature, values, max_bucket_size).map(Bucketizer::Tree);
        }
        if max_bucket_size < 1 {
            return Err(Error::param("max_bucket_size", "must be at least 1"));
        }
        let bins = values.len().div_ceil(max_bucket_size);
        UniformHistogram::build(feature, values, bins).map(Bucketizer::Uniform)
    }

    pub fn feature(&self) -> FeatureId {
        match self {
            Bucketizer::Tree(t) => t.feature,
            Bucketizer::Uniform(h) => h.feature,
        }
    }

    pub fn assign(&self, value: f64) -> u32 {
        match self {
            Bucketizer::Tree(t) => t.assign(value),
            Bucketizer::Uniform(h) => h.assign(value),
        }
    }

    pub fn split_candidates(&self) -> &[f64] {
        match self {
            Bucketizer::Tree(t) => t.split_candidates(),
            Bucketizer::Uniform(h) => &h.edges,
        }
    }

    pub fn bucket_count(&self) -> usize {
        self.split_candidates().len() + 1
    }
}
