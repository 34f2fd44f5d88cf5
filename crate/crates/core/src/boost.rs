//! Second-order boosting math and the tree data model.
//!
//! Trees are stored as maps from heap positions (root 0, children `2i+1` and
//! `2i+2`) to nodes. Internal nodes do not carry thresholds: those live in the
//! owning party's lookup table and are referenced by `(owner, record)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::crypto::FixedPointCodec;
use crate::data::{FeatureId, PartyId};
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    #[default]
    BinaryLogistic,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradPair {
    pub g: f64,
    pub h: f64,
}

pub fn sigmoid(margin: f64) -> f64 {
    if margin >= 0.0 {
        1.0 / (1.0 + (-margin).exp())
    } else {
        let e = margin.exp();
        e / (1.0 + e)
    }
}

pub fn grad_hess(loss: Loss, y: f64, margin: f64) -> Result<GradPair> {
    if !margin.is_finite() {
        return Err(Error::param("margin", "must be finite"));
    }
    match loss {
        Loss::BinaryLogistic => {
            if y != 0.0 && y != 1.0 {
                return Err(Error::UnsupportedLabel(y));
            }
            let p = sigmoid(margin);
            Ok(GradPair { g: p - y, h: p * (1.0 - p) })
        }
    }
}

/// Split gain: ½[G_L²/(H_L+λ) + G_R²/(H_R+λ) − (G_L+G_R)²/(H_L+H_R+λ)] − γ.
pub fn gain(g_left: f64, h_left: f64, g_right: f64, h_right: f64, lambda: f64, gamma: f64) -> Result<f64> {
    let term = |g: f64, h: f64| {
        let d = h + lambda;
        if d == 0.0 {
            Err(Error::ZeroDenominator)
        } else {
            Ok(g * g / d)
        }
    };
    let left = term(g_left, h_left)?;
    let right = term(g_right, h_right)?;
    let parent = term(g_left + g_right, h_left + h_right)?;
    Ok(0.5 * (left + right - parent) - gamma)
}

/// Optimal leaf weight −G/(H+λ).
pub fn leaf_weight(g: f64, h: f64, lambda: f64) -> Result<f64> {
    let d = h + lambda;
    if d == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok(-g / d)
}

/// Cumulative bucket statistics of one feature at one node, in fixed point.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitStats {
    /// `prefix_grad[j]` = Σ g over buckets `<= j`; one entry per bucket, the last is the node total.
    pub prefix_grad: Vec<i64>,
    pub prefix_hess: Vec<i64>,
}

impl SplitStats {
    pub fn total(&self) -> (i64, i64) {
        (
            self.prefix_grad.last().copied().unwrap_or(0),
            self.prefix_hess.last().copied().unwrap_or(0),
        )
    }

    /// Number of split candidates (bucket count minus one).
    pub fn candidates(&self) -> usize {
        self.prefix_grad.len().saturating_sub(1)
    }

    /// Gain of every candidate; `None` where the gain is undefined (λ = 0 with an empty side).
    pub fn candidate_gains(&self, codec: &FixedPointCodec, lambda: f64, gamma: f64) -> Vec<Option<f64>> {
        let (gt, ht) = self.total();
        (0..self.candidates())
            .map(|j| candidate_gain(codec, self.prefix_grad[j], self.prefix_hess[j], gt, ht, lambda, gamma))
            .collect()
    }
}

/// Gain of the split whose left side has fixed-point sums `(gl, hl)` in a node with totals `(gt, ht)`.
pub fn candidate_gain(codec: &FixedPointCodec, gl: i64, hl: i64, gt: i64, ht: i64, lambda: f64, gamma: f64) -> Option<f64> {
    gain(
        codec.decode(gl),
        codec.decode(hl),
        codec.decode(gt - gl),
        codec.decode(ht - hl),
        lambda,
        gamma,
    )
    .ok()
}

/// Heap position of a tree node.
pub type NodeId = u32;

pub fn left_child(id: NodeId) -> NodeId {
    2 * id + 1
}

pub fn right_child(id: NodeId) -> NodeId {
    2 * id + 2
}

pub fn parent(id: NodeId) -> Option<NodeId> {
    (id > 0).then(|| (id - 1) / 2)
}

pub fn node_depth(id: NodeId) -> usize {
    (id + 1).ilog2() as usize
}

/// True if `node` lies in the subtree rooted at `root` (inclusive).
pub fn in_subtree(mut node: NodeId, root: NodeId) -> bool {
    loop {
        if node == root {
            return true;
        }
        if node < root {
            return false;
        }
        match parent(node) {
            Some(p) => node = p,
            None => return false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    pub weight: f64,
    pub grad_sum: i64,
    pub hess_sum: i64,
}

impl Leaf {
    /// Leaf from fixed-point sums; an empty leaf with λ = 0 gets weight 0.
    pub fn from_sums(codec: &FixedPointCodec, grad_sum: i64, hess_sum: i64, lambda: f64) -> Leaf {
        let weight = leaf_weight(codec.decode(grad_sum), codec.decode(hess_sum), lambda).unwrap_or(0.0);
        Leaf {
            weight,
            grad_sum,
            hess_sum,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustFeature {
    pub feature: FeatureId,
    pub gain: f64,
}

/// Splitting feature neighborhood: contiguous candidate indices of the chosen
/// feature around its best candidate, with cached left-side statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Neighborhood {
    pub candidates: Vec<u32>,
    pub prefix_grad: Vec<i64>,
    pub prefix_hess: Vec<i64>,
    /// Candidate index currently in use (an element of `candidates`).
    pub chosen: u32,
}

impl Neighborhood {
    pub fn gains(&self, codec: &FixedPointCodec, total: (i64, i64), lambda: f64, gamma: f64) -> Vec<Option<f64>> {
        self.prefix_grad
            .iter()
            .zip(&self.prefix_hess)
            .map(|(&gl, &hl)| candidate_gain(codec, gl, hl, total.0, total.1, lambda, gamma))
            .collect()
    }

    /// Candidates ordered by gain (descending), ties to the lower index; undefined gains dropped.
    pub fn ranked(&self, codec: &FixedPointCodec, total: (i64, i64), lambda: f64, gamma: f64) -> Vec<(u32, f64)> {
        let mut ranked: Vec<(u32, f64)> = self
            .candidates
            .iter()
            .zip(self.gains(codec, total, lambda, gamma))
            .filter_map(|(&c, g)| g.map(|g| (c, g)))
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked
    }

    pub fn gain_of(&self, candidate: u32, codec: &FixedPointCodec, total: (i64, i64), lambda: f64, gamma: f64) -> Option<f64> {
        let pos = self.candidates.iter().position(|&c| c == candidate)?;
        candidate_gain(codec, self.prefix_grad[pos], self.prefix_hess[pos], total.0, total.1, lambda, gamma)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub owner: PartyId,
    /// Index into the owner's lookup table.
    pub record: u32,
    pub robust: Vec<RobustFeature>,
    pub feature: FeatureId,
    pub neighborhood: Neighborhood,
    pub grad_sum: i64,
    pub hess_sum: i64,
    /// Gain of the candidate in use.
    pub gain: f64,
    /// Best gain over all features when the split was selected.
    pub max_gain: f64,
    /// Best gain among features outside the robust set when selected.
    pub runner_up_gain: Option<f64>,
}

impl Split {
    pub fn total(&self) -> (i64, i64) {
        (self.grad_sum, self.hess_sum)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Leaf(Leaf),
    Split(Split),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct Tree {
    pub nodes: BTreeMap<NodeId, TreeNode>,
}

impl Tree {
    pub fn single_leaf(weight: f64) -> Tree {
        Tree {
            nodes: [(
                0,
                TreeNode::Leaf(Leaf {
                    weight,
                    grad_sum: 0,
                    hess_sum: 0,
                }),
            )]
            .into(),
        }
    }

    /// Depth in split levels (a single leaf has depth 0).
    pub fn depth(&self) -> usize {
        self.nodes.keys().map(|&id| node_depth(id)).max().unwrap_or(0)
    }

    pub fn splits(&self) -> impl Iterator<Item = (NodeId, &Split)> {
        self.nodes.iter().filter_map(|(&id, n)| match n {
            TreeNode::Split(s) => Some((id, s)),
            TreeNode::Leaf(_) => None,
        })
    }

    pub fn leaves(&self) -> impl Iterator<Item = (NodeId, &Leaf)> {
        self.nodes.iter().filter_map(|(&id, n)| match n {
            TreeNode::Leaf(l) => Some((id, l)),
            TreeNode::Split(_) => None,
        })
    }

    /// Follows `goes_left(owner, record)` answers from the root to a leaf.
    pub fn route<F>(&self, mut goes_left: F) -> Result<NodeId>
    where
        F: FnMut(PartyId, u32) -> Result<bool>,
    {
        let mut id = 0;
        loop {
            match self.nodes.get(&id) {
                Some(TreeNode::Leaf(_)) => return Ok(id),
                Some(TreeNode::Split(s)) => {
                    id = if goes_left(s.owner, s.record)? {
                        left_child(id)
                    } else {
                        right_child(id)
                    };
                }
                None => return Err(Error::Protocol(format!("tree has no node {id}"))),
            }
        }
    }

    pub fn leaf_weight(&self, id: NodeId) -> Option<f64> {
        match self.nodes.get(&id) {
            Some(TreeNode::Leaf(l)) => Some(l.weight),
            _ => None,
        }
    }

    /// Removes every node strictly below `root`.
    pub fn prune_below(&mut self, root: NodeId) {
        self.nodes.retain(|&id, _| id == root || !in_subtree(id, root));
    }
}

/// Node record table entry: which party answers routing queries for a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeRecord {
    pub party: PartyId,
    pub record: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub format_version: u32,
    pub loss: Loss,
    pub base_score: f64,
    pub learning_rate: f64,
    pub config: TrainConfig,
    /// Incremented by every unlearning pass that changes the model.
    pub version: u64,
    pub trees: Vec<Tree>,
}

impl EnsembleModel {
    pub fn new(config: TrainConfig) -> Self {
        EnsembleModel {
            format_version: MODEL_FORMAT_VERSION,
            loss: Loss::BinaryLogistic,
            base_score: 0.0,
            learning_rate: config.learning_rate,
            config,
            version: 0,
            trees: Vec::new(),
        }
    }

    /// Base score plus η·w of the leaf reached in every tree.
    pub fn predict_with<F>(&self, mut goes_left: F) -> Result<f64>
    where
        F: FnMut(PartyId, u32) -> Result<bool>,
    {
        let mut margin = self.base_score;
        for tree in &self.trees {
            let leaf = tree.route(&mut goes_left)?;
            margin += self.learning_rate * tree.leaf_weight(leaf).expect("route ends at a leaf");
        }
        Ok(margin)
    }

    pub fn predict_proba_with<F>(&self, goes_left: F) -> Result<f64>
    where
        F: FnMut(PartyId, u32) -> Result<bool>,
    {
        self.predict_with(goes_left).map(sigmoid)
    }

    /// (tree index, node) ↦ (party, record) for every internal node.
    pub fn node_record_table(&self) -> BTreeMap<(usize, NodeId), NodeRecord> {
        self.trees
            .iter()
            .enumerate()
            .flat_map(|(t, tree)| {
                tree.splits().map(move |(id, s)| {
                    (
                        (t, id),
                        NodeRecord {
                            party: s.owner,
                            record: s.record,
                        },
                    )
                })
            })
            .collect()
    }

    /// Every feature id referenced by a split or a robust set.
    pub fn referenced_features(&self) -> std::collections::BTreeSet<FeatureId> {
        self.trees
            .iter()
            .flat_map(|t| t.splits())
            .flat_map(|(_, s)| std::iter::once(s.feature).chain(s.robust.iter().map(|r| r.feature)))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: EnsembleModel = serde_json::from_str(text)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Malformed {
                what: "model",
                detail: format!("unsupported format version {}", m.format_version),
            });
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn logistic_derivatives() {
        let g = grad_hess(Loss::BinaryLogistic, 1.0, 0.0).unwrap();
        assert_eq!((g.g, g.h), (-0.5, 0.25));
        let g = grad_hess(Loss::BinaryLogistic, 0.0, 0.0).unwrap();
        assert_eq!((g.g, g.h), (0.5, 0.25));
        // p = 0.75 at margin ln 3
        let g = grad_hess(Loss::BinaryLogistic, 1.0, 3f64.ln()).unwrap();
        assert!((g.g + 0.25).abs() < 1e-15);
        assert!((g.h - 0.1875).abs() < 1e-15);
        assert!(matches!(grad_hess(Loss::BinaryLogistic, 2.0, 0.0), Err(Error::UnsupportedLabel(_))));
        assert!(grad_hess(Loss::BinaryLogistic, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn gain_examples() {
        assert_eq!(gain(3.0, 2.0, 0.0, 0.0, 1.0, 0.1).unwrap(), -0.1);
        // g = [1, -1], h = [1, 1] split apart, λ = 1: ½(1/2 + 1/2 − 0/3)
        assert_eq!(gain(1.0, 1.0, -1.0, 1.0, 1.0, 0.0).unwrap(), 0.5);
        assert_eq!(gain(0.0, 4.0, 0.0, 2.0, 1.0, 0.3).unwrap(), -0.3);
        assert!(matches!(gain(1.0, 0.0, 1.0, 1.0, 0.0, 0.0), Err(Error::ZeroDenominator)));
    }

    #[test]
    fn leaf_weight_examples() {
        assert_eq!(leaf_weight(0.0, 5.0, 1.0).unwrap(), 0.0);
        assert_eq!(leaf_weight(1.0, 1.0, 1.0).unwrap(), -0.5);
        assert_eq!(leaf_weight(-4.0, 3.0, 1.0).unwrap(), 1.0);
        assert!(matches!(leaf_weight(1.0, 0.0, 0.0), Err(Error::ZeroDenominator)));
        let codec = FixedPointCodec::default();
        assert_eq!(Leaf::from_sums(&codec, 0, 0, 0.0).weight, 0.0);
    }

    #[test]
    fn sigmoid_link() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(3f64.ln()) - 0.75).abs() < 1e-15);
        let mut prev = 0.0;
        for m in [-50.0, -3.0, 0.0, 2.0, 10.0, 40.0, 700.0] {
            let p = sigmoid(m);
            assert!(p >= prev && p <= 1.0);
            prev = p;
        }
        assert_eq!(sigmoid(800.0), 1.0);
    }

    #[test]
    fn heap_helpers() {
        assert_eq!((left_child(0), right_child(0)), (1, 2));
        assert_eq!(parent(6), Some(2));
        assert_eq!(parent(0), None);
        assert_eq!(node_depth(0), 0);
        assert_eq!(node_depth(2), 1);
        assert_eq!(node_depth(7), 3);
        assert!(in_subtree(9, 1));
        assert!(!in_subtree(9, 2));
        assert!(in_subtree(5, 5));
    }

    fn stump(owner: PartyId, record: u32, feature: FeatureId, left: f64, right: f64) -> Tree {
        let split = Split {
            owner,
            record,
            robust: vec![RobustFeature { feature, gain: 1.0 }],
            feature,
            neighborhood: Neighborhood {
                candidates: vec![0],
                prefix_grad: vec![0],
                prefix_hess: vec![0],
                chosen: 0,
            },
            grad_sum: 0,
            hess_sum: 0,
            gain: 1.0,
            max_gain: 1.0,
            runner_up_gain: None,
        };
        let leaf = |w| TreeNode::Leaf(Leaf {
            weight: w,
            grad_sum: 0,
            hess_sum: 0,
        });
        Tree {
            nodes: [(0, TreeNode::Split(split)), (1, leaf(left)), (2, leaf(right))].into(),
        }
    }

    #[test]
    fn predict_examples() {
        let mut cfg = TrainConfig::default();
        cfg.learning_rate = 1.0;
        let mut model = EnsembleModel::new(cfg);
        assert_eq!(model.predict_with(|_, _| Ok(true)).unwrap(), 0.0);
        assert_eq!(model.predict_proba_with(|_, _| Ok(true)).unwrap(), 0.5);

        model.trees = vec![Tree::single_leaf(0.3), Tree::single_leaf(-0.1)];
        assert!((model.predict_with(|_, _| Ok(true)).unwrap() - 0.2).abs() < 1e-15);

        // Feature A held by party 1 at record 0, threshold 5; a record with A = 7 goes right.
        let threshold = 5.0;
        let a = 7.0;
        model.trees = vec![stump(PartyId(1), 0, FeatureId(0), -1.0, 2.0)];
        let m = model
            .predict_with(|p, r| {
                assert_eq!((p, r), (PartyId(1), 0));
                Ok(a <= threshold)
            })
            .unwrap();
        assert_eq!(m, 2.0);
    }

    #[test]
    fn predict_reports_dangling_records() {
        let mut model = EnsembleModel::new(TrainConfig::default());
        model.trees = vec![stump(PartyId(1), 4, FeatureId(0), -1.0, 2.0)];
        let err = model.predict_with(|_, r| Err(Error::Protocol(format!("no record {r}"))));
        assert!(err.is_err());
        let mut broken = stump(PartyId(1), 0, FeatureId(0), 0.0, 0.0);
        broken.nodes.remove(&2);
        model.trees = vec![broken];
        assert!(model.predict_with(|_, _| Ok(false)).is_err());
    }

    #[test]
    fn node_record_table_and_prune() {
        let mut model = EnsembleModel::new(TrainConfig::default());
        let mut t = stump(PartyId(2), 3, FeatureId(4), 0.0, 0.0);
        model.trees = vec![Tree::single_leaf(0.0), t.clone()];
        let table = model.node_record_table();
        assert_eq!(table.len(), 1);
        assert_eq!(
            table[&(1, 0)],
            NodeRecord {
                party: PartyId(2),
                record: 3
            }
        );
        assert!(model.referenced_features().contains(&FeatureId(4)));
        t.prune_below(0);
        assert_eq!(t.nodes.len(), 1);
    }

    #[test]
    fn model_json_is_stable() {
        let mut model = EnsembleModel::new(TrainConfig::default());
        model.trees = vec![stump(PartyId(1), 0, FeatureId(0), -0.25, 0.125)];
        let a = model.to_json().unwrap();
        let back = EnsembleModel::from_json(&a).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.to_json().unwrap(), a);
    }

    proptest! {
        #[test]
        fn gain_symmetric(gl in -50.0f64..50.0, hl in 0.0f64..20.0, gr in -50.0f64..50.0, hr in 0.0f64..20.0, lambda in 0.01f64..5.0, gamma in 0.0f64..2.0) {
            prop_assert_eq!(gain(gl, hl, gr, hr, lambda, gamma).unwrap(), gain(gr, hr, gl, hl, lambda, gamma).unwrap());
        }

        #[test]
        fn degenerate_split_is_minus_gamma(g in -50.0f64..50.0, h in 0.0f64..20.0, lambda in 0.01f64..5.0, gamma in 0.0f64..2.0) {
            prop_assert_eq!(gain(g, h, 0.0, 0.0, lambda, gamma).unwrap(), -gamma);
            prop_assert_eq!(gain(0.0, 0.0, g, h, lambda, gamma).unwrap(), -gamma);
        }

        #[test]
        fn zero_gradients_give_minus_gamma(hl in 0.0f64..20.0, hr in 0.0f64..20.0, gamma in 0.0f64..2.0) {
            prop_assert_eq!(gain(0.0, hl, 0.0, hr, 1.0, gamma).unwrap(), -gamma);
        }

        #[test]
        fn leaf_weight_minimizes_objective(g in -100.0f64..100.0, h in 0.0f64..50.0, lambda in 0.1f64..5.0) {
            // Bisection on the derivative G + (H + λ) w of G w + ½ (H + λ) w².
            let slope = |w: f64| g + (h + lambda) * w;
            let (mut lo, mut hi) = (-1e4, 1e4);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if slope(mid) > 0.0 { hi = mid } else { lo = mid }
            }
            let numeric = 0.5 * (lo + hi);
            prop_assert!((numeric - leaf_weight(g, h, lambda).unwrap()).abs() < 1e-8);
        }
    }
}
