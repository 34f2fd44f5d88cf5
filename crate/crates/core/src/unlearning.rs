//! Instance and feature unlearning over a trained federation.
//!
//! Trees are revisited in boosting order. For each tree the AP knows every
//! surviving row's gradient statistics before (old margins) and after (new
//! margins) the earlier trees were adjusted, so cached neighborhood sums are
//! patched with deltas instead of recomputed: rows that stayed in a node
//! contribute `new − old`, rows that entered contribute `new`, rows that left
//! (deleted rows included) contribute `−old`. The owner then re-picks within
//! the neighborhood, which yields the node's new instance space for its
//! children. Changes therefore propagate down each tree and, through the
//! margins, into every later tree.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::boost::{in_subtree, left_child, right_child, Leaf, NodeId, Split, SplitStats, Tree, TreeNode};
use crate::config::TrainConfig;
use crate::data::{AlignedDataset, FeatureId};
use crate::error::{Error, Result};
use crate::federation::{
    check_choice, choose_uniform, node_rng, partition, Federation, Forced, Message, RowStats, NO_LEAF,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnlearnTarget {
    Instances(BTreeSet<String>),
    Features(BTreeSet<FeatureId>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UnlearnOptions {
    /// New trees boosted after feature unlearning; `None` means ⌈0.1·N⌉.
    pub extra_rounds: Option<usize>,
    /// Retrain a subtree when a feature outside its robust set clearly overtakes it.
    pub fallback_retrain: bool,
}

impl Default for UnlearnOptions {
    fn default() -> Self {
        UnlearnOptions {
            extra_rounds: None,
            fallback_retrain: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnlearnRequest {
    pub target: UnlearnTarget,
    #[serde(default)]
    pub options: UnlearnOptions,
}

impl UnlearnRequest {
    pub fn instances<I: IntoIterator<Item = S>, S: Into<String>>(ids: I) -> Self {
        UnlearnRequest {
            target: UnlearnTarget::Instances(ids.into_iter().map(Into::into).collect()),
            options: UnlearnOptions::default(),
        }
    }

    pub fn features<I: IntoIterator<Item = FeatureId>>(features: I) -> Self {
        UnlearnRequest {
            target: UnlearnTarget::Features(features.into_iter().collect()),
            options: UnlearnOptions::default(),
        }
    }

    pub fn with_options(mut self, options: UnlearnOptions) -> Self {
        self.options = options;
        self
    }

    pub fn is_empty(&self) -> bool {
        match &self.target {
            UnlearnTarget::Instances(ids) => ids.is_empty(),
            UnlearnTarget::Features(fs) => fs.is_empty(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TreeReport {
    pub tree: usize,
    /// Splits whose threshold moved to another candidate in the neighborhood.
    pub rechosen: usize,
    /// Splits turned into leaves (empty space or no valid candidate left).
    pub collapsed: usize,
    /// Subtrees regrown from scratch.
    pub retrained: usize,
    /// Splits moved to a replacement feature, possibly at another party.
    pub transferred: usize,
    pub leaves_updated: usize,
}

impl TreeReport {
    pub fn nodes_changed(&self) -> usize {
        self.rechosen + self.collapsed + self.retrained + self.transferred + self.leaves_updated
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UnlearnReport {
    pub kind: String,
    /// Records or features removed.
    pub removed: usize,
    pub trees: Vec<TreeReport>,
    pub extra_rounds: usize,
    pub seconds: f64,
}

impl UnlearnReport {
    fn sum(&self, f: impl Fn(&TreeReport) -> usize) -> usize {
        self.trees.iter().map(f).sum()
    }

    pub fn rechosen(&self) -> usize {
        self.sum(|t| t.rechosen)
    }

    pub fn collapsed(&self) -> usize {
        self.sum(|t| t.collapsed)
    }

    pub fn retrained(&self) -> usize {
        self.sum(|t| t.retrained)
    }

    pub fn transferred(&self) -> usize {
        self.sum(|t| t.transferred)
    }

    pub fn nodes_changed(&self) -> usize {
        self.sum(TreeReport::nodes_changed)
    }

    /// Merges per-member reports of a one-vs-rest model.
    pub fn merge(reports: Vec<UnlearnReport>) -> UnlearnReport {
        let mut out = UnlearnReport::default();
        for r in reports {
            if out.kind.is_empty() {
                out.kind = r.kind;
                out.removed = r.removed;
            }
            let base = out.trees.len();
            out.trees.extend(r.trees.into_iter().map(|mut t| {
                t.tree += base;
                t
            }));
            out.extra_rounds += r.extra_rounds;
            out.seconds += r.seconds;
        }
        out
    }
}

/// Applies a request in place and reports what changed.
pub fn unlearn(fed: &mut Federation, request: &UnlearnRequest) -> Result<UnlearnReport> {
    match &request.target {
        UnlearnTarget::Instances(ids) => unlearn_instances(fed, ids, &request.options),
        UnlearnTarget::Features(fs) => unlearn_features(fed, fs, &request.options),
    }
}

pub fn unlearn_instances(fed: &mut Federation, ids: &BTreeSet<String>, options: &UnlearnOptions) -> Result<UnlearnReport> {
    let start = Instant::now();
    let mut report = UnlearnReport {
        kind: "instances".into(),
        removed: ids.len(),
        ..Default::default()
    };
    if ids.is_empty() {
        return Ok(report);
    }
    let index: BTreeMap<&str, u32> = fed.live_ids().into_iter().zip(fed.live_rows()).collect();
    let rows: Vec<u32> = ids
        .iter()
        .map(|id| index.get(id.as_str()).copied().ok_or_else(|| Error::UnknownRecord(id.clone())))
        .collect::<Result<_>>()?;
    let before = fed.model.trees.clone();
    let was_live = fed.live.clone();
    for &r in &rows {
        fed.live[r as usize] = false;
    }
    report.trees = fed.refresh_trees(&was_live, &BTreeSet::new(), options.fallback_retrain)?;

    for p in 0..fed.holders.len() {
        let reply = fed.send(crate::data::PartyId(p), Message::ForgetRows { rows: rows.clone() })?;
        if reply != Message::Ack {
            return Err(Error::Protocol(format!("expected ack, got {}", reply.kind())));
        }
    }
    for &r in &rows {
        let r = r as usize;
        fed.labels[r] = 0.0;
        fed.margins[r] = 0.0;
        fed.row_ids[r] = String::new();
        for leaves in &mut fed.leaf_of {
            leaves[r] = NO_LEAF;
        }
    }
    fed.compact_lookups()?;
    if fed.model.trees != before {
        fed.model.version += 1;
    }
    report.seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

pub fn unlearn_features(fed: &mut Federation, features: &BTreeSet<FeatureId>, options: &UnlearnOptions) -> Result<UnlearnReport> {
    let start = Instant::now();
    let mut report = UnlearnReport {
        kind: "features".into(),
        removed: features.len(),
        ..Default::default()
    };
    if features.is_empty() {
        return Ok(report);
    }
    for f in features {
        if fed.owner_of(*f).is_none() {
            return Err(Error::UnknownFeature(f.to_string()));
        }
    }
    if features.len() >= fed.feature_owner.len() {
        return Err(Error::AllFeaturesDeleted);
    }
    let before = fed.model.trees.clone();
    let n_before = fed.model.config.trees;

    let mut by_owner: BTreeMap<crate::data::PartyId, Vec<FeatureId>> = BTreeMap::new();
    for f in features {
        by_owner.entry(fed.feature_owner[f]).or_default().push(*f);
    }
    for (p, fs) in by_owner {
        let reply = fed.send(p, Message::DropFeatures { features: fs })?;
        if reply != Message::Ack {
            return Err(Error::Protocol(format!("expected ack, got {}", reply.kind())));
        }
    }
    fed.feature_owner.retain(|f, _| !features.contains(f));

    let was_live = fed.live.clone();
    report.trees = fed.refresh_trees(&was_live, features, options.fallback_retrain)?;

    let extra = options
        .extra_rounds
        .unwrap_or_else(|| (n_before as f64 * 0.1).ceil() as usize);
    report.extra_rounds = fed.boost(extra, features)?;
    fed.model.config.trees = fed.model.config.trees.max(fed.model.trees.len());
    fed.compact_lookups()?;
    if fed.model.trees != before || fed.model.config.trees != n_before {
        fed.model.version += 1;
    }
    report.seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Reference model M_r: training from scratch on the data that survives the request.
pub fn retrain_baseline(config: TrainConfig, data: &AlignedDataset, request: &UnlearnRequest) -> Result<Federation> {
    Federation::train(config, &reduced_dataset(data, request)?)
}

/// The training set with the request's records or feature columns removed.
pub fn reduced_dataset(data: &AlignedDataset, request: &UnlearnRequest) -> Result<AlignedDataset> {
    match &request.target {
        UnlearnTarget::Instances(ids) => {
            let known: BTreeSet<&str> = data.ids.iter().map(String::as_str).collect();
            if let Some(id) = ids.iter().find(|id| !known.contains(id.as_str())) {
                return Err(Error::UnknownRecord(id.clone()));
            }
            Ok(data.without_records(ids))
        }
        UnlearnTarget::Features(fs) => {
            for f in fs {
                if !data.feature_map.contains_key(f) {
                    return Err(Error::UnknownFeature(f.to_string()));
                }
            }
            if fs.len() >= data.feature_map.len() {
                return Err(Error::AllFeaturesDeleted);
            }
            Ok(data.without_features(fs))
        }
    }
}

enum Refreshed {
    /// Left bit of every row in the node's new space.
    Split(Vec<bool>),
    Collapse,
    /// The fallback regrew the subtree in place.
    Regrown,
}

/// Per-tree pass state.
struct Pass<'a> {
    t: usize,
    old_leaf: &'a [NodeId],
    old_stats: &'a [RowStats],
    new_stats: &'a [RowStats],
    dropped: &'a BTreeSet<FeatureId>,
    fallback: bool,
    /// Node whose new space the holders currently hold gradients for.
    grads_for: Option<NodeId>,
    leaves: Vec<(NodeId, Vec<u32>)>,
    report: TreeReport,
}

impl Federation {
    /// Revisits every tree. `was_live` marks rows live before the request;
    /// `self.live` marks survivors.
    fn refresh_trees(
        &mut self,
        was_live: &[bool],
        dropped: &BTreeSet<FeatureId>,
        fallback: bool,
    ) -> Result<Vec<TreeReport>> {
        let n = self.live.len();
        let base = self.model.base_score;
        let eta = self.model.learning_rate;
        let mut old_margins = vec![base; n];
        let mut new_margins = vec![base; n];
        let mut reports = Vec::with_capacity(self.model.trees.len());
        for t in 0..self.model.trees.len() {
            let old_stats = self.row_stats_masked(&old_margins, was_live)?;
            let new_stats = self.row_stats_masked(&new_margins, &self.live)?;
            self.send_deltas(t, &old_stats, &new_stats)?;
            let old_leaf = std::mem::take(&mut self.leaf_of[t]);
            let old_tree = self.model.trees[t].clone();
            let mut tree = old_tree.clone();
            let mut pass = Pass {
                t,
                old_leaf: &old_leaf,
                old_stats: &old_stats,
                new_stats: &new_stats,
                dropped,
                fallback,
                grads_for: None,
                leaves: Vec::new(),
                report: TreeReport {
                    tree: t,
                    ..Default::default()
                },
            };
            let new_root: Vec<u32> = (0..n as u32).filter(|&r| self.live[r as usize]).collect();
            let old_root: Vec<u32> = (0..n as u32).filter(|&r| was_live[r as usize]).collect();
            self.refresh_tree(&mut tree, &mut pass, new_root, old_root)?;

            let mut leaf_of = vec![NO_LEAF; n];
            for (id, rows) in &pass.leaves {
                let w = tree.leaf_weight(*id).expect("refresh records leaves");
                for &r in rows {
                    leaf_of[r as usize] = *id;
                    new_margins[r as usize] += eta * w;
                }
            }
            for r in 0..n {
                if was_live[r] {
                    old_margins[r] += eta * old_tree.leaf_weight(old_leaf[r]).unwrap_or(0.0);
                }
            }
            reports.push(pass.report);
            self.model.trees[t] = tree;
            self.leaf_of[t] = leaf_of;
        }
        for r in 0..n {
            if self.live[r] {
                self.margins[r] = new_margins[r];
            }
        }
        Ok(reports)
    }

    fn send_deltas(&mut self, t: usize, old: &[RowStats], new: &[RowStats]) -> Result<()> {
        let plain: Vec<(u32, i64, i64)> = (0..self.live.len())
            .filter(|&r| self.live[r] && old[r] != new[r])
            .map(|r| (r as u32, new[r].0 - old[r].0, new[r].1 - old[r].1))
            .collect();
        if plain.is_empty() {
            return Ok(());
        }
        self.distribute(&plain, |entries| Message::EncDelta { tree: t as u32, entries })?;
        Ok(())
    }

    /// Sends the holders gradients for the rows of node `id`, unless an
    /// ancestor's rows are already there.
    fn ensure_grads(&mut self, pass: &mut Pass, id: NodeId, rows: &[u32]) -> Result<()> {
        if pass.grads_for.is_some_and(|a| in_subtree(id, a)) {
            return Ok(());
        }
        self.broadcast_grads(pass.t, rows, pass.new_stats)?;
        pass.grads_for = Some(id);
        Ok(())
    }

    fn make_leaf(&self, tree: &mut Tree, id: NodeId, rows: Vec<u32>, pass: &mut Pass) {
        let (g, h) = Self::sum_stats(pass.new_stats, &rows);
        let leaf = Leaf::from_sums(&self.codec, g, h, self.model.config.lambda);
        tree.prune_below(id);
        tree.nodes.insert(id, TreeNode::Leaf(leaf));
        pass.leaves.push((id, rows));
    }

    fn regrow(
        &mut self,
        tree: &mut Tree,
        id: NodeId,
        rows: Vec<u32>,
        pass: &mut Pass,
        query: Option<BTreeMap<FeatureId, SplitStats>>,
    ) -> Result<()> {
        self.ensure_grads(pass, id, &rows)?;
        tree.prune_below(id);
        tree.nodes.remove(&id);
        let leaves = self.grow_from(pass.t, tree, id, rows, pass.new_stats, pass.dropped, query)?;
        pass.leaves.extend(leaves);
        Ok(())
    }

    fn refresh_tree(&mut self, tree: &mut Tree, pass: &mut Pass, new_root: Vec<u32>, old_root: Vec<u32>) -> Result<()> {
        let mut queue = std::collections::VecDeque::from([(0 as NodeId, new_root, old_root)]);
        while let Some((id, new_rows, old_rows)) = queue.pop_front() {
            let split = match tree.nodes.get(&id) {
                Some(TreeNode::Split(s)) => s.clone(),
                Some(TreeNode::Leaf(old)) => {
                    let old_weight = old.weight;
                    self.make_leaf(tree, id, new_rows, pass);
                    if tree.leaf_weight(id) != Some(old_weight) {
                        pass.report.leaves_updated += 1;
                    }
                    continue;
                }
                None => return Err(Error::Protocol(format!("tree {} has no node {id}", pass.t))),
            };
            if new_rows.is_empty() {
                self.make_leaf(tree, id, new_rows, pass);
                pass.report.collapsed += 1;
                continue;
            }
            if pass.dropped.contains(&split.feature) {
                self.replace_split(tree, id, &split, new_rows, pass)?;
                continue;
            }
            match self.refresh_split(tree, id, split, &new_rows, &old_rows, pass)? {
                Refreshed::Split(left) => {
                    let (nl, nr) = partition(&new_rows, &left);
                    let lc = left_child(id);
                    let (ol, or): (Vec<u32>, Vec<u32>) = old_rows
                        .iter()
                        .partition(|&&r| in_subtree(pass.old_leaf[r as usize], lc));
                    queue.push_back((lc, nl, ol));
                    queue.push_back((right_child(id), nr, or));
                }
                Refreshed::Collapse => {
                    self.make_leaf(tree, id, new_rows, pass);
                    pass.report.collapsed += 1;
                }
                Refreshed::Regrown => {}
            }
        }
        Ok(())
    }

    /// Patches a split's cached sums and re-picks within its neighborhood.

    fn refresh_split(
        &mut self,
        tree: &mut Tree,
        id: NodeId,
        mut split: Split,
        new_rows: &[u32],
        old_rows: &[u32],
        pass: &mut Pass,
    ) -> Result<Refreshed> {
        let cfg = self.model.config.clone();
        split.robust.retain(|r| !pass.dropped.contains(&r.feature));

        let (delta_rows, entering, leaving) = diff_spaces(new_rows, old_rows);
        let delta_rows: Vec<u32> = delta_rows
            .into_iter()
            .filter(|&r| pass.new_stats[r as usize] != pass.old_stats[r as usize])
            .collect();
        if !delta_rows.is_empty() || !entering.is_empty() || !leaving.is_empty() {
            let mut plain: Vec<(u32, i64, i64)> = entering
                .iter()
                .map(|&r| (r, pass.new_stats[r as usize].0, pass.new_stats[r as usize].1))
                .collect();
            plain.extend(
                leaving
                    .iter()
                    .map(|&r| (r, -pass.old_stats[r as usize].0, -pass.old_stats[r as usize].1)),
            );
            let explicit = self.seal_for(split.owner, &plain);
            let reply = self.send(
                split.owner,
                Message::NeighborhoodUpdate {
                    tree: pass.t as u32,
                    node: id,
                    record: split.record,
                    candidates: split.neighborhood.candidates.clone(),
                    delta_rows,
                    explicit,
                },
            )?;
            let Message::NeighborhoodSums { grad, hess, .. } = reply else {
                return Err(Error::Protocol(format!("expected neighborhood sums, got {}", reply.kind())));
            };
            let k = split.neighborhood.candidates.len();
            if grad.len() != k || hess.len() != k {
                return Err(Error::Protocol("neighborhood sums have the wrong length".into()));
            }
            for i in 0..k {
                split.neighborhood.prefix_grad[i] += self.open(split.owner, &grad[i])?;
                split.neighborhood.prefix_hess[i] += self.open(split.owner, &hess[i])?;
            }
        }
        let total = Self::sum_stats(pass.new_stats, new_rows);
        split.grad_sum = total.0;
        split.hess_sum = total.1;
        let ranked = split.neighborhood.ranked(&self.codec, total, cfg.lambda, cfg.gamma);
        let Some(&(_, best)) = ranked.first() else {
            return Ok(Refreshed::Collapse);
        };

        let overtaken = if pass.fallback { self.overtaken(&split, best, id, new_rows, pass)? } else { None };
        if let Some(query) = overtaken {
            self.regrow(tree, id, new_rows.to_vec(), pass, Some(query))?;
            pass.report.retrained += 1;
            return Ok(Refreshed::Regrown);
        }

        let reply = self.send(
            split.owner,
            Message::Repick {
                tree: pass.t as u32,
                node: id,
                record: split.record,
                ranked_candidates: ranked.iter().map(|&(c, _)| c).collect(),
                rows: new_rows.to_vec(),
            },
        )?;
        let (candidate, left) = match reply {
            Message::SplitChosen { candidate, left, .. } => (candidate, left),
            Message::NoValidSplit { .. } => return Ok(Refreshed::Collapse),
            other => return Err(Error::Protocol(format!("expected a split choice, got {}", other.kind()))),
        };
        check_choice(&ranked, candidate, &left, new_rows.len())?;
        if candidate != split.neighborhood.chosen {
            pass.report.rechosen += 1;
        }
        split.neighborhood.chosen = candidate;
        split.gain = ranked.iter().find(|&&(c, _)| c == candidate).map_or(f64::NAN, |&(_, g)| g);
        tree.nodes.insert(id, TreeNode::Split(split));
        Ok(Refreshed::Split(left))
    }

    /// Fallback trigger. A cheap screen against the runner-up gain stored at
    /// selection time, confirmed by a fresh query over the node's new space;
    /// returns that query when the fallback fires.
    fn overtaken(
        &mut self,
        split: &Split,
        best: f64,
        id: NodeId,
        rows: &[u32],
        pass: &mut Pass,
    ) -> Result<Option<BTreeMap<FeatureId, SplitStats>>> {
        let slack = self.model.config.epsilon.slack(best);
        let screened = split.runner_up_gain.is_some_and(|ru| ru - best > slack);
        if !screened {
            return Ok(None);
        }
        self.ensure_grads(pass, id, rows)?;
        let cfg = self.model.config.clone();
        let query = self.query_node(pass.t, id, rows, pass.dropped, None)?;
        let bests = crate::federation::feature_bests(&query, &self.codec, cfg.lambda, cfg.gamma);
        let Some(own) = bests.get(&split.feature).map(|b| b.gain) else {
            return Ok(Some(query));
        };
        let outside = bests
            .iter()
            .filter(|(f, _)| !split.robust.iter().any(|r| r.feature == **f))
            .map(|(_, b)| b.gain)
            .reduce(f64::max);
        let fired = outside.is_some_and(|g| g - own > self.model.config.epsilon.slack(g));
        Ok(fired.then_some(query))
    }

    /// Moves a split on a deleted feature to a replacement drawn from the rest
    /// of its robust set and regrows the subtree below it.
    fn replace_split(&mut self, tree: &mut Tree, id: NodeId, split: &Split, rows: Vec<u32>, pass: &mut Pass) -> Result<()> {
        let remaining: Vec<_> = split
            .robust
            .iter()
            .filter(|r| !pass.dropped.contains(&r.feature))
            .cloned()
            .collect();
        let pool: Vec<FeatureId> = remaining.iter().map(|r| r.feature).collect();
        let mut rng = node_rng(self.model.config.seed, pass.t, id, "replace");
        let Some(feature) = choose_uniform(&pool, &mut rng) else {
            // No robust alternative: full re-selection over the remaining features.
            self.regrow(tree, id, rows, pass, None)?;
            pass.report.retrained += 1;
            return Ok(());
        };
        self.ensure_grads(pass, id, &rows)?;
        tree.prune_below(id);
        tree.nodes.remove(&id);
        let forced = Forced {
            feature,
            robust: remaining,
        };
        match self.try_split(pass.t, id, &rows, pass.new_stats, pass.dropped, Some(forced))? {
            Some(found) => {
                let (l, r) = partition(&rows, &found.left);
                tree.nodes.insert(id, TreeNode::Split(found.split));
                pass.report.transferred += 1;
                for (child, child_rows) in [(left_child(id), l), (right_child(id), r)] {
                    let leaves = self.grow(pass.t, tree, child, child_rows, pass.new_stats, pass.dropped)?;
                    pass.leaves.extend(leaves);
                }
            }
            None => {
                self.make_leaf(tree, id, rows, pass);
                pass.report.collapsed += 1;
            }
        }
        Ok(())
    }
}

/// Splits two ascending row lists into (both, only new, only old).
fn diff_spaces(new: &[u32], old: &[u32]) -> (Vec<u32>, Vec<u32>, Vec<u32>) {
    let (mut both, mut entering, mut leaving) = (Vec::new(), Vec::new(), Vec::new());
    let (mut i, mut j) = (0, 0);
    while i < new.len() || j < old.len() {
        match (new.get(i), old.get(j)) {
            (Some(&a), Some(&b)) if a == b => {
                both.push(a);
                i += 1;
                j += 1;
            }
            (Some(&a), Some(&b)) if a < b => {
                entering.push(a);
                i += 1;
            }
            (Some(&a), None) => {
                entering.push(a);
                i += 1;
            }
            (_, Some(&b)) => {
                leaving.push(b);
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    (both, entering, leaving)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diff_spaces_partitions_rows() {
        let (both, enter, leave) = diff_spaces(&[1, 2, 4, 7], &[2, 3, 4, 9]);
        assert_eq!(both, vec![2, 4]);
        assert_eq!(enter, vec![1, 7]);
        assert_eq!(leave, vec![3, 9]);
        assert_eq!(diff_spaces(&[], &[5]), (vec![], vec![], vec![5]));
    }

    #[test]
    fn request_json_roundtrip() {
        let req = UnlearnRequest::instances(["a", "b"]);
        let text = serde_json::to_string(&req).unwrap();
        assert_eq!(UnlearnRequest::from_json(&text).unwrap(), req);
        let req: UnlearnRequest = UnlearnRequest::from_json(r#"{"target":{"features":[3]}}"#).unwrap();
        assert_eq!(req.target, UnlearnTarget::Features([FeatureId(3)].into()));
        assert!(req.options.fallback_retrain);
        assert!(UnlearnRequest::features([]).is_empty());
    }
}
