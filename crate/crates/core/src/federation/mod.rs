//! The multi-party training session.
//!
//! Parties are in-process actors. The active party (AP) holds labels, the
//! secret key, the model and the node record table; every party, the AP
//! included, keeps its feature columns, bucketizers and lookup table inside a
//! [`FeatureHolder`]. All AP↔PP traffic goes through [`Federation::send`] and
//! can be recorded in a [`Transcript`].

mod holder;
mod message;
mod split;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::boost::{
    grad_hess, left_child, node_depth, right_child, EnsembleModel, Leaf, Neighborhood, NodeId, RobustFeature, Split,
    SplitStats, Tree, TreeNode,
};
use crate::bucketing::default_bucket_size;
use crate::config::TrainConfig;
use crate::crypto::{keygen, FixedPointCodec, HeContext, HeMode, HeValue, KeyPair, PublicKey, SecretKey};
use crate::data::{AlignedDataset, AlignedShard, FeatureId, PartyId};
use crate::error::{Error, Result};

pub use holder::{FeatureHolder, HeldFeature, LookupEntry, LookupTable};
pub use message::{scan_transcript, Envelope, FeaturePrefix, GradEntry, Message, PrivacyViolation, Transcript};
pub(crate) use split::feature_bests;
pub use split::{best_candidate, build_neighborhood, choose_uniform, node_rng, select_robust_features, FeatureBest};

/// `leaf_of` marker for rows that were deleted.
pub const NO_LEAF: NodeId = NodeId::MAX;

const STATE_FORMAT_VERSION: u32 = 1;

/// Fixed-point gradient and hessian of one row.
pub(crate) type RowStats = (i64, i64);

/// Outcome of split finding at one node.
pub(crate) struct FoundSplit {
    pub split: Split,
    /// Left/right bit for each queried row, in query order.
    pub left: Vec<bool>,
}

/// A feature forced at a node, with the robust set to store alongside it.
pub(crate) struct Forced {
    pub feature: FeatureId,
    pub robust: Vec<RobustFeature>,
}

#[derive(Clone)]
pub struct Federation {
    pub(crate) active: PartyId,
    pub(crate) he: HeContext,
    pub(crate) codec: FixedPointCodec,
    pub(crate) rng: ChaCha20Rng,
    pub(crate) row_ids: Vec<String>,
    pub(crate) labels: Vec<f64>,
    pub(crate) live: Vec<bool>,
    /// Indexed by party id; the AP's own columns sit at `active`.
    pub(crate) holders: Vec<FeatureHolder>,
    pub(crate) feature_owner: BTreeMap<FeatureId, PartyId>,
    pub(crate) model: EnsembleModel,
    /// `leaf_of[t][row]`: leaf of tree `t` reached by a training row.
    pub(crate) leaf_of: Vec<Vec<NodeId>>,
    /// Training margins under the current model.
    pub(crate) margins: Vec<f64>,
    pub(crate) transcript: Transcript,
}

impl Federation {
    /// Keys, bucketizers and party state for a training set; no trees yet.
    pub fn setup(config: TrainConfig, data: &AlignedDataset) -> Result<Self> {
        config.validate()?;
        if data.is_empty() {
            return Err(Error::EmptyInput("training set"));
        }
        for (i, s) in data.shards.iter().enumerate() {
            if s.party != PartyId(i) {
                return Err(Error::InvalidPartition(format!("shard {i} belongs to {}", s.party)));
            }
        }
        let labels = data
            .labels()
            .ok_or_else(|| Error::MissingColumn("label".into()))?
            .to_vec();
        if let Some(&bad) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
            return Err(Error::UnsupportedLabel(bad));
        }
        if labels.iter().all(|&y| y == labels[0]) {
            return Err(Error::DegenerateDataset(format!("every label is {}", labels[0])));
        }
        let he = match config.he_mode {
            HeMode::Plaintext => HeContext::Plaintext,
            HeMode::Paillier => HeContext::Owner(keygen(config.he_bits, config.seed)?),
        };
        let active = data.active_party();
        let bucket_size = config.bucket_size.unwrap_or_else(|| default_bucket_size(data.len()));
        let holders = data
            .shards
            .iter()
            .map(|s| {
                let view = if s.party == active {
                    HeContext::Plaintext
                } else {
                    he.public_view()
                };
                FeatureHolder::from_shard(s, view, bucket_size, config.use_bucket_tree)
            })
            .collect::<Result<Vec<_>>>()?;
        let n = data.len();
        Ok(Federation {
            active,
            he,
            codec: FixedPointCodec::default(),
            rng: ChaCha20Rng::seed_from_u64(config.seed ^ 0x5eed_c1f3),
            row_ids: data.ids.clone(),
            labels,
            live: vec![true; n],
            holders,
            feature_owner: data.feature_map.iter().map(|(&f, &(p, _))| (f, p)).collect(),
            model: EnsembleModel::new(config),
            leaf_of: Vec::new(),
            margins: vec![0.0; n],
            transcript: Transcript::default(),
        })
    }

    /// Full training run: up to `config.trees` boosting rounds.
    pub fn train(config: TrainConfig, data: &AlignedDataset) -> Result<Self> {
        let mut fed = Self::setup(config, data)?;
        fed.fit()?;
        Ok(fed)
    }

    /// Boosts until the model holds `config.trees` trees or growth stalls.
    pub fn fit(&mut self) -> Result<usize> {
        let target = self.model.config.trees;
        let rounds = target.saturating_sub(self.model.trees.len());
        self.boost(rounds, &BTreeSet::new())
    }

    pub fn model(&self) -> &EnsembleModel {
        &self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.model.config
    }

    pub fn active_party(&self) -> PartyId {
        self.active
    }

    pub fn holders(&self) -> &[FeatureHolder] {
        &self.holders
    }

    pub fn holder(&self, party: PartyId) -> Option<&FeatureHolder> {
        self.holders.get(party.0)
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn transcript_mut(&mut self) -> &mut Transcript {
        &mut self.transcript
    }

    /// Training rows still in the model, in protocol order.
    pub fn live_ids(&self) -> Vec<&str> {
        self.live_rows().into_iter().map(|r| self.row_ids[r as usize].as_str()).collect()
    }

    pub fn live_count(&self) -> usize {
        self.live.iter().filter(|&&l| l).count()
    }

    /// Features still held by some party.
    pub fn features(&self) -> BTreeSet<FeatureId> {
        self.feature_owner.keys().copied().collect()
    }

    pub fn owner_of(&self, f: FeatureId) -> Option<PartyId> {
        self.feature_owner.get(&f).copied()
    }

    pub(crate) fn live_rows(&self) -> Vec<u32> {
        (0..self.live.len() as u32).filter(|&r| self.live[r as usize]).collect()
    }

    /// Delivers one message to a party and returns its reply; AP↔PP traffic is recorded.
    pub(crate) fn send(&mut self, to: PartyId, msg: Message) -> Result<Message> {
        let from = self.active;
        let holder = self
            .holders
            .get_mut(to.0)
            .ok_or_else(|| Error::Protocol(format!("no party {to}")))?;
        if to != from {
            self.transcript.record(from, to, &msg);
        }
        let reply = holder.handle(msg)?;
        if to != from {
            self.transcript.record(to, from, &reply);
        }
        Ok(reply)
    }

    fn expect_ack(reply: Message) -> Result<()> {
        match reply {
            Message::Ack => Ok(()),
            other => Err(Error::Protocol(format!("expected ack, got {}", other.kind()))),
        }
    }

    /// Parties currently holding at least one feature.
    pub(crate) fn feature_parties(&self) -> Vec<PartyId> {
        self.holders
            .iter()
            .filter(|h| !h.features.is_empty())
            .map(|h| h.party)
            .collect()
    }

    /// Reads a statistic received from `from`: decrypts ciphertexts, accepts
    /// plaintext only from the AP's own holder or in plaintext sessions.
    pub(crate) fn open(&self, from: PartyId, v: &HeValue) -> Result<i64> {
        match v {
            HeValue::Plain(x) if from == self.active || self.he.mode() == HeMode::Plaintext => Ok(*x),
            HeValue::Plain(_) => Err(Error::Protocol(format!("{from} sent a plaintext statistic"))),
            HeValue::Cipher(_) => self.he.decrypt(v),
        }
    }

    /// Entries as `to` receives them: plaintext for the AP's own holder or in
    /// plaintext sessions, ciphertexts otherwise.
    pub(crate) fn seal_for(&mut self, to: PartyId, plain: &[(u32, i64, i64)]) -> Vec<GradEntry> {
        if to == self.active || self.he.mode() == HeMode::Plaintext {
            return plain
                .iter()
                .map(|&(row, g, h)| GradEntry {
                    row,
                    grad: HeValue::Plain(g),
                    hess: HeValue::Plain(h),
                })
                .collect();
        }
        plain
            .iter()
            .map(|&(row, g, h)| GradEntry {
                row,
                grad: self.he.encrypt(g, &mut self.rng),
                hess: self.he.encrypt(h, &mut self.rng),
            })
            .collect()
    }

    /// Sends the same statistics to every feature party; passive parties share one encryption.
    pub(crate) fn distribute(&mut self, plain: &[(u32, i64, i64)], make: impl Fn(Vec<GradEntry>) -> Message) -> Result<()> {
        let parties = self.feature_parties();
        let mut sealed: Option<Vec<GradEntry>> = None;
        let active = self.active;
        let passive_left = |i: usize| parties[i + 1..].iter().any(|&p| p != active);
        let mut outgoing = Vec::with_capacity(parties.len());
        for (i, &p) in parties.iter().enumerate() {
            let entries = if p == self.active {
                self.seal_for(p, plain)
            } else {
                let s = match sealed.take() {
                    Some(s) => s,
                    None => self.seal_for(p, plain),
                };
                if passive_left(i) {
                    sealed = Some(s.clone());
                }
                s
            };
            outgoing.push((p, entries));
        }
        for (p, entries) in outgoing {
            Self::expect_ack(self.send(p, make(entries))?)?;
        }
        Ok(())
    }

    /// Sends every feature party the statistics of `rows` for tree `tree`.
    pub(crate) fn broadcast_grads(&mut self, tree: usize, rows: &[u32], stats: &[RowStats]) -> Result<()> {
        let plain: Vec<(u32, i64, i64)> = rows
            .iter()
            .map(|&r| (r, stats[r as usize].0, stats[r as usize].1))
            .collect();
        self.distribute(&plain, |entries| Message::EncGrad {
            tree: tree as u32,
            reset: true,
            entries,
        })?;
        Ok(())
    }

    /// Fixed-point g/h of every live row at the given margins (zero for deleted rows).
    pub(crate) fn row_stats(&self, margins: &[f64]) -> Result<Vec<RowStats>> {
        self.row_stats_masked(margins, &self.live)
    }

    pub(crate) fn row_stats_masked(&self, margins: &[f64], mask: &[bool]) -> Result<Vec<RowStats>> {
        let loss = self.model.loss;
        (0..mask.len())
            .map(|r| {
                if !mask[r] {
                    return Ok((0, 0));
                }
                let gh = grad_hess(loss, self.labels[r], margins[r])?;
                Ok((self.codec.encode(gh.g)?, self.codec.encode(gh.h)?))
            })
            .collect()
    }

    pub(crate) fn sum_stats(stats: &[RowStats], rows: &[u32]) -> RowStats {
        rows.iter().fold((0, 0), |(g, h), &r| {
            let (dg, dh) = stats[r as usize];
            (g + dg, h + dh)
        })
    }

    /// Runs up to `rounds` boosting rounds without using `exclude`; returns the trees added.
    pub(crate) fn boost(&mut self, rounds: usize, exclude: &BTreeSet<FeatureId>) -> Result<usize> {
        let mut added = 0;
        for _ in 0..rounds {
            let t = self.model.trees.len();
            let stats = self.row_stats(&self.margins)?;
            let rows = self.live_rows();
            self.broadcast_grads(t, &rows, &stats)?;
            let mut tree = Tree::default();
            let leaves = self.grow(t, &mut tree, 0, rows, &stats, exclude)?;
            if matches!(tree.nodes.get(&0), Some(TreeNode::Leaf(_))) {
                // Stall: no positive-gain split at the root.
                break;
            }
            let eta = self.model.learning_rate;
            let mut leaf_of = vec![NO_LEAF; self.live.len()];
            for (id, rows) in &leaves {
                let w = tree.leaf_weight(*id).expect("grow records leaves");
                for &r in rows {
                    leaf_of[r as usize] = *id;
                    self.margins[r as usize] += eta * w;
                }
            }
            self.model.trees.push(tree);
            self.leaf_of.push(leaf_of);
            added += 1;
        }
        Ok(added)
    }

    /// Grows the subtree of `tree` rooted at `root` over `rows`, level by level.
    /// Returns the rows reaching each new leaf.
    pub(crate) fn grow(
        &mut self,
        t: usize,
        tree: &mut Tree,
        root: NodeId,
        rows: Vec<u32>,
        stats: &[RowStats],
        exclude: &BTreeSet<FeatureId>,
    ) -> Result<Vec<(NodeId, Vec<u32>)>> {
        self.grow_from(t, tree, root, rows, stats, exclude, None)
    }

    /// [`Federation::grow`] with the root's query answers already in hand.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn grow_from(
        &mut self,
        t: usize,
        tree: &mut Tree,
        root: NodeId,
        rows: Vec<u32>,
        stats: &[RowStats],
        exclude: &BTreeSet<FeatureId>,
        mut root_query: Option<BTreeMap<FeatureId, SplitStats>>,
    ) -> Result<Vec<(NodeId, Vec<u32>)>> {
        let mut queue = std::collections::VecDeque::from([(root, rows)]);
        let mut leaves = Vec::new();
        while let Some((id, rows)) = queue.pop_front() {
            let found = if node_depth(id) >= self.model.config.max_depth || rows.len() < 2 {
                None
            } else {
                self.find_robust_split(t, id, &rows, stats, exclude, None, root_query.take())?
            };
            if let Some(found) = found {
                let (l, r) = partition(&rows, &found.left);
                tree.nodes.insert(id, TreeNode::Split(found.split));
                queue.push_back((left_child(id), l));
                queue.push_back((right_child(id), r));
            } else {
                let (g, h) = Self::sum_stats(stats, &rows);
                tree.nodes
                    .insert(id, TreeNode::Leaf(Leaf::from_sums(&self.codec, g, h, self.model.config.lambda)));
                leaves.push((id, rows));
            }
        }
        Ok(leaves)
    }

    /// Split finding at one node, if depth and data allow it.
    pub(crate) fn try_split(
        &mut self,
        t: usize,
        node: NodeId,
        rows: &[u32],
        stats: &[RowStats],
        exclude: &BTreeSet<FeatureId>,
        forced: Option<Forced>,
    ) -> Result<Option<FoundSplit>> {
        if node_depth(node) >= self.model.config.max_depth || rows.len() < 2 {
            return Ok(None);
        }
        self.find_robust_split(t, node, rows, stats, exclude, forced, None)
    }

    /// Collects decrypted prefix sums for a node from every feature party.
    pub(crate) fn query_node(
        &mut self,
        t: usize,
        node: NodeId,
        rows: &[u32],
        exclude: &BTreeSet<FeatureId>,
        only: Option<FeatureId>,
    ) -> Result<BTreeMap<FeatureId, SplitStats>> {
        let parties = match only {
            Some(f) => vec![self.owner_of(f).ok_or_else(|| Error::UnknownFeature(f.to_string()))?],
            None => self.feature_parties(),
        };
        let mut out = BTreeMap::new();
        for p in parties {
            let reply = self.send(
                p,
                Message::NodeQuery {
                    tree: t as u32,
                    node,
                    rows: rows.to_vec(),
                    exclude: exclude.iter().copied().collect(),
                    only: only.map(|f| vec![f]),
                },
            )?;
            let Message::PrefixSums { features, .. } = reply else {
                return Err(Error::Protocol(format!("expected prefix sums, got {}", reply.kind())));
            };
            for fp in features {
                if self.owner_of(fp.feature) != Some(p) || exclude.contains(&fp.feature) {
                    return Err(Error::Protocol(format!("{p} answered for {}", fp.feature)));
                }
                let open = |v: &Vec<HeValue>| v.iter().map(|x| self.open(p, x)).collect::<Result<Vec<i64>>>();
                out.insert(
                    fp.feature,
                    SplitStats {
                        prefix_grad: open(&fp.grad)?,
                        prefix_hess: open(&fp.hess)?,
                    },
                );
            }
        }
        Ok(out)
    }

    /// Robust split selection: gains, robust set, random feature, neighborhood,
    /// then the owner's threshold choice. `query` reuses answers already
    /// collected for this node.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn find_robust_split(
        &mut self,
        t: usize,
        node: NodeId,
        rows: &[u32],
        stats: &[RowStats],
        exclude: &BTreeSet<FeatureId>,
        forced: Option<Forced>,
        query: Option<BTreeMap<FeatureId, SplitStats>>,
    ) -> Result<Option<FoundSplit>> {
        let cfg = self.model.config.clone();
        let query = match query {
            Some(q) => q,
            None => self.query_node(t, node, rows, exclude, forced.as_ref().map(|f| f.feature))?,
        };
        let bests = split::feature_bests(&query, &self.codec, cfg.lambda, cfg.gamma);
        let Some(max_gain) = bests.values().map(|b| b.gain).reduce(f64::max) else {
            return Ok(None);
        };
        if max_gain <= 0.0 {
            return Ok(None);
        }
        let (feature, robust) = match forced {
            Some(f) => (f.feature, f.robust),
            None => {
                let gains: BTreeMap<FeatureId, f64> = bests.iter().map(|(&f, b)| (f, b.gain)).collect();
                let set = if cfg.use_robust_features {
                    select_robust_features(&gains, cfg.epsilon)?
                } else {
                    let first = gains.iter().find(|(_, &g)| g == max_gain).map(|(&f, _)| f);
                    first.into_iter().collect()
                };
                let mut rng = node_rng(cfg.seed, t, node, "robust");
                let feature = choose_uniform(&set, &mut rng).expect("robust set contains the argmax");
                let robust = set
                    .iter()
                    .map(|&f| RobustFeature {
                        feature: f,
                        gain: gains[&f],
                    })
                    .collect();
                (feature, robust)
            }
        };
        let runner_up_gain = bests
            .iter()
            .filter(|(f, _)| !robust.iter().any(|r: &RobustFeature| r.feature == **f))
            .map(|(_, b)| b.gain)
            .reduce(f64::max);
        let Some(best) = bests.get(&feature) else {
            return Ok(None);
        };
        let fstats = &query[&feature];
        let total = Self::sum_stats(stats, rows);
        let candidates = build_neighborhood(best.candidate, cfg.effective_width(), fstats.candidates());
        let mut neighborhood = Neighborhood {
            prefix_grad: candidates.iter().map(|&c| fstats.prefix_grad[c as usize]).collect(),
            prefix_hess: candidates.iter().map(|&c| fstats.prefix_hess[c as usize]).collect(),
            candidates,
            chosen: best.candidate,
        };
        let ranked = neighborhood.ranked(&self.codec, total, cfg.lambda, cfg.gamma);
        if ranked.is_empty() {
            return Ok(None);
        }
        let owner = self.owner_of(feature).ok_or_else(|| Error::UnknownFeature(feature.to_string()))?;
        let reply = self.send(
            owner,
            Message::RobustAnnounce {
                tree: t as u32,
                node,
                robust: robust.iter().map(|r| r.feature).collect(),
                feature,
                ranked_candidates: ranked.iter().map(|&(c, _)| c).collect(),
                rows: rows.to_vec(),
            },
        )?;
        let (record, candidate, left) = match reply {
            Message::SplitChosen {
                record, candidate, left, ..
            } => (record, candidate, left),
            Message::NoValidSplit { .. } => return Ok(None),
            other => return Err(Error::Protocol(format!("expected a split choice, got {}", other.kind()))),
        };
        check_choice(&ranked, candidate, &left, rows.len())?;
        neighborhood.chosen = candidate;
        let gain = ranked.iter().find(|&&(c, _)| c == candidate).map(|&(_, g)| g).unwrap_or(f64::NAN);
        Ok(Some(FoundSplit {
            split: Split {
                owner,
                record,
                robust,
                feature,
                neighborhood,
                grad_sum: total.0,
                hess_sum: total.1,
                gain,
                max_gain,
                runner_up_gain,
            },
            left,
        }))
    }

    /// Margins of a test set. Routing queries are answered from each party's
    /// lookup table and its own columns of `data`.
    pub fn predict_margins(&self, data: &AlignedDataset) -> Result<Vec<f64>> {
        let mut shards: Vec<Option<&AlignedShard>> = Vec::with_capacity(self.holders.len());
        let mut columns: Vec<Vec<usize>> = Vec::with_capacity(self.holders.len());
        for h in &self.holders {
            if h.lookup.is_empty() {
                shards.push(None);
                columns.push(Vec::new());
                continue;
            }
            let shard = data
                .shard(h.party)
                .ok_or_else(|| Error::Protocol(format!("test data has no shard for {}", h.party)))?;
            columns.push(h.record_columns(shard)?);
            shards.push(Some(shard));
        }
        (0..data.len())
            .map(|row| {
                self.model.predict_with(|p, r| {
                    let holder = self
                        .holders
                        .get(p.0)
                        .ok_or_else(|| Error::Protocol(format!("no party {p}")))?;
                    let col = *columns[p.0]
                        .get(r as usize)
                        .ok_or_else(|| Error::Protocol(format!("dangling record {r} at {p}")))?;
                    let shard = shards[p.0].expect("parties with records have shards");
                    holder.goes_left(r, shard.columns[col][row])
                })
            })
            .collect()
    }

    pub fn predict_proba(&self, data: &AlignedDataset) -> Result<Vec<f64>> {
        Ok(self.predict_margins(data)?.into_iter().map(crate::boost::sigmoid).collect())
    }

    /// Training margins under the current model, by live row.
    pub fn training_margins(&self) -> Vec<(String, f64)> {
        self.live_rows()
            .into_iter()
            .map(|r| (self.row_ids[r as usize].clone(), self.margins[r as usize]))
            .collect()
    }

    /// Persists the session: the AP's model and state under `active/`, each
    /// party's holder state under `party-<p>/`, keys alongside.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        crate::io::write_atomic(dir.join("active").join("model.json"), self.model.to_json()?.as_bytes())?;
        let state = ActiveState {
            format_version: STATE_FORMAT_VERSION,
            active: self.active,
            he_mode: self.he.mode(),
            row_ids: self.row_ids.clone(),
            labels: self.labels.clone(),
            live: self.live.clone(),
            leaf_of: self.leaf_of.clone(),
            margins: self.margins.clone(),
            feature_owner: self.feature_owner.clone(),
        };
        crate::io::write_json(dir.join("active").join("state.json"), &state)?;
        if let HeContext::Owner(kp) = &self.he {
            crate::io::write_atomic(dir.join("active").join("secret.key"), kp.secret.to_text().as_bytes())?;
            crate::io::write_atomic(dir.join("public.key"), kp.public().to_text().as_bytes())?;
        }
        for h in &self.holders {
            crate::io::write_json(dir.join(format!("party-{}", h.party.0)).join("holder.json"), h)?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| Error::io(p, e));
        let model = EnsembleModel::from_json(&read(&dir.join("active").join("model.json"))?)?;
        let state: ActiveState = crate::io::read_json(dir.join("active").join("state.json"))?;
        if state.format_version != STATE_FORMAT_VERSION {
            return Err(Error::Malformed {
                what: "party state",
                detail: format!("unsupported format version {}", state.format_version),
            });
        }
        let he = match state.he_mode {
            HeMode::Plaintext => HeContext::Plaintext,
            HeMode::Paillier => {
                let secret = SecretKey::from_text(&read(&dir.join("active").join("secret.key"))?)?;
                let public = PublicKey::from_text(&read(&dir.join("public.key"))?)?;
                if &public != secret.public() {
                    return Err(Error::KeyMismatch);
                }
                HeContext::Owner(KeyPair { secret })
            }
        };
        let mut holders = Vec::new();
        let mut p = 0;
        loop {
            let path = dir.join(format!("party-{p}")).join("holder.json");
            if !path.exists() {
                break;
            }
            let mut h: FeatureHolder = crate::io::read_json(&path)?;
            if h.party != PartyId(p) {
                return Err(Error::InvalidPartition(format!("party-{p} holds state of {}", h.party)));
            }
            h.set_context(if h.party == state.active {
                HeContext::Plaintext
            } else {
                he.public_view()
            });
            holders.push(h);
            p += 1;
        }
        if holders.len() <= state.active.0 {
            return Err(Error::EmptyParty(state.active.0));
        }
        let seed = model.config.seed;
        Ok(Federation {
            active: state.active,
            he,
            codec: FixedPointCodec::default(),
            rng: ChaCha20Rng::seed_from_u64(seed ^ 0x5eed_c1f3 ^ model.version),
            row_ids: state.row_ids,
            labels: state.labels,
            live: state.live,
            holders,
            feature_owner: state.feature_owner,
            model,
            leaf_of: state.leaf_of,
            margins: state.margins,
            transcript: Transcript::default(),
        })
    }

    /// Renumbers every party's lookup table to the records the model still
    /// references, dropping orphans left by collapsed or replaced splits.
    pub(crate) fn compact_lookups(&mut self) -> Result<()> {
        let mut keep: BTreeMap<PartyId, Vec<u32>> = BTreeMap::new();
        let mut renumber: BTreeMap<(PartyId, u32), u32> = BTreeMap::new();
        for tree in &self.model.trees {
            for (_, s) in tree.splits() {
                let list = keep.entry(s.owner).or_default();
                renumber.entry((s.owner, s.record)).or_insert_with(|| {
                    list.push(s.record);
                    list.len() as u32 - 1
                });
            }
        }
        for p in 0..self.holders.len() {
            let party = PartyId(p);
            let list = keep.remove(&party).unwrap_or_default();
            let unchanged = list.len() == self.holders[p].lookup.len() && list.iter().enumerate().all(|(i, &r)| i as u32 == r);
            if unchanged {
                continue;
            }
            Self::expect_ack(self.send(party, Message::Compact { keep: list })?)?;
        }
        for tree in &mut self.model.trees {
            for node in tree.nodes.values_mut() {
                if let TreeNode::Split(s) = node {
                    s.record = renumber[&(s.owner, s.record)];
                }
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct ActiveState {
    format_version: u32,
    active: PartyId,
    he_mode: HeMode,
    row_ids: Vec<String>,
    labels: Vec<f64>,
    live: Vec<bool>,
    leaf_of: Vec<Vec<NodeId>>,
    margins: Vec<f64>,
    feature_owner: BTreeMap<FeatureId, PartyId>,
}

pub(crate) fn partition(rows: &[u32], left: &[bool]) -> (Vec<u32>, Vec<u32>) {
    let mut l = Vec::new();
    let mut r = Vec::new();
    for (&row, &goes_left) in rows.iter().zip(left) {
        if goes_left {
            l.push(row);
        } else {
            r.push(row);
        }
    }
    (l, r)
}

/// The owner must pick a ranked candidate and return one non-trivial bit per row.
pub(crate) fn check_choice(ranked: &[(u32, f64)], candidate: u32, left: &[bool], rows: usize) -> Result<()> {
    if !ranked.iter().any(|&(c, _)| c == candidate) {
        return Err(Error::Protocol(format!("candidate {candidate} was not offered")));
    }
    let n_left = left.iter().filter(|&&l| l).count();
    if left.len() != rows || n_left == 0 || n_left == rows {
        return Err(Error::Protocol("split leaves a child empty".into()));
    }
    Ok(())
}

/// Every training row's leaf, recomputed by routing its raw feature values;
/// used by tests to check cached state against a from-scratch pass.
pub fn route_training_rows(fed: &Federation, data: &AlignedDataset) -> Result<Vec<Vec<NodeId>>> {
    let mut out = Vec::with_capacity(fed.model.trees.len());
    for tree in &fed.model.trees {
        let leaves = (0..data.len())
            .map(|row| {
                tree.route(|p, r| {
                    let e = fed.holders[p.0].lookup.get(r)?;
                    let v = data.value(e.feature, row).ok_or_else(|| Error::UnknownFeature(e.feature.to_string()))?;
                    Ok(v <= e.threshold)
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(leaves);
    }
    Ok(out)
}
