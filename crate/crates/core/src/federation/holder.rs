//! Party-private feature state and the feature-holder side of the protocol.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::message::{FeaturePrefix, GradEntry, Message};
use crate::bucketing::{Bucketizer, PURGED};
use crate::crypto::{HeContext, HeValue};
use crate::data::{AlignedShard, FeatureId, PartyId};
use crate::error::{Error, Result};

/// One entry of a party's private lookup table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LookupEntry {
    pub feature: FeatureId,
    pub threshold: f64,
    /// Candidate index of `threshold` in the feature's bucket boundaries.
    pub candidate: u32,
}

/// record r ↦ (feature k, threshold v); record ids are dense.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct LookupTable {
    pub entries: Vec<LookupEntry>,
}

impl LookupTable {
    pub fn get(&self, record: u32) -> Result<&LookupEntry> {
        self.entries
            .get(record as usize)
            .ok_or_else(|| Error::Protocol(format!("dangling lookup record {record}")))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeldFeature {
    pub id: FeatureId,
    pub name: String,
    /// Training values by shared row; zeroed once purged (the assignment marks it).
    pub values: Vec<f64>,
    pub bucketizer: Bucketizer,
    /// Bucket id by shared row; [`PURGED`] once purged.
    pub assignment: Vec<u32>,
}

/// Everything one party knows about its own feature columns.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeatureHolder {
    pub party: PartyId,
    pub features: Vec<HeldFeature>,
    pub lookup: LookupTable,
    #[serde(skip, default = "plaintext_context")]
    pub(crate) he: HeContext,
    #[serde(skip)]
    grads: Vec<Option<(HeValue, HeValue)>>,
    #[serde(skip)]
    deltas: Vec<Option<(HeValue, HeValue)>>,
}

/// Row-indexed storage of per-row statistics.
fn store_rows(table: &mut Vec<Option<(HeValue, HeValue)>>, entries: Vec<GradEntry>) {
    if let Some(top) = entries.iter().map(|e| e.row as usize + 1).max() {
        if table.len() < top {
            table.resize(top, None);
        }
    }
    for e in entries {
        table[e.row as usize] = Some((e.grad, e.hess));
    }
}

fn plaintext_context() -> HeContext {
    HeContext::Plaintext
}

impl FeatureHolder {
    /// Builds bucketizers for every local column of the shard.
    pub fn from_shard(shard: &AlignedShard, he: HeContext, bucket_size: usize, use_bucket_tree: bool) -> Result<Self> {
        let features = shard
            .features
            .iter()
            .zip(&shard.names)
            .zip(&shard.columns)
            .map(|((&id, name), values)| {
                let bucketizer = Bucketizer::build(id, values, bucket_size, use_bucket_tree)?;
                let assignment = values.iter().map(|&v| bucketizer.assign(v)).collect();
                Ok(HeldFeature {
                    id,
                    name: name.clone(),
                    values: values.clone(),
                    bucketizer,
                    assignment,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FeatureHolder {
            party: shard.party,
            features,
            lookup: LookupTable::default(),
            he,
            grads: Vec::new(),
            deltas: Vec::new(),
        })
    }

    pub(crate) fn set_context(&mut self, he: HeContext) {
        self.he = he;
    }

    pub fn feature_ids(&self) -> Vec<FeatureId> {
        self.features.iter().map(|f| f.id).collect()
    }

    fn feature(&self, id: FeatureId) -> Result<&HeldFeature> {
        self.features
            .iter()
            .find(|f| f.id == id)
            .ok_or_else(|| Error::Protocol(format!("{} does not hold {id}", self.party)))
    }

    /// Candidate counts of every local feature, public metadata shared with the AP.
    pub fn candidate_counts(&self) -> BTreeMap<FeatureId, usize> {
        self.features
            .iter()
            .map(|f| (f.id, f.bucketizer.split_candidates().len()))
            .collect()
    }

    /// Answers `value <= threshold` for a lookup record.
    pub fn goes_left(&self, record: u32, value: f64) -> Result<bool> {
        Ok(value <= self.lookup.get(record)?.threshold)
    }

    /// Column of `shard` holding each lookup record's feature, for answering routing queries.
    pub fn record_columns(&self, shard: &AlignedShard) -> Result<Vec<usize>> {
        self.lookup
            .entries
            .iter()
            .map(|e| {
                shard
                    .features
                    .iter()
                    .position(|&f| f == e.feature)
                    .ok_or_else(|| Error::UnknownFeature(e.feature.to_string()))
            })
            .collect()
    }

    pub(crate) fn handle(&mut self, msg: Message) -> Result<Message> {
        match msg {
            Message::EncGrad { reset, entries, .. } => {
                if reset {
                    self.grads.clear();
                }
                store_rows(&mut self.grads, entries);
                Ok(Message::Ack)
            }
            Message::EncDelta { entries, .. } => {
                self.deltas.clear();
                store_rows(&mut self.deltas, entries);
                Ok(Message::Ack)
            }
            Message::NodeQuery {
                tree,
                node,
                rows,
                exclude,
                only,
            } => {
                let exclude: BTreeSet<FeatureId> = exclude.into_iter().collect();
                let mut features = Vec::new();
                for f in &self.features {
                    if exclude.contains(&f.id) || only.as_ref().is_some_and(|o| !o.contains(&f.id)) {
                        continue;
                    }
                    features.push(self.prefix_sums(f, &rows)?);
                }
                Ok(Message::PrefixSums { tree, node, features })
            }
            Message::RobustAnnounce {
                tree,
                node,
                feature,
                ranked_candidates,
                rows,
                ..
            } => match self.pick(feature, &ranked_candidates, &rows)? {
                Some((candidate, threshold, left)) => {
                    let record = self.lookup.entries.len() as u32;
                    self.lookup.entries.push(LookupEntry {
                        feature,
                        threshold,
                        candidate,
                    });
                    Ok(Message::SplitChosen {
                        tree,
                        node,
                        record,
                        candidate,
                        left,
                    })
                }
                None => Ok(Message::NoValidSplit { tree, node }),
            },
            Message::Repick {
                tree,
                node,
                record,
                ranked_candidates,
                rows,
            } => {
                let feature = self.lookup.get(record)?.feature;
                match self.pick(feature, &ranked_candidates, &rows)? {
                    Some((candidate, threshold, left)) => {
                        let entry = &mut self.lookup.entries[record as usize];
                        entry.candidate = candidate;
                        entry.threshold = threshold;
                        Ok(Message::SplitChosen {
                            tree,
                            node,
                            record,
                            candidate,
                            left,
                        })
                    }
                    None => Ok(Message::NoValidSplit { tree, node }),
                }
            }
            Message::NeighborhoodUpdate {
                tree,
                node,
                record,
                candidates,
                delta_rows,
                explicit,
            } => {
                let feature = self.feature(self.lookup.get(record)?.feature)?;
                let (grad, hess) = self.neighborhood_sums(feature, &candidates, &delta_rows, &explicit)?;
                Ok(Message::NeighborhoodSums { tree, node, grad, hess })
            }
            Message::Compact { keep } => {
                let mut entries = Vec::with_capacity(keep.len());
                for r in keep {
                    entries.push(self.lookup.get(r)?.clone());
                }
                self.lookup.entries = entries;
                Ok(Message::Ack)
            }
            Message::ForgetRows { rows } => {
                for f in &mut self.features {
                    for &r in &rows {
                        if let Some(v) = f.values.get_mut(r as usize) {
                            *v = 0.0;
                            f.assignment[r as usize] = PURGED;
                        }
                    }
                }
                for &r in &rows {
                    if let Some(slot) = self.grads.get_mut(r as usize) {
                        *slot = None;
                    }
                }
                Ok(Message::Ack)
            }
            Message::DropFeatures { features } => {
                self.features.retain(|f| !features.contains(&f.id));
                Ok(Message::Ack)
            }
            other => Err(Error::Protocol(format!(
                "{} cannot handle {} messages",
                self.party,
                other.kind()
            ))),
        }
    }

    fn grad_of(&self, row: u32) -> Result<&(HeValue, HeValue)> {
        self.grads
            .get(row as usize)
            .and_then(Option::as_ref)
            .ok_or_else(|| Error::Protocol(format!("{} has no statistics for row {row}", self.party)))
    }

    fn prefix_sums(&self, f: &HeldFeature, rows: &[u32]) -> Result<FeaturePrefix> {
        let buckets = f.bucketizer.bucket_count();
        let mut grad = vec![self.he.zero(); buckets];
        let mut hess = vec![self.he.zero(); buckets];
        for &r in rows {
            let b = f.assignment[r as usize];
            if b == PURGED {
                return Err(Error::Protocol(format!("row {r} was purged")));
            }
            let (g, h) = self.grad_of(r)?;
            self.he.add_assign(&mut grad[b as usize], g)?;
            self.he.add_assign(&mut hess[b as usize], h)?;
        }
        for j in 1..buckets {
            let (done, rest) = grad.split_at_mut(j);
            self.he.add_assign(&mut rest[0], &done[j - 1])?;
            let (done, rest) = hess.split_at_mut(j);
            self.he.add_assign(&mut rest[0], &done[j - 1])?;
        }
        Ok(FeaturePrefix {
            feature: f.id,
            grad,
            hess,
        })
    }

    /// First ranked candidate whose split leaves both sides non-empty.
    fn pick(&self, feature: FeatureId, ranked: &[u32], rows: &[u32]) -> Result<Option<(u32, f64, Vec<bool>)>> {
        let f = self.feature(feature)?;
        let thresholds = f.bucketizer.split_candidates();
        for &c in ranked {
            let threshold = *thresholds
                .get(c as usize)
                .ok_or_else(|| Error::Protocol(format!("candidate {c} out of range for {feature}")))?;
            let left: Vec<bool> = rows
                .iter()
                .map(|&r| {
                    let b = f.assignment[r as usize];
                    if b == PURGED {
                        Err(Error::Protocol(format!("row {r} was purged")))
                    } else {
                        Ok(b <= c)
                    }
                })
                .collect::<Result<_>>()?;
            let n_left = left.iter().filter(|&&l| l).count();
            if n_left > 0 && n_left < rows.len() {
                return Ok(Some((c, threshold, left)));
            }
        }
        Ok(None)
    }

    fn neighborhood_sums(
        &self,
        f: &HeldFeature,
        candidates: &[u32],
        delta_rows: &[u32],
        explicit: &[GradEntry],
    ) -> Result<(Vec<HeValue>, Vec<HeValue>)> {
        // Bin rows by the first candidate they fall under, then accumulate: one addition per row.
        let bins = candidates.len() + 1;
        let mut grad = vec![self.he.zero(); bins];
        let mut hess = vec![self.he.zero(); bins];
        let mut add = |row: u32, g: &HeValue, h: &HeValue| -> Result<()> {
            let b = f.assignment[row as usize];
            if b == PURGED {
                return Err(Error::Protocol(format!("row {row} was purged")));
            }
            let bin = candidates.partition_point(|&c| c < b);
            self.he.add_assign(&mut grad[bin], g)?;
            self.he.add_assign(&mut hess[bin], h)
        };
        for &r in delta_rows {
            let (g, h) = self
                .deltas
                .get(r as usize)
                .and_then(Option::as_ref)
                .ok_or_else(|| Error::Protocol(format!("no delta for row {r}")))?;
            add(r, g, h)?;
        }
        for e in explicit {
            add(e.row, &e.grad, &e.hess)?;
        }
        grad.pop();
        hess.pop();
        for j in 1..grad.len() {
            let (done, rest) = grad.split_at_mut(j);
            self.he.add_assign(&mut rest[0], &done[j - 1])?;
            let (done, rest) = hess.split_at_mut(j);
            self.he.add_assign(&mut rest[0], &done[j - 1])?;
        }
        Ok((grad, hess))
    }
}
