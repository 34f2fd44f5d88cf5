//! Inter-party messages and the session transcript.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::boost::NodeId;
use crate::crypto::{HeMode, HeValue};
use crate::data::{FeatureId, PartyId};
use crate::error::{Error, Result};

/// Encrypted (or, in plaintext mode, fixed-point) gradient and hessian of one row.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradEntry {
    pub row: u32,
    pub grad: HeValue,
    pub hess: HeValue,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeaturePrefix {
    pub feature: FeatureId,
    /// Cumulative sums in bucket order, one per bucket.
    pub grad: Vec<HeValue>,
    pub hess: Vec<HeValue>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Message {
    /// AP → PP: per-row statistics for the current tree. `reset` clears the table first.
    EncGrad { tree: u32, reset: bool, entries: Vec<GradEntry> },
    /// AP → PP: per-row new-minus-old statistics for rows whose gradients changed.
    EncDelta { tree: u32, entries: Vec<GradEntry> },
    /// AP → PP: request prefix sums over a node's instance space.
    NodeQuery {
        tree: u32,
        node: NodeId,
        rows: Vec<u32>,
        exclude: Vec<FeatureId>,
        only: Option<Vec<FeatureId>>,
    },
    /// PP → AP.
    PrefixSums { tree: u32, node: NodeId, features: Vec<FeaturePrefix> },
    /// AP → owner PP: robust set, chosen feature and its neighborhood ranked best-first.
    RobustAnnounce {
        tree: u32,
        node: NodeId,
        robust: Vec<FeatureId>,
        feature: FeatureId,
        ranked_candidates: Vec<u32>,
        rows: Vec<u32>,
    },
    /// AP → owner PP: choose again within the neighborhood for an existing lookup record.
    Repick {
        tree: u32,
        node: NodeId,
        record: u32,
        ranked_candidates: Vec<u32>,
        rows: Vec<u32>,
    },
    /// Owner PP → AP: chosen lookup record, candidate index and the left/right bit of every queried row.
    SplitChosen {
        tree: u32,
        node: NodeId,
        record: u32,
        candidate: u32,
        left: Vec<bool>,
    },
    /// Owner PP → AP: no candidate leaves both children non-empty.
    NoValidSplit { tree: u32, node: NodeId },
    /// AP → owner PP: per-candidate sums of delta statistics for a cached neighborhood.
    NeighborhoodUpdate {
        tree: u32,
        node: NodeId,
        record: u32,
        candidates: Vec<u32>,
        /// Rows whose delta was sent in the tree's `EncDelta`.
        delta_rows: Vec<u32>,
        /// Rows that entered (new value) or left (negated old value) the node.
        explicit: Vec<GradEntry>,
    },
    /// PP → AP: one cumulative sum per requested candidate.
    NeighborhoodSums {
        tree: u32,
        node: NodeId,
        grad: Vec<HeValue>,
        hess: Vec<HeValue>,
    },
    /// AP → PP: keep only these lookup records, renumbered densely in the given order.
    Compact { keep: Vec<u32> },
    /// AP → PP: purge deleted rows from local state.
    ForgetRows { rows: Vec<u32> },
    /// AP → PP: purge deleted feature columns.
    DropFeatures { features: Vec<FeatureId> },
    Ack,
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::EncGrad { .. } => "enc_grad",
            Message::EncDelta { .. } => "enc_delta",
            Message::NodeQuery { .. } => "node_query",
            Message::PrefixSums { .. } => "prefix_sums",
            Message::RobustAnnounce { .. } => "robust_announce",
            Message::Repick { .. } => "repick",
            Message::SplitChosen { .. } => "split_chosen",
            Message::NoValidSplit { .. } => "no_valid_split",
            Message::NeighborhoodUpdate { .. } => "neighborhood_update",
            Message::NeighborhoodSums { .. } => "neighborhood_sums",
            Message::Compact { .. } => "compact",
            Message::ForgetRows { .. } => "forget_rows",
            Message::DropFeatures { .. } => "drop_features",
            Message::Ack => "ack",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub seq: u64,
    pub from: PartyId,
    pub to: PartyId,
    pub message: Message,
}

/// Append-only log of inter-party messages. Recording is off unless enabled.
#[derive(Clone, Debug, Default)]
pub struct Transcript {
    recording: bool,
    next_seq: u64,
    entries: Vec<Envelope>,
}

impl Transcript {
    pub fn recording() -> Self {
        Transcript {
            recording: true,
            ..Default::default()
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn set_recording(&mut self, on: bool) {
        self.recording = on;
    }

    pub(crate) fn record(&mut self, from: PartyId, to: PartyId, message: &Message) {
        let seq = self.next_seq;
        self.next_seq += 1;
        if self.recording {
            self.entries.push(Envelope {
                seq,
                from,
                to,
                message: message.clone(),
            });
        }
    }

    /// Number of messages exchanged, recorded or not.
    pub fn message_count(&self) -> u64 {
        self.next_seq
    }

    pub fn entries(&self) -> &[Envelope] {
        &self.entries
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::new();
        for e in &self.entries {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n").map_err(|err| Error::io(path, err))?;
        }
        crate::io::write_atomic(path, &out)
    }

    pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<Envelope>> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(Error::from))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrivacyViolation {
    pub seq: u64,
    pub from: PartyId,
    pub to: PartyId,
    pub reason: String,
}

/// Scans recorded messages for values that must never cross a party boundary:
/// any real-valued field (raw features, thresholds, plaintext reals), any
/// label-named field, and, in encrypted sessions, any plaintext gradient statistic.
pub fn scan_transcript(entries: &[Envelope], mode: HeMode) -> Vec<PrivacyViolation> {
    let mut found = Vec::new();
    for e in entries {
        let value = match serde_json::to_value(&e.message) {
            Ok(v) => v,
            Err(err) => {
                found.push(violation(e, format!("unserializable message: {err}")));
                continue;
            }
        };
        walk(&value, "", &mut |path, v| {
            if let serde_json::Value::Number(n) = v {
                if n.is_f64() {
                    found.push(violation(e, format!("real value at {path}")));
                }
            }
            if path.rsplit('/').next().is_some_and(|k| k.contains("label")) {
                found.push(violation(e, format!("label field at {path}")));
            }
            if mode == HeMode::Paillier && path.ends_with("/plain") {
                found.push(violation(e, format!("plaintext statistic at {path}")));
            }
        });
    }
    found
}

fn violation(e: &Envelope, reason: String) -> PrivacyViolation {
    PrivacyViolation {
        seq: e.seq,
        from: e.from,
        to: e.to,
        reason,
    }
}

fn walk(v: &serde_json::Value, path: &str, f: &mut dyn FnMut(&str, &serde_json::Value)) {
    f(path, v);
    match v {
        serde_json::Value::Array(items) => {
            for (i, item) in items.iter().enumerate() {
                walk(item, &format!("{path}/{i}"), f);
            }
        }
        serde_json::Value::Object(map) => {
            for (k, item) in map {
                walk(item, &format!("{path}/{k}"), f);
            }
        }
        _ => {}
    }
}
