//! Active-party split selection: robust feature sets, neighborhoods and the
//! per-node random stream.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::boost::{NodeId, SplitStats};
use crate::config::Epsilon;
use crate::crypto::FixedPointCodec;
use crate::data::FeatureId;
use crate::error::{Error, Result};

/// Best candidate of one feature at one node.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureBest {
    pub candidate: u32,
    pub gain: f64,
}

/// Index and gain of the best defined candidate; ties go to the lower index.
pub fn best_candidate(gains: &[Option<f64>]) -> Option<FeatureBest> {
    let mut best: Option<FeatureBest> = None;
    for (j, g) in gains.iter().enumerate() {
        if let Some(g) = *g {
            if best.as_ref().map_or(true, |b| g > b.gain) {
                best = Some(FeatureBest {
                    candidate: j as u32,
                    gain: g,
                });
            }
        }
    }
    best
}

/// `{f : G_max − G_f < slack}` plus every feature attaining `G_max`, in feature order.
pub fn select_robust_features(gains: &BTreeMap<FeatureId, f64>, epsilon: Epsilon) -> Result<Vec<FeatureId>> {
    let max = gains
        .values()
        .copied()
        .fold(None, |m: Option<f64>, g| Some(m.map_or(g, |m| m.max(g))))
        .ok_or(Error::EmptyInput("robust feature selection needs at least one gain"))?;
    let slack = epsilon.slack(max);
    Ok(gains
        .iter()
        .filter(|(_, &g)| g == max || max - g < slack)
        .map(|(&f, _)| f)
        .collect())
}

/// Candidate indices `[best − w, best + w]` clipped to `0..count`.
pub fn build_neighborhood(best: u32, width: usize, count: usize) -> Vec<u32> {
    if count == 0 {
        return Vec::new();
    }
    let lo = (best as usize).saturating_sub(width);
    let hi = (best as usize).saturating_add(width).min(count - 1);
    (lo as u32..=hi as u32).collect()
}

/// Deterministic stream for random choices at one node, replayable during unlearning.
pub fn node_rng(seed: u64, tree: usize, node: NodeId, salt: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((tree as u64).to_le_bytes());
    h.update(node.to_le_bytes());
    h.update(salt.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

pub fn choose_uniform<T: Copy>(items: &[T], rng: &mut ChaCha8Rng) -> Option<T> {
    match items.len() {
        0 => None,
        1 => Some(items[0]),
        n => Some(items[rng.gen_range(0..n)]),
    }
}

/// Per-feature best candidates of a node.
pub(crate) fn feature_bests(
    stats: &BTreeMap<FeatureId, SplitStats>,
    codec: &FixedPointCodec,
    lambda: f64,
    gamma: f64,
) -> BTreeMap<FeatureId, FeatureBest> {
    stats
        .iter()
        .filter_map(|(&f, s)| best_candidate(&s.candidate_gains(codec, lambda, gamma)).map(|b| (f, b)))
        .collect()
}
