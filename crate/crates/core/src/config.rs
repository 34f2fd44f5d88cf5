use serde::{Deserialize, Serialize};

use crate::crypto::{HeMode, DEFAULT_KEY_BITS};
use crate::error::{Error, Result};

/// Slack that admits a feature into the robust set: `G_max - G_f < slack`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", try_from = "EpsilonRepr")]
pub enum Epsilon {
    /// Fraction of |G_max| at the node.
    Relative(f64),
    Absolute(f64),
}

impl Epsilon {
    pub fn slack(&self, max_gain: f64) -> f64 {
        match *self {
            Epsilon::Relative(r) => r * max_gain.abs(),
            Epsilon::Absolute(a) => a,
        }
    }

    fn value(&self) -> f64 {
        match *self {
            Epsilon::Relative(v) | Epsilon::Absolute(v) => v,
        }
    }
}

/// `0.05` or `rel:0.05` for a relative slack, `abs:0.1` for an absolute one.
impl std::str::FromStr for Epsilon {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (kind, v) = s.split_once(':').unwrap_or(("rel", s));
        let v: f64 = v.trim().parse().map_err(|_| Error::param("epsilon", format!("not a number: {s:?}")))?;
        match kind.trim() {
            "rel" | "relative" => Ok(Epsilon::Relative(v)),
            "abs" | "absolute" => Ok(Epsilon::Absolute(v)),
            other => Err(Error::param("epsilon", format!("unknown kind {other:?}"))),
        }
    }
}

/// Config files may write a bare number, the command-line string form, or a table.
#[derive(Deserialize)]
#[serde(untagged)]
enum EpsilonRepr {
    Number(f64),
    Text(String),
    Table(EpsilonTable),
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum EpsilonTable {
    Relative(f64),
    Absolute(f64),
}

impl TryFrom<EpsilonRepr> for Epsilon {
    type Error = Error;
    fn try_from(r: EpsilonRepr) -> Result<Self> {
        match r {
            EpsilonRepr::Number(v) => Ok(Epsilon::Relative(v)),
            EpsilonRepr::Text(s) => s.parse(),
            EpsilonRepr::Table(EpsilonTable::Relative(v)) => Ok(Epsilon::Relative(v)),
            EpsilonRepr::Table(EpsilonTable::Absolute(v)) => Ok(Epsilon::Absolute(v)),
        }
    }
}

impl Default for Epsilon {
    fn default() -> Self {
        Epsilon::Relative(0.05)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Maximum number of trees (N).
    pub trees: usize,
    /// Maximum tree depth in split levels (H_t).
    pub max_depth: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub learning_rate: f64,
    pub epsilon: Epsilon,
    /// Half-width of the splitting neighborhood, in candidate indices.
    pub neighborhood_width: usize,
    /// Maximum bucket size b; `None` picks about 256 buckets per feature.
    pub bucket_size: Option<usize>,
    pub seed: u64,
    pub he_mode: HeMode,
    pub he_bits: usize,
    pub use_bucket_tree: bool,
    pub use_robust_features: bool,
    pub use_neighborhood: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            trees: 100,
            max_depth: 4,
            lambda: 1.0,
            gamma: 0.0,
            learning_rate: 0.1,
            epsilon: Epsilon::default(),
            neighborhood_width: 2,
            bucket_size: None,
            seed: 0,
            he_mode: HeMode::Plaintext,
            he_bits: DEFAULT_KEY_BITS,
            use_bucket_tree: true,
            use_robust_features: true,
            use_neighborhood: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, detail: &str| Err(Error::param(name, detail));
        if self.trees < 1 {
            return bad("trees", "must be at least 1");
        }
        if self.max_depth < 1 {
            return bad("max_depth", "must be at least 1");
        }
        if !(self.lambda >= 0.0) || !(self.gamma >= 0.0) {
            return bad("lambda/gamma", "must be non-negative");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", "must be positive");
        }
        if !(self.epsilon.value() >= 0.0) {
            return bad("epsilon", "must be non-negative");
        }
        if self.bucket_size == Some(0) {
            return bad("bucket_size", "must be at least 1");
        }
        Ok(())
    }

    /// Plain greedy federated boosting: argmax feature, single best candidate, uniform histograms.
    pub fn without_ablation_components(mut self) -> Self {
        self.use_bucket_tree = false;
        self.use_robust_features = false;
        self.use_neighborhood = false;
        self
    }

    pub(crate) fn effective_width(&self) -> usize {
        if self.use_neighborhood {
            self.neighborhood_width
        } else {
            0
        }
    }
}
