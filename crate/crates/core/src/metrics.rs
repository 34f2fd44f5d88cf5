//! Utility and forgetfulness metrics.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::classifier::{Classifier, ScoreKind};
use crate::data::AlignedDataset;
use crate::error::{Error, Result};

/// Wasserstein values are reported multiplied by this factor.
pub const WASS_DISPLAY_SCALE: f64 = 1e3;

/// Fraction of predictions equal to the label.
pub fn accuracy(predicted: &[f64], labels: &[f64]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::EmptyInput("accuracy needs a non-empty test set"));
    }
    if predicted.len() != labels.len() {
        return Err(Error::param("predicted", "length differs from labels"));
    }
    let hits = predicted.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// First Wasserstein distance between two empirical distributions on the line.
///
/// Equal sizes reduce to the mean absolute difference of the sorted samples;
/// otherwise the inverse CDFs are integrated over the merged quantile grid.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("wasserstein distance needs non-empty samples"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::param("sample", "values must be finite"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    if a.len() == b.len() {
        let sum: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
        return Ok(sum / a.len() as f64);
    }
    let (n, m) = (a.len(), b.len());
    // Walk the grid {i/n} ∪ {j/m} in exact integer units of 1/(n·m).
    let (mut i, mut j) = (0, 0);
    let mut pos = 0u128;
    let mut total = 0.0;
    let unit = (n as u128) * (m as u128);
    while pos < unit {
        let next_a = (i as u128 + 1) * m as u128;
        let next_b = (j as u128 + 1) * n as u128;
        let next = next_a.min(next_b);
        total += (next - pos) as f64 * (a[i] - b[j]).abs();
        pos = next;
        if next == next_a {
            i += 1;
        }
        if next == next_b {
            j += 1;
        }
    }
    Ok(total / unit as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForgetfulnessReport {
    pub dataset: String,
    pub kind: String,
    pub acc_original: f64,
    pub acc_unlearned: f64,
    pub acc_retrained: f64,
    /// W1(M_d, M_r), unscaled.
    pub wass_unlearned: f64,
    /// W1(M, M_r), unscaled.
    pub wass_original: f64,
    pub score: ScoreKind,
    pub train_seconds: Option<f64>,
    pub unlearn_seconds: Option<f64>,
    pub retrain_seconds: Option<f64>,
}

impl ForgetfulnessReport {
    /// Unlearning wall-clock over retraining wall-clock, when both were timed.
    pub fn speedup_ratio(&self) -> Option<f64> {
        Some(self.unlearn_seconds? / self.retrain_seconds?)
    }

    pub fn header() -> String {
        format!(
            "{:<16} {:<10} {:>8} {:>8} {:>8} {:>11} {:>11} {:>9} {:>9} {:>9} {:>9}\n(Wass columns are W1 x {}; unl/ret is unlearn over retrain time)",
            "dataset",
            "kind",
            "Acc(M)",
            "Acc(Md)",
            "Acc(Mr)",
            "Wass(Md,Mr)",
            "Wass(M,Mr)",
            "train_s",
            "unlearn_s",
            "retrain_s",
            "unl/ret",
            WASS_DISPLAY_SCALE
        )
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

impl fmt::Display for ForgetfulnessReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let secs = |s: Option<f64>| s.map_or("-".to_string(), |s| format!("{s:.2}"));
        write!(
            f,
            "{:<16} {:<10} {:>8.4} {:>8.4} {:>8.4} {:>11.3} {:>11.3} {:>9} {:>9} {:>9} {:>9}",
            self.dataset,
            self.kind,
            self.acc_original,
            self.acc_unlearned,
            self.acc_retrained,
            self.wass_unlearned * WASS_DISPLAY_SCALE,
            self.wass_original * WASS_DISPLAY_SCALE,
            secs(self.train_seconds),
            secs(self.unlearn_seconds),
            secs(self.retrain_seconds),
            self.speedup_ratio().map_or("-".to_string(), |r| format!("{r:.3}"))
        )
    }
}

/// Accuracy of the three models and W1 of their score distributions against M_r.
pub fn forgetfulness_report(
    original: &Classifier,
    unlearned: &Classifier,
    retrained: &Classifier,
    test: &AlignedDataset,
    score: ScoreKind,
) -> Result<ForgetfulnessReport> {
    if unlearned.features() != retrained.features() {
        return Err(Error::FeatureSetMismatch);
    }
    let retrained_scores = retrained.scores(test, score)?;
    Ok(ForgetfulnessReport {
        dataset: String::new(),
        kind: String::new(),
        acc_original: original.accuracy(test)?,
        acc_unlearned: unlearned.accuracy(test)?,
        acc_retrained: retrained.accuracy(test)?,
        wass_unlearned: wasserstein1(&unlearned.scores(test, score)?, &retrained_scores)?,
        wass_original: wasserstein1(&original.scores(test, score)?, &retrained_scores)?,
        score,
        train_seconds: None,
        unlearn_seconds: None,
        retrain_seconds: None,
    })
}
