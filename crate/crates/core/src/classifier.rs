//! Binary and one-vs-rest classifiers over federated ensembles.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::boost::sigmoid;
use crate::config::TrainConfig;
use crate::data::{AlignedDataset, FeatureId};
use crate::error::{Error, Result};
use crate::federation::Federation;
use crate::metrics::accuracy;
use crate::unlearning::{self, UnlearnReport, UnlearnRequest};

/// What a model emits for distribution comparisons.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    #[default]
    Probability,
    Margin,
}

/// One ensemble for binary labels, or one per class (label `c` vs the rest).
#[derive(Clone)]
pub struct Classifier {
    pub classes: Vec<f64>,
    pub members: Vec<Federation>,
}

#[derive(Serialize, Deserialize)]
struct ClassifierManifest {
    classes: Vec<f64>,
    members: usize,
}

impl Classifier {
    pub fn train(config: TrainConfig, data: &AlignedDataset) -> Result<Self> {
        Self::train_with(config, data, false)
    }

    /// Like [`Classifier::train`], optionally recording every member's protocol transcript.
    pub fn train_with(config: TrainConfig, data: &AlignedDataset, record: bool) -> Result<Self> {
        let member = |config: TrainConfig, data: &AlignedDataset| -> Result<Federation> {
            let mut fed = Federation::setup(config, data)?;
            fed.transcript_mut().set_recording(record);
            fed.fit()?;
            Ok(fed)
        };
        let labels = data.labels().ok_or_else(|| Error::MissingColumn("label".into()))?;
        let mut classes: Vec<f64> = labels.to_vec();
        classes.sort_by(f64::total_cmp);
        classes.dedup();
        if classes.len() < 2 {
            return Err(Error::DegenerateDataset(format!("only one class ({})", classes[0])));
        }
        let members = if classes.len() == 2 {
            let positive = classes[1];
            let binary = data.with_labels(labels.iter().map(|&y| f64::from(u8::from(y == positive))).collect());
            vec![member(config, &binary)?]
        } else {
            classes
                .iter()
                .map(|&c| {
                    let binary = data.with_labels(labels.iter().map(|&y| f64::from(u8::from(y == c))).collect());
                    member(config.clone(), &binary)
                })
                .collect::<Result<_>>()?
        };
        Ok(Classifier { classes, members })
    }

    pub fn is_binary(&self) -> bool {
        self.classes.len() == 2
    }

    /// Margins per member, `out[k][row]`.
    pub fn margins(&self, data: &AlignedDataset) -> Result<Vec<Vec<f64>>> {
        self.members.iter().map(|m| m.predict_margins(data)).collect()
    }

    /// Predicted class labels: p ≥ 0.5 for binary models, argmax margin otherwise.
    pub fn predict(&self, data: &AlignedDataset) -> Result<Vec<f64>> {
        let margins = self.margins(data)?;
        Ok((0..data.len())
            .map(|row| {
                if self.is_binary() {
                    self.classes[usize::from(sigmoid(margins[0][row]) >= 0.5)]
                } else {
                    let best = (0..self.members.len())
                        .max_by(|&a, &b| margins[a][row].total_cmp(&margins[b][row]).then(b.cmp(&a)))
                        .expect("at least two members");
                    self.classes[best]
                }
            })
            .collect())
    }

    pub fn accuracy(&self, data: &AlignedDataset) -> Result<f64> {
        let labels = data.labels().ok_or_else(|| Error::MissingColumn("label".into()))?;
        accuracy(&self.predict(data)?, labels)
    }

    /// Output scores over `data`; one-vs-rest models pool every member's scores.
    pub fn scores(&self, data: &AlignedDataset, kind: ScoreKind) -> Result<Vec<f64>> {
        let margins = self.margins(data)?;
        Ok(margins
            .into_iter()
            .flatten()
            .map(|m| match kind {
                ScoreKind::Probability => sigmoid(m),
                ScoreKind::Margin => m,
            })
            .collect())
    }

    /// Features the model may use.
    pub fn features(&self) -> BTreeSet<FeatureId> {
        self.members[0].features()
    }

    pub fn unlearn(&mut self, request: &UnlearnRequest) -> Result<UnlearnReport> {
        let reports = self
            .members
            .iter_mut()
            .map(|m| unlearning::unlearn(m, request))
            .collect::<Result<Vec<_>>>()?;
        Ok(UnlearnReport::merge(reports))
    }

    pub fn retrain_baseline(config: TrainConfig, data: &AlignedDataset, request: &UnlearnRequest) -> Result<Self> {
        let reduced = unlearning::reduced_dataset(data, request)?;
        Self::train(config, &reduced)
    }

    /// Concatenated member model documents, for byte comparisons.
    pub fn model_json(&self) -> Result<String> {
        self.members.iter().map(|m| m.model().to_json()).collect()
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        crate::io::write_json(
            dir.join("classifier.json"),
            &ClassifierManifest {
                classes: self.classes.clone(),
                members: self.members.len(),
            },
        )?;
        for (k, m) in self.members.iter().enumerate() {
            m.save(dir.join(format!("member-{k}")))?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest: ClassifierManifest = crate::io::read_json(dir.join("classifier.json"))?;
        let members = (0..manifest.members)
            .map(|k| Federation::load(dir.join(format!("member-{k}"))))
            .collect::<Result<_>>()?;
        Ok(Classifier {
            classes: manifest.classes,
            members,
        })
    }
}
