//! Reproducible experiment runs: one TOML document per run, a fixed artifact
//! layout under the output directory, and the commands the CLI exposes.
//!
//! ```text
//! <output>/shards/                  party CSVs + manifest (partition)
//! <output>/original/                trained classifier (train)
//! <output>/unlearned-<kind>/        model after unlearning (unlearn)
//! <output>/retrained-<kind>/        retrain baseline (retrain)
//! <output>/reports/*.json           per-command reports
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{Classifier, ScoreKind};
use crate::config::{Epsilon, TrainConfig};
use crate::crypto::HeMode;
use crate::data::{vertical_partition, AlignedDataset, PartitionSpec, ShardManifest};
use crate::datasets::{prepare, DatasetSpec};
use crate::error::{Error, Result};
use crate::io::{read_json, write_atomic, write_json};
use crate::metrics::{forgetfulness_report, ForgetfulnessReport};
use crate::unlearning::{UnlearnOptions, UnlearnReport, UnlearnRequest, UnlearnTarget};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub partition: PartitionConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub unlearn: UnlearnConfig,
    #[serde(default)]
    pub score: ScoreKind,
    /// Record protocol transcripts of training next to each member.
    #[serde(default)]
    pub transcript: bool,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("runs/default")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    /// Parties sharing the columns; party 0 is the active party.
    pub parties: usize,
    pub test_fraction: f64,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        PartitionConfig {
            parties: 2,
            test_fraction: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnlearnConfig {
    pub instance_fraction: f64,
    pub feature_fraction: f64,
    /// Seed for picking what to delete; the training seed when absent.
    pub seed: Option<u64>,
    pub extra_rounds: Option<usize>,
    pub fallback_retrain: bool,
}

impl Default for UnlearnConfig {
    fn default() -> Self {
        UnlearnConfig {
            instance_fraction: 0.05,
            feature_fraction: 0.1,
            seed: None,
            extra_rounds: None,
            fallback_retrain: true,
        }
    }
}

/// Command-line values that replace config keys when present.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub he_mode: Option<HeMode>,
    pub he_bits: Option<usize>,
    pub epsilon: Option<Epsilon>,
    pub neighborhood_width: Option<usize>,
    pub trees: Option<usize>,
    pub depth: Option<usize>,
    pub bucket_size: Option<usize>,
    pub extra_rounds: Option<usize>,
    pub no_bucket_tree: bool,
    pub no_robust_features: bool,
    pub no_neighborhood: bool,
    pub transcript: bool,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(dataset: DatasetSpec, output: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            dataset,
            partition: PartitionConfig::default(),
            train: TrainConfig::default(),
            unlearn: UnlearnConfig::default(),
            score: ScoreKind::default(),
            transcript: false,
            output: output.into(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        // serde does not reject extra keys next to a unit preset, so compare by hand.
        let raw: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(toml::Value::Table(given)) = raw.get("dataset") {
            let known = toml::Table::try_from(&config.dataset).map_err(|e| Error::Config(e.to_string()))?;
            if let Some(extra) = given.keys().find(|k| !known.contains_key(*k)) {
                return Err(Error::Config(format!("unknown key `{extra}` in [dataset]")));
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.partition.parties < 1 {
            return Err(Error::Config("partition.parties must be at least 1".into()));
        }
        if !(self.partition.test_fraction > 0.0 && self.partition.test_fraction < 1.0) {
            return Err(Error::InvalidFraction(self.partition.test_fraction));
        }
        for f in [self.unlearn.instance_fraction, self.unlearn.feature_fraction] {
            if !(0.0..1.0).contains(&f) {
                return Err(Error::Config(format!("unlearn fractions must lie in [0, 1), got {f}")));
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, o: &Overrides) {
        let t = &mut self.train;
        if let Some(v) = o.seed {
            t.seed = v;
        }
        if let Some(v) = o.he_mode {
            t.he_mode = v;
        }
        if let Some(v) = o.he_bits {
            t.he_bits = v;
        }
        if let Some(v) = o.epsilon {
            t.epsilon = v;
        }
        if let Some(v) = o.neighborhood_width {
            t.neighborhood_width = v;
        }
        if let Some(v) = o.trees {
            t.trees = v;
        }
        if let Some(v) = o.depth {
            t.max_depth = v;
        }
        if let Some(v) = o.bucket_size {
            t.bucket_size = Some(v);
        }
        t.use_bucket_tree &= !o.no_bucket_tree;
        t.use_robust_features &= !o.no_robust_features;
        t.use_neighborhood &= !o.no_neighborhood;
        if o.extra_rounds.is_some() {
            self.unlearn.extra_rounds = o.extra_rounds;
        }
        self.transcript |= o.transcript;
        if let Some(p) = &o.output {
            self.output = p.clone();
        }
    }

    /// Aligned train and test sets; deterministic in the config.
    pub fn datasets(&self) -> Result<(AlignedDataset, AlignedDataset)> {
        let table = self.dataset.load(self.train.seed)?;
        prepare(&table, self.partition.parties, self.partition.test_fraction, self.train.seed)
    }

    /// The deletion request of `kind` this config describes, over `train`.
    pub fn request(&self, kind: UnlearnKind, train: &AlignedDataset) -> Result<UnlearnRequest> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.unlearn.seed.unwrap_or(self.train.seed));
        let options = UnlearnOptions {
            extra_rounds: self.unlearn.extra_rounds,
            fallback_retrain: self.unlearn.fallback_retrain,
        };
        let request = match kind {
            UnlearnKind::Instances => {
                let k = (train.len() as f64 * self.unlearn.instance_fraction).round() as usize;
                let mut ids = train.ids.clone();
                ids.shuffle(&mut rng);
                UnlearnRequest::instances(ids.into_iter().take(k))
            }
            UnlearnKind::Features => {
                let mut features = train.features();
                let k = (features.len() as f64 * self.unlearn.feature_fraction).round() as usize;
                let k = if self.unlearn.feature_fraction > 0.0 { k.max(1) } else { 0 };
                if k >= features.len() {
                    return Err(Error::AllFeaturesDeleted);
                }
                features.shuffle(&mut rng);
                UnlearnRequest::features(features.into_iter().take(k))
            }
        };
        Ok(request.with_options(options))
    }

    pub fn original_dir(&self) -> PathBuf {
        self.output.join("original")
    }

    pub fn unlearned_dir(&self, kind: UnlearnKind) -> PathBuf {
        self.output.join(format!("unlearned-{kind}"))
    }

    pub fn retrained_dir(&self, kind: UnlearnKind) -> PathBuf {
        self.output.join(format!("retrained-{kind}"))
    }

    pub fn report_path(&self, name: &str) -> PathBuf {
        self.output.join("reports").join(format!("{name}.json"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnlearnKind {
    Instances,
    Features,
}

impl UnlearnKind {
    pub const ALL: [UnlearnKind; 2] = [UnlearnKind::Instances, UnlearnKind::Features];
}

impl fmt::Display for UnlearnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UnlearnKind::Instances => "instances",
            UnlearnKind::Features => "features",
        })
    }
}

impl FromStr for UnlearnKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "instances" | "instance" => Ok(UnlearnKind::Instances),
            "features" | "feature" => Ok(UnlearnKind::Features),
            other => Err(Error::Config(format!("unknown unlearning kind {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub dataset: String,
    pub train_rows: usize,
    pub test_rows: usize,
    pub features: usize,
    pub classes: usize,
    pub trees: Vec<usize>,
    pub accuracy: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnlearnRun {
    pub request: UnlearnRequest,
    pub report: UnlearnReport,
    pub nodes_changed: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrainReport {
    pub kind: UnlearnKind,
    pub train_rows: usize,
    pub features: usize,
    pub accuracy: f64,
    pub seconds: f64,
}

/// Writes party shard files and their manifest under `<output>/shards`.
pub fn cmd_partition(config: &ExperimentConfig) -> Result<ShardManifest> {
    config.validate()?;
    let table = config.dataset.load(config.train.seed)?;
    let spec = PartitionSpec::contiguous(&table, config.partition.parties)?;
    let shards = vertical_partition(&table, &spec)?;
    crate::data::write_shards(config.output.join("shards"), &shards, &spec)
}

pub fn cmd_train(config: &ExperimentConfig) -> Result<TrainReport> {
    config.validate()?;
    let (train, test) = config.datasets()?;
    let start = Instant::now();
    let model = Classifier::train_with(config.train.clone(), &train, config.transcript)?;
    let seconds = start.elapsed().as_secs_f64();
    model.save(config.original_dir())?;
    if config.transcript {
        for (k, m) in model.members.iter().enumerate() {
            m.transcript()
                .write_jsonl(config.original_dir().join(format!("member-{k}")).join("transcript.jsonl"))?;
        }
    }
    write_atomic(config.output.join("config.toml"), config.to_toml()?.as_bytes())?;
    let report = TrainReport {
        dataset: config.dataset.name(),
        train_rows: train.len(),
        test_rows: test.len(),
        features: train.features().len(),
        classes: model.classes.len(),
        trees: model.members.iter().map(|m| m.model().trees.len()).collect(),
        accuracy: model.accuracy(&test)?,
        seconds,
    };
    write_json(config.report_path("train"), &report)?;
    Ok(report)
}

/// Loads the trained model, applies the request (the config's when `request`
/// is `None`) and saves the result beside it.
pub fn cmd_unlearn(config: &ExperimentConfig, kind: UnlearnKind, request: Option<UnlearnRequest>) -> Result<UnlearnRun> {
    config.validate()?;
    let (train, test) = config.datasets()?;
    let request = match request {
        Some(r) => r,
        None => config.request(kind, &train)?,
    };
    let mut model = Classifier::load(config.original_dir())?;
    let report = model.unlearn(&request)?;
    model.save(config.unlearned_dir(kind))?;
    let run = UnlearnRun {
        nodes_changed: report.nodes_changed(),
        accuracy: model.accuracy(&test)?,
        request,
        report,
    };
    write_json(config.report_path(&format!("unlearn-{kind}")), &run)?;
    Ok(run)
}

/// Trains the reference model on the data left after the request.
pub fn cmd_retrain(config: &ExperimentConfig, kind: UnlearnKind, request: Option<UnlearnRequest>) -> Result<RetrainReport> {
    config.validate()?;
    let (train, test) = config.datasets()?;
    let request = match request {
        Some(r) => r,
        None => config.request(kind, &train)?,
    };
    let start = Instant::now();
    let model = Classifier::retrain_baseline(config.train.clone(), &train, &request)?;
    let seconds = start.elapsed().as_secs_f64();
    model.save(config.retrained_dir(kind))?;
    let report = RetrainReport {
        kind,
        train_rows: train.len()
            - match &request.target {
                UnlearnTarget::Instances(ids) => ids.len(),
                UnlearnTarget::Features(_) => 0,
            },
        features: model.features().len(),
        accuracy: model.accuracy(&test)?,
        seconds,
    };
    write_json(config.report_path(&format!("retrain-{kind}")), &report)?;
    Ok(report)
}

/// Test accuracy of the model saved in `model_dir`.
pub fn cmd_evaluate(config: &ExperimentConfig, model_dir: &Path) -> Result<f64> {
    let (_, test) = config.datasets()?;
    Classifier::load(model_dir)?.accuracy(&test)
}

/// Compares the saved original, unlearned and retrained models of `kind`.
pub fn cmd_compare(config: &ExperimentConfig, kind: UnlearnKind) -> Result<ForgetfulnessReport> {
    let (_, test) = config.datasets()?;
    let original = Classifier::load(config.original_dir())?;
    let unlearned = Classifier::load(config.unlearned_dir(kind))?;
    let retrained = Classifier::load(config.retrained_dir(kind))?;
    let mut report = forgetfulness_report(&original, &unlearned, &retrained, &test, config.score)?;
    report.dataset = config.dataset.name();
    report.kind = kind.to_string();
    report.train_seconds = read_json::<TrainReport>(config.report_path("train")).ok().map(|r| r.seconds);
    report.unlearn_seconds = read_json::<UnlearnRun>(config.report_path(&format!("unlearn-{kind}")))
        .ok()
        .map(|r| r.report.seconds);
    report.retrain_seconds = read_json::<RetrainReport>(config.report_path(&format!("retrain-{kind}")))
        .ok()
        .map(|r| r.seconds);
    write_json(config.report_path(&format!("compare-{kind}")), &report)?;
    Ok(report)
}

/// Train once, then unlearn, retrain and compare for each kind. The rows are
/// exactly what [`cmd_compare`] reports on the saved artifacts.
pub fn cmd_bench(config: &ExperimentConfig, kinds: &[UnlearnKind]) -> Result<Vec<ForgetfulnessReport>> {
    cmd_train(config)?;
    let mut rows = Vec::new();
    for &kind in kinds {
        cmd_unlearn(config, kind, None)?;
        cmd_retrain(config, kind, None)?;
        rows.push(cmd_compare(config, kind)?);
    }
    write_json(config.report_path("bench"), &rows)?;
    let mut table = ForgetfulnessReport::header();
    for r in &rows {
        table.push('\n');
        table.push_str(&r.to_string());
    }
    table.push('\n');
    write_atomic(config.output.join("reports").join("bench.txt"), table.as_bytes())?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        let mut c = ExperimentConfig::new(DatasetSpec::Synthetic { rows: 300, features: 6 }, "unused");
        c.train.trees = 5;
        c
    }

    #[test]
    fn toml_roundtrip_and_defaults() {
        let c = ExperimentConfig::from_toml("output = \"x\"\n[dataset]\npreset = \"optdigits\"\n").unwrap();
        assert_eq!(c.dataset, DatasetSpec::Optdigits);
        assert_eq!(c.unlearn.instance_fraction, 0.05);
        assert_eq!(c.unlearn.feature_fraction, 0.1);
        assert_eq!(c.train.trees, 100);
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
    }

    #[test]
    fn invalid_configs_fail_before_any_work() {
        assert!(ExperimentConfig::from_toml("[dataset]\npreset = \"optdigits\"\n[train]\ntrees = 0\n").is_err());
        assert!(ExperimentConfig::from_toml("[dataset]\npreset = \"nope\"\n").is_err());
        assert!(ExperimentConfig::from_toml("[dataset]\npreset = \"optdigits\"\n[partition]\ntest_fraction = 1.0\n").is_err());
        assert!(ExperimentConfig::from_toml("[dataset]\npreset = \"optdigits\"\nbogus = 1\n").is_err());
    }

    #[test]
    fn overrides_replace_config_keys() {
        let mut c = small();
        c.apply(&Overrides {
            seed: Some(9),
            trees: Some(3),
            depth: Some(2),
            epsilon: Some(Epsilon::Absolute(0.5)),
            extra_rounds: Some(4),
            no_neighborhood: true,
            ..Overrides::default()
        });
        assert_eq!((c.train.seed, c.train.trees, c.train.max_depth), (9, 3, 2));
        assert_eq!(c.train.epsilon, Epsilon::Absolute(0.5));
        assert_eq!(c.unlearn.extra_rounds, Some(4));
        assert!(!c.train.use_neighborhood && c.train.use_bucket_tree);
    }

    #[test]
    fn requests_follow_the_configured_fractions() {
        let c = small();
        let (train, _) = c.datasets().unwrap();
        let r = c.request(UnlearnKind::Instances, &train).unwrap();
        match &r.target {
            UnlearnTarget::Instances(ids) => {
                assert_eq!(ids.len(), (train.len() as f64 * 0.05).round() as usize)
            }
            _ => panic!("wrong kind"),
        }
        match c.request(UnlearnKind::Features, &train).unwrap().target {
            UnlearnTarget::Features(f) => assert_eq!(f.len(), 1),
            _ => panic!("wrong kind"),
        }
        assert_eq!(c.request(UnlearnKind::Instances, &train).unwrap(), r);
    }
}
