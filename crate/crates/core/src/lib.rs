//! Vertical federated gradient boosting with instance and feature unlearning.

pub mod boost;
pub mod bucketing;
pub mod classifier;
pub mod config;
pub mod crypto;
pub mod data;
pub mod datasets;
pub mod error;
pub mod experiment;
pub mod federation;
pub mod io;
pub mod metrics;
pub mod unlearning;

pub use config::{Epsilon, TrainConfig};
pub use error::{Error, Result};
pub use federation::Federation;
pub use classifier::{Classifier, ScoreKind};
pub use unlearning::{UnlearnReport, UnlearnRequest};
