//! Dataset presets: the bundled handwritten-digits table, a loader for the
//! Give-Me-Some-Credit CSV, and seeded synthetic generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::data::{align, read_table, train_test_split, vertical_partition, AlignedDataset, PartitionSpec, RawRow, RawTable};
use crate::error::{Error, Result};

const OPTDIGITS_CSV: &str = include_str!("../data/optdigits.csv");

/// Column names of the credit-scoring features, in file order.
pub const CREDIT_FEATURES: [&str; 10] = [
    "RevolvingUtilizationOfUnsecuredLines",
    "age",
    "NumberOfTime30-59DaysPastDueNotWorse",
    "DebtRatio",
    "MonthlyIncome",
    "NumberOfOpenCreditLinesAndLoans",
    "NumberOfTimes90DaysLate",
    "NumberRealEstateLoansOrLines",
    "NumberOfTime60-89DaysPastDueNotWorse",
    "NumberOfDependents",
];

pub const CREDIT_LABEL: &str = "SeriousDlqin2yrs";

/// 8×8 handwritten digits (1797 records, 64 pixel features, labels 0–9).
pub fn optdigits() -> Result<RawTable> {
    read_table(OPTDIGITS_CSV.as_bytes(), "id", Some("digit"))
}

/// The Kaggle `cs-training.csv` file: unnamed id column, `NA` cells become NULL.
pub fn credit_csv(path: impl AsRef<std::path::Path>) -> Result<RawTable> {
    crate::data::load_table(path, "", Some(CREDIT_LABEL))
}

/// Credit-scoring stand-in with the same ten columns and a ~7% positive rate.
/// Delinquency counts share a latent factor and drive the label together with
/// utilization, age and income, so the task resembles the real one in shape.
pub fn synthetic_credit(n: usize, seed: u64) -> Result<RawTable> {
    if n == 0 {
        return Err(Error::EmptyInput("synthetic credit needs at least one row"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let income = LogNormal::new(8.5, 0.6).expect("valid lognormal");
    let debt = LogNormal::new(-1.2, 0.9).expect("valid lognormal");
    let lines = Poisson::new(8.0).expect("valid poisson");
    let estate = Poisson::new(1.0).expect("valid poisson");
    let dependents = Poisson::new(0.8).expect("valid poisson");
    let mut columns = vec!["id".to_string()];
    columns.extend(CREDIT_FEATURES.iter().map(|s| s.to_string()));
    columns.push(CREDIT_LABEL.into());
    let rows = (0..n)
        .map(|i| {
            let trouble: f64 = std_normal.sample(&mut rng);
            let util = (0.3 + 0.25 * trouble + 0.25 * std_normal.sample(&mut rng)).clamp(0.0, 1.6);
            let age = (52.0 - 4.0 * trouble + 14.0 * std_normal.sample(&mut rng)).clamp(21.0, 100.0).round();
            let mut count = |scale: f64| -> f64 {
                let rate = (scale * (1.4 * trouble - 1.0)).exp();
                Poisson::new(rate).map_or(0.0, |p| p.sample(&mut rng))
            };
            let late30 = count(1.0);
            let late60 = count(0.8);
            let late90 = count(0.9);
            let inc: f64 = income.sample(&mut rng);
            let inc = inc.round();
            let z = -3.6 + 2.4 * util + 0.55 * late30 + 0.8 * late60 + 1.0 * late90 - 0.015 * (age - 52.0)
                - 0.25 * (inc / 5000.0).ln()
                + 0.6 * std_normal.sample(&mut rng);
            let y = f64::from(u8::from(rng.gen::<f64>() < crate::boost::sigmoid(z)));
            let cells = vec![
                None,
                Some((util * 1e4).round() / 1e4),
                Some(age),
                Some(late30),
                Some((Distribution::<f64>::sample(&debt, &mut rng) * 1e4).round() / 1e4),
                Some(inc),
                Some(lines.sample(&mut rng)),
                Some(late90),
                Some(estate.sample(&mut rng)),
                Some(late60),
                Some(dependents.sample(&mut rng)),
                Some(y),
            ];
            RawRow {
                id: format!("c{i}"),
                cells,
            }
        })
        .collect();
    RawTable::new(columns, 0, Some(11), rows)
}

/// Balanced binary task on `d` Gaussian features: a decaying linear score plus
/// one interaction, with label noise.
pub fn synthetic(n: usize, d: usize, seed: u64) -> Result<RawTable> {
    if n == 0 || d == 0 {
        return Err(Error::EmptyInput("synthetic data needs rows and features"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let weights: Vec<f64> = (0..d).map(|k| 1.0 / (1.0 + k as f64)).collect();
    let mut columns = vec!["id".to_string()];
    columns.extend((0..d).map(|k| format!("x{k}")));
    columns.push("label".into());
    let rows = (0..n)
        .map(|i| {
            let x: Vec<f64> = (0..d).map(|_| (std_normal.sample(&mut rng) * 1e3f64).round() / 1e3).collect();
            let mut score: f64 = x.iter().zip(&weights).map(|(a, w)| a * w).sum();
            if d > 1 {
                score += 0.5 * x[0] * x[1];
            }
            score += 0.3 * std_normal.sample(&mut rng);
            let mut cells = vec![None];
            cells.extend(x.into_iter().map(Some));
            cells.push(Some(f64::from(u8::from(score > 0.0))));
            RawRow {
                id: format!("s{i}"),
                cells,
            }
        })
        .collect();
    RawTable::new(columns, 0, Some(d + 1), rows)
}

/// Desk-scale stand-in for the 400k×2000 Epsilon benchmark: dense Gaussian
/// features with a linear label, capped at 20k×200.
pub fn epsilon_like(n: usize, d: usize, seed: u64) -> Result<RawTable> {
    if n > 20_000 || d > 200 {
        return Err(Error::param("epsilon_like", "subsample is capped at 20000 rows and 200 features"));
    }
    synthetic(n, d, seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "preset")]
pub enum DatasetSpec {
    Optdigits,
    /// The real credit file.
    Credit { path: String },
    SyntheticCredit { rows: usize },
    Synthetic { rows: usize, features: usize },
    EpsilonLike { rows: usize, features: usize },
    /// Any CSV with a header row.
    Csv {
        path: String,
        id_column: String,
        label_column: String,
    },
}

impl DatasetSpec {
    pub fn name(&self) -> String {
        match self {
            DatasetSpec::Optdigits => "optdigits".into(),
            DatasetSpec::Credit { .. } => "credit".into(),
            DatasetSpec::SyntheticCredit { rows } => format!("synth-credit-{rows}"),
            DatasetSpec::Synthetic { rows, features } => format!("synthetic-{rows}x{features}"),
            DatasetSpec::EpsilonLike { rows, features } => format!("epsilon-{rows}x{features}"),
            DatasetSpec::Csv { path, .. } => std::path::Path::new(path)
                .file_stem()
                .map_or_else(|| path.clone(), |s| s.to_string_lossy().into_owned()),
        }
    }

    pub fn load(&self, seed: u64) -> Result<RawTable> {
        match self {
            DatasetSpec::Optdigits => optdigits(),
            DatasetSpec::Credit { path } => credit_csv(path),
            DatasetSpec::SyntheticCredit { rows } => synthetic_credit(*rows, seed),
            DatasetSpec::Synthetic { rows, features } => synthetic(*rows, *features, seed),
            DatasetSpec::EpsilonLike { rows, features } => epsilon_like(*rows, *features, seed),
            DatasetSpec::Csv {
                path,
                id_column,
                label_column,
            } => crate::data::load_table(path, id_column, Some(label_column)),
        }
    }
}

/// Contiguous vertical partition over `parties` parties, alignment, then a seeded train/test split.
pub fn prepare(table: &RawTable, parties: usize, test_fraction: f64, seed: u64) -> Result<(AlignedDataset, AlignedDataset)> {
    let spec = PartitionSpec::contiguous(table, parties)?;
    let shards = vertical_partition(table, &spec)?;
    let aligned = align(&shards)?;
    train_test_split(&aligned, test_fraction, seed)
}
