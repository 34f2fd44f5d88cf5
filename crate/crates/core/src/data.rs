//! Tabular ingestion, vertical partitioning and record alignment.
//!
//! A [`RawTable`] is split column-wise into one [`PartyShard`] per party. The
//! active party additionally keeps the label column. [`align`] intersects the
//! record ids of all shards (a salted-hash stand-in for private set
//! intersection), drops rows with missing cells and fixes a party-neutral row
//! order. Row positions in an [`AlignedDataset`] are the shared row indices
//! every party uses during training.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Salt mixed into record ids before hashing for alignment.
pub const ALIGNMENT_SALT: &str = "vfboost-align-v1";

/// Global feature identifier: the column's position among the table's feature columns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureId(pub u32);

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "f{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PartyId(pub usize);

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "party{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Active,
    Passive,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawRow {
    pub id: String,
    /// One cell per header column. `None` marks a NULL (empty or non-numeric) cell.
    pub cells: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawTable {
    pub columns: Vec<String>,
    pub id_column: usize,
    pub label_column: Option<usize>,
    pub rows: Vec<RawRow>,
}

impl RawTable {
    pub fn new(
        columns: Vec<String>,
        id_column: usize,
        label_column: Option<usize>,
        rows: Vec<RawRow>,
    ) -> Result<Self> {
        if id_column >= columns.len() {
            return Err(Error::param("id_column", "index outside the header"));
        }
        if let Some(l) = label_column {
            if l >= columns.len() || l == id_column {
                return Err(Error::param("label_column", "index outside the header or equal to id"));
            }
        }
        let mut seen = HashSet::with_capacity(rows.len());
        for row in &rows {
            if row.cells.len() != columns.len() {
                return Err(Error::Malformed {
                    what: "row",
                    detail: format!(
                        "record {:?} has {} cells, header has {}",
                        row.id,
                        row.cells.len(),
                        columns.len()
                    ),
                });
            }
            if !seen.insert(row.id.as_str()) {
                return Err(Error::DuplicateId(row.id.clone()));
            }
        }
        Ok(RawTable {
            columns,
            id_column,
            label_column,
            rows,
        })
    }

    /// Header indices of the feature columns (everything but id and label), in header order.
    pub fn feature_columns(&self) -> Vec<usize> {
        (0..self.columns.len())
            .filter(|&c| c != self.id_column && Some(c) != self.label_column)
            .collect()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.feature_columns()
            .into_iter()
            .map(|c| self.columns[c].clone())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Reads a comma-separated file with a header row. Cells that do not parse as
/// finite reals become NULL.
pub fn load_table(path: impl AsRef<Path>, id_column: &str, label_column: Option<&str>) -> Result<RawTable> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_table(file, id_column, label_column)
}

/// [`load_table`] over any reader.
pub fn read_table(input: impl std::io::Read, id_column: &str, label_column: Option<&str>) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let columns: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let find = |name: &str| {
        columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let id_idx = find(id_column)?;
    let label_idx = label_column.map(find).transpose()?;

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let id = record.get(id_idx).unwrap_or("").trim().to_string();
        let cells = record.iter().map(parse_cell).collect();
        rows.push(RawRow { id, cells });
    }
    RawTable::new(columns, id_idx, label_idx, rows)
}

fn parse_cell(raw: &str) -> Option<f64> {
    raw.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Which party holds which feature column, and which party is active.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub parties: usize,
    pub active: PartyId,
    /// Feature column name to owning party.
    pub assignment: BTreeMap<String, PartyId>,
}

impl PartitionSpec {
    /// Contiguous blocks of feature columns, party 0 first; the active party is party 0.
    pub fn contiguous(table: &RawTable, parties: usize) -> Result<Self> {
        let names = table.feature_names();
        if parties == 0 || parties > names.len() {
            return Err(Error::param("parties", format!("{parties} parties for {} features", names.len())));
        }
        let assignment = names
            .into_iter()
            .enumerate()
            .map(|(i, name)| {
                let n = table.feature_columns().len();
                (name, PartyId(i * parties / n))
            })
            .collect();
        Ok(PartitionSpec {
            parties,
            active: PartyId(0),
            assignment,
        })
    }

    fn validate(&self) -> Result<()> {
        if self.parties < 1 {
            return Err(Error::InvalidPartition("no parties".into()));
        }
        if self.active.0 >= self.parties {
            return Err(Error::InvalidPartition(format!("active party {} out of range", self.active)));
        }
        if let Some((name, p)) = self.assignment.iter().find(|(_, p)| p.0 >= self.parties) {
            return Err(Error::InvalidPartition(format!("column {name:?} assigned to unknown {p}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PartyShard {
    pub party: PartyId,
    pub role: Role,
    /// Global ids and names of the columns this party holds.
    pub features: Vec<(FeatureId, String)>,
    /// Local feature rows keyed by record id, one cell per entry of `features`.
    pub rows: BTreeMap<String, Vec<Option<f64>>>,
    /// Present only on the active shard.
    pub labels: Option<BTreeMap<String, Option<f64>>>,
}

/// Splits a table column-wise. Shards are returned ordered by party id.
pub fn vertical_partition(table: &RawTable, spec: &PartitionSpec) -> Result<Vec<PartyShard>> {
    spec.validate()?;
    let feature_cols = table.feature_columns();
    let known: BTreeSet<&str> = feature_cols.iter().map(|&c| table.columns[c].as_str()).collect();
    if let Some(name) = spec.assignment.keys().find(|n| !known.contains(n.as_str())) {
        return Err(Error::MissingColumn(name.clone()));
    }

    let mut per_party: Vec<Vec<(FeatureId, usize)>> = vec![Vec::new(); spec.parties];
    for (fid, &col) in feature_cols.iter().enumerate() {
        let name = &table.columns[col];
        let party = spec
            .assignment
            .get(name)
            .ok_or_else(|| Error::UnassignedColumn(name.clone()))?;
        per_party[party.0].push((FeatureId(fid as u32), col));
    }
    if let Some(p) = per_party.iter().position(Vec::is_empty) {
        return Err(Error::EmptyParty(p));
    }

    let shards = per_party
        .into_iter()
        .enumerate()
        .map(|(p, cols)| {
            let party = PartyId(p);
            let role = if party == spec.active { Role::Active } else { Role::Passive };
            let rows = table
                .rows
                .iter()
                .map(|r| (r.id.clone(), cols.iter().map(|&(_, c)| r.cells[c]).collect()))
                .collect();
            let labels = match (role, table.label_column) {
                (Role::Active, Some(lc)) => Some(table.rows.iter().map(|r| (r.id.clone(), r.cells[lc])).collect()),
                _ => None,
            };
            PartyShard {
                party,
                role,
                features: cols.iter().map(|&(f, c)| (f, table.columns[c].clone())).collect(),
                rows,
                labels,
            }
        })
        .collect();
    Ok(shards)
}

/// Column-major features of one party restricted to the shared record list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignedShard {
    pub party: PartyId,
    pub role: Role,
    pub features: Vec<FeatureId>,
    pub names: Vec<String>,
    /// `columns[j][row]` is feature `features[j]` of shared row `row`.
    pub columns: Vec<Vec<f64>>,
    pub labels: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignedDataset {
    /// Shared record ids in protocol order (sorted by salted hash).
    pub ids: Vec<String>,
    /// One shard per party, ordered by party id.
    pub shards: Vec<AlignedShard>,
    /// Global feature id to (party, local column).
    pub feature_map: BTreeMap<FeatureId, (PartyId, usize)>,
}

#[derive(Clone, Debug, Default)]
pub struct AlignOptions {
    /// Drop records with any feature whose |z-score| exceeds this value.
    pub outlier_z: Option<f64>,
}

pub fn align(shards: &[PartyShard]) -> Result<AlignedDataset> {
    align_with(shards, &AlignOptions::default())
}

pub fn align_with(shards: &[PartyShard], opts: &AlignOptions) -> Result<AlignedDataset> {
    if shards.len() < 2 {
        return Err(Error::InvalidPartition("alignment needs at least two shards".into()));
    }
    if shards.iter().filter(|s| s.role == Role::Active).count() != 1 {
        return Err(Error::InvalidPartition("exactly one active shard is required".into()));
    }
    let mut ordered: Vec<&PartyShard> = shards.iter().collect();
    ordered.sort_by_key(|s| s.party);
    if ordered.windows(2).any(|w| w[0].party == w[1].party) {
        return Err(Error::InvalidPartition("duplicate party id".into()));
    }

    // Every party publishes salted hashes only; the intersection is taken on hashes.
    let hashed: Vec<BTreeMap<[u8; 32], &String>> = ordered
        .iter()
        .map(|s| s.rows.keys().map(|id| (hash_id(id), id)).collect())
        .collect();
    let mut shared: Vec<([u8; 32], &String)> = hashed[0]
        .iter()
        .filter(|(h, _)| hashed[1..].iter().all(|m| m.contains_key(*h)))
        .map(|(h, id)| (*h, *id))
        .collect();

    shared.retain(|(_, id)| {
        ordered.iter().all(|s| {
            let feats_ok = s.rows[*id].iter().all(Option::is_some);
            let label_ok = s
                .labels
                .as_ref()
                .map_or(true, |l| l.get(*id).copied().flatten().is_some());
            feats_ok && label_ok
        })
    });

    if let Some(z) = opts.outlier_z {
        let keep = outlier_mask(&ordered, &shared, z);
        shared = shared.into_iter().zip(keep).filter(|(_, k)| *k).map(|(s, _)| s).collect();
    }
    if shared.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    // BTreeMap iteration is already in hash order.

    let ids: Vec<String> = shared.iter().map(|(_, id)| (*id).clone()).collect();
    let mut feature_map = BTreeMap::new();
    let aligned = ordered
        .iter()
        .map(|s| {
            let columns = (0..s.features.len())
                .map(|j| ids.iter().map(|id| s.rows[id][j].expect("null filtered")).collect())
                .collect();
            for (j, (f, _)) in s.features.iter().enumerate() {
                feature_map.insert(*f, (s.party, j));
            }
            AlignedShard {
                party: s.party,
                role: s.role,
                features: s.features.iter().map(|(f, _)| *f).collect(),
                names: s.features.iter().map(|(_, n)| n.clone()).collect(),
                columns,
                labels: s
                    .labels
                    .as_ref()
                    .map(|l| ids.iter().map(|id| l[id].expect("null filtered")).collect()),
            }
        })
        .collect();
    Ok(AlignedDataset {
        ids,
        shards: aligned,
        feature_map,
    })
}

fn outlier_mask(shards: &[&PartyShard], shared: &[([u8; 32], &String)], z: f64) -> Vec<bool> {
    let mut keep = vec![true; shared.len()];
    for s in shards {
        for j in 0..s.features.len() {
            let vals: Vec<f64> = shared.iter().map(|(_, id)| s.rows[*id][j].unwrap_or(0.0)).collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            if sd > 0.0 {
                for (k, v) in vals.iter().enumerate() {
                    if ((v - mean) / sd).abs() > z {
                        keep[k] = false;
                    }
                }
            }
        }
    }
    keep
}

fn hash_id(id: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(ALIGNMENT_SALT.as_bytes());
    h.update([0u8]);
    h.update(id.as_bytes());
    h.finalize().into()
}

impl AlignedDataset {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn active_shard(&self) -> &AlignedShard {
        self.shards
            .iter()
            .find(|s| s.role == Role::Active)
            .expect("aligned dataset has an active shard")
    }

    pub fn active_party(&self) -> PartyId {
        self.active_shard().party
    }

    pub fn labels(&self) -> Option<&[f64]> {
        self.active_shard().labels.as_deref()
    }

    pub fn features(&self) -> Vec<FeatureId> {
        self.feature_map.keys().copied().collect()
    }

    pub fn feature_name(&self, f: FeatureId) -> Option<&str> {
        let (p, j) = self.feature_map.get(&f)?;
        self.shard(*p).map(|s| s.names[*j].as_str())
    }

    pub fn shard(&self, party: PartyId) -> Option<&AlignedShard> {
        self.shards.iter().find(|s| s.party == party)
    }

    pub fn value(&self, f: FeatureId, row: usize) -> Option<f64> {
        let (p, j) = self.feature_map.get(&f)?;
        self.shard(*p).map(|s| s.columns[*j][row])
    }

    pub fn position_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    /// Rows at the given positions, in the given order.
    pub fn subset(&self, rows: &[usize]) -> AlignedDataset {
        AlignedDataset {
            ids: rows.iter().map(|&r| self.ids[r].clone()).collect(),
            shards: self
                .shards
                .iter()
                .map(|s| AlignedShard {
                    columns: s.columns.iter().map(|c| rows.iter().map(|&r| c[r]).collect()).collect(),
                    labels: s.labels.as_ref().map(|l| rows.iter().map(|&r| l[r]).collect()),
                    ..s.clone()
                })
                .collect(),
            feature_map: self.feature_map.clone(),
        }
    }

    pub fn without_records(&self, ids: &BTreeSet<String>) -> AlignedDataset {
        let keep: Vec<usize> = (0..self.len()).filter(|&r| !ids.contains(&self.ids[r])).collect();
        self.subset(&keep)
    }

    /// Drops feature columns. Parties may end up holding no features.
    pub fn without_features(&self, features: &BTreeSet<FeatureId>) -> AlignedDataset {
        let mut feature_map = BTreeMap::new();
        let shards = self
            .shards
            .iter()
            .map(|s| {
                let keep: Vec<usize> = (0..s.features.len())
                    .filter(|&j| !features.contains(&s.features[j]))
                    .collect();
                for (nj, &j) in keep.iter().enumerate() {
                    feature_map.insert(s.features[j], (s.party, nj));
                }
                AlignedShard {
                    party: s.party,
                    role: s.role,
                    features: keep.iter().map(|&j| s.features[j]).collect(),
                    names: keep.iter().map(|&j| s.names[j].clone()).collect(),
                    columns: keep.iter().map(|&j| s.columns[j].clone()).collect(),
                    labels: s.labels.clone(),
                }
            })
            .collect();
        AlignedDataset {
            ids: self.ids.clone(),
            shards,
            feature_map,
        }
    }

    /// Replaces the active party's labels, e.g. to binarize a class for one-vs-rest.
    pub fn with_labels(&self, labels: Vec<f64>) -> AlignedDataset {
        assert_eq!(labels.len(), self.len());
        let mut out = self.clone();
        for s in &mut out.shards {
            if s.role == Role::Active {
                s.labels = Some(labels.clone());
            }
        }
        out
    }

    /// Converts back to shards, e.g. to re-run alignment.
    pub fn to_shards(&self) -> Vec<PartyShard> {
        self.shards
            .iter()
            .map(|s| PartyShard {
                party: s.party,
                role: s.role,
                features: s.features.iter().copied().zip(s.names.iter().cloned()).collect(),
                rows: self
                    .ids
                    .iter()
                    .enumerate()
                    .map(|(r, id)| (id.clone(), s.columns.iter().map(|c| Some(c[r])).collect()))
                    .collect(),
                labels: s
                    .labels
                    .as_ref()
                    .map(|l| self.ids.iter().cloned().zip(l.iter().map(|&v| Some(v))).collect()),
            })
            .collect()
    }
}

/// Seeded split into (train, test); |test| = round(fraction * n), kept within [1, n-1].
pub fn train_test_split(ds: &AlignedDataset, test_fraction: f64, seed: u64) -> Result<(AlignedDataset, AlignedDataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidFraction(test_fraction));
    }
    let n = ds.len();
    if n < 2 {
        return Err(Error::EmptyInput("train/test split needs at least two records"));
    }
    let n_test = ((test_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test: Vec<usize> = order[..n_test].to_vec();
    let mut train: Vec<usize> = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((ds.subset(&train), ds.subset(&test)))
}

/// Manifest written next to the shard files by [`write_shards`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ShardManifest {
    pub format_version: u32,
    pub spec: PartitionSpec,
    pub files: Vec<(PartyId, String)>,
}

/// Writes one CSV per party (`party-<p>.csv`: id, local features, label on the
/// active shard) plus `manifest.json`.
pub fn write_shards(dir: impl AsRef<Path>, shards: &[PartyShard], spec: &PartitionSpec) -> Result<ShardManifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for s in shards {
        let name = format!("party-{}.csv", s.party.0);
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["id".to_string()];
        header.extend(s.features.iter().map(|(_, n)| n.clone()));
        if s.labels.is_some() {
            header.push("label".into());
        }
        w.write_record(&header)?;
        for (id, cells) in &s.rows {
            let mut rec = vec![id.clone()];
            rec.extend(cells.iter().map(|c| c.map(|v| v.to_string()).unwrap_or_default()));
            if let Some(l) = &s.labels {
                rec.push(l.get(id).copied().flatten().map(|v| v.to_string()).unwrap_or_default());
            }
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::io(dir.join(&name), e.into_error()))?;
        crate::io::write_atomic(dir.join(&name), &bytes)?;
        files.push((s.party, name));
    }
    let manifest = ShardManifest {
        format_version: 1,
        spec: spec.clone(),
        files,
    };
    crate::io::write_atomic(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(manifest)
}
