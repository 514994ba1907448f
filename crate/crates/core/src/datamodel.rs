//! Records, datasets and ground truth, plus ingestion from delimited files.
//!
//! A [`Dataset`] holds one source (deduplication) or two sources (linkage)
//! of records sharing a schema. Internally pairs are addressed by record
//! position ([`PairKey`]); at file boundaries they are addressed by record id
//! ([`RecordPair`]).

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("missing id column `{0}` in header")]
    MissingIdColumn(String),
    #[error("attribute `{0}` not found in header")]
    MissingAttribute(String),
    #[error("duplicate record id `{id}` at row {row}")]
    DuplicateId { id: String, row: u64 },
    #[error("row {row}: expected {expected} fields, found {found}")]
    RaggedRow { row: u64, expected: usize, found: usize },
    #[error("linkage sources have different schemas")]
    SchemaMismatch,
    #[error("row {row}: {message}")]
    Malformed { row: u64, message: String },
    #[error("ground truth row {row}: unknown record id `{id}`")]
    UnknownId { id: String, row: u64 },
    #[error("ground truth row {row}: self-pair `{id}`")]
    SelfPair { id: String, row: u64 },
}

/// Deduplication within one source, or linkage across two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Dedup,
    Linkage,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Dedup => f.write_str("dedup"),
            Mode::Linkage => f.write_str("linkage"),
        }
    }
}

/// One row. `values` is aligned with the owning dataset's schema; missing
/// values are empty strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub values: Vec<String>,
}

impl Record {
    pub fn new(id: impl Into<String>, values: Vec<String>) -> Self {
        Self {
            id: id.into(),
            values,
        }
    }
}

/// Position of a record: source number and row within that source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RecordRef {
    pub source: u8,
    pub index: u32,
}

/// A comparable pair addressed by position.
///
/// Dedup: both indices refer to source 0 and `left < right`.
/// Linkage: `left` is in source 0 and `right` in source 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairKey {
    pub left: u32,
    pub right: u32,
}

impl PairKey {
    /// Canonical dedup pair from two distinct positions.
    pub fn dedup(a: u32, b: u32) -> Self {
        debug_assert_ne!(a, b);
        if a < b {
            Self { left: a, right: b }
        } else {
            Self { left: b, right: a }
        }
    }

    pub fn linkage(left: u32, right: u32) -> Self {
        Self { left, right }
    }

    pub fn refs(self, mode: Mode) -> (RecordRef, RecordRef) {
        let right_source = match mode {
            Mode::Dedup => 0,
            Mode::Linkage => 1,
        };
        (
            RecordRef {
                source: 0,
                index: self.left,
            },
            RecordRef {
                source: right_source,
                index: self.right,
            },
        )
    }
}

/// A pair addressed by record id, in canonical order: lexicographic by id in
/// dedup mode, (source 1, source 2) in linkage mode.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RecordPair {
    pub left: String,
    pub right: String,
}

impl RecordPair {
    pub fn new(left: impl Into<String>, right: impl Into<String>) -> Self {
        Self {
            left: left.into(),
            right: right.into(),
        }
    }

    /// Canonical form of a dedup pair. Idempotent.
    pub fn canonical_dedup(self) -> Self {
        if self.left <= self.right {
            self
        } else {
            Self {
                left: self.right,
                right: self.left,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    schema: Vec<String>,
    mode: Mode,
    sources: Vec<Vec<Record>>,
    ids: Vec<HashMap<String, u32>>,
}

impl Dataset {
    /// Deduplication dataset over a single source.
    pub fn dedup(schema: Vec<String>, records: Vec<Record>) -> Result<Self, IngestError> {
        Self::build(schema, Mode::Dedup, vec![records])
    }

    /// Linkage dataset over two sources sharing `schema`.
    pub fn linkage(
        schema: Vec<String>,
        left: Vec<Record>,
        right: Vec<Record>,
    ) -> Result<Self, IngestError> {
        Self::build(schema, Mode::Linkage, vec![left, right])
    }

    fn build(
        schema: Vec<String>,
        mode: Mode,
        sources: Vec<Vec<Record>>,
    ) -> Result<Self, IngestError> {
        let mut ids = Vec::with_capacity(sources.len());
        for records in &sources {
            let mut map = HashMap::with_capacity(records.len());
            for (i, r) in records.iter().enumerate() {
                if r.values.len() != schema.len() {
                    return Err(IngestError::RaggedRow {
                        row: i as u64 + 1,
                        expected: schema.len(),
                        found: r.values.len(),
                    });
                }
                if map.insert(r.id.clone(), i as u32).is_some() {
                    return Err(IngestError::DuplicateId {
                        id: r.id.clone(),
                        row: i as u64 + 1,
                    });
                }
            }
            ids.push(map);
        }
        Ok(Self {
            schema,
            mode,
            sources,
            ids,
        })
    }

    pub fn schema(&self) -> &[String] {
        &self.schema
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn sources(&self) -> &[Vec<Record>] {
        &self.sources
    }

    pub fn source(&self, i: usize) -> &[Record] {
        &self.sources[i]
    }

    /// Total number of records across sources.
    pub fn len(&self) -> usize {
        self.sources.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|a| a == name)
    }

    /// |D|(|D|-1)/2 for dedup, |D1|·|D2| for linkage.
    pub fn total_pairs(&self) -> u64 {
        match self.mode {
            Mode::Dedup => {
                let n = self.sources[0].len() as u64;
                n * n.saturating_sub(1) / 2
            }
            Mode::Linkage => self.sources[0].len() as u64 * self.sources[1].len() as u64,
        }
    }

    pub fn record(&self, r: RecordRef) -> &Record {
        &self.sources[r.source as usize][r.index as usize]
    }

    pub fn pair_records(&self, pair: PairKey) -> (&Record, &Record) {
        let (a, b) = pair.refs(self.mode);
        (self.record(a), self.record(b))
    }

    pub fn lookup(&self, source: usize, id: &str) -> Option<u32> {
        self.ids.get(source)?.get(id).copied()
    }

    /// Position-addressed pair to its canonical id form.
    pub fn pair_ids(&self, pair: PairKey) -> RecordPair {
        let (a, b) = self.pair_records(pair);
        let p = RecordPair::new(a.id.clone(), b.id.clone());
        match self.mode {
            Mode::Dedup => p.canonical_dedup(),
            Mode::Linkage => p,
        }
    }

    /// Resolves an id pair. In linkage mode the ids may be given in either
    /// source order.
    pub fn resolve_pair(&self, pair: &RecordPair) -> Option<PairKey> {
        match self.mode {
            Mode::Dedup => {
                let a = self.lookup(0, &pair.left)?;
                let b = self.lookup(0, &pair.right)?;
                (a != b).then(|| PairKey::dedup(a, b))
            }
            Mode::Linkage => {
                if let (Some(a), Some(b)) =
                    (self.lookup(0, &pair.left), self.lookup(1, &pair.right))
                {
                    return Some(PairKey::linkage(a, b));
                }
                let a = self.lookup(0, &pair.right)?;
                let b = self.lookup(1, &pair.left)?;
                Some(PairKey::linkage(a, b))
            }
        }
    }
}

/// How to read a delimited dataset file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    pub delimiter: char,
    pub id_column: String,
    /// Attribute subset (in this order); all non-id columns when `None`.
    pub attributes: Option<Vec<String>>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            delimiter: ',',
            id_column: "id".to_string(),
            attributes: None,
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> IngestError {
    IngestError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(e: csv::Error) -> IngestError {
    let row = e.position().map(|p| p.line()).unwrap_or(0);
    match e.kind() {
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => IngestError::RaggedRow {
            row,
            expected: *expected_len as usize,
            found: *len as usize,
        },
        _ => IngestError::Malformed {
            row,
            message: e.to_string(),
        },
    }
}

/// Parses one source from a reader. Returns the schema and records.
pub fn read_records<R: Read>(
    reader: R,
    config: &IngestConfig,
) -> Result<(Vec<String>, Vec<Record>), IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(config.delimiter as u8)
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::None)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_string)
        .collect();
    let id_col = header
        .iter()
        .position(|h| h == &config.id_column)
        .ok_or_else(|| IngestError::MissingIdColumn(config.id_column.clone()))?;
    let schema: Vec<String> = match &config.attributes {
        Some(attrs) => attrs.clone(),
        None => header
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != id_col)
            .map(|(_, h)| h.clone())
            .collect(),
    };
    let columns: Vec<usize> = schema
        .iter()
        .map(|a| {
            header
                .iter()
                .position(|h| h == a)
                .ok_or_else(|| IngestError::MissingAttribute(a.clone()))
        })
        .collect::<Result<_, _>>()?;

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for row in rdr.records() {
        let row = row.map_err(csv_err)?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let id = row[id_col].to_string();
        if !seen.insert(id.clone()) {
            return Err(IngestError::DuplicateId { id, row: line });
        }
        let values = columns.iter().map(|&c| row[c].to_string()).collect();
        records.push(Record { id, values });
    }
    Ok((schema, records))
}

/// Loads a deduplication dataset from a header-bearing delimited file.
pub fn load_dataset(path: &Path, config: &IngestConfig) -> Result<Dataset, IngestError> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let (schema, records) = read_records(file, config)?;
    Dataset::dedup(schema, records)
}

/// Loads a two-source linkage dataset. Both files must yield the same schema.
pub fn load_linkage(
    left: &Path,
    right: &Path,
    config: &IngestConfig,
) -> Result<Dataset, IngestError> {
    let f1 = std::fs::File::open(left).map_err(|e| io_err(left, e))?;
    let f2 = std::fs::File::open(right).map_err(|e| io_err(right, e))?;
    let (s1, r1) = read_records(f1, config)?;
    let (s2, r2) = read_records(f2, config)?;
    if s1 != s2 {
        return Err(IngestError::SchemaMismatch);
    }
    Dataset::linkage(s1, r1, r2)
}

/// Writes one source back out with `id_column` first. Values are written
/// verbatim, so a load of the output reproduces the records.
pub fn write_records<W: Write>(
    writer: W,
    schema: &[String],
    records: &[Record],
    config: &IngestConfig,
) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new()
        .delimiter(config.delimiter as u8)
        .from_writer(writer);
    let mut header = vec![config.id_column.as_str()];
    header.extend(schema.iter().map(String::as_str));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.id.as_str()];
        row.extend(r.values.iter().map(String::as_str));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// The set of true matching pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundTruth {
    matches: HashSet<PairKey>,
}

impl GroundTruth {
    pub fn from_pairs(pairs: impl IntoIterator<Item = PairKey>) -> Self {
        Self {
            matches: pairs.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    pub fn contains(&self, pair: &PairKey) -> bool {
        self.matches.contains(pair)
    }

    pub fn iter(&self) -> impl Iterator<Item = &PairKey> {
        self.matches.iter()
    }

    /// Matches in canonical id order.
    pub fn sorted_ids(&self, dataset: &Dataset) -> Vec<RecordPair> {
        let mut v: Vec<_> = self.matches.iter().map(|p| dataset.pair_ids(*p)).collect();
        v.sort();
        v
    }
}

/// Options for reading a ground-truth file of two id columns per line.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TruthConfig {
    pub delimiter: char,
    pub has_header: bool,
}

impl Default for TruthConfig {
    fn default() -> Self {
        Self {
            delimiter: ',',
            has_header: false,
        }
    }
}

pub fn read_ground_truth<R: Read>(
    reader: R,
    dataset: &Dataset,
    config: &TruthConfig,
) -> Result<GroundTruth, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(config.delimiter as u8)
        .has_headers(config.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut matches = HashSet::new();
    for row in rdr.records() {
        let row = row.map_err(csv_err)?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.iter().all(str::is_empty) {
            continue;
        }
        if row.len() < 2 {
            return Err(IngestError::Malformed {
                row: line,
                message: "expected two id columns".to_string(),
            });
        }
        let (a, b) = (&row[0], &row[1]);
        if dataset.mode() == Mode::Dedup && a == b {
            return Err(IngestError::SelfPair {
                id: a.to_string(),
                row: line,
            });
        }
        let key = dataset
            .resolve_pair(&RecordPair::new(a, b))
            .ok_or_else(|| {
                let missing = match dataset.mode() {
                    Mode::Dedup if dataset.lookup(0, a).is_none() => a,
                    Mode::Dedup => b,
                    Mode::Linkage
                        if dataset.lookup(0, a).is_none() && dataset.lookup(1, a).is_none() =>
                    {
                        a
                    }
                    Mode::Linkage => b,
                };
                IngestError::UnknownId {
                    id: missing.to_string(),
                    row: line,
                }
            })?;
        matches.insert(key);
    }
    Ok(GroundTruth { matches })
}

pub fn load_ground_truth(
    path: &Path,
    dataset: &Dataset,
    config: &TruthConfig,
) -> Result<GroundTruth, IngestError> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    read_ground_truth(file, dataset, config)
}
