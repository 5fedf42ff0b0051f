//! Coin corpora, ground-truth die labels, match files and matrix CSVs.
//!
//! Every on-disk format used by the pipeline lives here so that external
//! tools (for instance a neural matcher exporting candidate matches) can
//! interpose at any stage.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("bad header in {path}: expected `{expected}`")]
    BadHeader { path: PathBuf, expected: &'static str },
    #[error("empty coin id")]
    EmptyId,
    #[error("duplicate coin id {0:?}")]
    DuplicateId(String),
    #[error("corpus has no coins")]
    EmptyCorpus,
    #[error("coin {0:?} has no die label")]
    MissingLabel(String),
    #[error("match record pairs coin {0:?} with itself")]
    SelfPair(String),
    #[error("unknown coin id {0:?}")]
    UnknownCoin(String),
    #[error("malformed record at {path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl CorpusError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn csv(path: &Path, source: csv::Error) -> Self {
        CorpusError::Csv {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Opaque, non-empty coin identifier.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CoinId(String);

impl CoinId {
    pub fn new(id: impl Into<String>) -> Result<Self, CorpusError> {
        let id = id.into();
        if id.is_empty() {
            return Err(CorpusError::EmptyId);
        }
        Ok(CoinId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for CoinId {
    type Error = CorpusError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        CoinId::new(value)
    }
}

impl From<CoinId> for String {
    fn from(id: CoinId) -> String {
        id.0
    }
}

impl fmt::Display for CoinId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Coin {
    pub id: CoinId,
    pub image_path: PathBuf,
    /// False when the image path could not be opened at load time.
    pub image_ok: bool,
}

/// An ordered collection of coins. The order defines matrix rows and columns.
#[derive(Clone, Debug)]
pub struct Corpus {
    name: String,
    coins: Vec<Coin>,
    index: HashMap<CoinId, usize>,
}

impl Corpus {
    pub fn new(name: impl Into<String>, coins: Vec<Coin>) -> Result<Self, CorpusError> {
        if coins.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        let mut index = HashMap::with_capacity(coins.len());
        for (i, coin) in coins.iter().enumerate() {
            if index.insert(coin.id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId(coin.id.0.clone()));
            }
        }
        Ok(Corpus {
            name: name.into(),
            coins,
            index,
        })
    }

    /// Corpus of coins that have no image, e.g. when matches come from files.
    pub fn from_ids<I, S>(name: impl Into<String>, ids: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let coins = ids
            .into_iter()
            .map(|id| {
                Ok(Coin {
                    id: CoinId::new(id)?,
                    image_path: PathBuf::new(),
                    image_ok: false,
                })
            })
            .collect::<Result<Vec<_>, CorpusError>>()?;
        Corpus::new(name, coins)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn coins(&self) -> &[Coin] {
        &self.coins
    }

    pub fn len(&self) -> usize {
        self.coins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coins.is_empty()
    }

    pub fn ids(&self) -> Vec<CoinId> {
        self.coins.iter().map(|c| c.id.clone()).collect()
    }

    pub fn position(&self, id: &CoinId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn contains(&self, id: &CoinId) -> bool {
        self.index.contains_key(id)
    }
}

const MANIFEST_HEADER: &str = "coin_id,image_path";
const GROUND_TRUTH_HEADER: &str = "coin_id,die_id";

pub(crate) fn open_csv(path: &Path, expected: &'static str) -> Result<csv::Reader<File>, CorpusError> {
    if !path.exists() {
        return Err(CorpusError::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CorpusError::csv(path, e))?;
    let headers = reader.headers().map_err(|e| CorpusError::csv(path, e))?;
    let want: Vec<&str> = expected.split(',').collect();
    if headers.iter().collect::<Vec<_>>() != want {
        return Err(CorpusError::BadHeader {
            path: path.to_path_buf(),
            expected,
        });
    }
    Ok(reader)
}

/// Loads a `coin_id,image_path` manifest. Relative image paths resolve
/// against the manifest's directory. Unreadable images are flagged on the
/// coin and logged; they do not abort loading.
pub fn load_manifest(path: &Path) -> Result<Corpus, CorpusError> {
    let mut reader = open_csv(path, MANIFEST_HEADER)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut coins = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CorpusError::csv(path, e))?;
        let id = CoinId::new(record.get(0).unwrap_or_default())?;
        let raw = PathBuf::from(record.get(1).unwrap_or_default());
        let image_path = if raw.is_absolute() { raw } else { base.join(raw) };
        let image_ok = File::open(&image_path).is_ok();
        if !image_ok {
            log::warn!("coin {id}: image {} is not readable", image_path.display());
        }
        coins.push(Coin {
            id,
            image_path,
            image_ok,
        });
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Corpus::new(name, coins)
}

/// Writes a manifest. Image paths are written as given.
pub fn write_manifest(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| CorpusError::csv(path, e))?;
    let io = |e| CorpusError::csv(path, e);
    writer.write_record(["coin_id", "image_path"]).map_err(io)?;
    for coin in corpus.coins() {
        writer
            .write_record([coin.id.as_str(), &coin.image_path.to_string_lossy()])
            .map_err(io)?;
    }
    writer.flush().map_err(|e| CorpusError::io(path, e))
}

/// Die labels for every coin of a corpus, in corpus order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundTruth {
    ids: Vec<CoinId>,
    labels: Vec<String>,
}

impl GroundTruth {
    /// Builds ground truth from a label lookup; every corpus coin must be covered.
    pub fn new(corpus: &Corpus, labels: &HashMap<CoinId, String>) -> Result<Self, CorpusError> {
        let mut out = Vec::with_capacity(corpus.len());
        for coin in corpus.coins() {
            match labels.get(&coin.id) {
                Some(label) => out.push(label.clone()),
                None => return Err(CorpusError::MissingLabel(coin.id.0.clone())),
            }
        }
        Ok(GroundTruth {
            ids: corpus.ids(),
            labels: out,
        })
    }

    pub fn ids(&self) -> &[CoinId] {
        &self.ids
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, id: &CoinId) -> Option<&str> {
        self.ids
            .iter()
            .position(|i| i == id)
            .map(|p| self.labels[p].as_str())
    }

    pub fn n_dies(&self) -> usize {
        self.labels.iter().collect::<HashSet<_>>().len()
    }

    /// The die partition in corpus order.
    pub fn partition(&self) -> crate::Partition {
        crate::Partition::from_labels(&self.labels)
    }
}

/// Loads a `coin_id,die_id` CSV. Labels for coins outside the corpus are
/// ignored with a warning.
pub fn load_ground_truth(path: &Path, corpus: &Corpus) -> Result<GroundTruth, CorpusError> {
    let mut reader = open_csv(path, GROUND_TRUTH_HEADER)?;
    let mut labels = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| CorpusError::csv(path, e))?;
        let id = CoinId::new(record.get(0).unwrap_or_default())?;
        let die = record.get(1).unwrap_or_default().to_string();
        if !corpus.contains(&id) {
            log::warn!("ground truth labels unknown coin {id}; ignored");
            continue;
        }
        labels.insert(id, die);
    }
    GroundTruth::new(corpus, &labels)
}

pub fn write_ground_truth(gt: &GroundTruth, path: &Path) -> Result<(), CorpusError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| CorpusError::csv(path, e))?;
    let io = |e| CorpusError::csv(path, e);
    writer.write_record(["coin_id", "die_id"]).map_err(io)?;
    for (id, label) in gt.ids.iter().zip(&gt.labels) {
        writer.write_record([id.as_str(), label]).map_err(io)?;
    }
    writer.flush().map_err(|e| CorpusError::io(path, e))
}

/// One point correspondence `(xa, ya) <-> (xb, yb)` in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct PointMatch {
    pub xa: f64,
    pub ya: f64,
    pub xb: f64,
    pub yb: f64,
}

impl PointMatch {
    pub fn new(xa: f64, ya: f64, xb: f64, yb: f64) -> Self {
        PointMatch { xa, ya, xb, yb }
    }

    pub fn mirrored(self) -> Self {
        PointMatch::new(self.xb, self.yb, self.xa, self.ya)
    }

    pub fn is_finite(&self) -> bool {
        self.xa.is_finite() && self.ya.is_finite() && self.xb.is_finite() && self.yb.is_finite()
    }
}

impl From<[f64; 4]> for PointMatch {
    fn from(v: [f64; 4]) -> Self {
        PointMatch::new(v[0], v[1], v[2], v[3])
    }
}

impl From<PointMatch> for [f64; 4] {
    fn from(m: PointMatch) -> Self {
        [m.xa, m.ya, m.xb, m.yb]
    }
}

/// Candidate or filtered correspondences between two coins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub a: CoinId,
    pub b: CoinId,
    pub filtered: bool,
    pub matches: Vec<PointMatch>,
}

impl MatchRecord {
    pub fn new(a: CoinId, b: CoinId, filtered: bool, matches: Vec<PointMatch>) -> Self {
        MatchRecord {
            a,
            b,
            filtered,
            matches,
        }
    }

    /// Orders the pair lexicographically, mirroring correspondences if needed.
    pub fn canonical(mut self) -> Self {
        if self.b < self.a {
            std::mem::swap(&mut self.a, &mut self.b);
            for m in &mut self.matches {
                *m = m.mirrored();
            }
        }
        self
    }

    pub fn pair(&self) -> (&CoinId, &CoinId) {
        if self.a <= self.b {
            (&self.a, &self.b)
        } else {
            (&self.b, &self.a)
        }
    }

    fn validate(&self) -> Result<(), String> {
        if self.a == self.b {
            return Err(format!("self pair {}", self.a));
        }
        if let Some(i) = self.matches.iter().position(|m| !m.is_finite()) {
            return Err(format!("correspondence {i} is not finite"));
        }
        Ok(())
    }
}

/// Reads an NDJSON match file. When `corpus` is given, every id must belong to it.
pub fn read_match_file(path: &Path, corpus: Option<&Corpus>) -> Result<Vec<MatchRecord>, CorpusError> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CorpusError::MissingFile(path.to_path_buf()),
        _ => CorpusError::io(path, e),
    })?;
    let mut records = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| CorpusError::Malformed {
            path: path.to_path_buf(),
            line: lineno + 1,
            message,
        };
        let record: MatchRecord = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        if record.a == record.b {
            return Err(CorpusError::SelfPair(record.a.0));
        }
        record.validate().map_err(malformed)?;
        if let Some(corpus) = corpus {
            for id in [&record.a, &record.b] {
                if !corpus.contains(id) {
                    return Err(CorpusError::UnknownCoin(id.0.clone()));
                }
            }
        }
        records.push(record);
    }
    Ok(records)
}

pub fn write_match_file(records: &[MatchRecord], path: &Path) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for record in records {
        if record.a == record.b {
            return Err(CorpusError::SelfPair(record.a.0.clone()));
        }
        record.validate().map_err(|message| CorpusError::Malformed {
            path: path.to_path_buf(),
            line: 0,
            message,
        })?;
        let line = serde_json::to_string(record).expect("match records serialize");
        writeln!(out, "{line}").map_err(|e| CorpusError::io(path, e))?;
    }
    out.flush().map_err(|e| CorpusError::io(path, e))
}

/// Reads every `*.ndjson` file in a directory, in file-name order.
pub fn read_match_dir(dir: &Path, corpus: Option<&Corpus>) -> Result<Vec<MatchRecord>, CorpusError> {
    let entries = std::fs::read_dir(dir).map_err(|e| CorpusError::io(dir, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ndjson"))
        .collect();
    files.sort();
    let mut records = Vec::new();
    for file in files {
        records.extend(read_match_file(&file, corpus)?);
    }
    Ok(records)
}

/// Indexes records by canonical pair; a later record for the same pair wins.
pub fn index_records(records: Vec<MatchRecord>) -> BTreeMap<(CoinId, CoinId), MatchRecord> {
    records
        .into_iter()
        .map(|r| {
            let r = r.canonical();
            ((r.a.clone(), r.b.clone()), r)
        })
        .collect()
}

/// Writes a square integer matrix with coin ids as first row and column.
pub fn write_matrix_csv(ids: &[CoinId], cells: &[u32], path: &Path) -> Result<(), CorpusError> {
    let n = ids.len();
    assert_eq!(cells.len(), n * n, "matrix shape");
    let mut writer = csv::Writer::from_path(path).map_err(|e| CorpusError::csv(path, e))?;
    let io = |e| CorpusError::csv(path, e);
    let mut header = vec!["coin_id".to_string()];
    header.extend(ids.iter().map(|i| i.0.clone()));
    writer.write_record(&header).map_err(io)?;
    for (i, id) in ids.iter().enumerate() {
        let mut row = vec![id.0.clone()];
        row.extend((0..n).map(|j| if i == j { 0 } else { cells[i * n + j] }.to_string()));
        writer.write_record(&row).map_err(io)?;
    }
    writer.flush().map_err(|e| CorpusError::io(path, e))
}

/// Reads a matrix written by [`write_matrix_csv`].
pub fn read_matrix_csv(path: &Path) -> Result<(Vec<CoinId>, Vec<u32>), CorpusError> {
    if !path.exists() {
        return Err(CorpusError::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| CorpusError::csv(path, e))?;
    let mut rows = reader.records();
    let malformed = |line: usize, message: &str| CorpusError::Malformed {
        path: path.to_path_buf(),
        line,
        message: message.to_string(),
    };
    let header = rows
        .next()
        .ok_or_else(|| malformed(1, "empty matrix file"))?
        .map_err(|e| CorpusError::csv(path, e))?;
    let ids = header
        .iter()
        .skip(1)
        .map(CoinId::new)
        .collect::<Result<Vec<_>, _>>()?;
    let n = ids.len();
    let mut cells = vec![0u32; n * n];
    let mut seen = 0;
    for (i, row) in rows.enumerate() {
        let row = row.map_err(|e| CorpusError::csv(path, e))?;
        if i >= n || row.len() != n + 1 {
            return Err(malformed(i + 2, "matrix is not square"));
        }
        if row.get(0) != Some(ids[i].as_str()) {
            return Err(malformed(i + 2, "row id does not match column order"));
        }
        for j in 0..n {
            let v: u32 = row[j + 1]
                .trim()
                .parse()
                .map_err(|_| malformed(i + 2, "cell is not a nonnegative integer"))?;
            cells[i * n + j] = if i == j { 0 } else { v };
        }
        seen += 1;
    }
    if seen != n {
        return Err(malformed(seen + 2, "matrix is not square"));
    }
    Ok((ids, cells))
}
