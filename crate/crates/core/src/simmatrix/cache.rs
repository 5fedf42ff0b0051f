use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{CoinId, CorpusError};

/// One completed pair: filtered (or raw) match count.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairEntry {
    pub a: CoinId,
    pub b: CoinId,
    pub count: u32,
}

/// Append-only store of completed pair counts, one NDJSON file per
/// (matcher config hash, filter config hash).
///
/// Entries are appended as pairs complete, so an interrupted build resumes
/// from the last flushed line. A torn trailing line is ignored on load.
#[derive(Debug)]
pub struct PairCache {
    path: PathBuf,
    entries: HashMap<(CoinId, CoinId), u32>,
}

impl PairCache {
    pub fn file_name(matcher_hash: &str, filter_hash: &str) -> String {
        format!("pairs-{}-{}.ndjson", &matcher_hash[..16], &filter_hash[..16])
    }

    pub fn open(dir: &Path, matcher_hash: &str, filter_hash: &str) -> Result<Self, CorpusError> {
        std::fs::create_dir_all(dir).map_err(|e| CorpusError::io(dir, e))?;
        let path = dir.join(Self::file_name(matcher_hash, filter_hash));
        let mut entries = HashMap::new();
        if path.exists() {
            drop_torn_tail(&path)?;
            let file = File::open(&path).map_err(|e| CorpusError::io(&path, e))?;
            for line in BufReader::new(file).lines() {
                let line = line.map_err(|e| CorpusError::io(&path, e))?;
                match serde_json::from_str::<PairEntry>(&line) {
                    Ok(e) => {
                        entries.insert(canonical(e.a, e.b), e.count);
                    }
                    Err(_) if line.trim().is_empty() => {}
                    Err(err) => log::warn!("{}: skipping unreadable cache line: {err}", path.display()),
                }
            }
        }
        Ok(PairCache { path, entries })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, a: &CoinId, b: &CoinId) -> Option<u32> {
        self.entries.get(&canonical(a.clone(), b.clone())).copied()
    }

    /// Appends a batch of completed pairs and flushes it to disk.
    pub fn append(&mut self, batch: &[PairEntry]) -> Result<(), CorpusError> {
        if batch.is_empty() {
            return Ok(());
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| CorpusError::io(&self.path, e))?;
        let mut out = BufWriter::new(file);
        for entry in batch {
            let line = serde_json::to_string(entry).expect("cache entries serialize");
            writeln!(out, "{line}").map_err(|e| CorpusError::io(&self.path, e))?;
            self.entries
                .insert(canonical(entry.a.clone(), entry.b.clone()), entry.count);
        }
        out.flush().map_err(|e| CorpusError::io(&self.path, e))
    }
}

/// Truncates an unterminated last line left by an interrupted write.
fn drop_torn_tail(path: &Path) -> Result<(), CorpusError> {
    let bytes = std::fs::read(path).map_err(|e| CorpusError::io(path, e))?;
    if bytes.last().is_none_or(|&b| b == b'\n') {
        return Ok(());
    }
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
    log::warn!("{}: dropping torn trailing cache line", path.display());
    let file = OpenOptions::new()
        .write(true)
        .open(path)
        .map_err(|e| CorpusError::io(path, e))?;
    file.set_len(keep as u64).map_err(|e| CorpusError::io(path, e))
}

fn canonical(a: CoinId, b: CoinId) -> (CoinId, CoinId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}
