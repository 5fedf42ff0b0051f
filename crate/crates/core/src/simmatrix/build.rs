use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use image::GrayImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{self, CoinId, Corpus, MatchRecord, PointMatch};
use crate::matcher::{detect_and_describe, match_pair, KeypointSet, MatcherConfig};
use crate::robust::{magsac_filter, MagsacConfig};

use super::{MatrixError, PairCache, PairEntry, SimilarityMatrix};

/// Pairs computed between two cache flushes.
const CHECKPOINT_PAIRS: usize = 64;

/// Where candidate correspondences come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchSource {
    /// Built-in detector and matcher run on the corpus images.
    Builtin(MatcherConfig),
    /// NDJSON match file, or a directory of them.
    MatchFiles(PathBuf),
}

/// All-pairs similarity computation.
#[derive(Clone, Debug)]
pub struct SimilarityBuilder {
    pub source: MatchSource,
    /// Robust filtering; `None` counts raw candidate matches.
    pub filter: Option<MagsacConfig>,
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub cache_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildStats {
    pub matcher_hash: String,
    pub filter_hash: String,
    pub pairs_total: usize,
    pub pairs_cached: usize,
    pub pairs_computed: usize,
    pub coins_described: usize,
    pub elapsed_secs: f64,
}

fn sha_hex(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

/// Per-pair RNG seed, independent of scheduling and of pair orientation.
pub fn pair_seed(seed: u64, a: &CoinId, b: &CoinId) -> u64 {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    let digest = sha_hex(&[&seed.to_le_bytes(), a.as_str().as_bytes(), b.as_str().as_bytes()]);
    u64::from_str_radix(&digest[..16], 16).expect("hex digest")
}

pub fn load_gray(path: &std::path::Path) -> Result<GrayImage, String> {
    image::open(path)
        .map(|img| img.to_luma8())
        .map_err(|e| format!("cannot decode {}: {e}", path.display()))
}

/// Filtered inliers of one candidate record, re-emitted with `filtered: true`.
pub fn filter_record(record: &MatchRecord, config: &MagsacConfig, seed: u64) -> MatchRecord {
    let report = magsac_filter(&record.matches, config, pair_seed(seed, &record.a, &record.b));
    MatchRecord::new(
        record.a.clone(),
        record.b.clone(),
        true,
        report.inliers(&record.matches).collect(),
    )
}

fn pairs_of(corpus: &Corpus) -> Vec<(usize, usize)> {
    let n = corpus.len();
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
}

/// Candidate (unfiltered) matches for every unordered pair, canonical order.
pub fn candidate_records(
    corpus: &Corpus,
    config: &MatcherConfig,
    workers: usize,
) -> Result<Vec<MatchRecord>, MatrixError> {
    with_pool(workers, || {
        let sets = describe_coins(corpus, config, &(0..corpus.len()).collect::<Vec<_>>())?;
        Ok(pairs_of(corpus)
            .into_par_iter()
            .map(|(i, j)| candidate_record(corpus, &sets, config, i, j))
            .collect())
    })
}

fn candidate_record(
    corpus: &Corpus,
    sets: &BTreeMap<usize, KeypointSet>,
    config: &MatcherConfig,
    i: usize,
    j: usize,
) -> MatchRecord {
    let (sa, sb) = (&sets[&i], &sets[&j]);
    let matches: Vec<PointMatch> = match_pair(sa, sb, config.ratio).point_matches(sa, sb);
    MatchRecord::new(corpus.coins()[i].id.clone(), corpus.coins()[j].id.clone(), false, matches).canonical()
}

fn describe_coins(
    corpus: &Corpus,
    config: &MatcherConfig,
    which: &[usize],
) -> Result<BTreeMap<usize, KeypointSet>, MatrixError> {
    which
        .par_iter()
        .map(|&i| {
            let coin = &corpus.coins()[i];
            let img = load_gray(&coin.image_path).map_err(|message| MatrixError::Image {
                coin: coin.id.clone(),
                message,
            })?;
            Ok((i, detect_and_describe(&img, config)))
        })
        .collect()
}

pub(crate) fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    if workers == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(f),
        Err(e) => {
            log::warn!("cannot build a {workers}-thread pool ({e}); using the global pool");
            f()
        }
    }
}

impl SimilarityBuilder {
    pub fn new(source: MatchSource) -> Self {
        SimilarityBuilder {
            source,
            filter: Some(MagsacConfig::default()),
            seed: 0,
            workers: 0,
            cache_dir: None,
        }
    }

    /// Hash of everything that determines candidate matches.
    pub fn matcher_hash(&self) -> Result<String, MatrixError> {
        Ok(match &self.source {
            MatchSource::Builtin(cfg) => {
                let json = serde_json::to_vec(cfg).expect("config serializes");
                sha_hex(&[b"builtin", &json])
            }
            MatchSource::MatchFiles(path) => {
                let mut files = if path.is_dir() {
                    std::fs::read_dir(path)
                        .map_err(|e| corpus::CorpusError::io(path, e))?
                        .filter_map(|e| e.ok().map(|e| e.path()))
                        .filter(|p| p.extension().is_some_and(|x| x == "ndjson"))
                        .collect()
                } else {
                    vec![path.clone()]
                };
                files.sort();
                let mut h = Sha256::new();
                h.update(b"matchfiles");
                for f in files {
                    let bytes = std::fs::read(&f).map_err(|e| corpus::CorpusError::io(&f, e))?;
                    h.update((bytes.len() as u64).to_le_bytes());
                    h.update(&bytes);
                }
                hex::encode(h.finalize())
            }
        })
    }

    /// Hash of everything that determines filtering of a candidate set.
    pub fn filter_hash(&self) -> String {
        match &self.filter {
            None => sha_hex(&[b"nofilter"]),
            Some(cfg) => {
                let json = serde_json::to_vec(cfg).expect("config serializes");
                sha_hex(&[b"magsac", &json, &self.seed.to_le_bytes()])
            }
        }
    }

    fn count(&self, matches: &[PointMatch], a: &CoinId, b: &CoinId) -> u32 {
        match &self.filter {
            None => matches.len() as u32,
            Some(cfg) => magsac_filter(matches, cfg, pair_seed(self.seed, a, b)).inlier_count as u32,
        }
    }

    /// Builds the matrix, reusing and extending the pair cache when one is
    /// configured. The result does not depend on the worker count.
    pub fn build(&self, corpus: &Corpus) -> Result<(SimilarityMatrix, BuildStats), MatrixError> {
        let start = Instant::now();
        let matcher_hash = self.matcher_hash()?;
        let filter_hash = self.filter_hash();
        let mut cache = match &self.cache_dir {
            Some(dir) => Some(PairCache::open(dir, &matcher_hash, &filter_hash)?),
            None => None,
        };
        let ids = corpus.ids();
        let mut matrix = SimilarityMatrix::zeros(ids.clone());
        let all = pairs_of(corpus);
        let mut todo = Vec::new();
        for &(i, j) in &all {
            match cache.as_ref().and_then(|c| c.get(&ids[i], &ids[j])) {
                Some(v) => matrix.set(i, j, v),
                None => todo.push((i, j)),
            }
        }
        let mut stats = BuildStats {
            matcher_hash,
            filter_hash,
            pairs_total: all.len(),
            pairs_cached: all.len() - todo.len(),
            ..Default::default()
        };
        if !todo.is_empty() {
            with_pool(self.workers, || match &self.source {
                MatchSource::Builtin(cfg) => self.compute_builtin(corpus, cfg, &todo, &mut matrix, &mut cache, &mut stats),
                MatchSource::MatchFiles(path) => {
                    self.compute_from_files(corpus, path, &todo, &mut matrix, &mut cache, &mut stats)
                }
            })?;
        }
        stats.elapsed_secs = start.elapsed().as_secs_f64();
        Ok((matrix, stats))
    }

    fn compute_builtin(
        &self,
        corpus: &Corpus,
        cfg: &MatcherConfig,
        todo: &[(usize, usize)],
        matrix: &mut SimilarityMatrix,
        cache: &mut Option<PairCache>,
        stats: &mut BuildStats,
    ) -> Result<(), MatrixError> {
        let mut needed: Vec<usize> = todo.iter().flat_map(|&(i, j)| [i, j]).collect();
        needed.sort_unstable();
        needed.dedup();
        let sets = describe_coins(corpus, cfg, &needed)?;
        stats.coins_described = sets.len();
        let ids = corpus.ids();
        self.run_checkpointed(todo, matrix, cache, stats, |i, j| {
            let (sa, sb) = (&sets[&i], &sets[&j]);
            let matches = match_pair(sa, sb, cfg.ratio).point_matches(sa, sb);
            self.count(&matches, &ids[i], &ids[j])
        })
    }

    fn compute_from_files(
        &self,
        corpus: &Corpus,
        path: &std::path::Path,
        todo: &[(usize, usize)],
        matrix: &mut SimilarityMatrix,
        cache: &mut Option<PairCache>,
        stats: &mut BuildStats,
    ) -> Result<(), MatrixError> {
        let records = if path.is_dir() {
            corpus::read_match_dir(path, Some(corpus))?
        } else {
            corpus::read_match_file(path, Some(corpus))?
        };
        let index = corpus::index_records(records);
        let ids = corpus.ids();
        let key = |i: usize, j: usize| {
            let (a, b) = (ids[i].clone(), ids[j].clone());
            if a <= b {
                (a, b)
            } else {
                (b, a)
            }
        };
        let missing: Vec<_> = todo
            .iter()
            .map(|&(i, j)| key(i, j))
            .filter(|k| !index.contains_key(k))
            .collect();
        if !missing.is_empty() {
            return Err(MatrixError::MissingPairs(missing));
        }
        self.run_checkpointed(todo, matrix, cache, stats, |i, j| {
            let r = &index[&key(i, j)];
            self.count(&r.matches, &r.a, &r.b)
        })
    }

    fn run_checkpointed(
        &self,
        todo: &[(usize, usize)],
        matrix: &mut SimilarityMatrix,
        cache: &mut Option<PairCache>,
        stats: &mut BuildStats,
        pair_count: impl Fn(usize, usize) -> u32 + Sync,
    ) -> Result<(), MatrixError> {
        let ids = matrix.ids().to_vec();
        for chunk in todo.chunks(CHECKPOINT_PAIRS) {
            let counts: Vec<u32> = chunk.par_iter().map(|&(i, j)| pair_count(i, j)).collect();
            let mut batch = Vec::with_capacity(chunk.len());
            for (&(i, j), &count) in chunk.iter().zip(&counts) {
                matrix.set(i, j, count);
                batch.push(PairEntry {
                    a: ids[i].clone(),
                    b: ids[j].clone(),
                    count,
                });
            }
            if let Some(cache) = cache.as_mut() {
                cache.append(&batch)?;
            }
            stats.pairs_computed += chunk.len();
        }
        Ok(())
    }
}

/// Convenience wrapper around [`SimilarityBuilder::build`].
pub fn build_similarity(
    corpus: &Corpus,
    builder: &SimilarityBuilder,
) -> Result<(SimilarityMatrix, BuildStats), MatrixError> {
    builder.build(corpus)
}
