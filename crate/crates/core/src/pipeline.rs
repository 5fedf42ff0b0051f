//! End-to-end composition: matches → filter → M → D → sweep → partition,
//! plus the on-disk report layout.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aglp::{self, AglpError, Algorithm, SweepResult};
use crate::corpus::{CorpusError, Corpus, GroundTruth};
use crate::matcher::MatcherConfig;
use crate::metrics::{MetricsError, MetricsReport};
use crate::robust::MagsacConfig;
use crate::simmatrix::{self, BuildStats, MatchSource, MatrixError, SimilarityBuilder, SimilarityMatrix};
use crate::Partition;

/// Overrides `cache_dir` when set.
pub const CACHE_DIR_ENV: &str = "DIESTUDY_CACHE_DIR";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Aglp(#[from] AglpError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// NDJSON match file or directory; `None` runs the built-in matcher.
    pub match_dir: Option<PathBuf>,
    pub top_k: usize,
    pub filter: bool,
    pub sigma_max: f64,
    pub confidence: f64,
    pub algorithm: Algorithm,
    pub seed: u64,
    /// 0 uses every available core.
    pub workers: usize,
    pub cache_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let magsac = MagsacConfig::default();
        PipelineConfig {
            match_dir: None,
            top_k: MatcherConfig::default().top_k,
            filter: true,
            sigma_max: magsac.sigma_max,
            confidence: magsac.confidence,
            algorithm: Algorithm::LabelPropagation,
            seed: 0,
            workers: 0,
            cache_dir: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_json_file(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
        let config: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        if self.top_k == 0 {
            return bad("top_k must be positive");
        }
        if !(self.sigma_max > 0.0) {
            return bad("sigma_max must be positive");
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return bad("confidence must lie in (0, 1)");
        }
        Ok(())
    }

    /// Applies the cache-directory environment override.
    pub fn with_env(mut self) -> Self {
        if let Some(dir) = std::env::var_os(CACHE_DIR_ENV).filter(|v| !v.is_empty()) {
            self.cache_dir = Some(dir.into());
        }
        self
    }

    pub fn matcher(&self) -> MatcherConfig {
        MatcherConfig {
            top_k: self.top_k,
            ..Default::default()
        }
    }

    pub fn magsac(&self) -> Option<MagsacConfig> {
        self.filter.then(|| MagsacConfig {
            sigma_max: self.sigma_max,
            confidence: self.confidence,
            ..Default::default()
        })
    }

    pub fn builder(&self) -> SimilarityBuilder {
        let source = match &self.match_dir {
            Some(dir) => MatchSource::MatchFiles(dir.clone()),
            None => MatchSource::Builtin(self.matcher()),
        };
        SimilarityBuilder {
            source,
            filter: self.magsac(),
            seed: self.seed,
            workers: self.workers,
            cache_dir: self.cache_dir.clone(),
        }
    }

    /// Hash over the fields that change results; workers and cache location
    /// do not.
    pub fn result_hash(&self) -> String {
        let key = serde_json::json!({
            "match_dir": self.match_dir,
            "top_k": self.top_k,
            "filter": self.filter,
            "sigma_max": self.sigma_max,
            "confidence": self.confidence,
            "algorithm": self.algorithm,
            "seed": self.seed,
        });
        hex::encode(Sha256::digest(key.to_string().as_bytes()))
    }
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub matrix: SimilarityMatrix,
    pub sweep: SweepResult,
    pub metrics: Option<MetricsReport>,
    pub stats: BuildStats,
    pub elapsed_secs: f64,
}

impl PipelineOutput {
    pub fn partition(&self) -> &Partition {
        &self.sweep.best
    }
}

/// Contents of `metrics.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub n_coins: usize,
    pub tau_star: u32,
    pub silhouette: f64,
    pub n_clusters: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub external: Option<MetricsReport>,
}

/// Contents of `run.json`; the only output carrying timings.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub config: PipelineConfig,
    pub build: BuildStats,
    pub elapsed_secs: f64,
}

pub fn run_pipeline(
    config: &PipelineConfig,
    corpus: &Corpus,
    truth: Option<&GroundTruth>,
) -> Result<PipelineOutput, PipelineError> {
    config.validate()?;
    let start = Instant::now();
    let (matrix, stats) = config.builder().build(corpus)?;
    log::info!(
        "similarity matrix: {} pairs, {} cached, {} computed",
        stats.pairs_total,
        stats.pairs_cached,
        stats.pairs_computed
    );
    let d = simmatrix::to_dissimilarity(&matrix)?;
    let truth = truth.map(GroundTruth::partition);
    let sweep = simmatrix::with_pool(config.workers, || {
        aglp::sweep_thresholds(&matrix, &d, config.algorithm, config.seed, truth.as_ref())
    })?;
    let metrics = truth.as_ref().map(|t| MetricsReport::compute(t, &sweep.best)).transpose()?;
    log::info!("tau* = {}, {} clusters", sweep.tau_star, sweep.best.n_clusters());
    Ok(PipelineOutput {
        matrix,
        sweep,
        metrics,
        stats,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

/// Writes `partition.csv`, `sweep.csv`, `metrics.json`, `matrix.csv` and
/// `run.json` into `dir`.
pub fn write_outputs(dir: &Path, config: &PipelineConfig, out: &PipelineOutput) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir).map_err(|e| CorpusError::io(dir, e))?;
    aglp::write_partition_csv(out.matrix.ids(), &out.sweep.best, &dir.join("partition.csv"))?;
    out.sweep.write_csv(&dir.join("sweep.csv"))?;
    out.matrix.write_csv(&dir.join("matrix.csv"))?;
    let best = out.sweep.best_row();
    let summary = RunSummary {
        n_coins: out.matrix.len(),
        tau_star: out.sweep.tau_star,
        silhouette: best.silhouette.expect("selected row is valid"),
        n_clusters: best.n_clusters(),
        external: out.metrics,
    };
    write_json(&dir.join("metrics.json"), &summary)?;
    let record = RunRecord {
        config_hash: config.result_hash(),
        config: config.clone(),
        build: out.stats.clone(),
        elapsed_secs: out.elapsed_secs,
    };
    write_json(&dir.join("run.json"), &record)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CorpusError::io(path, e).into())
}
