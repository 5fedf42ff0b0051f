use std::error::Error;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use diestudy::aglp::{self, Algorithm};
use diestudy::baselines::{self, Linkage, Metric};
use diestudy::corpus::{self, Corpus, GroundTruth};
use diestudy::metrics::MetricsReport;
use diestudy::pipeline::{self, PipelineConfig, CACHE_DIR_ENV};
use diestudy::simmatrix::{self, SimilarityMatrix};
use diestudy::synthkit::{self, DieSizes, MatchSynthSpec, SynthSpec};

type Result<T> = std::result::Result<T, Box<dyn Error>>;

#[derive(Parser)]
#[command(name = "diestudy", version, about = "Automatic die studies from coin images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect and match keypoints for every coin pair (NDJSON candidates)
    Match {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5000)]
        top_k: usize,
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Robustly filter candidate matches (NDJSON in, NDJSON out)
    Filter {
        /// Match file or directory of match files
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10.0)]
        sigma_max: f64,
        #[arg(long, default_value_t = 0.99)]
        confidence: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Build the similarity matrix of filtered match counts
    Matrix {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Cluster the threshold graph at one tau
    Cluster {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        tau: u32,
        #[arg(long, default_value = "label_propagation")]
        algorithm: Algorithm,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep every tau and keep the best-silhouette partition
    Sweep {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long, default_value = "label_propagation")]
        algorithm: Algorithm,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        ground_truth: Option<PathBuf>,
        /// Output directory for sweep.csv and partition.csv
        #[arg(long)]
        out: PathBuf,
    },
    /// Agglomerative baseline with the ground-truth oracle cut
    Baseline {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        ground_truth: PathBuf,
        #[arg(long, default_value = "average")]
        linkage: Linkage,
        #[arg(long, default_value = "ami")]
        metric: Metric,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a partition against ground truth
    Eval {
        #[arg(long)]
        partition: PathBuf,
        #[arg(long)]
        ground_truth: PathBuf,
        /// Coin order; defaults to the partition file order
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic corpus with ground truth
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 15)]
        n_dies: usize,
        #[arg(long, default_value_t = 80)]
        coins: usize,
        #[arg(long, default_value_t = 8.0 / 15.0)]
        singleton_fraction: f64,
        #[arg(long, default_value_t = 192)]
        size: u32,
        #[arg(long, default_value_t = 1.0)]
        warp: f64,
        #[arg(long, default_value_t = 6.0)]
        noise: f64,
        #[arg(long, default_value_t = 0.06)]
        wear: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Write candidate match records with this fraction of spurious
        /// cross-die pairs instead of images
        #[arg(long)]
        spurious_fraction: Option<f64>,
    },
    /// Full pipeline: matrix, sweep, partition and reports
    Run {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        ground_truth: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

/// Pipeline settings; flags override the JSON config file.
#[derive(Args)]
struct ConfigArgs {
    /// JSON file with PipelineConfig keys
    #[arg(long)]
    config: Option<PathBuf>,
    /// Match file or directory to use instead of the built-in matcher
    #[arg(long)]
    matches: Option<PathBuf>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    no_filter: bool,
    #[arg(long)]
    sigma_max: Option<f64>,
    #[arg(long)]
    confidence: Option<f64>,
    #[arg(long)]
    algorithm: Option<Algorithm>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, env = CACHE_DIR_ENV)]
    cache_dir: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(path) => PipelineConfig::from_json_file(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(v) = &self.matches {
            c.match_dir = Some(v.clone());
        }
        c.top_k = self.top_k.unwrap_or(c.top_k);
        c.filter &= !self.no_filter;
        c.sigma_max = self.sigma_max.unwrap_or(c.sigma_max);
        c.confidence = self.confidence.unwrap_or(c.confidence);
        c.algorithm = self.algorithm.unwrap_or(c.algorithm);
        c.seed = self.seed.unwrap_or(c.seed);
        c.workers = self.workers.unwrap_or(c.workers);
        if let Some(v) = &self.cache_dir {
            c.cache_dir = Some(v.clone());
        }
        c.validate()?;
        Ok(c)
    }
}

fn matrix_corpus(m: &SimilarityMatrix) -> Result<Corpus> {
    Ok(Corpus::from_ids("matrix", m.ids().iter().map(|id| id.to_string()))?)
}

fn print_json<T: serde::Serialize>(value: &T) {
    use std::io::Write;
    // a closed pipe (e.g. `| head`) is not an error for a report
    let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(value).expect("report serializes"));
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()).into())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Match {
            manifest,
            out,
            top_k,
            workers,
        } => {
            let corpus = corpus::load_manifest(&manifest)?;
            let config = diestudy::matcher::MatcherConfig {
                top_k,
                ..Default::default()
            };
            let records = simmatrix::candidate_records(&corpus, &config, workers)?;
            corpus::write_match_file(&records, &out)?;
            log::info!("{} pair records written to {}", records.len(), out.display());
        }
        Command::Filter {
            input,
            out,
            sigma_max,
            confidence,
            seed,
        } => {
            let config = diestudy::robust::MagsacConfig {
                sigma_max,
                confidence,
                ..Default::default()
            };
            let records = if input.is_dir() {
                corpus::read_match_dir(&input, None)?
            } else {
                corpus::read_match_file(&input, None)?
            };
            let filtered: Vec<_> = {
                use rayon::prelude::*;
                records.par_iter().map(|r| simmatrix::filter_record(r, &config, seed)).collect()
            };
            corpus::write_match_file(&filtered, &out)?;
        }
        Command::Matrix { manifest, out, config } => {
            let config = config.resolve()?;
            let corpus = corpus::load_manifest(&manifest)?;
            let (matrix, stats) = config.builder().build(&corpus)?;
            matrix.write_csv(&out)?;
            print_json(&stats);
        }
        Command::Cluster {
            matrix,
            tau,
            algorithm,
            seed,
            out,
        } => {
            if tau == 0 {
                return Err("tau must be at least 1".into());
            }
            let m = SimilarityMatrix::read_csv(&matrix)?;
            let p = aglp::cluster(&aglp::build_graph(&m, tau), algorithm, seed);
            aglp::write_partition_csv(m.ids(), &p, &out)?;
            println!("{} clusters", p.n_clusters());
        }
        Command::Sweep {
            matrix,
            algorithm,
            seed,
            ground_truth,
            out,
        } => {
            let m = SimilarityMatrix::read_csv(&matrix)?;
            let d = simmatrix::to_dissimilarity(&m)?;
            let truth = match ground_truth {
                Some(path) => Some(corpus::load_ground_truth(&path, &matrix_corpus(&m)?)?.partition()),
                None => None,
            };
            let sweep = aglp::sweep_thresholds(&m, &d, algorithm, seed, truth.as_ref())?;
            create_dir(&out)?;
            sweep.write_csv(&out.join("sweep.csv"))?;
            aglp::write_partition_csv(m.ids(), &sweep.best, &out.join("partition.csv"))?;
            println!("tau* = {}, {} clusters", sweep.tau_star, sweep.best.n_clusters());
        }
        Command::Baseline {
            matrix,
            ground_truth,
            linkage,
            metric,
            out,
        } => {
            let m = SimilarityMatrix::read_csv(&matrix)?;
            let d = simmatrix::to_dissimilarity(&m)?;
            let gt = corpus::load_ground_truth(&ground_truth, &matrix_corpus(&m)?)?;
            let dend = baselines::agglomerative(&d, linkage);
            let best = baselines::oracle_best_cut(&dend, &gt.partition(), metric)?;
            create_dir(&out)?;
            dend.write_csv(&out.join("dendrogram.csv"))?;
            aglp::write_partition_csv(m.ids(), &best.partition, &out.join("partition.csv"))?;
            let report = MetricsReport::compute(&gt.partition(), &best.partition)?;
            pipeline::write_json(&out.join("metrics.json"), &report)?;
            print_json(&report);
        }
        Command::Eval {
            partition,
            ground_truth,
            manifest,
            out,
        } => {
            let corpus = match manifest {
                Some(path) => corpus::load_manifest(&path)?,
                None => partition_corpus(&partition)?,
            };
            let pred = aglp::read_partition_csv(&partition, &corpus)?;
            let gt: GroundTruth = corpus::load_ground_truth(&ground_truth, &corpus)?;
            let report = MetricsReport::compute(&gt.partition(), &pred)?;
            if let Some(path) = out {
                pipeline::write_json(&path, &report)?;
            }
            print_json(&report);
        }
        Command::Synth {
            out,
            n_dies,
            coins,
            singleton_fraction,
            size,
            warp,
            noise,
            wear,
            seed,
            spurious_fraction,
        } => {
            let spec = SynthSpec {
                n_dies,
                die_sizes: DieSizes::Skewed {
                    coins,
                    singleton_fraction,
                },
                image_size: size,
                warp,
                noise,
                wear,
                seed,
            };
            match spurious_fraction {
                None => {
                    let (corpus, gt) = synthkit::generate_corpus(&spec, &out)?;
                    println!("{} coins from {} dies in {}", corpus.len(), gt.n_dies(), out.display());
                }
                Some(fraction) => {
                    let matches = MatchSynthSpec {
                        spurious_fraction: fraction,
                        seed,
                        ..Default::default()
                    };
                    let (corpus, gt, records) = synthkit::synth_match_corpus(&spec, &matches)?;
                    create_dir(&out)?;
                    corpus::write_manifest(&corpus, &out.join("manifest.csv"))?;
                    corpus::write_ground_truth(&gt, &out.join("ground_truth.csv"))?;
                    corpus::write_match_file(&records, &out.join("matches.ndjson"))?;
                    println!("{} coins, {} pair records in {}", corpus.len(), records.len(), out.display());
                }
            }
        }
        Command::Run {
            manifest,
            ground_truth,
            out,
            config,
        } => {
            let config = config.resolve()?;
            let corpus = corpus::load_manifest(&manifest)?;
            let gt = ground_truth
                .map(|path| corpus::load_ground_truth(&path, &corpus))
                .transpose()?;
            let output = pipeline::run_pipeline(&config, &corpus, gt.as_ref())?;
            pipeline::write_outputs(&out, &config, &output)?;
            println!(
                "tau* = {}, {} clusters, outputs in {}",
                output.sweep.tau_star,
                output.sweep.best.n_clusters(),
                out.display()
            );
            if let Some(report) = output.metrics {
                print_json(&report);
            }
        }
    }
    Ok(())
}

/// Corpus in the row order of a `coin_id,cluster_id` file.
fn partition_corpus(path: &Path) -> Result<Corpus> {
    let mut reader = csv::Reader::from_path(path)?;
    let ids = reader
        .records()
        .map(|r| r.map(|r| r.get(0).unwrap_or_default().trim().to_string()))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(Corpus::from_ids("partition", ids)?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
