//! Full die study on a synthetic corpus of 80 coins from 15 dies: images,
//! matching, filtering, sweep and reports.
//!
//!     cargo run --release --example end_to_end -- /tmp/study

use diestudy::pipeline::{run_pipeline, write_outputs, PipelineConfig};
use diestudy::synthkit::{generate_corpus, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let root: std::path::PathBuf = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("diestudy-end-to-end"));
    let (corpus, gt) = generate_corpus(&SynthSpec::default(), &root.join("coins"))?;
    let config = PipelineConfig {
        cache_dir: Some(root.join("cache")),
        ..Default::default()
    }
    .with_env();
    let out = run_pipeline(&config, &corpus, Some(&gt))?;
    write_outputs(&root.join("report"), &config, &out)?;
    let r = out.metrics.expect("ground truth given");
    println!("{} coins -> {} clusters (truth: {} dies)", corpus.len(), out.partition().n_clusters(), gt.n_dies());
    println!("AMI {:.4}  ARI {:.4}  FMI {:.4}", r.ami, r.ari, r.fmi);
    println!("reports in {}", root.join("report").display());
    Ok(())
}
