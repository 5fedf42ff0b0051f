//! Runs the pipeline on externally produced NDJSON match files, with and
//! without robust filtering. A fifth of the cross-die pairs carry planted
//! spurious matches.

use diestudy::corpus::{read_match_file, write_match_file};
use diestudy::pipeline::{run_pipeline, PipelineConfig};
use diestudy::synthkit::{synth_match_corpus, MatchSynthSpec, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("diestudy-ingest-example");
    std::fs::create_dir_all(&dir)?;
    let (corpus, gt, records) = synth_match_corpus(&SynthSpec::default(), &MatchSynthSpec::default())?;
    let path = dir.join("matches.ndjson");
    write_match_file(&records, &path)?;
    println!("{} records, re-read: {}", records.len(), read_match_file(&path, Some(&corpus))?.len());
    for filter in [true, false] {
        let config = PipelineConfig {
            match_dir: Some(path.clone()),
            filter,
            ..Default::default()
        };
        let out = run_pipeline(&config, &corpus, Some(&gt))?;
        let r = out.metrics.expect("ground truth given");
        println!(
            "filter {:>5}: tau* {:>3}, {:>2} clusters, AMI {:.4}, ARI {:.4}",
            filter,
            out.sweep.tau_star,
            out.partition().n_clusters(),
            r.ami,
            r.ari
        );
    }
    Ok(())
}
