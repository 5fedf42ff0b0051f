//! Threshold sweep: silhouette against AMI at every attained τ, the data
//! behind a silhouette-vs-threshold plot.

use diestudy::aglp::{sweep_thresholds, Algorithm};
use diestudy::metrics::pearson;
use diestudy::simmatrix::to_dissimilarity;
use diestudy::synthkit::{synth_match_corpus, MatchSynthSpec, SynthSpec};
use diestudy::simmatrix::{filter_record, SimilarityMatrix};
use diestudy::robust::MagsacConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // match-file corpus: no images needed, filtering still runs
    let (corpus, gt, records) = synth_match_corpus(&SynthSpec::default(), &MatchSynthSpec::default())?;
    let mut m = SimilarityMatrix::zeros(corpus.ids());
    let config = MagsacConfig::default();
    for r in &records {
        let kept = filter_record(r, &config, 0).matches.len() as u32;
        m.set(corpus.position(&r.a).unwrap(), corpus.position(&r.b).unwrap(), kept);
    }
    let d = to_dissimilarity(&m)?;
    let truth = gt.partition();
    let sweep = sweep_thresholds(&m, &d, Algorithm::LabelPropagation, 0, Some(&truth))?;
    println!("{:>5} {:>10} {:>9} {:>7}", "tau", "silhouette", "clusters", "ami");
    for row in sweep.rows.iter().step_by(4) {
        let s = row.silhouette.map_or("-".into(), |s| format!("{s:.4}"));
        println!("{:>5} {s:>10} {:>9} {:>7.4}", row.tau, row.n_clusters(), row.external.unwrap().ami);
    }
    let (s, a): (Vec<f64>, Vec<f64>) = sweep
        .valid_rows()
        .map(|r| (r.silhouette.unwrap(), r.external.unwrap().ami))
        .unzip();
    println!("tau* = {}, AMI there = {:.4}", sweep.tau_star, sweep.best_row().external.unwrap().ami);
    println!("pearson(silhouette, AMI) = {:.3}", pearson(&s, &a).unwrap_or(f64::NAN));
    Ok(())
}
