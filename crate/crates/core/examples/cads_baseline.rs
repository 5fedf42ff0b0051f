//! Average-linkage agglomeration with the ground-truth oracle cut, next to
//! the silhouette-selected label-propagation partition on the same matrix.

use diestudy::aglp::{sweep_thresholds, Algorithm};
use diestudy::baselines::{agglomerative, oracle_best_cut, Linkage, Metric};
use diestudy::metrics::MetricsReport;
use diestudy::robust::MagsacConfig;
use diestudy::simmatrix::{filter_record, to_dissimilarity, SimilarityMatrix};
use diestudy::synthkit::{synth_match_corpus, MatchSynthSpec, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (corpus, gt, records) = synth_match_corpus(&SynthSpec::default(), &MatchSynthSpec::default())?;
    let mut m = SimilarityMatrix::zeros(corpus.ids());
    for r in &records {
        let kept = filter_record(r, &MagsacConfig::default(), 0).matches.len() as u32;
        m.set(corpus.position(&r.a).unwrap(), corpus.position(&r.b).unwrap(), kept);
    }
    let d = to_dissimilarity(&m)?;
    let truth = gt.partition();
    for linkage in [Linkage::Average, Linkage::Single, Linkage::Complete] {
        let dend = agglomerative(&d, linkage);
        let best = oracle_best_cut(&dend, &truth, Metric::Ami)?;
        println!(
            "{linkage:?} linkage oracle cut: AMI {:.4} after {} merges, {} clusters",
            best.score,
            best.level,
            best.partition.n_clusters()
        );
    }
    let sweep = sweep_thresholds(&m, &d, Algorithm::LabelPropagation, 0, None)?;
    let r = MetricsReport::compute(&truth, &sweep.best)?;
    println!("label propagation at tau* = {}: AMI {:.4}, no ground truth used", sweep.tau_star, r.ami);
    Ok(())
}
