//! All-pairs similarity matrix with a persistent pair cache: the second
//! build reads every pair from disk.

use diestudy::matcher::MatcherConfig;
use diestudy::simmatrix::{to_dissimilarity, MatchSource, SimilarityBuilder};
use diestudy::synthkit::{generate_corpus, DieSizes, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::temp_dir().join("diestudy-matrix-example");
    let spec = SynthSpec {
        n_dies: 3,
        die_sizes: DieSizes::Explicit(vec![3, 2, 1]),
        ..Default::default()
    };
    let (corpus, gt) = generate_corpus(&spec, &root.join("coins"))?;
    let mut builder = SimilarityBuilder::new(MatchSource::Builtin(MatcherConfig::default()));
    builder.cache_dir = Some(root.join("cache"));
    let (m, stats) = builder.build(&corpus)?;
    println!("first build: {} computed, {} cached", stats.pairs_computed, stats.pairs_cached);
    let (again, stats) = builder.build(&corpus)?;
    println!("second build: {} computed, {} cached", stats.pairs_computed, stats.pairs_cached);
    assert_eq!(m, again);

    print!("{:>9}", "");
    for id in m.ids() {
        print!("{:>9}", id.as_str());
    }
    println!();
    for i in 0..m.len() {
        print!("{:>9}", gt.labels()[i]);
        for &v in m.row(i) {
            print!("{v:>9}");
        }
        println!();
    }
    let d = to_dissimilarity(&m)?;
    println!("D(0,1) = {}, max(M) = {}", d.get(0, 1), m.max_offdiag());
    Ok(())
}
