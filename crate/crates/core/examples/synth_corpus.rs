//! Generates a synthetic corpus with skewed die sizes.
//!
//!     cargo run --release --example synth_corpus -- /tmp/coins

use diestudy::synthkit::{generate_corpus, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("diestudy-synth"));
    let spec = SynthSpec::default();
    println!("die sizes: {:?}", spec.die_counts()?);
    let (corpus, gt) = generate_corpus(&spec, &out)?;
    println!("{} coins from {} dies written to {}", corpus.len(), gt.n_dies(), out.display());
    println!("manifest.csv and ground_truth.csv sit next to the images");
    Ok(())
}
