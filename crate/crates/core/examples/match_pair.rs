//! Keypoints and mutual nearest-neighbour matches between coin images.

use diestudy::matcher::{detect_and_describe, match_pair, MatcherConfig};
use diestudy::synthkit::{render_coins, DieSizes, SynthSpec};

fn main() {
    let spec = SynthSpec {
        n_dies: 2,
        die_sizes: DieSizes::Uniform(2),
        ..Default::default()
    };
    let (dies, images) = render_coins(&spec).expect("valid spec");
    let config = MatcherConfig::default();
    let sets: Vec<_> = images.iter().map(|img| detect_and_describe(img, &config)).collect();
    for (k, set) in sets.iter().enumerate() {
        println!("coin {k} (die {}): {} keypoints", dies[k], set.len());
    }
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            let matches = match_pair(&sets[i], &sets[j], config.ratio);
            let kind = if dies[i] == dies[j] { "same die" } else { "different dies" };
            println!("{i}-{j} {kind:>15}: {} candidate matches", matches.len());
        }
    }
}
