//! MAGSAC++ on planted correspondences: 60 inliers (σ = 1 px) and 40
//! uniform outliers in a 512 px frame.

use diestudy::robust::{magsac_filter, MagsacConfig};
use diestudy::synthkit::plant_correspondences;

fn main() {
    let config = MagsacConfig::default();
    for seed in 0..5 {
        let planted = plant_correspondences(60, 40, 1.0, 512.0, seed).expect("enough inliers");
        let report = magsac_filter(&planted.matches, &config, seed);
        let (mut hit, mut false_pos) = (0, 0);
        for (&kept, &truth) in report.inlier_mask.iter().zip(&planted.inlier_mask) {
            match (kept, truth) {
                (true, true) => hit += 1,
                (true, false) => false_pos += 1,
                _ => {}
            }
        }
        println!(
            "seed {seed}: {:?}, {} inliers kept, recall {:.3}, false inliers {}/{}, {} iterations",
            report.outcome,
            report.inlier_count,
            hit as f64 / 60.0,
            false_pos,
            report.inlier_count,
            report.iterations_used
        );
    }
}
