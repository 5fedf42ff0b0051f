use std::sync::OnceLock;

use image::GrayImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::Descriptor;

const PAIRS: usize = 256;
const ANGLE_BINS: usize = 30;
/// Test points stay inside this radius so every rotation fits the patch.
const SAMPLE_RADIUS: f32 = 13.0;
const PATTERN_SEED: u64 = 0x0b5e_55ed;

type Pattern = [[(i8, i8); 2]; PAIRS];

/// Base test pattern, isotropic Gaussian around the keypoint, fixed seed.
fn base_pattern() -> Vec<[(f32, f32); 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(PATTERN_SEED);
    let normal = Normal::new(0.0f32, 31.0 / 5.0).expect("valid normal");
    let point = |rng: &mut ChaCha8Rng| loop {
        let p = (normal.sample(rng), normal.sample(rng));
        if p.0 * p.0 + p.1 * p.1 <= SAMPLE_RADIUS * SAMPLE_RADIUS {
            return p;
        }
    };
    (0..PAIRS)
        .map(|_| loop {
            let p = point(&mut rng);
            let q = point(&mut rng);
            if (p.0.round(), p.1.round()) != (q.0.round(), q.1.round()) {
                return [p, q];
            }
        })
        .collect()
}

/// Pattern rotated into each of the quantized orientation bins.
fn steered_patterns() -> &'static [Pattern] {
    static PATTERNS: OnceLock<Vec<Pattern>> = OnceLock::new();
    PATTERNS.get_or_init(|| {
        let base = base_pattern();
        (0..ANGLE_BINS)
            .map(|bin| {
                let theta = bin as f32 * std::f32::consts::TAU / ANGLE_BINS as f32;
                let (s, c) = theta.sin_cos();
                let rot = |(x, y): (f32, f32)| ((c * x - s * y).round() as i8, (s * x + c * y).round() as i8);
                let mut pattern = [[(0i8, 0i8); 2]; PAIRS];
                for (dst, [p, q]) in pattern.iter_mut().zip(&base) {
                    *dst = [rot(*p), rot(*q)];
                }
                pattern
            })
            .collect()
    })
}

fn angle_bin(angle: f32) -> usize {
    let turns = angle.rem_euclid(std::f32::consts::TAU) / std::f32::consts::TAU;
    ((turns * ANGLE_BINS as f32).round() as usize) % ANGLE_BINS
}

/// Binary intensity comparisons on a smoothed image, steered by `angle`.
/// The caller guarantees the patch lies inside the image.
pub(crate) fn describe(smoothed: &GrayImage, x: u32, y: u32, angle: f32) -> Descriptor {
    let pattern = &steered_patterns()[angle_bin(angle)];
    let (w, raw) = (smoothed.width() as i32, smoothed.as_raw());
    let (x, y) = (x as i32, y as i32);
    let at = |(dx, dy): (i8, i8)| raw[((y + dy as i32) * w + x + dx as i32) as usize];
    let mut bits = [0u64; 4];
    for (k, [p, q]) in pattern.iter().enumerate() {
        if at(*p) < at(*q) {
            bits[k / 64] |= 1 << (k % 64);
        }
    }
    Descriptor(bits)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pattern_fits_patch() {
        for pattern in steered_patterns() {
            for [p, q] in pattern {
                for (x, y) in [p, q] {
                    assert!((*x as i32).abs() <= super::super::detect::PATCH_RADIUS);
                    assert!((*y as i32).abs() <= super::super::detect::PATCH_RADIUS);
                }
            }
        }
    }

    #[test]
    fn bins_wrap() {
        assert_eq!(angle_bin(0.0), 0);
        assert_eq!(angle_bin(std::f32::consts::TAU - 1e-4), 0);
        assert_eq!(angle_bin(-std::f32::consts::PI), ANGLE_BINS / 2);
    }
}
