//! Deterministic synthetic data with known ground truth: coin corpora
//! struck from procedural dies, planted-homography correspondence sets and
//! match-file corpora.

use std::collections::HashMap;
use std::path::Path;

use image::{GrayImage, Luma};
use nalgebra::Matrix3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{self, CoinId, Corpus, CorpusError, GroundTruth, MatchRecord, PointMatch};
use crate::robust::Homography;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("cannot write {path}: {message}")]
    Write { path: String, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// How many coins each die struck.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DieSizes {
    /// Every die has the same number of coins.
    Uniform(usize),
    /// One entry per die.
    Explicit(Vec<usize>),
    /// `coins` in total; `singleton_fraction` of the dies have one coin and
    /// the rest share the remaining coins with geometrically decaying sizes.
    Skewed { coins: usize, singleton_fraction: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_dies: usize,
    pub die_sizes: DieSizes,
    /// Square image side, pixels.
    pub image_size: u32,
    /// Scales the random per-coin projective perturbation; 0 disables it.
    pub warp: f64,
    /// Additive Gaussian intensity noise σ (grey levels).
    pub noise: f64,
    /// Fraction of the coin area covered by flat wear patches.
    pub wear: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    /// 80 coins from 15 dies, 8 of them singletons.
    fn default() -> Self {
        SynthSpec {
            n_dies: 15,
            die_sizes: DieSizes::Skewed {
                coins: 80,
                singleton_fraction: 8.0 / 15.0,
            },
            image_size: 192,
            warp: 1.0,
            noise: 6.0,
            wear: 0.06,
            seed: 1,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.to_string()));
        if self.n_dies == 0 {
            return bad("n_dies must be positive");
        }
        if self.image_size < 64 {
            return bad("image_size must be at least 64");
        }
        if !(0.0..=1.0).contains(&self.wear) {
            return bad("wear must lie in [0, 1]");
        }
        if !(self.warp >= 0.0) || !(self.noise >= 0.0) {
            return bad("warp and noise must be nonnegative");
        }
        self.die_counts().map(|_| ())
    }

    /// Number of coins per die.
    pub fn die_counts(&self) -> Result<Vec<usize>, SynthError> {
        let invalid = |m: String| Err(SynthError::InvalidSpec(m));
        match &self.die_sizes {
            DieSizes::Uniform(k) => Ok(vec![*k; self.n_dies]),
            DieSizes::Explicit(v) if v.len() == self.n_dies => Ok(v.clone()),
            DieSizes::Explicit(v) => invalid(format!("{} sizes for {} dies", v.len(), self.n_dies)),
            DieSizes::Skewed {
                coins,
                singleton_fraction,
            } => {
                if !(0.0..=1.0).contains(singleton_fraction) {
                    return invalid("singleton_fraction must lie in [0, 1]".into());
                }
                let singles = (singleton_fraction * self.n_dies as f64).round() as usize;
                let multi = self.n_dies - singles;
                if multi == 0 {
                    return Ok(vec![1; self.n_dies]);
                }
                let rest = coins.checked_sub(singles + 2 * multi).ok_or_else(|| {
                    SynthError::InvalidSpec(format!("{coins} coins cannot fill {multi} multi-coin dies"))
                })?;
                // largest-remainder split of the surplus with decaying weights
                let weights: Vec<f64> = (0..multi).map(|k| 0.78f64.powi(k as i32)).collect();
                let total: f64 = weights.iter().sum();
                let shares: Vec<f64> = weights.iter().map(|w| w / total * rest as f64).collect();
                let mut sizes: Vec<usize> = shares.iter().map(|s| 2 + s.floor() as usize).collect();
                let mut left = rest - shares.iter().map(|s| s.floor() as usize).sum::<usize>();
                let mut order: Vec<usize> = (0..multi).collect();
                order.sort_by(|&a, &b| (shares[b] - shares[b].floor()).total_cmp(&(shares[a] - shares[a].floor())));
                for &k in order.iter().cycle() {
                    if left == 0 {
                        break;
                    }
                    sizes[k] += 1;
                    left -= 1;
                }
                sizes.extend(std::iter::repeat_n(1, singles));
                Ok(sizes)
            }
        }
    }

    /// Die index of every coin, in a seeded random corpus order.
    pub fn die_assignment(&self) -> Result<Vec<usize>, SynthError> {
        let mut dies: Vec<usize> = self
            .die_counts()?
            .iter()
            .enumerate()
            .flat_map(|(d, &k)| std::iter::repeat_n(d, k))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ ORDER_SALT);
        dies.shuffle(&mut rng);
        Ok(dies)
    }
}

const ORDER_SALT: u64 = 0x5eed_0de5;

fn coin_id(k: usize) -> CoinId {
    CoinId::new(format!("coin_{k:03}")).expect("non-empty id")
}

fn die_label(d: usize) -> String {
    format!("die_{d:02}")
}

fn ground_truth_for(corpus: &Corpus, dies: &[usize]) -> Result<GroundTruth, CorpusError> {
    let labels: HashMap<CoinId, String> = corpus
        .ids()
        .into_iter()
        .zip(dies)
        .map(|(id, &d)| (id, die_label(d)))
        .collect();
    GroundTruth::new(corpus, &labels)
}

/// Height field of a die: random strokes, rings, discs and glyph-like
/// polylines, normalized to roughly `[0, 1]`.
fn render_die(size: u32, seed: u64) -> Vec<f32> {
    let s = size as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = vec![0f32; s * s];
    let sz = size as f32;
    let (cx, cy, radius) = (sz / 2.0, sz / 2.0, sz * 0.46);
    let inside = |x: f32, y: f32| (x - cx).powi(2) + (y - cy).powi(2) < (radius * 0.92).powi(2);
    let stamp = |h: &mut Vec<f32>, f: &dyn Fn(f32, f32) -> f32, bbox: (f32, f32, f32, f32)| {
        let (x0, y0, x1, y1) = bbox;
        for y in (y0.max(0.0) as usize)..(y1.min(sz - 1.0) as usize) {
            for x in (x0.max(0.0) as usize)..(x1.min(sz - 1.0) as usize) {
                let v = f(x as f32, y as f32);
                if v != 0.0 {
                    h[y * s + x] += v;
                }
            }
        }
    };
    let unit = sz / 192.0;
    let primitives = 70;
    for _ in 0..primitives {
        let (px, py) = loop {
            let p = (rng.random_range(0.0..sz), rng.random_range(0.0..sz));
            if inside(p.0, p.1) {
                break p;
            }
        };
        let amp: f32 = rng.random_range(0.35..1.0) * if rng.random_bool(0.3) { -1.0 } else { 1.0 };
        match rng.random_range(0..4) {
            0 => {
                let r = rng.random_range(2.5..8.0) * unit;
                stamp(&mut h, &|x, y| if (x - px).powi(2) + (y - py).powi(2) < r * r { amp } else { 0.0 }, (px - r, py - r, px + r + 1.0, py + r + 1.0));
            }
            1 => {
                let r = rng.random_range(5.0..14.0) * unit;
                let t = rng.random_range(1.5..3.0) * unit;
                stamp(
                    &mut h,
                    &|x, y| {
                        let d = ((x - px).powi(2) + (y - py).powi(2)).sqrt();
                        if (d - r).abs() < t { amp } else { 0.0 }
                    },
                    (px - r - t, py - r - t, px + r + t + 1.0, py + r + t + 1.0),
                );
            }
            2 => {
                let w = rng.random_range(3.0..12.0) * unit;
                let hh = rng.random_range(3.0..12.0) * unit;
                stamp(&mut h, &|_, _| amp, (px, py, px + w, py + hh));
            }
            _ => {
                // glyph: 2-4 connected thick strokes
                let mut p = (px, py);
                let t = rng.random_range(1.2..2.4) * unit;
                for _ in 0..rng.random_range(2..5) {
                    let ang: f32 = rng.random_range(0.0..std::f32::consts::TAU);
                    let len = rng.random_range(6.0..18.0) * unit;
                    let q = (p.0 + len * ang.cos(), p.1 + len * ang.sin());
                    let (a, b) = (p, q);
                    stamp(
                        &mut h,
                        &|x, y| {
                            let (dx, dy) = (b.0 - a.0, b.1 - a.1);
                            let l2 = dx * dx + dy * dy;
                            let u = (((x - a.0) * dx + (y - a.1) * dy) / l2).clamp(0.0, 1.0);
                            let d2 = (x - a.0 - u * dx).powi(2) + (y - a.1 - u * dy).powi(2);
                            if d2 < t * t { amp } else { 0.0 }
                        },
                        (a.0.min(b.0) - t, a.1.min(b.1) - t, a.0.max(b.0) + t + 1.0, a.1.max(b.1) + t + 1.0),
                    );
                    p = q;
                }
            }
        }
    }
    h
}

/// Die texture as a relief-shaded intensity image (f32 grey levels).
fn shade_die(size: u32, seed: u64) -> Vec<f32> {
    let s = size as usize;
    let h = render_die(size, seed);
    let sz = size as f32;
    let (cx, cy, radius) = (sz / 2.0, sz / 2.0, sz * 0.46);
    let mut out = vec![0f32; s * s];
    for y in 0..s {
        for x in 0..s {
            let d = ((x as f32 - cx).powi(2) + (y as f32 - cy).powi(2)).sqrt();
            // soft-edged metal disc on a dark background
            let disc = 1.0 / (1.0 + ((d - radius) / (2.0 * sz / 192.0)).exp());
            let at = |xx: usize, yy: usize| h[yy.min(s - 1) * s + xx.min(s - 1)];
            let emboss = at(x + 1, y + 1) - at(x.saturating_sub(1), y.saturating_sub(1));
            let v = 40.0 + disc * (95.0 + 55.0 * h[y * s + x].clamp(-1.5, 1.5) + 70.0 * emboss);
            out[y * s + x] = v;
        }
    }
    out
}

fn bilinear(src: &[f32], size: usize, x: f32, y: f32, fill: f32) -> f32 {
    if x < 0.0 || y < 0.0 || x > (size - 1) as f32 || y > (size - 1) as f32 {
        return fill;
    }
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(size - 1), (y0 + 1).min(size - 1));
    let (fx, fy) = (x - x0 as f32, y - y0 as f32);
    let top = src[y0 * size + x0] * (1.0 - fx) + src[y0 * size + x1] * fx;
    let bottom = src[y1 * size + x0] * (1.0 - fx) + src[y1 * size + x1] * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Random projective perturbation about the image centre, scaled by `warp`.
fn random_warp(rng: &mut ChaCha8Rng, size: f64, warp: f64) -> Matrix3<f64> {
    if warp == 0.0 {
        return Matrix3::identity();
    }
    let c = size / 2.0;
    let theta = rng.random_range(-1.0..1.0) * warp * 8f64.to_radians();
    let scale = 1.0 + rng.random_range(-1.0..1.0) * warp * 0.04;
    let (tx, ty) = (
        rng.random_range(-1.0..1.0) * warp * 0.03 * size,
        rng.random_range(-1.0..1.0) * warp * 0.03 * size,
    );
    let (p1, p2) = (
        rng.random_range(-1.0..1.0) * warp * 1e-4,
        rng.random_range(-1.0..1.0) * warp * 1e-4,
    );
    let to_origin = Matrix3::new(1.0, 0.0, -c, 0.0, 1.0, -c, 0.0, 0.0, 1.0);
    let back = Matrix3::new(1.0, 0.0, c + tx, 0.0, 1.0, c + ty, 0.0, 0.0, 1.0);
    let (s, co) = theta.sin_cos();
    let rs = Matrix3::new(scale * co, -scale * s, 0.0, scale * s, scale * co, 0.0, 0.0, 0.0, 1.0);
    let persp = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, p1, p2, 1.0);
    back * persp * rs * to_origin
}

/// One struck coin: warped die texture, wear patches and sensor noise.
fn strike_coin(die: &[f32], size: u32, spec: &SynthSpec, seed: u64) -> GrayImage {
    let s = size as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = random_warp(&mut rng, size as f64, spec.warp);
    let inv = h.try_inverse().expect("warps are invertible");
    let mut px = vec![0f32; s * s];
    for y in 0..s {
        for x in 0..s {
            let (xf, yf) = (x as f64, y as f64);
            let w = inv[(2, 0)] * xf + inv[(2, 1)] * yf + inv[(2, 2)];
            let u = (inv[(0, 0)] * xf + inv[(0, 1)] * yf + inv[(0, 2)]) / w;
            let v = (inv[(1, 0)] * xf + inv[(1, 1)] * yf + inv[(1, 2)]) / w;
            px[y * s + x] = bilinear(die, s, u as f32, v as f32, 40.0);
        }
    }
    // wear: flat discs until the requested area fraction is covered
    let sz = size as f32;
    let coin_area = std::f32::consts::PI * (sz * 0.46).powi(2);
    let mut covered = 0.0f32;
    while covered < spec.wear as f32 * coin_area {
        let r = rng.random_range(0.04..0.09) * sz;
        let ang: f32 = rng.random_range(0.0..std::f32::consts::TAU);
        let dist = rng.random_range(0.0..0.4) * sz;
        let (cx, cy) = (sz / 2.0 + dist * ang.cos(), sz / 2.0 + dist * ang.sin());
        let level = rng.random_range(90.0..140.0);
        for y in ((cy - r).max(0.0) as usize)..((cy + r).min(sz - 1.0) as usize) {
            for x in ((cx - r).max(0.0) as usize)..((cx + r).min(sz - 1.0) as usize) {
                let d2 = (x as f32 - cx).powi(2) + (y as f32 - cy).powi(2);
                if d2 < r * r {
                    // soft border so the patch itself adds few corners
                    let t = (1.0 - d2.sqrt() / r).min(0.25) / 0.25;
                    px[y * s + x] = px[y * s + x] * (1.0 - t) + level * t;
                }
            }
        }
        covered += std::f32::consts::PI * r * r;
    }
    let noise = Normal::new(0.0f32, spec.noise.max(0.0) as f32).expect("finite sigma");
    GrayImage::from_fn(size, size, |x, y| {
        let mut v = px[y as usize * s + x as usize];
        if spec.noise > 0.0 {
            v += noise.sample(&mut rng);
        }
        Luma([v.round().clamp(0.0, 255.0) as u8])
    })
}

fn die_seed(seed: u64, die: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(die as u64 * 7919 + 1)
}

fn coin_seed(seed: u64, coin: usize) -> u64 {
    seed.wrapping_mul(0xbf58_476d_1ce4_e5b9).wrapping_add(coin as u64 * 104_729 + 17)
}

/// Renders every coin image in memory, in corpus order.
pub fn render_coins(spec: &SynthSpec) -> Result<(Vec<usize>, Vec<GrayImage>), SynthError> {
    spec.validate()?;
    let dies = spec.die_assignment()?;
    let patterns: Vec<Vec<f32>> = (0..spec.n_dies)
        .into_par_iter()
        .map(|d| shade_die(spec.image_size, die_seed(spec.seed, d)))
        .collect();
    let images = dies
        .par_iter()
        .enumerate()
        .map(|(k, &d)| strike_coin(&patterns[d], spec.image_size, spec, coin_seed(spec.seed, k)))
        .collect();
    Ok((dies, images))
}

/// Writes coin PNGs, `manifest.csv` and `ground_truth.csv` into `dir`.
pub fn generate_corpus(spec: &SynthSpec, dir: &Path) -> Result<(Corpus, GroundTruth), SynthError> {
    let (dies, images) = render_coins(spec)?;
    std::fs::create_dir_all(dir).map_err(|e| SynthError::Write {
        path: dir.display().to_string(),
        message: e.to_string(),
    })?;
    images
        .par_iter()
        .enumerate()
        .try_for_each(|(k, img)| {
            let path = dir.join(format!("{}.png", coin_id(k)));
            img.save(&path).map_err(|e| SynthError::Write {
                path: path.display().to_string(),
                message: e.to_string(),
            })
        })?;
    let coins = (0..dies.len())
        .map(|k| corpus::Coin {
            id: coin_id(k),
            image_path: format!("{}.png", coin_id(k)).into(),
            image_ok: true,
        })
        .collect();
    let listing = Corpus::new("synthetic", coins)?;
    let manifest = dir.join("manifest.csv");
    corpus::write_manifest(&listing, &manifest)?;
    let loaded = corpus::load_manifest(&manifest)?;
    let gt = ground_truth_for(&loaded, &dies)?;
    corpus::write_ground_truth(&gt, &dir.join("ground_truth.csv"))?;
    Ok((loaded, gt))
}

/// Correspondences with a known generating homography and inlier mask.
#[derive(Clone, Debug, PartialEq)]
pub struct PlantedMatches {
    pub matches: Vec<PointMatch>,
    pub homography: Homography,
    pub inlier_mask: Vec<bool>,
}

/// Random well-conditioned homography of a `frame × frame` image: rotation,
/// scale, translation and a mild perspective term, composed directly.
pub fn random_homography(rng: &mut ChaCha8Rng, frame: f64) -> Homography {
    Homography::from_matrix(random_warp(rng, frame, 2.0)).expect("composed warps are invertible")
}

/// Inliers follow a random homography with Gaussian noise on the target
/// coordinates; outliers are uniform in the frame on both sides.
pub fn plant_correspondences(
    n_inliers: usize,
    n_outliers: usize,
    noise_sigma: f64,
    frame: f64,
    seed: u64,
) -> Result<PlantedMatches, SynthError> {
    if n_inliers < 4 {
        return Err(SynthError::InvalidSpec(format!("need at least 4 inliers, got {n_inliers}")));
    }
    if !(frame > 0.0) || !(noise_sigma >= 0.0) {
        return Err(SynthError::InvalidSpec("frame must be positive and noise nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let homography = random_homography(&mut rng, frame);
    let noise = Normal::new(0.0, noise_sigma).expect("finite sigma");
    let mut planted: Vec<(PointMatch, bool)> = Vec::with_capacity(n_inliers + n_outliers);
    while planted.len() < n_inliers {
        let (x, y) = (rng.random_range(0.0..frame), rng.random_range(0.0..frame));
        let Some((u, v)) = homography.apply(x, y) else { continue };
        let (u, v) = if noise_sigma > 0.0 {
            (u + noise.sample(&mut rng), v + noise.sample(&mut rng))
        } else {
            (u, v)
        };
        if (0.0..frame).contains(&u) && (0.0..frame).contains(&v) {
            planted.push((PointMatch::new(x, y, u, v), true));
        }
    }
    for _ in 0..n_outliers {
        let m = PointMatch::new(
            rng.random_range(0.0..frame),
            rng.random_range(0.0..frame),
            rng.random_range(0.0..frame),
            rng.random_range(0.0..frame),
        );
        planted.push((m, false));
    }
    planted.shuffle(&mut rng);
    let (matches, inlier_mask) = planted.into_iter().unzip();
    Ok(PlantedMatches {
        matches,
        homography,
        inlier_mask,
    })
}

/// Candidate-match statistics for a synthetic match-file corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchSynthSpec {
    /// Geometrically consistent matches for a same-die pair, inclusive range.
    pub same_die_inliers: (usize, usize),
    /// Random matches added to every pair, inclusive range.
    pub background: (usize, usize),
    /// Fraction of cross-die pairs that receive spurious matches.
    pub spurious_fraction: f64,
    /// Number of spurious (geometrically inconsistent) matches, inclusive range.
    pub spurious: (usize, usize),
    pub noise_sigma: f64,
    pub frame: f64,
    pub seed: u64,
}

impl Default for MatchSynthSpec {
    fn default() -> Self {
        MatchSynthSpec {
            same_die_inliers: (40, 90),
            background: (5, 25),
            spurious_fraction: 0.2,
            spurious: (40, 90),
            noise_sigma: 1.0,
            frame: 256.0,
            seed: 3,
        }
    }
}

/// A corpus without images plus one candidate match record per pair.
pub fn synth_match_corpus(
    spec: &SynthSpec,
    matches: &MatchSynthSpec,
) -> Result<(Corpus, GroundTruth, Vec<MatchRecord>), SynthError> {
    spec.validate()?;
    if !(0.0..=1.0).contains(&matches.spurious_fraction) {
        return Err(SynthError::InvalidSpec("spurious_fraction must lie in [0, 1]".into()));
    }
    let dies = spec.die_assignment()?;
    let corpus = Corpus::from_ids("synthetic-matches", (0..dies.len()).map(|k| coin_id(k).to_string()))?;
    let gt = ground_truth_for(&corpus, &dies)?;
    let n = dies.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let records = pairs
        .par_iter()
        .map(|&(i, j)| {
            let mut rng = ChaCha8Rng::seed_from_u64(matches.seed.wrapping_mul(1_000_003).wrapping_add((i * n + j) as u64));
            let background = rng.random_range(matches.background.0..=matches.background.1);
            let mut planted = if dies[i] == dies[j] {
                let inliers = rng.random_range(matches.same_die_inliers.0..=matches.same_die_inliers.1);
                plant_correspondences(inliers, background, matches.noise_sigma, matches.frame, rng.random())?.matches
            } else {
                let spurious = if rng.random_bool(matches.spurious_fraction) {
                    rng.random_range(matches.spurious.0..=matches.spurious.1)
                } else {
                    0
                };
                (0..background + spurious)
                    .map(|_| {
                        PointMatch::new(
                            rng.random_range(0.0..matches.frame),
                            rng.random_range(0.0..matches.frame),
                            rng.random_range(0.0..matches.frame),
                            rng.random_range(0.0..matches.frame),
                        )
                    })
                    .collect()
            };
            planted.shuffle(&mut rng);
            Ok(MatchRecord::new(coin_id(i), coin_id(j), false, planted))
        })
        .collect::<Result<Vec<_>, SynthError>>()?;
    Ok((corpus, gt, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SynthSpec {
        SynthSpec {
            n_dies: 3,
            die_sizes: DieSizes::Uniform(2),
            image_size: 96,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn default_counts_mirror_skewed_collections() {
        let counts = SynthSpec::default().die_counts().unwrap();
        assert_eq!(counts.len(), 15);
        assert_eq!(counts.iter().sum::<usize>(), 80);
        assert_eq!(counts.iter().filter(|&&c| c == 1).count(), 8);
        assert!(counts[..7].windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn rendering_is_deterministic() {
        let (d1, a) = render_coins(&small(7)).unwrap();
        let (d2, b) = render_coins(&small(7)).unwrap();
        assert_eq!(d1, d2);
        assert_eq!(a, b);
        assert_ne!(a, render_coins(&small(8)).unwrap().1);
    }

    #[test]
    fn pristine_coins_of_a_die_are_identical() {
        let spec = SynthSpec {
            warp: 0.0,
            noise: 0.0,
            wear: 0.0,
            ..small(4)
        };
        let (dies, imgs) = render_coins(&spec).unwrap();
        for i in 0..dies.len() {
            for j in 0..dies.len() {
                assert_eq!(dies[i] == dies[j], imgs[i] == imgs[j]);
            }
        }
    }

    #[test]
    fn all_singletons() {
        let spec = SynthSpec {
            n_dies: 5,
            die_sizes: DieSizes::Skewed {
                coins: 5,
                singleton_fraction: 1.0,
            },
            ..small(1)
        };
        assert_eq!(spec.die_counts().unwrap(), vec![1; 5]);
        let dir = tempfile::tempdir().unwrap();
        let (corpus, gt) = generate_corpus(&spec, dir.path()).unwrap();
        assert_eq!(corpus.len(), 5);
        assert_eq!(gt.n_dies(), 5);
        assert!(corpus.coins().iter().all(|c| c.image_ok));
    }

    #[test]
    fn invalid_specs() {
        let bad = SynthSpec {
            wear: 1.5,
            ..small(1)
        };
        assert!(bad.validate().is_err());
        let bad = SynthSpec {
            die_sizes: DieSizes::Explicit(vec![1, 2]),
            ..small(1)
        };
        assert!(bad.validate().is_err());
        assert!(plant_correspondences(3, 0, 1.0, 100.0, 0).is_err());
    }

    #[test]
    fn planted_set_matches_its_homography() {
        let p = plant_correspondences(30, 10, 0.0, 512.0, 5).unwrap();
        assert_eq!(p, plant_correspondences(30, 10, 0.0, 512.0, 5).unwrap());
        assert_eq!(p.inlier_mask.iter().filter(|&&m| m).count(), 30);
        for (m, &inlier) in p.matches.iter().zip(&p.inlier_mask) {
            if inlier {
                assert!(crate::robust::symmetric_transfer_error(&p.homography, m) < 1e-9);
            }
        }
    }

    #[test]
    fn noiseless_inliers_are_all_recovered() {
        let p = plant_correspondences(40, 0, 0.0, 512.0, 11).unwrap();
        let report = crate::robust::magsac_filter(&p.matches, &crate::robust::MagsacConfig::default(), 0);
        assert_eq!(report.inlier_mask, p.inlier_mask);
    }

    #[test]
    fn corpus_files_are_reproducible() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        generate_corpus(&small(7), a.path()).unwrap();
        generate_corpus(&small(7), b.path()).unwrap();
        for name in ["coin_000.png", "coin_005.png", "manifest.csv", "ground_truth.csv"] {
            let read = |dir: &Path| std::fs::read(dir.join(name)).unwrap();
            assert_eq!(read(a.path()), read(b.path()), "{name}");
        }
    }

    #[test]
    fn match_corpus_plants_spurious_pairs() {
        let spec = small(2);
        let (corpus, gt, records) = synth_match_corpus(&spec, &MatchSynthSpec::default()).unwrap();
        assert_eq!(records.len(), corpus.len() * (corpus.len() - 1) / 2);
        let labels = gt.labels();
        for r in &records {
            let (i, j) = (corpus.position(&r.a).unwrap(), corpus.position(&r.b).unwrap());
            if labels[i] == labels[j] {
                assert!(r.matches.len() >= 40 + 5);
            }
        }
    }
}
