//! Built-in keypoint detection, binary description and pairwise matching.
//!
//! Corners come from a segment test over a shallow image pyramid, are
//! oriented by their intensity centroid and described by 256 steered
//! intensity comparisons. Matching keeps mutual nearest neighbours under
//! Hamming distance that also pass a ratio test on both sides, which makes
//! `match_pair(a, b)` the exact mirror of `match_pair(b, a)`.

mod brief;
mod detect;

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use image::GrayImage;
use serde::{Deserialize, Serialize};

use crate::corpus::{CoinId, CorpusError, PointMatch};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatcherConfig {
    /// Maximum number of keypoints kept per image.
    pub top_k: usize,
    pub fast_threshold: u8,
    pub levels: usize,
    pub scale_factor: f32,
    /// Lowe ratio; `None` keeps every mutual nearest neighbour.
    pub ratio: Option<f32>,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        MatcherConfig {
            top_k: 5000,
            fast_threshold: 20,
            levels: 4,
            scale_factor: 1.25,
            ratio: Some(0.9),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Keypoint {
    /// Level-0 pixel coordinates.
    pub x: f32,
    pub y: f32,
    pub response: f32,
    /// Radians.
    pub orientation: f32,
    pub level: u8,
}

/// 256-bit binary descriptor.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Descriptor(pub [u64; 4]);

impl Descriptor {
    #[inline]
    pub fn hamming(&self, other: &Descriptor) -> u32 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().map(|w| format!("{w:016x}")).collect()
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        if s.len() != 64 {
            return None;
        }
        let mut words = [0u64; 4];
        for (k, w) in words.iter_mut().enumerate() {
            *w = u64::from_str_radix(&s[k * 16..(k + 1) * 16], 16).ok()?;
        }
        Some(Descriptor(words))
    }
}

impl fmt::Debug for Descriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Descriptor({})", self.to_hex())
    }
}

/// Keypoints with parallel descriptors, strongest first.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct KeypointSet {
    pub keypoints: Vec<Keypoint>,
    pub descriptors: Vec<Descriptor>,
    pub top_k: usize,
}

impl KeypointSet {
    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }
}

/// Detects up to `config.top_k` keypoints, strongest first, and describes them.
///
/// Selection is a stable sort by descending response followed by
/// truncation, so raising `top_k` only appends keypoints.
pub fn detect_and_describe(image: &GrayImage, config: &MatcherConfig) -> KeypointSet {
    let mut found: Vec<(Keypoint, Descriptor)> = Vec::new();
    for (level, (scale, img)) in detect::pyramid(image, config.levels.max(1), config.scale_factor)
        .into_iter()
        .enumerate()
    {
        let corners = detect::detect_corners(&img, config.fast_threshold);
        if corners.is_empty() {
            continue;
        }
        let smoothed = image::imageops::blur(&img, 1.2);
        for c in corners {
            let angle = detect::orientation(&img, c.x, c.y);
            let descriptor = brief::describe(&smoothed, c.x, c.y, angle);
            found.push((
                Keypoint {
                    x: c.x as f32 * scale,
                    y: c.y as f32 * scale,
                    response: c.score,
                    orientation: angle,
                    level: level as u8,
                },
                descriptor,
            ));
        }
    }
    // detection order is (level, y, x), so the stable sort breaks ties by it
    found.sort_by(|a, b| b.0.response.total_cmp(&a.0.response));
    found.truncate(config.top_k);
    let (keypoints, descriptors) = found.into_iter().unzip();
    KeypointSet {
        keypoints,
        descriptors,
        top_k: config.top_k,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Correspondence {
    pub a: usize,
    pub b: usize,
    /// Hamming distance in bits.
    pub distance: u32,
}

/// Mutual nearest-neighbour matches, each index used at most once per side.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct CorrespondenceSet {
    pub pairs: Vec<Correspondence>,
}

impl CorrespondenceSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Pixel coordinates of every correspondence.
    pub fn point_matches(&self, a: &KeypointSet, b: &KeypointSet) -> Vec<PointMatch> {
        self.pairs
            .iter()
            .map(|c| {
                let (ka, kb) = (&a.keypoints[c.a], &b.keypoints[c.b]);
                PointMatch::new(ka.x as f64, ka.y as f64, kb.x as f64, kb.y as f64)
            })
            .collect()
    }
}

#[derive(Clone, Copy)]
struct Nearest {
    best: u32,
    second: u32,
    index: usize,
}

impl Nearest {
    const NONE: Nearest = Nearest {
        best: u32::MAX,
        second: u32::MAX,
        index: usize::MAX,
    };

    #[inline]
    fn offer(&mut self, d: u32, index: usize) {
        if d < self.best {
            self.second = self.best;
            self.best = d;
            self.index = index;
        } else if d < self.second {
            self.second = d;
        }
    }

    fn passes(&self, ratio: Option<f32>) -> bool {
        match ratio {
            None => true,
            Some(_) if self.second == u32::MAX => true,
            Some(r) => self.best as f64 <= r as f64 * self.second as f64,
        }
    }
}

/// Mutual nearest neighbours under Hamming distance, kept only when the
/// ratio test passes for both endpoints. Ties go to the lowest index.
pub fn match_pair(a: &KeypointSet, b: &KeypointSet, ratio: Option<f32>) -> CorrespondenceSet {
    if a.is_empty() || b.is_empty() {
        return CorrespondenceSet::default();
    }
    let mut rows = vec![Nearest::NONE; a.len()];
    let mut cols = vec![Nearest::NONE; b.len()];
    for (i, da) in a.descriptors.iter().enumerate() {
        let row = &mut rows[i];
        for (j, db) in b.descriptors.iter().enumerate() {
            let d = da.hamming(db);
            row.offer(d, j);
            cols[j].offer(d, i);
        }
    }
    let pairs = rows
        .iter()
        .enumerate()
        .filter_map(|(i, row)| {
            let col = &cols[row.index];
            (col.index == i && row.passes(ratio) && col.passes(ratio)).then_some(Correspondence {
                a: i,
                b: row.index,
                distance: row.best,
            })
        })
        .collect();
    CorrespondenceSet { pairs }
}

/// One line of the keypoint dump format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeypointDump {
    pub coin: CoinId,
    pub kps: Vec<[f32; 4]>,
    pub desc_hex: Vec<String>,
}

impl KeypointDump {
    pub fn new(coin: CoinId, set: &KeypointSet) -> Self {
        KeypointDump {
            coin,
            kps: set
                .keypoints
                .iter()
                .map(|k| [k.x, k.y, k.response, k.orientation])
                .collect(),
            desc_hex: set.descriptors.iter().map(Descriptor::to_hex).collect(),
        }
    }

    /// Rebuilds the keypoint set; pyramid levels are not part of the dump.
    pub fn to_set(&self, top_k: usize) -> Option<KeypointSet> {
        if self.kps.len() != self.desc_hex.len() {
            return None;
        }
        let descriptors = self
            .desc_hex
            .iter()
            .map(|h| Descriptor::from_hex(h))
            .collect::<Option<Vec<_>>>()?;
        let keypoints = self
            .kps
            .iter()
            .map(|&[x, y, response, orientation]| Keypoint {
                x,
                y,
                response,
                orientation,
                level: 0,
            })
            .collect();
        Some(KeypointSet {
            keypoints,
            descriptors,
            top_k,
        })
    }
}

pub fn write_keypoint_dump(dumps: &[KeypointDump], path: &Path) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for d in dumps {
        let line = serde_json::to_string(d).expect("keypoint dumps serialize");
        writeln!(out, "{line}").map_err(|e| CorpusError::io(path, e))?;
    }
    out.flush().map_err(|e| CorpusError::io(path, e))
}

pub fn read_keypoint_dump(path: &Path) -> Result<Vec<KeypointDump>, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            path: path.to_path_buf(),
            line: lineno + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
