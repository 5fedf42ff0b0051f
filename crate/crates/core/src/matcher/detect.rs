use image::imageops::{self, FilterType};
use image::GrayImage;

/// Bresenham circle of radius 3 used by the segment test.
const CIRCLE: [(i32, i32); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

/// Minimum contiguous arc length for a corner.
const ARC: usize = 9;

/// Radius of the orientation and descriptor patch.
pub(crate) const PATCH_RADIUS: i32 = 15;

/// Keypoints closer than this to the border are discarded.
pub(crate) const EDGE: i32 = PATCH_RADIUS + 1;

pub(crate) struct Candidate {
    pub x: u32,
    pub y: u32,
    pub score: f32,
}

/// Segment-test score: the larger of the summed excess brightness or
/// darkness over the circle, or `None` if the pixel is not a corner.
#[inline]
fn corner_score(img: &GrayImage, x: i32, y: i32, threshold: i16) -> Option<f32> {
    let (w, raw) = (img.width() as i32, img.as_raw());
    let center = raw[(y * w + x) as usize] as i16;
    let mut state = [0i8; 16];
    for (k, &(dx, dy)) in CIRCLE.iter().enumerate() {
        let v = raw[((y + dy) * w + x + dx) as usize] as i16;
        state[k] = if v > center + threshold {
            1
        } else if v < center - threshold {
            -1
        } else {
            0
        };
    }
    // quick rejection on the four compass points
    let compass = [state[0], state[4], state[8], state[12]];
    let bright = compass.iter().filter(|&&s| s == 1).count();
    let dark = compass.iter().filter(|&&s| s == -1).count();
    if bright < 2 && dark < 2 {
        return None;
    }
    let longest = |want: i8| {
        let (mut run, mut best) = (0, 0);
        for k in 0..32 {
            if state[k % 16] == want {
                run += 1;
                best = best.max(run);
            } else {
                run = 0;
            }
        }
        best.min(16)
    };
    if longest(1) < ARC && longest(-1) < ARC {
        return None;
    }
    let (mut sb, mut sd) = (0i32, 0i32);
    for &(dx, dy) in &CIRCLE {
        let v = raw[((y + dy) * w + x + dx) as usize] as i16;
        let diff = v - center;
        if diff > threshold {
            sb += (diff - threshold) as i32;
        } else if -diff > threshold {
            sd += (-diff - threshold) as i32;
        }
    }
    Some(sb.max(sd) as f32)
}

/// Segment-test corners with 3×3 non-maximum suppression, away from the border.
pub(crate) fn detect_corners(img: &GrayImage, threshold: u8) -> Vec<Candidate> {
    let (w, h) = (img.width() as i32, img.height() as i32);
    if w <= 2 * EDGE || h <= 2 * EDGE {
        return Vec::new();
    }
    let threshold = threshold as i16;
    let mut scores = vec![0f32; (w * h) as usize];
    for y in EDGE..h - EDGE {
        for x in EDGE..w - EDGE {
            if let Some(s) = corner_score(img, x, y, threshold) {
                scores[(y * w + x) as usize] = s;
            }
        }
    }
    let mut out = Vec::new();
    for y in EDGE..h - EDGE {
        for x in EDGE..w - EDGE {
            let s = scores[(y * w + x) as usize];
            if s <= 0.0 {
                continue;
            }
            let mut keep = true;
            'nms: for dy in -1..=1 {
                for dx in -1..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let n = scores[((y + dy) * w + x + dx) as usize];
                    // ties go to the earlier pixel in raster order
                    let earlier = dy < 0 || (dy == 0 && dx < 0);
                    if n > s || (earlier && n == s) {
                        keep = false;
                        break 'nms;
                    }
                }
            }
            if keep {
                out.push(Candidate {
                    x: x as u32,
                    y: y as u32,
                    score: s,
                });
            }
        }
    }
    out
}

/// Orientation from the intensity centroid of the circular patch, radians.
pub(crate) fn orientation(img: &GrayImage, x: u32, y: u32) -> f32 {
    let (w, raw) = (img.width() as i32, img.as_raw());
    let (x, y) = (x as i32, y as i32);
    let (mut m10, mut m01) = (0i64, 0i64);
    let r2 = PATCH_RADIUS * PATCH_RADIUS;
    for dy in -PATCH_RADIUS..=PATCH_RADIUS {
        for dx in -PATCH_RADIUS..=PATCH_RADIUS {
            if dx * dx + dy * dy > r2 {
                continue;
            }
            let v = raw[((y + dy) * w + x + dx) as usize] as i64;
            m10 += dx as i64 * v;
            m01 += dy as i64 * v;
        }
    }
    (m01 as f32).atan2(m10 as f32)
}

/// Image pyramid: level `l` is the input scaled down by `scale_factor^l`.
pub(crate) fn pyramid(img: &GrayImage, levels: usize, scale_factor: f32) -> Vec<(f32, GrayImage)> {
    let mut out = vec![(1.0, img.clone())];
    for l in 1..levels {
        let scale = scale_factor.powi(l as i32);
        let w = (img.width() as f32 / scale).round() as u32;
        let h = (img.height() as f32 / scale).round() as u32;
        if w <= 2 * EDGE as u32 || h <= 2 * EDGE as u32 {
            break;
        }
        out.push((scale, imageops::resize(img, w, h, FilterType::Triangle)));
    }
    out
}
