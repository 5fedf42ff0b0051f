use nalgebra::{Matrix3, SMatrix, SymmetricEigen, Vector3};

use crate::corpus::PointMatch;

use super::RobustError;

/// Largest accepted condition number of a homography matrix.
pub const MAX_CONDITION: f64 = 1e12;

/// Relative tolerance below which a triangle of normalized points counts as
/// collinear.
pub const COLLINEAR_TOL: f64 = 1e-6;

/// Invertible planar homography mapping image A to image B.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Homography {
    h: Matrix3<f64>,
    inv: Matrix3<f64>,
}

impl Homography {
    /// Normalizes scale (bottom-right entry 1 when nonzero, unit Frobenius
    /// norm otherwise) and checks invertibility.
    pub fn from_matrix(m: Matrix3<f64>) -> Option<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let h = normalize_scale(m)?;
        let sv = h.singular_values();
        let (max, min) = (sv.max(), sv.min());
        if !(min > 0.0) || max / min > MAX_CONDITION {
            return None;
        }
        let inv = normalize_scale(h.try_inverse()?)?;
        Some(Homography { h, inv })
    }

    pub fn identity() -> Self {
        Homography {
            h: Matrix3::identity(),
            inv: Matrix3::identity(),
        }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Homography::from_matrix(Matrix3::new(1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0, 1.0))
            .expect("translations are invertible")
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.h
    }

    pub fn inverse(&self) -> Homography {
        Homography {
            h: self.inv,
            inv: self.h,
        }
    }

    /// Maps a point of image A into image B; `None` for points sent to infinity.
    pub fn apply(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        project(&self.h, x, y)
    }

    /// Maximum absolute entry difference after scale normalization.
    pub fn max_abs_diff(&self, other: &Homography) -> f64 {
        (self.h - other.h).abs().max()
    }
}

fn normalize_scale(m: Matrix3<f64>) -> Option<Matrix3<f64>> {
    let norm = m.norm();
    if !(norm > 0.0) {
        return None;
    }
    let corner = m[(2, 2)];
    if corner.abs() > 1e-12 * norm {
        Some(m / corner)
    } else {
        Some(m / norm)
    }
}

#[inline]
fn project(h: &Matrix3<f64>, x: f64, y: f64) -> Option<(f64, f64)> {
    let w = h[(2, 0)] * x + h[(2, 1)] * y + h[(2, 2)];
    if w.abs() < 1e-12 {
        return None;
    }
    let u = (h[(0, 0)] * x + h[(0, 1)] * y + h[(0, 2)]) / w;
    let v = (h[(1, 0)] * x + h[(1, 1)] * y + h[(1, 2)]) / w;
    Some((u, v))
}

/// Squared symmetric transfer error in pixels²:
/// `‖H·a − b‖² + ‖H⁻¹·b − a‖²`, infinite when either projection is at infinity.
#[inline]
pub fn symmetric_transfer_error(h: &Homography, c: &PointMatch) -> f64 {
    let fwd = match project(&h.h, c.xa, c.ya) {
        Some((u, v)) => (u - c.xb).powi(2) + (v - c.yb).powi(2),
        None => return f64::INFINITY,
    };
    let bwd = match project(&h.inv, c.xb, c.yb) {
        Some((u, v)) => (u - c.xa).powi(2) + (v - c.ya).powi(2),
        None => return f64::INFINITY,
    };
    fwd + bwd
}

/// Similarity transform moving the centroid to the origin with mean
/// distance √2.
fn hartley_transform(points: impl Iterator<Item = (f64, f64)> + Clone) -> Option<Matrix3<f64>> {
    let n = points.clone().count() as f64;
    let (sx, sy) = points.clone().fold((0.0, 0.0), |(sx, sy), (x, y)| (sx + x, sy + y));
    let (cx, cy) = (sx / n, sy / n);
    let mean = points.map(|(x, y)| ((x - cx).powi(2) + (y - cy).powi(2)).sqrt()).sum::<f64>() / n;
    if !(mean > 0.0) || !mean.is_finite() {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / mean;
    Some(Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0))
}

fn apply_affine(t: &Matrix3<f64>, x: f64, y: f64) -> (f64, f64) {
    (t[(0, 0)] * x + t[(0, 2)], t[(1, 1)] * y + t[(1, 2)])
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// True when some triple of the points is collinear within tolerance, after
/// Hartley normalization.
fn has_collinear_triple(points: &[(f64, f64)]) -> bool {
    let Some(t) = hartley_transform(points.iter().copied()) else {
        return true;
    };
    let p: Vec<_> = points.iter().map(|&(x, y)| apply_affine(&t, x, y)).collect();
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            for k in j + 1..p.len() {
                if cross(p[i], p[j], p[k]).abs() < COLLINEAR_TOL {
                    return true;
                }
            }
        }
    }
    false
}

/// Least-squares homography by the normalized direct linear transform.
///
/// Exact for four non-degenerate correspondences.
pub fn fit_homography_dlt(corrs: &[PointMatch]) -> Result<Homography, RobustError> {
    if corrs.len() < 4 {
        return Err(RobustError::NotEnoughMatches(corrs.len()));
    }
    if corrs.len() == 4 {
        let src: Vec<_> = corrs.iter().map(|c| (c.xa, c.ya)).collect();
        let dst: Vec<_> = corrs.iter().map(|c| (c.xb, c.yb)).collect();
        if has_collinear_triple(&src) || has_collinear_triple(&dst) {
            return Err(RobustError::Degenerate);
        }
    }
    fit_weighted(corrs, None)
}

/// Weighted normalized DLT; correspondences with zero weight are ignored.
pub fn fit_homography_weighted(corrs: &[PointMatch], weights: &[f64]) -> Result<Homography, RobustError> {
    assert_eq!(corrs.len(), weights.len());
    let used = weights.iter().filter(|&&w| w > 0.0).count();
    if used < 4 {
        return Err(RobustError::NotEnoughMatches(used));
    }
    fit_weighted(corrs, Some(weights))
}

fn fit_weighted(corrs: &[PointMatch], weights: Option<&[f64]>) -> Result<Homography, RobustError> {
    let weight = |i: usize| weights.map_or(1.0, |w| w[i]);
    let active = || {
        corrs
            .iter()
            .enumerate()
            .filter(move |&(i, _)| weight(i) > 0.0)
    };
    let t_src = hartley_transform(active().map(|(_, c)| (c.xa, c.ya))).ok_or(RobustError::Degenerate)?;
    let t_dst = hartley_transform(active().map(|(_, c)| (c.xb, c.yb))).ok_or(RobustError::Degenerate)?;

    let mut normal = SMatrix::<f64, 9, 9>::zeros();
    for (i, c) in active() {
        let w = weight(i);
        let (x, y) = apply_affine(&t_src, c.xa, c.ya);
        let (u, v) = apply_affine(&t_dst, c.xb, c.yb);
        let r1 = [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u];
        let r2 = [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v];
        for a in 0..9 {
            for b in a..9 {
                normal[(a, b)] += w * (r1[a] * r1[b] + r2[a] * r2[b]);
            }
        }
    }
    for a in 0..9 {
        for b in 0..a {
            normal[(a, b)] = normal[(b, a)];
        }
    }
    let eig = SymmetricEigen::new(normal);
    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let largest = eig.eigenvalues[order[8]];
    if !(largest > 0.0) || eig.eigenvalues[order[1]] <= 1e-12 * largest {
        return Err(RobustError::Degenerate);
    }
    let h = eig.eigenvectors.column(order[0]);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let t_dst_inv = t_dst.try_inverse().ok_or(RobustError::Degenerate)?;
    Homography::from_matrix(t_dst_inv * hn * t_src).ok_or(RobustError::Degenerate)
}

/// Rejects minimal samples whose quadrilaterals are near-degenerate,
/// not in convex position, or flipped between the two images.
pub fn is_degenerate_sample(sample: &[PointMatch; 4]) -> bool {
    let src = sample.map(|c| (c.xa, c.ya));
    let dst = sample.map(|c| (c.xb, c.yb));
    let (Some(ts), Some(td)) = (
        hartley_transform(src.iter().copied()),
        hartley_transform(dst.iter().copied()),
    ) else {
        return true;
    };
    let src = src.map(|(x, y)| apply_affine(&ts, x, y));
    let dst = dst.map(|(x, y)| apply_affine(&td, x, y));
    const TRIPLES: [[usize; 3]; 4] = [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]];
    let mut signs = [[0.0f64; 4]; 2];
    for (side, pts) in [src, dst].iter().enumerate() {
        for (t, [i, j, k]) in TRIPLES.iter().enumerate() {
            let c = cross(pts[*i], pts[*j], pts[*k]);
            if c.abs() < COLLINEAR_TOL {
                return true;
            }
            signs[side][t] = c.signum();
        }
        if !convex_position(pts) {
            return true;
        }
    }
    signs[0] != signs[1]
}

/// Four points are in convex position iff none lies inside the triangle of
/// the other three.
fn convex_position(p: &[(f64, f64); 4]) -> bool {
    for inside in 0..4 {
        let tri: Vec<usize> = (0..4).filter(|&i| i != inside).collect();
        let (a, b, c) = (p[tri[0]], p[tri[1]], p[tri[2]]);
        let q = p[inside];
        let d1 = cross(a, b, q).signum();
        let d2 = cross(b, c, q).signum();
        let d3 = cross(c, a, q).signum();
        if d1 == d2 && d2 == d3 {
            return false;
        }
    }
    true
}

/// Exact homography through four correspondences, by mapping the projective
/// basis onto each quadrilateral. Much cheaper than the DLT inside a
/// sampling loop; callers reject degenerate samples first.
pub fn fit_minimal(sample: &[PointMatch; 4]) -> Option<Homography> {
    let basis = |pts: [(f64, f64); 4]| -> Option<Matrix3<f64>> {
        let m = Matrix3::new(
            pts[0].0, pts[1].0, pts[2].0, //
            pts[0].1, pts[1].1, pts[2].1, //
            1.0, 1.0, 1.0,
        );
        let lambda = m.lu().solve(&Vector3::new(pts[3].0, pts[3].1, 1.0))?;
        if lambda.iter().any(|l| l.abs() < 1e-12) {
            return None;
        }
        Some(m * Matrix3::from_diagonal(&lambda))
    };
    let a = basis(sample.map(|c| (c.xa, c.ya)))?;
    let b = basis(sample.map(|c| (c.xb, c.yb)))?;
    Homography::from_matrix(b * a.try_inverse()?)
}
