//! σ-consensus homography filtering.
//!
//! Models are scored by the sum of per-correspondence inlier weights, each
//! weight being the inlier likelihood marginalized over a noise scale σ
//! uniform on `[0, sigma_max]`. For residuals with two degrees of freedom the
//! marginal reduces to an upper incomplete gamma function of order ½, i.e.
//! `Γ(½, x) = √π · erfc(√x)`.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::PointMatch;

use super::homography::{
    fit_homography_weighted, fit_minimal, is_degenerate_sample, symmetric_transfer_error, Homography,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MagsacConfig {
    /// Upper bound of the marginalized noise scale, pixels.
    pub sigma_max: f64,
    /// Confidence used by adaptive termination.
    pub confidence: f64,
    pub max_iterations: usize,
    /// χ² quantile defining the outlier cut-off `k · sigma_max`.
    pub quantile: f64,
    pub polish_rounds: usize,
    pub polish_tolerance: f64,
}

impl Default for MagsacConfig {
    fn default() -> Self {
        MagsacConfig {
            sigma_max: 10.0,
            confidence: 0.99,
            max_iterations: 5000,
            quantile: 0.99,
            polish_rounds: 20,
            polish_tolerance: 1e-6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilterOutcome {
    Fitted,
    /// Fewer than four candidates; similarity is zero.
    NotEnoughMatches,
    /// Every sampled model was degenerate; similarity is zero.
    NoModel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InlierReport {
    pub homography: Option<Homography>,
    pub inlier_mask: Vec<bool>,
    pub inlier_count: usize,
    pub iterations_used: usize,
    pub outcome: FilterOutcome,
}

impl InlierReport {
    fn empty(n: usize, iterations_used: usize, outcome: FilterOutcome) -> Self {
        InlierReport {
            homography: None,
            inlier_mask: vec![false; n],
            inlier_count: 0,
            iterations_used,
            outcome,
        }
    }

    pub fn inliers<'a>(&'a self, corrs: &'a [PointMatch]) -> impl Iterator<Item = PointMatch> + 'a {
        corrs
            .iter()
            .zip(&self.inlier_mask)
            .filter(|(_, &m)| m)
            .map(|(c, _)| *c)
    }
}

/// Marginalized inlier weight as a function of the squared residual.
#[derive(Clone, Copy, Debug)]
pub struct SigmaWeight {
    sigma_max: f64,
    /// Quantile multiplier `k` of the 2-DoF residual distribution.
    k: f64,
    tail: f64,
    norm: f64,
}

impl SigmaWeight {
    pub fn new(sigma_max: f64, quantile: f64) -> Self {
        assert!(sigma_max > 0.0, "sigma_max must be positive");
        assert!(quantile > 0.0 && quantile < 1.0, "quantile must lie in (0, 1)");
        // χ²₂ quantile in closed form: -2 ln(1 - q).
        let k = (-2.0 * (1.0 - quantile).ln()).sqrt();
        let tail = libm::erfc(k / std::f64::consts::SQRT_2);
        SigmaWeight {
            sigma_max,
            k,
            tail,
            norm: 1.0 - tail,
        }
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    /// Squared residual beyond which a correspondence is an outlier.
    pub fn threshold_sq(&self) -> f64 {
        (self.k * self.sigma_max).powi(2)
    }

    /// Weight in `[0, 1]`, 1 at zero residual, 0 at and beyond the cut-off.
    #[inline]
    pub fn weight(&self, residual_sq: f64) -> f64 {
        if !(residual_sq < self.threshold_sq()) {
            return 0.0;
        }
        let r = residual_sq.max(0.0).sqrt();
        let upper = libm::erfc(r / (std::f64::consts::SQRT_2 * self.sigma_max));
        ((upper - self.tail) / self.norm).max(0.0)
    }
}

/// Iterations required to draw one all-inlier minimal sample with the given
/// confidence.
pub fn required_iterations(inlier_ratio: f64, confidence: f64, sample_size: i32, max: usize) -> usize {
    if inlier_ratio <= 0.0 {
        return max;
    }
    let p_good = inlier_ratio.min(1.0).powi(sample_size);
    if p_good >= 1.0 {
        return 1;
    }
    let n = (1.0 - confidence).ln() / (1.0 - p_good).ln();
    if !n.is_finite() {
        return max;
    }
    (n.ceil() as usize).clamp(1, max)
}

struct Scored {
    model: Homography,
    score: f64,
    inliers: usize,
}

fn score_model(model: Homography, corrs: &[PointMatch], weight: &SigmaWeight) -> Scored {
    let threshold = weight.threshold_sq();
    let mut score = 0.0;
    let mut inliers = 0;
    for c in corrs {
        let r2 = symmetric_transfer_error(&model, c);
        if r2 <= threshold {
            score += weight.weight(r2);
            inliers += 1;
        }
    }
    Scored { model, score, inliers }
}

/// Robust homography fit with σ-marginalized scoring and IRLS polishing.
///
/// Deterministic for a fixed seed. Too few candidates or an unfittable set
/// produce an empty mask, never an error.
pub fn magsac_filter(corrs: &[PointMatch], config: &MagsacConfig, seed: u64) -> InlierReport {
    let n = corrs.len();
    if n < 4 {
        return InlierReport::empty(n, 0, FilterOutcome::NotEnoughMatches);
    }
    let weight = SigmaWeight::new(config.sigma_max, config.quantile);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<Scored> = None;
    let mut budget = config.max_iterations;
    let mut used = 0;
    while used < budget {
        used += 1;
        let idx = sample(&mut rng, n, 4);
        let s = [corrs[idx.index(0)], corrs[idx.index(1)], corrs[idx.index(2)], corrs[idx.index(3)]];
        if is_degenerate_sample(&s) {
            continue;
        }
        let Some(model) = fit_minimal(&s) else {
            continue;
        };
        let scored = score_model(model, corrs, &weight);
        if best.as_ref().is_none_or(|b| scored.score > b.score) {
            budget = required_iterations(
                scored.inliers as f64 / n as f64,
                config.confidence,
                4,
                config.max_iterations,
            )
            .max(used);
            best = Some(scored);
        }
    }
    let Some(best) = best else {
        return InlierReport::empty(n, used, FilterOutcome::NoModel);
    };
    let best = polish(best, corrs, &weight, config);

    let threshold = weight.threshold_sq();
    let inlier_mask: Vec<bool> = corrs
        .iter()
        .map(|c| symmetric_transfer_error(&best.model, c) <= threshold)
        .collect();
    let inlier_count = inlier_mask.iter().filter(|&&m| m).count();
    InlierReport {
        homography: Some(best.model),
        inlier_mask,
        inlier_count,
        iterations_used: used,
        outcome: FilterOutcome::Fitted,
    }
}

/// Iteratively reweighted least squares from the best sampled model. A
/// polished model replaces the sampled one only if it scores at least as well.
fn polish(start: Scored, corrs: &[PointMatch], weight: &SigmaWeight, config: &MagsacConfig) -> Scored {
    let weights_for = |m: &Homography| -> Vec<f64> {
        corrs
            .iter()
            .map(|c| weight.weight(symmetric_transfer_error(m, c)))
            .collect()
    };
    let mut current = start.model;
    let mut weights = weights_for(&current);
    for _ in 0..config.polish_rounds {
        let Ok(next) = fit_homography_weighted(corrs, &weights) else {
            break;
        };
        let next_weights = weights_for(&next);
        let change = weights
            .iter()
            .zip(&next_weights)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        current = next;
        weights = next_weights;
        if change < config.polish_tolerance {
            break;
        }
    }
    let polished = score_model(current, corrs, weight);
    if polished.score >= start.score {
        polished
    } else {
        start
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_shape() {
        let w = SigmaWeight::new(10.0, 0.99);
        assert!((w.k() - 3.034854258770293).abs() < 1e-12);
        assert_eq!(w.weight(0.0), 1.0);
        assert_eq!(w.weight(w.threshold_sq()), 0.0);
        assert_eq!(w.weight(f64::INFINITY), 0.0);
        let mut prev = 1.0;
        for i in 1..1000 {
            let r2 = w.threshold_sq() * i as f64 / 1000.0;
            let v = w.weight(r2);
            assert!(v > 0.0 && v <= prev, "r2={r2} v={v}");
            prev = v;
        }
    }

    #[test]
    fn iteration_formula() {
        assert_eq!(required_iterations(1.0, 0.99, 4, 5000), 1);
        assert_eq!(required_iterations(0.0, 0.99, 4, 5000), 5000);
        // 0.5^4 = 1/16: ln(0.01)/ln(15/16) = 71.36
        assert_eq!(required_iterations(0.5, 0.99, 4, 5000), 72);
    }

    #[test]
    fn exact_identity_set() {
        let corrs: Vec<_> = (0..20)
            .map(|i| {
                let x = (i * 37 % 200) as f64 + 3.0;
                let y = (i * 91 % 170) as f64 + 5.0;
                PointMatch::new(x, y, x, y)
            })
            .collect();
        let r = magsac_filter(&corrs, &MagsacConfig::default(), 1);
        assert_eq!(r.inlier_count, 20);
        assert_eq!(r.outcome, FilterOutcome::Fitted);
        assert!(r.homography.unwrap().max_abs_diff(&Homography::identity()) < 1e-8);
    }

    #[test]
    fn too_few_matches() {
        let corrs = vec![PointMatch::new(0.0, 0.0, 1.0, 1.0); 3];
        let r = magsac_filter(&corrs, &MagsacConfig::default(), 0);
        assert_eq!(r.outcome, FilterOutcome::NotEnoughMatches);
        assert_eq!(r.inlier_mask, vec![false; 3]);
        assert_eq!(r.inlier_count, 0);
    }

    #[test]
    fn all_degenerate_is_no_model() {
        let corrs: Vec<_> = (0..10).map(|i| PointMatch::new(i as f64, 0.0, i as f64, 0.0)).collect();
        let r = magsac_filter(&corrs, &MagsacConfig { max_iterations: 50, ..Default::default() }, 0);
        assert_eq!(r.outcome, FilterOutcome::NoModel);
        assert_eq!(r.iterations_used, 50);
        assert_eq!(r.inlier_count, 0);
    }
}
