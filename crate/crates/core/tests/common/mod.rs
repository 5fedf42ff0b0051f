//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;

/// Pair classes over all unordered item pairs:
/// (together in both, only in u, only in v, apart in both).
pub fn pair_classes(u: &[usize], v: &[usize]) -> (f64, f64, f64, f64) {
    let (mut a, mut b, mut c, mut d) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..u.len() {
        for j in i + 1..u.len() {
            match (u[i] == u[j], v[i] == v[j]) {
                (true, true) => a += 1.0,
                (true, false) => b += 1.0,
                (false, true) => c += 1.0,
                (false, false) => d += 1.0,
            }
        }
    }
    (a, b, c, d)
}

fn same_partition(u: &[usize], v: &[usize]) -> bool {
    (0..u.len()).all(|i| (0..u.len()).all(|j| (u[i] == u[j]) == (v[i] == v[j])))
}

pub fn ari(u: &[usize], v: &[usize]) -> f64 {
    if same_partition(u, v) {
        return 1.0;
    }
    let (a, b, c, d) = pair_classes(u, v);
    let denom = (a + b) * (b + d) + (a + c) * (c + d);
    if denom == 0.0 {
        0.0
    } else {
        2.0 * (a * d - b * c) / denom
    }
}

/// (precision, recall) of `pred` against `truth` over co-clustered pairs.
pub fn pairwise(truth: &[usize], pred: &[usize]) -> (f64, f64) {
    let (tp, only_truth, only_pred, _) = pair_classes(truth, pred);
    let ratio = |tp: f64, total: f64, other_total: f64| {
        if total > 0.0 {
            tp / total
        } else if other_total == 0.0 {
            1.0
        } else {
            0.0
        }
    };
    let pred_pairs = tp + only_pred;
    let truth_pairs = tp + only_truth;
    (ratio(tp, pred_pairs, truth_pairs), ratio(tp, truth_pairs, pred_pairs))
}

pub fn entropy(u: &[usize]) -> f64 {
    let n = u.len() as f64;
    let mut counts: HashMap<usize, f64> = HashMap::new();
    for &l in u {
        *counts.entry(l).or_default() += 1.0;
    }
    -counts.values().map(|&c| c / n * (c / n).ln()).sum::<f64>()
}

pub fn mi(u: &[usize], v: &[usize]) -> f64 {
    let n = u.len() as f64;
    let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
    let mut cu: HashMap<usize, f64> = HashMap::new();
    let mut cv: HashMap<usize, f64> = HashMap::new();
    for (&a, &b) in u.iter().zip(v) {
        *joint.entry((a, b)).or_default() += 1.0;
        *cu.entry(a).or_default() += 1.0;
        *cv.entry(b).or_default() += 1.0;
    }
    joint
        .iter()
        .map(|(&(a, b), &c)| c / n * (n * c / (cu[&a] * cv[&b])).ln())
        .sum()
}

/// Expected MI by averaging over every permutation of `v` (Heap's algorithm).
pub fn emi_exact(u: &[usize], v: &[usize]) -> f64 {
    let mut perm = v.to_vec();
    let n = perm.len();
    let mut c = vec![0usize; n];
    let mut total = mi(u, &perm);
    let mut count = 1.0;
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            total += mi(u, &perm);
            count += 1.0;
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    total / count
}

/// Monte-Carlo estimate of expected MI: (mean, standard error).
pub fn emi_monte_carlo(u: &[usize], v: &[usize], samples: usize, rng: &mut impl Rng) -> (f64, f64) {
    let mut perm = v.to_vec();
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        perm.shuffle(rng);
        let x = mi(u, &perm);
        sum += x;
        sum_sq += x * x;
    }
    let k = samples as f64;
    let mean = sum / k;
    let var = (sum_sq / k - mean * mean).max(0.0) * k / (k - 1.0);
    (mean, (var / k).sqrt())
}

pub fn ami(u: &[usize], v: &[usize], emi: f64) -> f64 {
    if same_partition(u, v) {
        return 1.0;
    }
    let denom = 0.5 * (entropy(u) + entropy(v)) - emi;
    if denom <= 1e-15 {
        0.0
    } else {
        (mi(u, v) - emi) / denom
    }
}

/// Random labels over `n` items with at most `k` distinct values.
pub fn random_labels(rng: &mut impl Rng, n: usize) -> Vec<usize> {
    let k = rng.random_range(1..=n);
    (0..n).map(|_| rng.random_range(0..k)).collect()
}
