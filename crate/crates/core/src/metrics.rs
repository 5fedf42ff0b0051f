//! Internal (silhouette) and external (ARI, AMI, FMI, pairwise
//! precision/recall) clustering validity measures.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::simmatrix::DissimilarityMatrix;
use crate::Partition;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("partition sizes differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    /// Silhouette is undefined for fewer than two clusters or all singletons.
    #[error("silhouette undefined: {0}")]
    Undefined(&'static str),
}

/// Counts `n_ij` of items in cluster `i` of U and cluster `j` of V.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContingencyTable {
    /// Nonzero cells sorted by `(i, j)`.
    cells: Vec<((usize, usize), u64)>,
    row_sums: Vec<u64>,
    col_sums: Vec<u64>,
    n: u64,
}

impl ContingencyTable {
    pub fn new(u: &Partition, v: &Partition) -> Result<Self, MetricsError> {
        check_lengths(u, v)?;
        let mut cells: HashMap<(usize, usize), u64> = HashMap::new();
        for (&a, &b) in u.labels().iter().zip(v.labels()) {
            *cells.entry((a, b)).or_default() += 1;
        }
        let mut cells: Vec<_> = cells.into_iter().collect();
        cells.sort_unstable();
        Ok(ContingencyTable {
            cells,
            row_sums: u.sizes().into_iter().map(|s| s as u64).collect(),
            col_sums: v.sizes().into_iter().map(|s| s as u64).collect(),
            n: u.len() as u64,
        })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn row_sums(&self) -> &[u64] {
        &self.row_sums
    }

    pub fn col_sums(&self) -> &[u64] {
        &self.col_sums
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        self.cells.iter().map(|&((i, j), c)| (i, j, c))
    }

    fn pairs_within_cells(&self) -> u64 {
        self.cells.iter().map(|&(_, c)| choose2(c)).sum()
    }
}

fn check_lengths(u: &Partition, v: &Partition) -> Result<(), MetricsError> {
    if u.len() != v.len() {
        return Err(MetricsError::LengthMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    Ok(())
}

fn choose2(k: u64) -> u64 {
    k * k.saturating_sub(1) / 2
}

/// External agreement between a reference and a predicted partition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ami: f64,
    pub ari: f64,
    pub fmi: f64,
    pub precision: f64,
    pub recall: f64,
}

impl MetricsReport {
    pub fn compute(truth: &Partition, pred: &Partition) -> Result<Self, MetricsError> {
        let pr = pairwise_pr_fmi(truth, pred)?;
        Ok(MetricsReport {
            ami: ami(truth, pred)?,
            ari: ari(truth, pred)?,
            fmi: pr.fmi,
            precision: pr.precision,
            recall: pr.recall,
        })
    }
}

/// Mean silhouette over all items of `d`.
///
/// Items in singleton clusters score 0. Undefined when the partition has
/// fewer than two clusters or only singletons.
pub fn silhouette(d: &DissimilarityMatrix, p: &Partition) -> Result<f64, MetricsError> {
    let n = d.len();
    if p.len() != n {
        return Err(MetricsError::LengthMismatch {
            left: n,
            right: p.len(),
        });
    }
    let scores = silhouette_samples(d, p)?;
    Ok(scores.iter().sum::<f64>() / n as f64)
}

/// Per-item silhouette values `s(x_i)`.
pub fn silhouette_samples(d: &DissimilarityMatrix, p: &Partition) -> Result<Vec<f64>, MetricsError> {
    let n = d.len();
    if p.len() != n {
        return Err(MetricsError::LengthMismatch {
            left: n,
            right: p.len(),
        });
    }
    let k = p.n_clusters();
    if k < 2 {
        return Err(MetricsError::Undefined("fewer than two clusters"));
    }
    if k == n {
        return Err(MetricsError::Undefined("every cluster is a singleton"));
    }
    let sizes = p.sizes();
    let labels = p.labels();
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let own = labels[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0f64; k];
            for (j, &dij) in d.row(i).iter().enumerate() {
                sums[labels[j]] += dij;
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom > 0.0 {
                (b - a) / denom
            } else {
                0.0
            }
        })
        .collect())
}

/// Adjusted Rand index, Hubert–Arabie form. 1.0 for identical partitions.
pub fn ari(u: &Partition, v: &Partition) -> Result<f64, MetricsError> {
    check_lengths(u, v)?;
    if u == v {
        return Ok(1.0);
    }
    let table = ContingencyTable::new(u, v)?;
    let index = table.pairs_within_cells() as f64;
    let sum_a = table.row_sums.iter().map(|&a| choose2(a)).sum::<u64>() as f64;
    let sum_b = table.col_sums.iter().map(|&b| choose2(b)).sum::<u64>() as f64;
    let total = choose2(table.n) as f64;
    if total == 0.0 {
        return Ok(0.0);
    }
    let expected = sum_a * sum_b / total;
    let max = 0.5 * (sum_a + sum_b);
    let denom = max - expected;
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((index - expected) / denom)
}

/// Table of `ln(k!)` for `k = 0..=n`.
struct LogFactorials(Vec<f64>);

impl LogFactorials {
    fn new(n: u64) -> Self {
        let mut table = Vec::with_capacity(n as usize + 1);
        let mut acc = 0.0f64;
        table.push(0.0);
        for k in 1..=n {
            acc += (k as f64).ln();
            table.push(acc);
        }
        LogFactorials(table)
    }

    fn get(&self, k: u64) -> f64 {
        self.0[k as usize]
    }
}

fn entropy(sizes: &[u64], n: u64) -> f64 {
    let n = n as f64;
    -sizes
        .iter()
        .filter(|&&s| s > 0)
        .map(|&s| {
            let p = s as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

/// Mutual information (nats) of a contingency table.
pub fn mutual_information(table: &ContingencyTable) -> f64 {
    let n = table.n as f64;
    table
        .cells()
        .map(|(i, j, c)| {
            let c = c as f64;
            let a = table.row_sums[i] as f64;
            let b = table.col_sums[j] as f64;
            c / n * (n * c / (a * b)).ln()
        })
        .sum()
}

/// Expected mutual information under the hypergeometric permutation model,
/// summed exactly over every feasible cell count.
pub fn expected_mutual_information(row_sums: &[u64], col_sums: &[u64], n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let lf = LogFactorials::new(n);
    // Many clusters share a size; the cell term depends only on (a, b).
    let group = |sums: &[u64]| {
        let mut g: BTreeMap<u64, u64> = BTreeMap::new();
        for &s in sums.iter().filter(|&&s| s > 0) {
            *g.entry(s).or_default() += 1;
        }
        g
    };
    let rows = group(row_sums);
    let cols = group(col_sums);
    let nf = n as f64;
    let mut emi = 0.0;
    for (&a, &ka) in &rows {
        for (&b, &kb) in &cols {
            let lo = (a + b).saturating_sub(n).max(1);
            let hi = a.min(b);
            let fixed = lf.get(a) + lf.get(b) + lf.get(n - a) + lf.get(n - b) - lf.get(n);
            let mut term = 0.0;
            for nij in lo..=hi {
                let log_p = fixed
                    - lf.get(nij)
                    - lf.get(a - nij)
                    - lf.get(b - nij)
                    - lf.get(n + nij - a - b);
                let x = nij as f64;
                term += x / nf * (nf * x / (a as f64 * b as f64)).ln() * log_p.exp();
            }
            emi += (ka * kb) as f64 * term;
        }
    }
    emi
}

/// Adjusted mutual information with arithmetic-mean normalization.
pub fn ami(u: &Partition, v: &Partition) -> Result<f64, MetricsError> {
    check_lengths(u, v)?;
    if u == v {
        return Ok(1.0);
    }
    let table = ContingencyTable::new(u, v)?;
    let mi = mutual_information(&table);
    let emi = expected_mutual_information(&table.row_sums, &table.col_sums, table.n);
    let h = 0.5 * (entropy(&table.row_sums, table.n) + entropy(&table.col_sums, table.n));
    let denom = h - emi;
    if denom <= 1e-15 {
        return Ok(0.0);
    }
    Ok((mi - emi) / denom)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairwiseScores {
    pub precision: f64,
    pub recall: f64,
    pub fmi: f64,
}

/// Pairwise precision and recall of `pred` against `truth`, and their
/// geometric mean (Fowlkes–Mallows index).
pub fn pairwise_pr_fmi(truth: &Partition, pred: &Partition) -> Result<PairwiseScores, MetricsError> {
    let table = ContingencyTable::new(truth, pred)?;
    let tp = table.pairs_within_cells();
    let true_pairs: u64 = table.row_sums.iter().map(|&a| choose2(a)).sum();
    let pred_pairs: u64 = table.col_sums.iter().map(|&b| choose2(b)).sum();
    let ratio = |num: u64, den: u64, other: u64| {
        if den == 0 {
            if other == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(tp, pred_pairs, true_pairs);
    let recall = ratio(tp, true_pairs, pred_pairs);
    Ok(PairwiseScores {
        precision,
        recall,
        fmi: fmi_from(precision, recall),
    })
}

/// Geometric mean of pairwise precision and recall.
pub fn fmi_from(precision: f64, recall: f64) -> f64 {
    (precision * recall).sqrt()
}

/// Pearson correlation; `None` when either series is constant or shorter than 2.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(labels: &[usize]) -> Partition {
        Partition::from_labels(labels)
    }

    fn dissim(n: usize, f: impl Fn(usize, usize) -> f64) -> DissimilarityMatrix {
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    d[i * n + j] = f(i, j);
                }
            }
        }
        DissimilarityMatrix::from_raw(crate::corpus::Corpus::from_ids("t", (0..n).map(|i| i.to_string())).unwrap().ids(), d)
    }

    #[test]
    fn silhouette_separated_clusters() {
        let part = p(&[0, 0, 1, 1]);
        let d = dissim(4, |i, j| if part.labels()[i] == part.labels()[j] { 0.0 } else { 10.0 });
        assert_eq!(silhouette(&d, &part).unwrap(), 1.0);
    }

    #[test]
    fn silhouette_singleton_scores_zero() {
        let part = p(&[0, 0, 1]);
        let d = dissim(3, |i, j| if i < 2 && j < 2 { 0.0 } else { 10.0 });
        let s = silhouette(&d, &part).unwrap();
        assert!((s - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn silhouette_undefined_cases() {
        let d = dissim(3, |_, _| 1.0);
        assert!(matches!(silhouette(&d, &p(&[0, 0, 0])), Err(MetricsError::Undefined(_))));
        assert!(matches!(silhouette(&d, &p(&[0, 1, 2])), Err(MetricsError::Undefined(_))));
        assert!(matches!(silhouette(&d, &p(&[0, 1])), Err(MetricsError::LengthMismatch { .. })));
    }

    #[test]
    fn ari_hand_tables() {
        assert_eq!(ari(&p(&[0, 0, 1, 1]), &p(&[0, 0, 1, 1])).unwrap(), 1.0);
        // all n_ij = 1: index 0, expected 2/3, max 2
        assert!((ari(&p(&[0, 0, 1, 1]), &p(&[0, 1, 0, 1])).unwrap() + 0.5).abs() < 1e-15);
        // index 2, expected 2, max 4
        assert_eq!(ari(&p(&[0, 0, 1, 1]), &p(&[0, 0, 0, 0])).unwrap(), 0.0);
        assert!(ari(&p(&[0]), &p(&[0, 1])).is_err());
    }

    #[test]
    fn ami_hand_cases() {
        let u = p(&[0, 0, 1, 1, 2, 2]);
        assert_eq!(ami(&u, &u).unwrap(), 1.0);
        assert_eq!(ami(&u, &p(&[5, 5, 3, 3, 9, 9])).unwrap(), 1.0);
        assert_eq!(ami(&p(&[0, 0, 1, 1]), &p(&[0, 0, 0, 0])).unwrap(), 0.0);
        assert_eq!(expected_mutual_information(&[2, 2], &[4], 4), 0.0);
    }

    #[test]
    fn pairwise_scores_by_enumeration() {
        // true {a,b,c},{d}; predicted {a,b},{c,d}
        let s = pairwise_pr_fmi(&p(&[0, 0, 0, 1]), &p(&[0, 0, 1, 1])).unwrap();
        assert!((s.precision - 0.5).abs() < 1e-15);
        assert!((s.recall - 1.0 / 3.0).abs() < 1e-15);
        assert!((s.fmi - (1.0f64 / 6.0).sqrt()).abs() < 1e-15);

        let all_single = pairwise_pr_fmi(&p(&[0, 1, 2]), &p(&[0, 1, 2])).unwrap();
        assert_eq!((all_single.precision, all_single.recall), (1.0, 1.0));
        let s = pairwise_pr_fmi(&p(&[0, 0, 1]), &p(&[0, 1, 2])).unwrap();
        assert_eq!((s.precision, s.recall), (0.0, 0.0));
    }

    #[test]
    fn fmi_matches_reported_table_values() {
        assert_eq!(format!("{:.3}", fmi_from(0.674, 0.329)), "0.471");
        assert_eq!(format!("{:.3}", fmi_from(0.914, 0.540)), "0.703");
    }

    #[test]
    fn report_json_keys() {
        let r = MetricsReport::compute(&p(&[0, 0, 1]), &p(&[0, 0, 1])).unwrap();
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(json, r#"{"ami":1.0,"ari":1.0,"fmi":1.0,"precision":1.0,"recall":1.0}"#);
    }

    #[test]
    fn pearson_basic() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(pearson(&[1.0, 1.0], &[2.0, 3.0]).is_none());
    }
}
