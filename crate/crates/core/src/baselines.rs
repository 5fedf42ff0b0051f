//! Agglomerative clustering over the dissimilarity matrix with an oracle
//! cut, an upper bound for interactive dendrogram-cutting workflows.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusError;
use crate::metrics::{self, MetricsError};
use crate::simmatrix::DissimilarityMatrix;
use crate::Partition;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linkage {
    #[default]
    Average,
    Single,
    Complete,
}

impl std::str::FromStr for Linkage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "average" => Ok(Linkage::Average),
            "single" => Ok(Linkage::Single),
            "complete" => Ok(Linkage::Complete),
            other => Err(format!("unknown linkage {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Ami,
    Ari,
    Fmi,
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ami" => Ok(Metric::Ami),
            "ari" => Ok(Metric::Ari),
            "fmi" => Ok(Metric::Fmi),
            other => Err(format!("unknown metric {other:?}")),
        }
    }
}

impl Metric {
    pub fn score(self, truth: &Partition, pred: &Partition) -> Result<f64, MetricsError> {
        match self {
            Metric::Ami => metrics::ami(truth, pred),
            Metric::Ari => metrics::ari(truth, pred),
            Metric::Fmi => Ok(metrics::pairwise_pr_fmi(truth, pred)?.fmi),
        }
    }
}

/// One agglomeration step. Leaves are `0..n`; the cluster created by merge
/// `t` gets id `n + t`. `left < right`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dendrogram {
    n: usize,
    merges: Vec<Merge>,
}

impl Dendrogram {
    pub fn n_leaves(&self) -> usize {
        self.n
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    /// Partition after applying the first `level` merges.
    pub fn cut_level(&self, level: usize) -> Partition {
        assert!(level < self.n.max(1), "a dendrogram over n leaves has n levels");
        let mut parent: Vec<usize> = (0..self.n + level).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (t, m) in self.merges[..level].iter().enumerate() {
            let id = self.n + t;
            let (l, r) = (find(&mut parent, m.left), find(&mut parent, m.right));
            parent[l] = id;
            parent[r] = id;
        }
        let roots: Vec<usize> = (0..self.n).map(|i| find(&mut parent, i)).collect();
        Partition::from_labels(&roots)
    }

    /// Clusters joined by merges at or below `height`.
    pub fn cut(&self, height: f64) -> Partition {
        let level = self.merges.iter().take_while(|m| m.height <= height).count();
        self.cut_level(level.min(self.n.saturating_sub(1)))
    }

    /// `merge_index,left,right,height`.
    pub fn write_csv(&self, path: &Path) -> Result<(), CorpusError> {
        let mut writer = csv::Writer::from_path(path).map_err(|e| CorpusError::csv(path, e))?;
        let io = |e| CorpusError::csv(path, e);
        writer.write_record(["merge_index", "left", "right", "height"]).map_err(io)?;
        for (t, m) in self.merges.iter().enumerate() {
            writer
                .write_record([t.to_string(), m.left.to_string(), m.right.to_string(), m.height.to_string()])
                .map_err(io)?;
        }
        writer.flush().map_err(|e| CorpusError::io(path, e))
    }
}

/// Sequential agglomeration; each step merges the closest pair of active
/// clusters, ties broken by the smallest `(row, column)` slot pair.
pub fn agglomerative(d: &DissimilarityMatrix, linkage: Linkage) -> Dendrogram {
    let n = d.len();
    let mut dist: Vec<f64> = (0..n).flat_map(|i| d.row(i).to_vec()).collect();
    let mut active = vec![true; n];
    let mut size = vec![1usize; n];
    let mut id: Vec<usize> = (0..n).collect();
    // nearest active column to the right of each row
    let mut nn = vec![usize::MAX; n];
    let mut nn_dist = vec![f64::INFINITY; n];
    let rescan = |i: usize, active: &[bool], dist: &[f64], nn: &mut [usize], nn_dist: &mut [f64]| {
        nn[i] = usize::MAX;
        nn_dist[i] = f64::INFINITY;
        for j in i + 1..n {
            if active[j] && dist[i * n + j] < nn_dist[i] {
                nn[i] = j;
                nn_dist[i] = dist[i * n + j];
            }
        }
    };
    for i in 0..n {
        rescan(i, &active, &dist, &mut nn, &mut nn_dist);
    }
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for t in 0..n.saturating_sub(1) {
        let mut i = usize::MAX;
        for k in 0..n {
            if active[k] && nn[k] != usize::MAX && (i == usize::MAX || nn_dist[k] < nn_dist[i]) {
                i = k;
            }
        }
        let j = nn[i];
        let height = nn_dist[i];
        let (a, b) = (id[i].min(id[j]), id[i].max(id[j]));
        merges.push(Merge {
            left: a,
            right: b,
            height,
            size: size[i] + size[j],
        });
        // slot i holds the merged cluster, slot j retires
        active[j] = false;
        for k in 0..n {
            if !active[k] || k == i {
                continue;
            }
            let (dki, dkj) = (dist[k * n + i], dist[k * n + j]);
            let merged = match linkage {
                Linkage::Average => (size[i] as f64 * dki + size[j] as f64 * dkj) / (size[i] + size[j]) as f64,
                Linkage::Single => dki.min(dkj),
                Linkage::Complete => dki.max(dkj),
            };
            dist[k * n + i] = merged;
            dist[i * n + k] = merged;
        }
        size[i] += size[j];
        id[i] = n + t;
        rescan(i, &active, &dist, &mut nn, &mut nn_dist);
        for k in 0..i {
            if !active[k] {
                continue;
            }
            if nn[k] == i || nn[k] == j {
                rescan(k, &active, &dist, &mut nn, &mut nn_dist);
            } else {
                let v = dist[k * n + i];
                if v < nn_dist[k] || (v == nn_dist[k] && i < nn[k]) {
                    nn[k] = i;
                    nn_dist[k] = v;
                }
            }
        }
        for k in i + 1..j {
            if active[k] && nn[k] == j {
                rescan(k, &active, &dist, &mut nn, &mut nn_dist);
            }
        }
    }
    Dendrogram { n, merges }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleCut {
    pub partition: Partition,
    pub score: f64,
    /// Number of merges applied.
    pub level: usize,
}

/// Scores every level of the hierarchy against ground truth and keeps the
/// best (the lowest level on ties).
pub fn oracle_best_cut(dend: &Dendrogram, truth: &Partition, metric: Metric) -> Result<OracleCut, MetricsError> {
    if truth.len() != dend.n {
        return Err(MetricsError::LengthMismatch {
            left: truth.len(),
            right: dend.n,
        });
    }
    let mut best: Option<OracleCut> = None;
    for level in 0..dend.n {
        let partition = dend.cut_level(level);
        let score = metric.score(truth, &partition)?;
        if best.as_ref().is_none_or(|b| score > b.score) {
            best = Some(OracleCut {
                partition,
                score,
                level,
            });
        }
    }
    best.ok_or(MetricsError::Undefined("empty dendrogram"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Corpus;

    fn dmat(n: usize, d: &[f64]) -> DissimilarityMatrix {
        DissimilarityMatrix::from_raw(Corpus::from_ids("t", (0..n).map(|i| format!("c{i}"))).unwrap().ids(), d.to_vec())
    }

    fn merge(left: usize, right: usize, height: f64, size: usize) -> Merge {
        Merge {
            left,
            right,
            height,
            size,
        }
    }

    #[test]
    fn hand_computed_average_linkage() {
        #[rustfmt::skip]
        let d = dmat(4, &[
            0.0, 2.0, 6.0, 10.0,
            2.0, 0.0, 5.0, 9.0,
            6.0, 5.0, 0.0, 4.0,
            10.0, 9.0, 4.0, 0.0,
        ]);
        let dend = agglomerative(&d, Linkage::Average);
        // {0,1} at 2; {2,3} at 4; then mean(6, 10, 5, 9) = 7.5
        assert_eq!(dend.merges(), &[merge(0, 1, 2.0, 2), merge(2, 3, 4.0, 2), merge(4, 5, 7.5, 4)]);
        assert_eq!(agglomerative(&d, Linkage::Single).merges()[2].height, 5.0);
        assert_eq!(agglomerative(&d, Linkage::Complete).merges()[2].height, 10.0);
    }

    #[test]
    fn zero_distance_pairs_merge_first() {
        #[rustfmt::skip]
        let d = dmat(4, &[
            0.0, 9.0, 0.0, 9.0,
            9.0, 0.0, 9.0, 0.0,
            0.0, 9.0, 0.0, 9.0,
            9.0, 0.0, 9.0, 0.0,
        ]);
        let dend = agglomerative(&d, Linkage::Average);
        assert_eq!(&dend.merges()[..2], &[merge(0, 2, 0.0, 2), merge(1, 3, 0.0, 2)]);
        let two = dmat(2, &[0.0, 3.5, 3.5, 0.0]);
        assert_eq!(agglomerative(&two, Linkage::Average).merges(), &[merge(0, 1, 3.5, 2)]);
    }

    #[test]
    fn cuts_and_oracle() {
        #[rustfmt::skip]
        let d = dmat(4, &[
            0.0, 2.0, 6.0, 10.0,
            2.0, 0.0, 5.0, 9.0,
            6.0, 5.0, 0.0, 4.0,
            10.0, 9.0, 4.0, 0.0,
        ]);
        let dend = agglomerative(&d, Linkage::Average);
        assert_eq!(dend.cut(1.0), Partition::singletons(4));
        assert_eq!(dend.cut(100.0).n_clusters(), 1);
        let truth = Partition::from_labels(&[0, 0, 1, 1]);
        assert_eq!(dend.cut(5.0), truth);
        let best = oracle_best_cut(&dend, &truth, Metric::Ami).unwrap();
        assert_eq!((best.score, best.level), (1.0, 2));
        assert_eq!(best.partition, truth);
    }

    #[test]
    fn dendrogram_csv() {
        let dir = tempfile::tempdir().unwrap();
        let d = dmat(3, &[0.0, 1.0, 4.0, 1.0, 0.0, 2.0, 4.0, 2.0, 0.0]);
        let path = dir.path().join("d.csv");
        agglomerative(&d, Linkage::Average).write_csv(&path).unwrap();
        assert_eq!(std::fs::read_to_string(path).unwrap(), "merge_index,left,right,height\n0,0,1,1\n1,2,3,3\n");
    }
}
