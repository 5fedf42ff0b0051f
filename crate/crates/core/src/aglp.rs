//! Threshold graphs over the similarity matrix, label propagation, and the
//! silhouette-driven sweep over every attained threshold.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{self, CoinId, Corpus, CorpusError};
use crate::metrics::{self, MetricsError, MetricsReport};
use crate::simmatrix::{DissimilarityMatrix, SimilarityMatrix};
use crate::Partition;

pub const MAX_SWEEPS: usize = 100;

#[derive(Debug, thiserror::Error)]
pub enum AglpError {
    #[error("no threshold yields a partition with a defined silhouette")]
    NoValidPartition,
    #[error("need at least 2 coins, got {0}")]
    TooSmall(usize),
    #[error("similarity and dissimilarity matrices cover different coins")]
    IdMismatch,
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[default]
    LabelPropagation,
    Connected,
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "label_propagation" | "lp" => Ok(Algorithm::LabelPropagation),
            "connected" | "cc" => Ok(Algorithm::Connected),
            other => Err(format!("unknown algorithm {other:?}")),
        }
    }
}

/// Unweighted graph with an edge wherever the match count reaches `tau`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DieGraph {
    adjacency: Vec<Vec<usize>>,
    tau: u32,
}

impl DieGraph {
    /// Graph from an explicit edge list; self-loops and duplicates are dropped.
    pub fn from_edges(n: usize, edges: &[(usize, usize)], tau: u32) -> Self {
        let mut adjacency = vec![Vec::new(); n];
        for &(i, j) in edges {
            if i != j {
                adjacency[i].push(j);
                adjacency[j].push(i);
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        DieGraph { adjacency, tau }
    }

    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    pub fn tau(&self) -> u32 {
        self.tau
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    /// Edges as `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, list)| list.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
            .collect()
    }

    pub fn n_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }
}

pub fn build_graph(m: &SimilarityMatrix, tau: u32) -> DieGraph {
    assert!(tau >= 1, "tau must be positive");
    let n = m.len();
    let adjacency = (0..n)
        .map(|i| (0..n).filter(|&j| j != i && m.get(i, j) >= tau).collect())
        .collect();
    DieGraph { adjacency, tau }
}

pub fn connected_components(g: &DieGraph) -> Partition {
    let n = g.n();
    let mut label = vec![usize::MAX; n];
    let mut stack = Vec::new();
    for start in 0..n {
        if label[start] != usize::MAX {
            continue;
        }
        label[start] = start;
        stack.push(start);
        while let Some(v) = stack.pop() {
            for &w in g.neighbors(v) {
                if label[w] == usize::MAX {
                    label[w] = start;
                    stack.push(w);
                }
            }
        }
    }
    Partition::from_labels(&label)
}

/// Asynchronous label propagation starting from one label per node.
pub fn label_propagation(g: &DieGraph, seed: u64) -> Partition {
    let initial: Vec<usize> = (0..g.n()).collect();
    label_propagation_from(g, &initial, seed)
}

/// Label propagation from arbitrary initial labels (values below `g.n()`
/// are not required; any `usize` works).
///
/// A node keeps its label while that label is among the most frequent in
/// its neighborhood; otherwise it takes one of the most frequent labels,
/// chosen uniformly with the seeded generator.
pub fn label_propagation_from(g: &DieGraph, initial: &[usize], seed: u64) -> Partition {
    let n = g.n();
    assert_eq!(initial.len(), n, "one initial label per node");
    let mut labels = initial.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut counts: Vec<(usize, u32)> = Vec::new();
    let mut best: Vec<usize> = Vec::new();
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        order.shuffle(&mut rng);
        let mut changed = false;
        for &v in &order {
            let neighbors = g.neighbors(v);
            if neighbors.is_empty() {
                continue;
            }
            counts.clear();
            counts.extend(neighbors.iter().map(|&w| (labels[w], 1)));
            counts.sort_unstable_by_key(|&(l, _)| l);
            counts.dedup_by(|next, kept| {
                if next.0 == kept.0 {
                    kept.1 += 1;
                    true
                } else {
                    false
                }
            });
            let top = counts.iter().map(|&(_, c)| c).max().unwrap_or(0);
            best.clear();
            best.extend(counts.iter().filter(|&&(_, c)| c == top).map(|&(l, _)| l));
            if !best.contains(&labels[v]) {
                labels[v] = best[rng.random_range(0..best.len())];
                changed = true;
            }
        }
        if !changed {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("label propagation hit {MAX_SWEEPS} sweeps at tau {}; keeping last labels", g.tau);
    }
    Partition::from_labels(&labels)
}

pub fn cluster(g: &DieGraph, algorithm: Algorithm, seed: u64) -> Partition {
    match algorithm {
        Algorithm::LabelPropagation => label_propagation(g, seed),
        Algorithm::Connected => connected_components(g),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub tau: u32,
    pub partition: Partition,
    /// `None` marks a row whose silhouette is undefined.
    pub silhouette: Option<f64>,
    pub external: Option<MetricsReport>,
}

impl SweepRow {
    pub fn n_clusters(&self) -> usize {
        self.partition.n_clusters()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub tau_star: u32,
    pub best: Partition,
}

impl SweepResult {
    pub fn best_row(&self) -> &SweepRow {
        self.rows
            .iter()
            .find(|r| r.tau == self.tau_star)
            .expect("tau_star comes from the rows")
    }

    pub fn valid_rows(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| r.silhouette.is_some())
    }

    /// `tau,silhouette,n_clusters[,ami,ari,fmi]`; undefined values are empty.
    pub fn write_csv(&self, path: &Path) -> Result<(), CorpusError> {
        let with_truth = self.rows.iter().any(|r| r.external.is_some());
        let mut writer = csv::Writer::from_path(path).map_err(|e| CorpusError::csv(path, e))?;
        let io = |e| CorpusError::csv(path, e);
        let mut header = vec!["tau", "silhouette", "n_clusters"];
        if with_truth {
            header.extend(["ami", "ari", "fmi"]);
        }
        writer.write_record(&header).map_err(io)?;
        for row in &self.rows {
            let mut fields = vec![
                row.tau.to_string(),
                row.silhouette.map(|s| s.to_string()).unwrap_or_default(),
                row.n_clusters().to_string(),
            ];
            if with_truth {
                match &row.external {
                    Some(r) => fields.extend([r.ami.to_string(), r.ari.to_string(), r.fmi.to_string()]),
                    None => fields.extend([String::new(), String::new(), String::new()]),
                }
            }
            writer.write_record(&fields).map_err(io)?;
        }
        writer.flush().map_err(|e| CorpusError::io(path, e))
    }
}

/// Clusters the threshold graph at every distinct positive match count and
/// keeps the partition with the highest silhouette (smallest τ on ties).
pub fn sweep_thresholds(
    m: &SimilarityMatrix,
    d: &DissimilarityMatrix,
    algorithm: Algorithm,
    seed: u64,
    truth: Option<&Partition>,
) -> Result<SweepResult, AglpError> {
    let n = m.len();
    if n < 2 {
        return Err(AglpError::TooSmall(n));
    }
    if m.ids() != d.ids() {
        return Err(AglpError::IdMismatch);
    }
    if let Some(t) = truth {
        if t.len() != n {
            return Err(MetricsError::LengthMismatch {
                left: t.len(),
                right: n,
            }
            .into());
        }
    }
    let rows = m
        .distinct_positive()
        .into_par_iter()
        .map(|tau| {
            let partition = cluster(&build_graph(m, tau), algorithm, seed);
            let silhouette = match metrics::silhouette(d, &partition) {
                Ok(s) => Some(s),
                Err(MetricsError::Undefined(_)) => None,
                Err(e) => return Err(e),
            };
            let external = truth.map(|t| MetricsReport::compute(t, &partition)).transpose()?;
            Ok(SweepRow {
                tau,
                partition,
                silhouette,
                external,
            })
        })
        .collect::<Result<Vec<_>, MetricsError>>()?;
    let mut best: Option<(f64, usize)> = None;
    for (k, row) in rows.iter().enumerate() {
        if let Some(s) = row.silhouette {
            if best.is_none_or(|(top, _)| s > top) {
                best = Some((s, k));
            }
        }
    }
    let (_, k) = best.ok_or(AglpError::NoValidPartition)?;
    Ok(SweepResult {
        tau_star: rows[k].tau,
        best: rows[k].partition.clone(),
        rows,
    })
}

/// `coin_id,cluster_id` with clusters numbered in canonical order.
pub fn write_partition_csv(ids: &[CoinId], p: &Partition, path: &Path) -> Result<(), CorpusError> {
    assert_eq!(ids.len(), p.len(), "one label per coin");
    let mut writer = csv::Writer::from_path(path).map_err(|e| CorpusError::csv(path, e))?;
    let io = |e| CorpusError::csv(path, e);
    writer.write_record(["coin_id", "cluster_id"]).map_err(io)?;
    for (id, label) in ids.iter().zip(p.labels()) {
        writer.write_record([id.as_str(), &label.to_string()]).map_err(io)?;
    }
    writer.flush().map_err(|e| CorpusError::io(path, e))
}

/// Reads a partition CSV in corpus order; every corpus coin needs a row.
/// Cluster ids are arbitrary strings.
pub fn read_partition_csv(path: &Path, corpus: &Corpus) -> Result<Partition, CorpusError> {
    let mut reader = corpus::open_csv(path, "coin_id,cluster_id")?;
    let mut labels: Vec<Option<String>> = vec![None; corpus.len()];
    for record in reader.records() {
        let record = record.map_err(|e| CorpusError::csv(path, e))?;
        let id = CoinId::new(record.get(0).unwrap_or_default())?;
        let pos = corpus
            .position(&id)
            .ok_or_else(|| CorpusError::UnknownCoin(id.to_string()))?;
        labels[pos] = Some(record.get(1).unwrap_or_default().to_string());
    }
    let labels = labels
        .into_iter()
        .zip(corpus.coins())
        .map(|(l, c)| l.ok_or_else(|| CorpusError::MissingLabel(c.id.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Partition::from_labels(&labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simmatrix::to_dissimilarity;
    use std::collections::{HashSet, VecDeque};

    fn matrix(n: usize, cells: &[u32]) -> SimilarityMatrix {
        let ids = Corpus::from_ids("t", (0..n).map(|i| format!("c{i}"))).unwrap().ids();
        SimilarityMatrix::from_dense(ids, cells.to_vec())
    }

    fn triangles(bridge: bool) -> DieGraph {
        let mut edges = vec![(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)];
        if bridge {
            edges.push((2, 3));
        }
        DieGraph::from_edges(6, &edges, 1)
    }

    #[test]
    fn graph_examples() {
        let m = matrix(3, &[0, 5, 1, 5, 0, 0, 1, 0, 0]);
        assert_eq!(build_graph(&m, 2).edges(), vec![(0, 1)]);
        assert_eq!(build_graph(&m, 6).n_edges(), 0);
        let full = matrix(3, &[0, 1, 2, 1, 0, 3, 2, 3, 0]);
        assert_eq!(build_graph(&full, 1).n_edges(), 3);
    }

    #[test]
    fn components() {
        let g = DieGraph::from_edges(4, &[], 1);
        assert_eq!(connected_components(&g), Partition::singletons(4));
        let g = DieGraph::from_edges(4, &[(0, 1), (1, 2)], 1);
        assert_eq!(connected_components(&g), Partition::from_labels(&[0, 0, 0, 1]));
    }

    #[test]
    fn propagation_basics() {
        let empty = DieGraph::from_edges(5, &[], 1);
        assert_eq!(label_propagation(&empty, 3), Partition::singletons(5));
        let two = Partition::from_labels(&[0, 0, 0, 1, 1, 1]);
        for seed in 0..10 {
            assert_eq!(label_propagation(&triangles(false), seed), two);
        }
    }

    /// Every labeling reachable by single-node majority updates from the
    /// all-distinct start, keeping those where each node already holds a
    /// most frequent neighbor label. Breadth-first over all 6^6 labelings.
    fn stable_reachable(g: &DieGraph) -> HashSet<Partition> {
        let n = g.n();
        let majority = |labels: &[usize], v: usize| -> Vec<usize> {
            let mut counts = vec![0; n];
            for &w in g.neighbors(v) {
                counts[labels[w]] += 1;
            }
            let top = *counts.iter().max().unwrap();
            (0..n).filter(|&l| top > 0 && counts[l] == top).collect()
        };
        let start: Vec<usize> = (0..n).collect();
        let mut seen = HashSet::from([start.clone()]);
        let mut queue = VecDeque::from([start]);
        let mut stable = HashSet::new();
        while let Some(labels) = queue.pop_front() {
            let mut fixed = true;
            for v in 0..n {
                let best = majority(&labels, v);
                if best.is_empty() || best.contains(&labels[v]) {
                    continue;
                }
                fixed = false;
                for l in best {
                    let mut next = labels.clone();
                    next[v] = l;
                    if seen.insert(next.clone()) {
                        queue.push_back(next);
                    }
                }
            }
            if fixed {
                stable.insert(Partition::from_labels(&labels));
            }
        }
        stable
    }

    /// The oracle shows both the split and the fully merged labeling are
    /// reachable stable states: a first-sweep tie broken across the bridge
    /// merges everything. The split is the typical outcome.
    #[test]
    fn bridged_triangles() {
        let g = triangles(true);
        let two = Partition::from_labels(&[0, 0, 0, 1, 1, 1]);
        let one = Partition::from_labels(&[0; 6]);
        assert_eq!(stable_reachable(&g), HashSet::from([two.clone(), one]));
        let mut split = 0;
        for seed in 0..1000 {
            let p = label_propagation(&g, seed);
            assert!(p == two || p.n_clusters() == 1, "seed {seed}");
            split += usize::from(p == two);
        }
        assert!(split > 900, "split in {split} of 1000 runs");
    }

    #[test]
    fn output_is_a_fixed_point() {
        let g = triangles(true);
        for seed in 0..10 {
            let p = label_propagation(&g, seed);
            assert_eq!(label_propagation_from(&g, p.labels(), seed + 100), p);
        }
    }

    /// Silhouette by the textbook definition, for the exhaustive oracle.
    fn silhouette_oracle(d: &[[f64; 6]; 6], labels: &[usize]) -> Option<f64> {
        let k = labels.iter().max().unwrap() + 1;
        let size = |c: usize| labels.iter().filter(|&&l| l == c).count();
        if k < 2 || (0..k).all(|c| size(c) == 1) {
            return None;
        }
        let mut total = 0.0;
        for i in 0..6 {
            if size(labels[i]) == 1 {
                continue;
            }
            let mean_to = |c: usize| {
                let members: Vec<usize> = (0..6).filter(|&j| labels[j] == c && j != i).collect();
                members.iter().map(|&j| d[i][j]).sum::<f64>() / members.len() as f64
            };
            let a = mean_to(labels[i]);
            let b = (0..k).filter(|&c| c != labels[i]).map(mean_to).fold(f64::INFINITY, f64::min);
            total += (b - a) / a.max(b);
        }
        Some(total / 6.0)
    }

    #[test]
    fn block_matrix_sweep_against_exhaustive_oracle() {
        #[rustfmt::skip]
        let cells = [
            0, 52, 41, 3, 0, 5,
            52, 0, 60, 1, 4, 0,
            41, 60, 0, 2, 0, 3,
            3, 1, 2, 0, 47, 55,
            0, 4, 0, 47, 0, 40,
            5, 0, 3, 55, 40, 0,
        ];
        let m = matrix(6, &cells);
        let d = to_dissimilarity(&m).unwrap();
        let mut dd = [[0.0; 6]; 6];
        for i in 0..6 {
            for j in 0..6 {
                if i != j {
                    dd[i][j] = 60.0 - cells[i * 6 + j] as f64;
                }
            }
        }
        // oracle: components by repeated relaxation at every candidate tau
        let mut oracle_best: Option<(f64, u32, Vec<usize>)> = None;
        let mut taus: Vec<u32> = cells.iter().copied().filter(|&c| c > 0).collect();
        taus.sort_unstable();
        taus.dedup();
        for &tau in &taus {
            let mut label: Vec<usize> = (0..6).collect();
            for _ in 0..6 {
                for i in 0..6 {
                    for j in 0..6 {
                        if i != j && cells[i * 6 + j] >= tau {
                            let l = label[i].min(label[j]);
                            label[i] = l;
                            label[j] = l;
                        }
                    }
                }
            }
            let dense = Partition::from_labels(&label);
            if let Some(s) = silhouette_oracle(&dd, dense.labels()) {
                if oracle_best.as_ref().is_none_or(|(top, _, _)| s > *top) {
                    oracle_best = Some((s, tau, dense.labels().to_vec()));
                }
            }
        }
        let (s_star, tau_star, labels) = oracle_best.unwrap();
        let planted = Partition::from_labels(&[0, 0, 0, 1, 1, 1]);
        assert_eq!(Partition::from_labels(&labels), planted);
        for algorithm in [Algorithm::LabelPropagation, Algorithm::Connected] {
            let sweep = sweep_thresholds(&m, &d, algorithm, 0, Some(&planted)).unwrap();
            assert_eq!(sweep.rows.len(), taus.len());
            // propagation already splits at the weak cross edges, so it may
            // reach the planted partition at a smaller tau
            match algorithm {
                Algorithm::Connected => assert_eq!(sweep.tau_star, tau_star),
                Algorithm::LabelPropagation => assert!(sweep.tau_star <= tau_star),
            }
            assert_eq!(sweep.best, planted);
            assert!((sweep.best_row().silhouette.unwrap() - s_star).abs() < 1e-12);
            assert_eq!(sweep.best_row().external.unwrap().ami, 1.0);
        }
    }

    #[test]
    fn sweep_edge_cases() {
        let zero = matrix(3, &[0; 9]);
        let d = to_dissimilarity(&zero).unwrap();
        assert!(matches!(
            sweep_thresholds(&zero, &d, Algorithm::LabelPropagation, 0, None),
            Err(AglpError::NoValidPartition)
        ));
        let single = matrix(3, &[0, 7, 0, 7, 0, 0, 0, 0, 0]);
        let d = to_dissimilarity(&single).unwrap();
        let sweep = sweep_thresholds(&single, &d, Algorithm::LabelPropagation, 0, None).unwrap();
        assert_eq!(sweep.rows.len(), 1);
        assert_eq!(sweep.tau_star, 7);
        assert_eq!(sweep.best, Partition::from_labels(&[0, 0, 1]));
    }

    #[test]
    fn csv_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = Corpus::from_ids("t", ["a", "b", "c"]).unwrap();
        let p = Partition::from_labels(&[0, 0, 1]);
        let path = dir.path().join("p.csv");
        write_partition_csv(&corpus.ids(), &p, &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "coin_id,cluster_id\na,0\nb,0\nc,1\n");
        assert_eq!(read_partition_csv(&path, &corpus).unwrap(), p);

        let m = matrix(3, &[0, 7, 2, 7, 0, 0, 2, 0, 0]);
        let d = to_dissimilarity(&m).unwrap();
        let sweep = sweep_thresholds(&m, &d, Algorithm::Connected, 0, None).unwrap();
        let path = dir.path().join("s.csv");
        sweep.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), "tau,silhouette,n_clusters");
        assert_eq!(text.lines().nth(1).unwrap(), "2,,1");
    }
}
