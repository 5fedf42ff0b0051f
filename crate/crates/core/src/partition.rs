use std::collections::HashMap;
use std::hash::Hash;

/// Assignment of every item to exactly one cluster.
///
/// Labels are dense (`0..n_clusters`) and canonical: clusters are numbered
/// in order of first occurrence, so two partitions that agree up to
/// relabeling compare equal.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Partition {
    labels: Vec<usize>,
    n_clusters: usize,
}

impl Partition {
    /// Canonicalizes arbitrary labels.
    pub fn from_labels<T: Hash + Eq>(labels: &[T]) -> Self {
        let mut map: HashMap<&T, usize> = HashMap::new();
        let labels: Vec<usize> = labels
            .iter()
            .map(|l| {
                let next = map.len();
                *map.entry(l).or_insert(next)
            })
            .collect();
        Partition {
            n_clusters: map.len(),
            labels,
        }
    }

    pub fn singletons(n: usize) -> Self {
        Partition {
            labels: (0..n).collect(),
            n_clusters: n,
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    /// Cluster sizes indexed by label.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_clusters];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.n_clusters];
        for (i, &l) in self.labels.iter().enumerate() {
            members[l].push(i);
        }
        members
    }

    /// True when every cluster of `self` lies inside one cluster of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        if self.len() != coarser.len() {
            return false;
        }
        let mut parent = vec![usize::MAX; self.n_clusters];
        for (&fine, &coarse) in self.labels.iter().zip(&coarser.labels) {
            if parent[fine] == usize::MAX {
                parent[fine] = coarse;
            } else if parent[fine] != coarse {
                return false;
            }
        }
        true
    }
}
