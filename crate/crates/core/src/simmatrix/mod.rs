//! Similarity matrix of filtered match counts and its dissimilarity transform.

mod build;
mod cache;

use std::path::Path;

use crate::corpus::{self, CoinId, CorpusError};

pub use build::{
    build_similarity, candidate_records, filter_record, load_gray, pair_seed, BuildStats, MatchSource,
    SimilarityBuilder,
};
pub use cache::{PairCache, PairEntry};
pub(crate) use build::with_pool;

#[derive(Debug, thiserror::Error)]
pub enum MatrixError {
    #[error("need at least 2 coins, got {0}")]
    TooSmall(usize),
    #[error("no match source for {} pair(s), first: {}", .0.len(), .0.first().map(|(a, b)| format!("{a}/{b}")).unwrap_or_default())]
    MissingPairs(Vec<(CoinId, CoinId)>),
    #[error("coin {coin}: {message}")]
    Image { coin: CoinId, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Symmetric matrix of filtered match counts; the diagonal is 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimilarityMatrix {
    ids: Vec<CoinId>,
    m: Vec<u32>,
}

impl SimilarityMatrix {
    pub fn zeros(ids: Vec<CoinId>) -> Self {
        let n = ids.len();
        SimilarityMatrix {
            ids,
            m: vec![0; n * n],
        }
    }

    /// Builds from a full row-major matrix; asserts symmetry and forces the
    /// diagonal to 0.
    pub fn from_dense(ids: Vec<CoinId>, mut m: Vec<u32>) -> Self {
        let n = ids.len();
        assert_eq!(m.len(), n * n, "matrix shape");
        for i in 0..n {
            m[i * n + i] = 0;
            for j in 0..i {
                assert_eq!(m[i * n + j], m[j * n + i], "similarity matrix must be symmetric");
            }
        }
        SimilarityMatrix { ids, m }
    }

    pub fn ids(&self) -> &[CoinId] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.m[i * self.len() + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: u32) {
        assert_ne!(i, j, "diagonal is fixed at 0");
        let n = self.len();
        self.m[i * n + j] = value;
        self.m[j * n + i] = value;
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.m
    }

    pub fn row(&self, i: usize) -> &[u32] {
        let n = self.len();
        &self.m[i * n..(i + 1) * n]
    }

    pub fn max_offdiag(&self) -> u32 {
        // diagonal is 0, so the plain maximum is the off-diagonal maximum
        self.m.iter().copied().max().unwrap_or(0)
    }

    /// Sorted distinct positive off-diagonal values.
    pub fn distinct_positive(&self) -> Vec<u32> {
        let mut values: Vec<u32> = self.m.iter().copied().filter(|&v| v > 0).collect();
        values.sort_unstable();
        values.dedup();
        values
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), CorpusError> {
        corpus::write_matrix_csv(&self.ids, &self.m, path)
    }

    pub fn read_csv(path: &Path) -> Result<Self, MatrixError> {
        let (ids, m) = corpus::read_matrix_csv(path)?;
        let n = ids.len();
        for i in 0..n {
            for j in 0..i {
                if m[i * n + j] != m[j * n + i] {
                    return Err(CorpusError::Malformed {
                        path: path.to_path_buf(),
                        line: i + 2,
                        message: format!("asymmetric cell ({i}, {j})"),
                    }
                    .into());
                }
            }
        }
        Ok(SimilarityMatrix { ids, m })
    }
}

/// `D = max(M) − M` off the diagonal, 0 on it.
#[derive(Clone, Debug, PartialEq)]
pub struct DissimilarityMatrix {
    ids: Vec<CoinId>,
    d: Vec<f64>,
}

impl DissimilarityMatrix {
    pub fn from_raw(ids: Vec<CoinId>, d: Vec<f64>) -> Self {
        assert_eq!(d.len(), ids.len() * ids.len(), "matrix shape");
        DissimilarityMatrix { ids, d }
    }

    pub fn ids(&self) -> &[CoinId] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.len();
        &self.d[i * n..(i + 1) * n]
    }
}

pub fn to_dissimilarity(m: &SimilarityMatrix) -> Result<DissimilarityMatrix, MatrixError> {
    let n = m.len();
    if n < 2 {
        return Err(MatrixError::TooSmall(n));
    }
    let max = m.max_offdiag();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                d[i * n + j] = f64::from(max - m.get(i, j));
            }
        }
    }
    Ok(DissimilarityMatrix {
        ids: m.ids.clone(),
        d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Corpus;

    pub(crate) fn matrix(n: usize, cells: &[u32]) -> SimilarityMatrix {
        let ids = Corpus::from_ids("t", (0..n).map(|i| format!("c{i}"))).unwrap().ids();
        SimilarityMatrix::from_dense(ids, cells.to_vec())
    }

    #[test]
    fn dissimilarity_example() {
        let m = matrix(3, &[0, 5, 1, 5, 0, 0, 1, 0, 0]);
        let d = to_dissimilarity(&m).unwrap();
        let want = [0.0, 0.0, 4.0, 0.0, 0.0, 5.0, 4.0, 5.0, 0.0];
        assert_eq!(d.d, want);
        for i in 0..3 {
            let arg_min_d = (0..3).filter(|&j| j != i).min_by(|&a, &b| d.get(i, a).total_cmp(&d.get(i, b)));
            let arg_max_m = (0..3).filter(|&j| j != i).max_by_key(|&j| (m.get(i, j), std::cmp::Reverse(j)));
            assert_eq!(arg_min_d, arg_max_m);
        }
    }

    #[test]
    fn dissimilarity_edge_cases() {
        let d = to_dissimilarity(&matrix(3, &[0; 9])).unwrap();
        assert!(d.d.iter().all(|&v| v == 0.0));
        assert!(matches!(to_dissimilarity(&matrix(1, &[0])), Err(MatrixError::TooSmall(1))));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = matrix(3, &[0, 5, 1, 5, 0, 0, 1, 0, 0]);
        let p = dir.path().join("m.csv");
        m.write_csv(&p).unwrap();
        assert_eq!(SimilarityMatrix::read_csv(&p).unwrap(), m);
        assert_eq!(m.distinct_positive(), vec![1, 5]);
    }
}
