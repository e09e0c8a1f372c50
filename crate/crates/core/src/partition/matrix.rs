use super::LabelVector;
use crate::error::{Error, Result};

/// Label of a unit that has been lifted out of its column during a move.
pub(crate) const DETACHED: usize = usize::MAX;

/// The n×K matrix of local cluster labels, one canonical partition per column.
///
/// Cluster sizes are cached per column. Mutation goes through the
/// crate-private detach/attach/canonicalize protocol so that a model's
/// per-cluster parameter vectors can mirror every relabeling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterMatrix {
    n: usize,
    cols: Vec<Column>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Column {
    labels: Vec<usize>,
    sizes: Vec<usize>,
}

/// What happened to the emptied cluster, if any, when a unit was detached.
///
/// The cluster at `slot` is gone; the former last cluster (if different)
/// now carries label `slot`. This is exactly `Vec::swap_remove(slot)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Detached {
    Kept { label: usize },
    Removed { slot: usize },
}

impl Column {
    fn from_labels(labels: Vec<usize>, j: usize) -> Self {
        let mut sizes = vec![0; j];
        for &l in &labels {
            sizes[l] += 1;
        }
        Self { labels, sizes }
    }
}

impl ClusterMatrix {
    /// Every column a single cluster.
    pub fn single_cluster(n: usize, num_indices: usize) -> Self {
        let col = Column::from_labels(vec![0; n], usize::from(n > 0));
        Self {
            n,
            cols: vec![col; num_indices],
        }
    }

    pub fn from_columns(columns: Vec<LabelVector>) -> Result<Self> {
        let n = columns.first().map_or(0, |c| c.len());
        let mut cols = Vec::with_capacity(columns.len());
        for c in columns {
            if c.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: c.len(),
                });
            }
            let j = c.num_clusters();
            cols.push(Column::from_labels(c.labels().to_vec(), j));
        }
        Ok(Self { n, cols })
    }

    /// Rows are units, entries arbitrary labels; each column is canonicalized.
    pub fn from_rows(rows: &[Vec<usize>]) -> Result<Self> {
        let k = rows.first().map_or(0, |r| r.len());
        if let Some(bad) = rows.iter().find(|r| r.len() != k) {
            return Err(Error::Dimension {
                expected: k,
                got: bad.len(),
            });
        }
        let columns = (0..k)
            .map(|kk| LabelVector::from_labels(&rows.iter().map(|r| r[kk]).collect::<Vec<_>>()))
            .collect();
        Self::from_columns(columns)
    }

    pub fn num_units(&self) -> usize {
        self.n
    }

    pub fn num_indices(&self) -> usize {
        self.cols.len()
    }

    pub fn label(&self, i: usize, k: usize) -> usize {
        self.cols[k].labels[i]
    }

    pub fn column(&self, k: usize) -> &[usize] {
        &self.cols[k].labels
    }

    pub fn num_clusters(&self, k: usize) -> usize {
        self.cols[k].sizes.len()
    }

    pub fn sizes(&self, k: usize) -> &[usize] {
        &self.cols[k].sizes
    }

    pub fn partition(&self, k: usize) -> LabelVector {
        LabelVector::from_labels(&self.cols[k].labels)
    }

    pub fn partitions(&self) -> Vec<LabelVector> {
        (0..self.num_indices()).map(|k| self.partition(k)).collect()
    }

    /// Whether every column is canonical with consistent size caches.
    pub fn is_consistent(&self) -> bool {
        self.cols.iter().all(|c| {
            c.labels.len() == self.n
                && LabelVector::from_labels(&c.labels).labels() == c.labels.as_slice()
                && Column::from_labels(c.labels.clone(), c.sizes.len()).sizes == c.sizes
                && c.sizes.iter().all(|&s| s > 0)
        })
    }

    /// Row-major copy (unit by index).
    pub fn to_rows(&self) -> Vec<Vec<usize>> {
        (0..self.n)
            .map(|i| self.cols.iter().map(|c| c.labels[i]).collect())
            .collect()
    }

    pub(crate) fn detach(&mut self, i: usize, k: usize) -> Detached {
        let col = &mut self.cols[k];
        let old = col.labels[i];
        debug_assert_ne!(old, DETACHED);
        col.labels[i] = DETACHED;
        col.sizes[old] -= 1;
        if col.sizes[old] > 0 {
            return Detached::Kept { label: old };
        }
        let last = col.sizes.len() - 1;
        if old != last {
            for l in col.labels.iter_mut() {
                if *l == last {
                    *l = old;
                }
            }
        }
        col.sizes.swap_remove(old);
        Detached::Removed { slot: old }
    }

    /// Attach a detached unit to cluster `j`; `j == J` opens a new cluster.
    pub(crate) fn attach(&mut self, i: usize, k: usize, j: usize) {
        let col = &mut self.cols[k];
        debug_assert_eq!(col.labels[i], DETACHED);
        if j == col.sizes.len() {
            col.sizes.push(1);
        } else {
            col.sizes[j] += 1;
        }
        col.labels[i] = j;
    }

    /// Relabel column `k` by first occurrence. Returns `order` with
    /// `order[new] = old` when anything moved.
    pub(crate) fn canonicalize(&mut self, k: usize) -> Option<Vec<usize>> {
        let col = &mut self.cols[k];
        let j = col.sizes.len();
        let mut map = vec![usize::MAX; j];
        let mut order = Vec::with_capacity(j);
        for &l in &col.labels {
            if map[l] == usize::MAX {
                map[l] = order.len();
                order.push(l);
            }
        }
        if order.iter().enumerate().all(|(a, &b)| a == b) {
            return None;
        }
        for l in col.labels.iter_mut() {
            *l = map[*l];
        }
        col.sizes = order.iter().map(|&o| col.sizes[o]).collect();
        Some(order)
    }
}
