//! Set partitions as canonical label vectors, reductions to subsets, the
//! compatibility check between consecutive partitions, and EPPF kernels.
//!
//! Labels are 0-based in memory: unit 0 always carries label 0 and every new
//! label is the smallest unused one (first-occurrence order). File formats
//! convert to 1-based labels at the boundary.

use crate::error::{Error, Result};

mod matrix;
pub use matrix::ClusterMatrix;
pub use matrix::Detached;
#[allow(unused_imports)]
pub(crate) use matrix::DETACHED;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabelVector {
    labels: Vec<usize>,
    num_clusters: usize,
}

impl LabelVector {
    /// Canonicalizes arbitrary labels (any integer values) by first occurrence.
    pub fn from_labels(raw: &[usize]) -> Self {
        let mut map: Vec<(usize, usize)> = Vec::new();
        let mut labels = Vec::with_capacity(raw.len());
        for &r in raw {
            let l = match map.iter().find(|(from, _)| *from == r) {
                Some(&(_, to)) => to,
                None => {
                    let to = map.len();
                    map.push((r, to));
                    to
                }
            };
            labels.push(l);
        }
        Self {
            labels,
            num_clusters: map.len(),
        }
    }

    /// Accepts labels that are already canonical.
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        let mut next = 0;
        for (i, &l) in labels.iter().enumerate() {
            if l == next {
                next += 1;
            } else if l > next {
                return Err(Error::Validation(format!(
                    "label {l} at unit {i} is not in first-occurrence order"
                )));
            }
        }
        Ok(Self {
            labels,
            num_clusters: next,
        })
    }

    pub fn empty() -> Self {
        Self {
            labels: Vec::new(),
            num_clusters: 0,
        }
    }

    /// Every unit in one cluster.
    pub fn single_cluster(n: usize) -> Self {
        Self {
            labels: vec![0; n],
            num_clusters: usize::from(n > 0),
        }
    }

    pub fn singletons(n: usize) -> Self {
        Self {
            labels: (0..n).collect(),
            num_clusters: n,
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

    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.num_clusters];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }

    /// Induced partition on `subset` (in the order given), re-canonicalized.
    pub fn reduce(&self, subset: &[usize]) -> Result<LabelVector> {
        let mut raw = Vec::with_capacity(subset.len());
        for &i in subset {
            let l = *self.labels.get(i).ok_or(Error::Bounds {
                index: i,
                len: self.labels.len(),
            })?;
            raw.push(l);
        }
        Ok(Self::from_labels(&raw))
    }
}

/// True iff `prev` and `curr` induce the same partition on `fixed`.
pub fn compatible(prev: &LabelVector, curr: &LabelVector, fixed: &[usize]) -> Result<bool> {
    if prev.len() != curr.len() {
        return Err(Error::Dimension {
            expected: prev.len(),
            got: curr.len(),
        });
    }
    Ok(prev.reduce(fixed)? == curr.reduce(fixed)?)
}

/// Allocation-free compatibility check on raw labels and a membership mask.
///
/// Two label slices agree on the masked units iff the map from `prev` labels
/// to `curr` labels restricted to those units is a bijection.
pub(crate) fn agree_on(prev: &[usize], curr: &[usize], mask: &[bool], scratch: &mut Scratch) -> bool {
    scratch.reset(prev.len());
    for i in 0..prev.len() {
        if !mask[i] {
            continue;
        }
        let (a, b) = (prev[i], curr[i]);
        match (scratch.fwd[a], scratch.bwd[b]) {
            (usize::MAX, usize::MAX) => {
                scratch.fwd[a] = b;
                scratch.bwd[b] = a;
            }
            (fa, fb) if fa == b && fb == a => {}
            _ => return false,
        }
    }
    true
}

#[derive(Debug, Default, Clone)]
pub(crate) struct Scratch {
    fwd: Vec<usize>,
    bwd: Vec<usize>,
}

impl Scratch {
    fn reset(&mut self, n: usize) {
        // Labels are compact, so n + 1 slots suffice even with a detached unit.
        self.fwd.clear();
        self.fwd.resize(n + 1, usize::MAX);
        self.bwd.clear();
        self.bwd.resize(n + 1, usize::MAX);
    }
}

/// All set partitions of `n` units as canonical vectors (restricted growth strings).
pub fn enumerate_partitions(n: usize) -> Vec<LabelVector> {
    fn rec(prefix: &mut Vec<usize>, max: usize, n: usize, out: &mut Vec<LabelVector>) {
        if prefix.len() == n {
            out.push(LabelVector {
                labels: prefix.clone(),
                num_clusters: if n == 0 { 0 } else { max + 1 },
            });
            return;
        }
        let limit = if prefix.is_empty() { 0 } else { max + 1 };
        for l in 0..=limit {
            prefix.push(l);
            rec(prefix, max.max(l), n, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(n), 0, n, &mut out);
    out
}

/// Exchangeable partition probability function.
pub trait Eppf {
    /// Normalized log-probability of the partition.
    fn log_eppf(&self, p: &LabelVector) -> f64;

    /// Unnormalized predictive weights for a new unit given cluster sizes:
    /// one entry per existing cluster followed by the new-cluster weight.
    fn predictive_weights(&self, sizes: &[usize]) -> Vec<f64>;

    /// Normalized predictive distribution given a (reduced) partition.
    fn predictive(&self, reduced: &LabelVector) -> Vec<f64> {
        let mut w = self.predictive_weights(&reduced.sizes());
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= total);
        w
    }
}

/// Chinese restaurant process with concentration `mass`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crp {
    mass: f64,
}

impl Crp {
    pub fn new(mass: f64) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::Parameter(format!(
                "CRP concentration must be positive, got {mass}"
            )));
        }
        Ok(Self { mass })
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Predictive probability that a unit joins a cluster of size `size`
    /// (0 meaning a new cluster) given `total` already-allocated units.
    pub fn predictive_prob(&self, size: usize, total: usize) -> f64 {
        let w = if size == 0 { self.mass } else { size as f64 };
        w / (total as f64 + self.mass)
    }
}

impl Eppf for Crp {
    fn log_eppf(&self, p: &LabelVector) -> f64 {
        let n = p.len();
        let ln_mass = self.mass.ln();
        let clusters: f64 = p
            .sizes()
            .iter()
            .map(|&s| ln_mass + (1..s).map(|t| (t as f64).ln()).sum::<f64>())
            .sum();
        let norm: f64 = (0..n).map(|t| (self.mass + t as f64).ln()).sum();
        clusters - norm
    }

    fn predictive_weights(&self, sizes: &[usize]) -> Vec<f64> {
        sizes
            .iter()
            .map(|&s| s as f64)
            .chain(std::iter::once(self.mass))
            .collect()
    }
}

pub fn crp_log_eppf(p: &LabelVector, mass: f64) -> Result<f64> {
    Ok(Crp::new(mass)?.log_eppf(p))
}

pub fn crp_predictive(reduced: &LabelVector, mass: f64) -> Result<Vec<f64>> {
    Ok(Crp::new(mass)?.predictive(reduced))
}
