//! Posterior summaries: co-clustering, Binder point estimates, conditional
//! parameter estimates, ARI-based metrics, RMSE and cluster-count tables.

use crate::bspline::BasisSpec;
use crate::error::{Error, Result};
use crate::models::{
    ClusterModel, FunctionalDataset, FunctionalModel, FunctionalState, TimeSeriesModel,
    TimeSeriesState,
};
use crate::partition::{ClusterMatrix, LabelVector};
use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::HashMap;

/// Pairwise co-clustering frequencies π_ii'.
#[derive(Debug, Clone, PartialEq)]
pub struct CoclusterMatrix {
    n: usize,
    data: Vec<f64>,
}

impl CoclusterMatrix {
    /// From a symmetric matrix with unit diagonal and entries in [0, 1].
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        let m = Self { n, data };
        for i in 0..n {
            for j in 0..n {
                let v = m.get(i, j);
                if !(0.0..=1.0).contains(&v) || (v - m.get(j, i)).abs() > 1e-12 || (i == j && v != 1.0) {
                    return Err(Error::Validation(format!("invalid co-clustering entry ({i}, {j}) = {v}")));
                }
            }
        }
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n.max(1)).map(<[f64]>::to_vec).collect()
    }
}

pub fn coclustering_matrix(samples: &[LabelVector]) -> Result<CoclusterMatrix> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Empty("no samples for co-clustering".into()))?;
    let n = first.len();
    let mut data = vec![0.0; n * n];
    for s in samples {
        if s.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: s.len(),
            });
        }
        let l = s.labels();
        for i in 0..n {
            for j in 0..n {
                if l[i] == l[j] {
                    data[i * n + j] += 1.0;
                }
            }
        }
    }
    let b = samples.len() as f64;
    data.iter_mut().for_each(|v| *v /= b);
    Ok(CoclusterMatrix { n, data })
}

/// Σ_{i<i'} |1[c_i = c_i'] − π_ii'|.
pub fn binder_loss(labels: &[usize], pi: &CoclusterMatrix) -> f64 {
    let mut loss = 0.0;
    for i in 0..labels.len() {
        for j in (i + 1)..labels.len() {
            let same = if labels[i] == labels[j] { 1.0 } else { 0.0 };
            loss += (same - pi.get(i, j)).abs();
        }
    }
    loss
}

/// Binder point estimate from randomized sequential allocations followed by
/// local sweeps; best of `restarts` starts.
pub fn binder_point_estimate<R: Rng + ?Sized>(pi: &CoclusterMatrix, restarts: usize, rng: &mut R) -> LabelVector {
    binder_point_estimate_seeded(pi, &[], restarts, rng)
}

/// As [`binder_point_estimate`], also polishing every partition in `seeds`
/// (typically the posterior samples), so the result is never worse than any
/// of them.
pub fn binder_point_estimate_seeded<R: Rng + ?Sized>(
    pi: &CoclusterMatrix,
    seeds: &[LabelVector],
    restarts: usize,
    rng: &mut R,
) -> LabelVector {
    let n = pi.len();
    if n == 0 {
        return LabelVector::empty();
    }
    let mut best: Option<(f64, LabelVector)> = None;
    let mut consider = |labels: Vec<usize>| {
        let cand = LabelVector::from_labels(&labels);
        let loss = binder_loss(cand.labels(), pi);
        let better = match &best {
            None => true,
            Some((bl, b)) => {
                if (loss - bl).abs() > 1e-9 {
                    loss < *bl
                } else {
                    (cand.num_clusters(), cand.labels()) < (b.num_clusters(), b.labels())
                }
            }
        };
        if better {
            best = Some((loss, cand));
        }
    };
    let mut order: Vec<usize> = (0..n).collect();
    for r in 0..restarts.max(1) {
        if r > 0 {
            order.shuffle(rng);
        }
        let mut labels = sequential_allocation(pi, &order);
        polish(pi, &mut labels);
        consider(labels);
    }
    for s in seeds.iter().filter(|s| s.len() == n) {
        consider(s.labels().to_vec());
        let mut labels = s.labels().to_vec();
        polish(pi, &mut labels);
        consider(labels);
    }
    best.expect("at least one candidate").1
}

/// Cost of placing `i` with the members of each cluster: Σ_u (1 − 2π_iu).
fn join_costs(pi: &CoclusterMatrix, labels: &[usize], i: usize, num: usize, out: &mut Vec<f64>) {
    out.clear();
    out.resize(num, 0.0);
    for (u, &l) in labels.iter().enumerate() {
        if u != i && l != usize::MAX {
            out[l] += 1.0 - 2.0 * pi.get(i, u);
        }
    }
}

/// Lowest-cost cluster, existing clusters first on ties; `num` means new.
fn cheapest(costs: &[f64]) -> usize {
    let mut best = (0.0, costs.len());
    for (j, &c) in costs.iter().enumerate() {
        if c < best.0 - 1e-12 || (c <= best.0 + 1e-12 && best.1 == costs.len()) {
            best = (c, j);
        }
    }
    best.1
}

fn sequential_allocation(pi: &CoclusterMatrix, order: &[usize]) -> Vec<usize> {
    let mut labels = vec![usize::MAX; pi.len()];
    let mut num = 0;
    let mut costs = Vec::new();
    for &i in order {
        join_costs(pi, &labels, i, num, &mut costs);
        let j = cheapest(&costs);
        if j == num {
            num += 1;
        }
        labels[i] = j;
    }
    labels
}

/// Single-unit moves and pairwise merges until neither improves the loss.
fn polish(pi: &CoclusterMatrix, labels: &mut [usize]) {
    let n = labels.len();
    let mut costs = Vec::new();
    for _ in 0..1000 {
        let mut changed = false;
        for i in 0..n {
            let num = compact(labels);
            join_costs(pi, labels, i, num, &mut costs);
            // Staying costs costs[cur]; a new cluster costs 0.
            let cur = labels[i];
            let mut best = (costs[cur], cur);
            for (j, &c) in costs.iter().enumerate() {
                if c < best.0 - 1e-12 {
                    best = (c, j);
                }
            }
            if best.0 > 1e-12 {
                best = (0.0, num);
            }
            if best.1 != cur {
                labels[i] = best.1;
                changed = true;
            }
        }
        let num = compact(labels);
        'merge: for a in 0..num {
            for b in (a + 1)..num {
                let mut delta = 0.0;
                for u in (0..n).filter(|&u| labels[u] == a) {
                    for v in (0..n).filter(|&v| labels[v] == b) {
                        delta += 1.0 - 2.0 * pi.get(u, v);
                    }
                }
                if delta < -1e-12 {
                    labels.iter_mut().filter(|l| **l == b).for_each(|l| *l = a);
                    changed = true;
                    break 'merge;
                }
            }
        }
        if !changed {
            break;
        }
    }
    compact(labels);
}

/// Relabel to 0..J by first occurrence; returns J.
fn compact(labels: &mut [usize]) -> usize {
    let mut map: HashMap<usize, usize> = HashMap::new();
    for l in labels.iter_mut() {
        let next = map.len();
        *l = *map.entry(*l).or_insert(next);
    }
    map.len()
}

/// Adjusted Rand index under the permutation model.
pub fn ari(p: &LabelVector, q: &LabelVector) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Dimension {
            expected: p.len(),
            got: q.len(),
        });
    }
    let (a, b) = (p.labels(), q.labels());
    let (jp, jq) = (p.num_clusters(), q.num_clusters());
    let mut table = vec![0usize; jp * jq];
    for (&x, &y) in a.iter().zip(b) {
        table[x * jq + y] += 1;
    }
    let pairs = |m: usize| (m * m.saturating_sub(1) / 2) as f64;
    let index: f64 = table.iter().map(|&m| pairs(m)).sum();
    let rows: f64 = p.sizes().iter().map(|&m| pairs(m)).sum();
    let cols: f64 = q.sizes().iter().map(|&m| pairs(m)).sum();
    let total = pairs(p.len());
    let expected = if total > 0.0 { rows * cols / total } else { 0.0 };
    let max = 0.5 * (rows + cols);
    if (max - expected).abs() < 1e-12 {
        // Both partitions trivial in the same way, hence equal.
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Mean ARI between `truth` and each sample.
pub fn posterior_ari(truth: &LabelVector, samples: &[LabelVector]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("no samples".into()));
    }
    let mut total = 0.0;
    for s in samples {
        total += ari(truth, s)?;
    }
    Ok(total / samples.len() as f64)
}

/// Units grouped together at `x` iff they share all d + 1 labels of the
/// basis functions supported on the span containing `x`.
pub fn functional_partition_at(clusters: &ClusterMatrix, basis: &BasisSpec, x: f64) -> Result<LabelVector> {
    if clusters.num_indices() != basis.num_basis() {
        return Err(Error::Dimension {
            expected: basis.num_basis(),
            got: clusters.num_indices(),
        });
    }
    Ok(window_partition(clusters, basis.first_active(x)?, basis.degree()))
}

fn window_partition(clusters: &ClusterMatrix, first: usize, degree: usize) -> LabelVector {
    let mut keys: HashMap<Vec<usize>, usize> = HashMap::new();
    let labels: Vec<usize> = (0..clusters.num_units())
        .map(|i| {
            let key: Vec<usize> = (first..=first + degree).map(|k| clusters.label(i, k)).collect();
            let next = keys.len();
            *keys.entry(key).or_insert(next)
        })
        .collect();
    LabelVector::from_labels(&labels)
}

/// Mean over grid points and samples of the ARI between pointwise partitions.
///
/// This is a convention of this crate: the pointwise partition at x is the
/// one induced by the d + 1 active basis labels.
pub fn fari(truth: &ClusterMatrix, samples: &[ClusterMatrix], basis: &BasisSpec, grid: &[f64]) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::Empty("empty evaluation grid".into()));
    }
    if samples.is_empty() {
        return Err(Error::Empty("no samples".into()));
    }
    // Pointwise partitions are constant on spans: weight each span by its grid count.
    let mut spans: Vec<(usize, usize)> = Vec::new();
    for &x in grid {
        let f = basis.first_active(x)?;
        match spans.iter_mut().find(|s| s.0 == f) {
            Some(s) => s.1 += 1,
            None => spans.push((f, 1)),
        }
    }
    let d = basis.degree();
    let mut total = 0.0;
    for &(first, count) in &spans {
        let t = window_partition(truth, first, d);
        for s in samples {
            total += count as f64 * ari(&t, &window_partition(s, first, d))?;
        }
    }
    Ok(total / (grid.len() * samples.len()) as f64)
}

/// Posterior mean over samples of the per-sample root mean square error.
/// `predictions[b][i][m]` pairs with `observed[i][m]`.
pub fn rmse(observed: &[Vec<f64>], predictions: &[Vec<Vec<f64>>]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::Empty("no predictions".into()));
    }
    let count: usize = observed.iter().map(Vec::len).sum();
    if count == 0 {
        return Err(Error::Empty("no observations".into()));
    }
    let mut total = 0.0;
    for pred in predictions {
        if pred.len() != observed.len() {
            return Err(Error::Dimension {
                expected: observed.len(),
                got: pred.len(),
            });
        }
        let mut sse = 0.0;
        for (o, p) in observed.iter().zip(pred) {
            if o.len() != p.len() {
                return Err(Error::Dimension {
                    expected: o.len(),
                    got: p.len(),
                });
            }
            sse += o.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        }
        total += (sse / count as f64).sqrt();
    }
    Ok(total / predictions.len() as f64)
}

/// b(x_im)ᵀ θ_i for every curve under one sampled state.
pub fn functional_predictions(
    data: &FunctionalDataset,
    basis: &BasisSpec,
    clusters: &ClusterMatrix,
    state: &FunctionalState,
) -> Result<Vec<Vec<f64>>> {
    (0..data.num_curves())
        .map(|i| Ok(basis.design_matrix(data.x(i))?.apply(&state.coefficients(i, clusters))))
        .collect()
}

/// μ*_{k, c_ik} for every series and index.
pub fn timeseries_predictions(clusters: &ClusterMatrix, state: &TimeSeriesState) -> Vec<Vec<f64>> {
    (0..clusters.num_units())
        .map(|i| {
            (0..clusters.num_indices())
                .map(|k| state.mu_star[k][clusters.label(i, k)])
                .collect()
        })
        .collect()
}

/// K × n table; entry [k][J − 1] is the posterior frequency of J_k = J.
pub fn cluster_count_posterior(samples: &[ClusterMatrix]) -> Result<Vec<Vec<f64>>> {
    let first = samples.first().ok_or_else(|| Error::Empty("no samples".into()))?;
    let (n, kk) = (first.num_units(), first.num_indices());
    let mut table = vec![vec![0.0; n]; kk];
    for s in samples {
        for (k, row) in table.iter_mut().enumerate() {
            row[s.num_clusters(k) - 1] += 1.0;
        }
    }
    let b = samples.len() as f64;
    table.iter_mut().flatten().for_each(|v| *v /= b);
    Ok(table)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    /// Binder point estimate of every ρ_k, each estimated independently.
    pub point: ClusterMatrix,
    pub cluster_counts: Vec<Vec<f64>>,
}

/// Per-index Binder estimates, seeded with the samples, plus J_k posteriors.
pub fn summarize<R: Rng + ?Sized>(samples: &[ClusterMatrix], restarts: usize, rng: &mut R) -> Result<PosteriorSummary> {
    let cluster_counts = cluster_count_posterior(samples)?;
    let kk = samples[0].num_indices();
    let mut cols = Vec::with_capacity(kk);
    for k in 0..kk {
        let parts: Vec<LabelVector> = samples.iter().map(|s| s.partition(k)).collect();
        let pi = coclustering_matrix(&parts)?;
        cols.push(binder_point_estimate_seeded(&pi, &dedup(parts), restarts, rng));
    }
    Ok(PosteriorSummary {
        point: ClusterMatrix::from_columns(cols)?,
        cluster_counts,
    })
}

fn dedup(mut parts: Vec<LabelVector>) -> Vec<LabelVector> {
    parts.sort_by(|a, b| a.labels().cmp(b.labels()));
    parts.dedup();
    parts
}

/// Posterior means of the functional parameters with every partition
/// frozen at `point`: only the parameter block is updated.
pub fn conditional_functional_estimate<R: Rng + ?Sized>(
    model: &mut FunctionalModel,
    point: &ClusterMatrix,
    iters: usize,
    burn_in: usize,
    rng: &mut R,
) -> Result<FunctionalState> {
    check_frozen(point, model.num_units(), model.num_indices(), iters, burn_in)?;
    model.initialize(point, rng);
    let mut acc = model.current().clone();
    zero_functional(&mut acc);
    for t in 0..iters {
        model.update_params(point, rng);
        if t >= burn_in {
            let s = model.current();
            for (a, b) in acc.theta_star.iter_mut().flatten().zip(s.theta_star.iter().flatten()) {
                *a += b;
            }
            acc.sigma2 += s.sigma2;
            acc.tau2 += s.tau2;
            acc.phi += s.phi;
        }
    }
    let m = (iters - burn_in) as f64;
    acc.theta_star.iter_mut().flatten().for_each(|v| *v /= m);
    acc.sigma2 /= m;
    acc.tau2 /= m;
    acc.phi /= m;
    Ok(acc)
}

fn zero_functional(s: &mut FunctionalState) {
    s.theta_star.iter_mut().flatten().for_each(|v| *v = 0.0);
    s.sigma2 = 0.0;
    s.tau2 = 0.0;
    s.phi = 0.0;
}

/// Time-series counterpart of [`conditional_functional_estimate`].
pub fn conditional_timeseries_estimate<R: Rng + ?Sized>(
    model: &mut TimeSeriesModel,
    point: &ClusterMatrix,
    iters: usize,
    burn_in: usize,
    rng: &mut R,
) -> Result<TimeSeriesState> {
    check_frozen(point, model.num_units(), model.num_indices(), iters, burn_in)?;
    model.initialize(point, rng);
    let mut acc = model.current().clone();
    let zero = |v: &mut Vec<f64>| v.iter_mut().for_each(|x| *x = 0.0);
    acc.mu_star.iter_mut().for_each(zero);
    acc.sigma2_star.iter_mut().for_each(zero);
    zero(&mut acc.theta);
    zero(&mut acc.tau2);
    acc.phi0 = 0.0;
    acc.lambda2 = 0.0;
    let add = |a: &mut [f64], b: &[f64]| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
    for t in 0..iters {
        model.update_params(point, rng);
        if t >= burn_in {
            let s = model.current();
            for k in 0..s.theta.len() {
                add(&mut acc.mu_star[k], &s.mu_star[k]);
                add(&mut acc.sigma2_star[k], &s.sigma2_star[k]);
            }
            add(&mut acc.theta, &s.theta);
            add(&mut acc.tau2, &s.tau2);
            acc.phi0 += s.phi0;
            acc.lambda2 += s.lambda2;
        }
    }
    let m = (iters - burn_in) as f64;
    let scale = |v: &mut Vec<f64>| v.iter_mut().for_each(|x| *x /= m);
    acc.mu_star.iter_mut().for_each(scale);
    acc.sigma2_star.iter_mut().for_each(scale);
    scale(&mut acc.theta);
    scale(&mut acc.tau2);
    acc.phi0 /= m;
    acc.lambda2 /= m;
    Ok(acc)
}

fn check_frozen(point: &ClusterMatrix, n: usize, kk: usize, iters: usize, burn_in: usize) -> Result<()> {
    if point.num_units() != n || point.num_indices() != kk {
        return Err(Error::Dimension {
            expected: n * kk,
            got: point.num_units() * point.num_indices(),
        });
    }
    if burn_in >= iters {
        return Err(Error::Parameter("burn_in must be below iters".into()));
    }
    if !point.is_consistent() {
        return Err(Error::Validation("point partitions are not canonical".into()));
    }
    Ok(())
}
