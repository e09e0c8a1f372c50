//! Joint-distribution test: moments of (data, parameters) from forward
//! simulation versus a chain that alternates one sweep with resimulating
//! the data. Both target the same joint iff the conditionals are right.

use super::{chain_rng, Chain};
use crate::error::{Error, Result};
use crate::models::GenerativeModel;
use crate::partition::ClusterMatrix;
use crate::prior::{sample_alpha_prior, sample_prior, AlphaPrior, AlphaState, GammaMatrix, SmrpmConfig};

const BATCHES: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct GewekeStat {
    pub name: String,
    pub marginal_mean: f64,
    pub successive_mean: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GewekeReport {
    pub rounds: usize,
    pub stats: Vec<GewekeStat>,
}

impl GewekeReport {
    pub fn max_abs_z(&self) -> f64 {
        self.stats.iter().map(|s| s.z.abs()).fold(0.0, f64::max)
    }

    pub fn get(&self, name: &str) -> Option<&GewekeStat> {
        self.stats.iter().find(|s| s.name == name)
    }
}

fn record<M: GenerativeModel>(
    model: &M,
    clusters: &ClusterMatrix,
    gamma: &GammaMatrix,
    alpha: &AlphaState,
    random_alpha: bool,
    buf: &mut Vec<(&'static str, f64)>,
) {
    buf.clear();
    model.statistics(clusters, buf);
    let kk = clusters.num_indices();
    let counts: Vec<f64> = (0..kk).map(|k| clusters.num_clusters(k) as f64).collect();
    buf.push(("clusters_mean", counts.iter().sum::<f64>() / kk as f64));
    buf.push(("clusters_sq_mean", counts.iter().map(|c| c * c).sum::<f64>() / kk as f64));
    buf.push(("clusters_first", counts[0]));
    buf.push(("clusters_last", counts[kk - 1]));
    if kk > 1 {
        let ones: usize = (1..kk).map(|k| gamma.column_sum(k)).sum();
        buf.push(("gamma_mean", ones as f64 / (gamma.num_units() * (kk - 1)) as f64));
        let rows = clusters.to_rows();
        let same = (0..rows.len())
            .flat_map(|i| (1..kk).map(move |k| (i, k)))
            .filter(|&(i, k)| {
                let (now, prev) = (clusters.column(k), clusters.column(k - 1));
                (0..rows.len()).all(|u| (now[u] == now[i]) == (prev[u] == prev[i]))
            })
            .count();
        buf.push(("stable_units", same as f64));
    }
    if random_alpha {
        match alpha {
            AlphaState::PerIndex(p) if kk > 1 => {
                buf.push(("alpha_mean", p[1..].iter().sum::<f64>() / (kk - 1) as f64));
            }
            AlphaState::Logistic { coef, .. } => {
                buf.push(("alpha_intercept", coef[0]));
                buf.push(("alpha_slope", coef[1]));
            }
            _ => {}
        }
    }
}

/// z-scores for every statistic after `rounds` draws of each simulator.
///
/// The marginal side uses independent draws; the successive side uses a
/// batch-means standard error.
pub fn geweke_test<M: GenerativeModel + Clone>(
    model: M,
    cfg: &SmrpmConfig,
    rounds: usize,
    seed: u64,
) -> Result<GewekeReport> {
    if rounds < 2 * BATCHES {
        return Err(Error::Parameter(format!("need at least {} rounds", 2 * BATCHES)));
    }
    cfg.validate()?;
    let (n, kk) = (model.num_units(), model.num_indices());
    let random_alpha = !matches!(cfg.alpha, AlphaPrior::Fixed(_));
    let mut rng = chain_rng(seed, 0);
    let mut buf = Vec::new();

    let mut names: Vec<&'static str> = Vec::new();
    let mut marginal: Vec<Vec<f64>> = Vec::new();
    let mut forward = model.clone();
    for _ in 0..rounds {
        let alpha = sample_alpha_prior(cfg, n, kk, &mut rng)?;
        let (c, g) = sample_prior(n, kk, cfg, &alpha, &mut rng);
        forward.draw_prior(&c, &mut rng);
        forward.resimulate(&c, &mut rng);
        record(&forward, &c, &g, &alpha, random_alpha, &mut buf);
        if names.is_empty() {
            names = buf.iter().map(|s| s.0).collect();
            marginal = vec![Vec::with_capacity(rounds); names.len()];
        }
        for (col, s) in marginal.iter_mut().zip(&buf) {
            col.push(s.1);
        }
    }

    let alpha = sample_alpha_prior(cfg, n, kk, &mut rng)?;
    let (c, g) = sample_prior(n, kk, cfg, &alpha, &mut rng);
    let mut start = model;
    start.draw_prior(&c, &mut rng);
    start.resimulate(&c, &mut rng);
    let mut chain = Chain::new(start, c, g, alpha, cfg.clone())?;
    let mut successive: Vec<Vec<f64>> = vec![Vec::with_capacity(rounds); names.len()];
    for _ in 0..rounds {
        chain.sweep(&mut rng);
        chain.model.resimulate(&chain.clusters, &mut rng);
        record(&chain.model, &chain.clusters, &chain.gamma, &chain.alpha, random_alpha, &mut buf);
        for (col, s) in successive.iter_mut().zip(&buf) {
            col.push(s.1);
        }
    }

    let stats = names
        .iter()
        .zip(marginal.iter().zip(&successive))
        .map(|(name, (a, b))| {
            let (ma, va) = mean_var(a);
            let mb = mean_var(b).0;
            let se2 = va / a.len() as f64 + batch_means_var(b);
            let z = if se2 > 0.0 {
                (ma - mb) / se2.sqrt()
            } else if ma == mb {
                0.0
            } else {
                f64::INFINITY
            };
            GewekeStat {
                name: name.to_string(),
                marginal_mean: ma,
                successive_mean: mb,
                z,
            }
        })
        .collect();
    Ok(GewekeReport { rounds, stats })
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Variance of the mean of a correlated series from non-overlapping batches.
fn batch_means_var(x: &[f64]) -> f64 {
    let size = x.len() / BATCHES;
    let means: Vec<f64> = x
        .chunks_exact(size)
        .take(BATCHES)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    mean_var(&means).1 / BATCHES as f64
}
