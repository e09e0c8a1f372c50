//! The semi-Markovian random partition prior: persistence indicators γ,
//! reduced sets R_k, the γ and c full conditionals on the partition side,
//! and the α (and Pólya-Gamma ω) updates.
//!
//! Indices are 0-based: unit `i` in `0..n`, domain index `k` in `0..K`.
//! Column 0 of γ is structurally zero.

mod polya_gamma;

pub use polya_gamma::{pg_mean, pg_variance, sample_pg};

use crate::error::{Error, Result};
use crate::partition::{ClusterMatrix, Crp, Detached};
use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};

/// Binary persistence indicators, stored column-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GammaMatrix {
    n: usize,
    num_indices: usize,
    data: Vec<bool>,
}

impl GammaMatrix {
    pub fn zeros(n: usize, num_indices: usize) -> Self {
        Self {
            n,
            num_indices,
            data: vec![false; n * num_indices],
        }
    }

    /// Rows are units. Column 0 must be zero.
    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        let k = rows.first().map_or(0, |r| r.len());
        let mut g = Self::zeros(rows.len(), k);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != k {
                return Err(Error::Dimension {
                    expected: k,
                    got: r.len(),
                });
            }
            for (kk, &v) in r.iter().enumerate() {
                g.set(i, kk, v)?;
            }
        }
        Ok(g)
    }

    pub fn num_units(&self) -> usize {
        self.n
    }

    pub fn num_indices(&self) -> usize {
        self.num_indices
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize) -> bool {
        self.data[k * self.n + i]
    }

    pub fn set(&mut self, i: usize, k: usize, value: bool) -> Result<()> {
        if k == 0 && value {
            return Err(Error::Contract("gamma column 0 is fixed at zero".into()));
        }
        if i >= self.n || k >= self.num_indices {
            return Err(Error::Bounds {
                index: k * self.n + i,
                len: self.data.len(),
            });
        }
        self.data[k * self.n + i] = value;
        Ok(())
    }

    #[inline]
    pub(crate) fn put(&mut self, i: usize, k: usize, value: bool) {
        debug_assert!(k > 0 || !value);
        self.data[k * self.n + i] = value;
    }

    pub fn column_sum(&self, k: usize) -> usize {
        self.data[k * self.n..(k + 1) * self.n]
            .iter()
            .filter(|&&v| v)
            .count()
    }

    pub fn to_rows(&self) -> Vec<Vec<bool>> {
        (0..self.n)
            .map(|i| (0..self.num_indices).map(|k| self.get(i, k)).collect())
            .collect()
    }

    /// Σ_{q=1}^{lag} γ_{i,k−q}, with γ = 0 before the first index.
    fn lag_sum(&self, i: usize, k: usize, lag: usize) -> usize {
        (1..=lag.min(k)).filter(|&q| self.get(i, k - q)).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AlphaPrior {
    /// α_k ~ Beta(a, b) independently per index (d_γ = 0).
    Beta { a: f64, b: f64 },
    /// α ~ N₂(mean, cov) for the logistic autoregression (d_γ > 0).
    Logistic { mean: [f64; 2], cov: [[f64; 2]; 2] },
    /// α held at a given value; used by the exact enumeration checks.
    Fixed(AlphaState),
}

#[derive(Debug, Clone, PartialEq)]
pub enum AlphaState {
    /// One persistence probability per index; entry 0 is never used by γ.
    PerIndex(Vec<f64>),
    /// Logistic coefficients and the Pólya-Gamma latents, one per (i, k ≥ 1)
    /// at position `i + n (k − 1)`.
    Logistic { coef: [f64; 2], omega: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmrpmConfig {
    pub d_rho: usize,
    pub d_gamma: usize,
    pub mass: f64,
    pub alpha: AlphaPrior,
}

impl SmrpmConfig {
    /// Orders (d_ρ, d_γ) with M = 1 and a flat Beta(1, 1) or standard
    /// bivariate normal α prior.
    pub fn new(d_rho: usize, d_gamma: usize) -> Self {
        let alpha = if d_gamma == 0 {
            AlphaPrior::Beta { a: 1.0, b: 1.0 }
        } else {
            AlphaPrior::Logistic {
                mean: [0.0; 2],
                cov: [[1.0, 0.0], [0.0, 1.0]],
            }
        };
        Self {
            d_rho,
            d_gamma,
            mass: 1.0,
            alpha,
        }
    }

    pub fn with_mass(mut self, mass: f64) -> Self {
        self.mass = mass;
        self
    }

    pub fn with_alpha(mut self, alpha: AlphaPrior) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_rho == 0 {
            return Err(Error::Parameter("d_rho must be at least 1".into()));
        }
        Crp::new(self.mass)?;
        let pos = |x: f64| x > 0.0 && x.is_finite();
        match &self.alpha {
            AlphaPrior::Beta { a, b } => {
                if self.d_gamma != 0 {
                    return Err(Error::Parameter("Beta alpha prior requires d_gamma = 0".into()));
                }
                if !pos(*a) || !pos(*b) {
                    return Err(Error::Parameter(format!("Beta({a}, {b}) is improper")));
                }
            }
            AlphaPrior::Logistic { mean, cov } => {
                if self.d_gamma == 0 {
                    return Err(Error::Parameter("logistic alpha prior requires d_gamma > 0".into()));
                }
                if !mean.iter().all(|m| m.is_finite()) {
                    return Err(Error::Parameter("alpha prior mean must be finite".into()));
                }
                let c = to_matrix(cov);
                if (c - c.transpose()).abs().max() > 1e-12 || c.cholesky().is_none() {
                    return Err(Error::Parameter("alpha prior covariance must be positive definite".into()));
                }
            }
            AlphaPrior::Fixed(AlphaState::PerIndex(p)) => {
                if self.d_gamma != 0 {
                    return Err(Error::Parameter("per-index alpha requires d_gamma = 0".into()));
                }
                if !p.iter().all(|x| (0.0..=1.0).contains(x)) {
                    return Err(Error::Parameter("alpha probabilities must lie in [0, 1]".into()));
                }
            }
            AlphaPrior::Fixed(AlphaState::Logistic { coef, .. }) => {
                if self.d_gamma == 0 {
                    return Err(Error::Parameter("logistic alpha requires d_gamma > 0".into()));
                }
                if !coef.iter().all(|x| x.is_finite()) {
                    return Err(Error::Parameter("alpha coefficients must be finite".into()));
                }
            }
        }
        Ok(())
    }
}

fn to_matrix(m: &[[f64; 2]; 2]) -> Matrix2<f64> {
    Matrix2::new(m[0][0], m[0][1], m[1][0], m[1][1])
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// log P(γ = v) under Bernoulli(logistic(eta)), stable for large |eta|.
fn log_bern_logit(v: bool, eta: f64) -> f64 {
    let s = if v { eta } else { -eta };
    -softplus(-s)
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl AlphaState {
    /// P(γ_ik = 1 | α, past γ) for k ≥ 1.
    pub fn persistence_prob(&self, gamma: &GammaMatrix, i: usize, k: usize, d_gamma: usize) -> f64 {
        match self {
            AlphaState::PerIndex(p) => p[k],
            AlphaState::Logistic { coef, .. } => {
                logistic(coef[0] + coef[1] * gamma.lag_sum(i, k, d_gamma) as f64)
            }
        }
    }

    /// log π^{(±i,k)}: the γ-prior factors touched by γ_ik, with γ_ik = `value`.
    fn log_pi(&self, gamma: &GammaMatrix, i: usize, k: usize, value: bool, d_gamma: usize) -> f64 {
        match self {
            AlphaState::PerIndex(p) => {
                if value {
                    p[k].ln()
                } else {
                    (1.0 - p[k]).ln()
                }
            }
            AlphaState::Logistic { coef, .. } => {
                let last = (k + d_gamma).min(gamma.num_indices() - 1);
                let mut total = 0.0;
                for kp in k..=last {
                    let mut s = gamma.lag_sum(i, kp, d_gamma);
                    if kp > k && gamma.get(i, k) != value {
                        // γ_ik sits inside the lag window of kp.
                        s = if value { s + 1 } else { s - 1 };
                    }
                    let g = if kp == k { value } else { gamma.get(i, kp) };
                    total += log_bern_logit(g, coef[0] + coef[1] * s as f64);
                }
                total
            }
        }
    }
}

/// log P(γ | α), the autoregressive Bernoulli prior over indices k ≥ 1.
pub fn log_gamma_prob(gamma: &GammaMatrix, alpha: &AlphaState, d_gamma: usize) -> f64 {
    let mut total = 0.0;
    for k in 1..gamma.num_indices() {
        for i in 0..gamma.num_units() {
            let p = alpha.persistence_prob(gamma, i, k, d_gamma);
            total += if gamma.get(i, k) { p.ln() } else { (1.0 - p).ln() };
        }
    }
    total
}

/// Whether unit `i` is frozen in the transition into index `k`: some γ_iq = 1
/// for q in the window k − d_ρ + 1 ..= k.
pub fn is_fixed(gamma: &GammaMatrix, i: usize, k: usize, d_rho: usize) -> bool {
    (k.saturating_sub(d_rho - 1)..=k).any(|q| gamma.get(i, q))
}

/// R_k, ascending.
pub fn fixed_set(gamma: &GammaMatrix, k: usize, d_rho: usize) -> Vec<usize> {
    (0..gamma.num_units())
        .filter(|&i| is_fixed(gamma, i, k, d_rho))
        .collect()
}

/// Whether `i` stays frozen at `k_prime` through entries of its window other than `k`.
fn fixed_elsewhere(gamma: &GammaMatrix, i: usize, k: usize, k_prime: usize, d_rho: usize) -> bool {
    (k_prime.saturating_sub(d_rho - 1)..=k_prime).any(|q| q != k && gamma.get(i, q))
}

/// (R^{(+i,k)}_{k'}, R^{(−i,k)}_{k'}): the reduced set at `k_prime` with γ_ik
/// set to 1 and to 0.
pub fn flip_sets(
    gamma: &GammaMatrix,
    i: usize,
    k: usize,
    k_prime: usize,
    d_rho: usize,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if k_prime < k || k_prime >= k + d_rho || k_prime >= gamma.num_indices() {
        return Err(Error::Contract(format!(
            "index {k_prime} is outside the influence window of gamma at index {k}"
        )));
    }
    let mut minus: Vec<usize> = fixed_set(gamma, k_prime, d_rho)
        .into_iter()
        .filter(|&u| u != i)
        .collect();
    let mut plus = minus.clone();
    let pos = plus.partition_point(|&u| u < i);
    plus.insert(pos, i);
    if fixed_elsewhere(gamma, i, k, k_prime, d_rho) {
        minus.insert(pos, i);
    }
    Ok((plus, minus))
}

/// Shared body of the γ_ik full conditional. `fixed(u, k')` is membership of
/// unit u ≠ i in R_{k'} under the current γ.
pub(crate) fn gamma_conditional_with<F>(
    i: usize,
    k: usize,
    gamma: &GammaMatrix,
    clusters: &ClusterMatrix,
    alpha: &AlphaState,
    cfg: &SmrpmConfig,
    fixed: F,
) -> f64
where
    F: Fn(usize, usize) -> bool,
{
    let num_idx = clusters.num_indices();
    let last = (k + cfg.d_rho - 1).min(num_idx - 1);
    let mut log_ratio = 0.0;
    for kp in k..=last {
        if fixed_elsewhere(gamma, i, k, kp, cfg.d_rho) {
            // Flip leaves R_{k'} unchanged; both the ratio and indicator are 1.
            continue;
        }
        let (now, prev) = (clusters.column(kp), clusters.column(kp - 1));
        let (ci, ci_prev) = (now[i], prev[i]);
        let (mut m, mut nj) = (0usize, 0usize);
        for u in (0..clusters.num_units()).filter(|&u| u != i && fixed(u, kp)) {
            m += 1;
            let together = now[u] == ci;
            if together != (prev[u] == ci_prev) {
                return 0.0;
            }
            nj += usize::from(together);
        }
        let w = if nj == 0 { cfg.mass } else { nj as f64 };
        log_ratio += (w / (m as f64 + cfg.mass)).ln();
    }
    let lp = alpha.log_pi(gamma, i, k, true, cfg.d_gamma);
    let lm = alpha.log_pi(gamma, i, k, false, cfg.d_gamma);
    1.0 / (1.0 + (lm - lp + log_ratio).exp())
}

/// P(γ_ik = 1 | rest) for k ≥ 1.
pub fn gamma_full_conditional(
    i: usize,
    k: usize,
    gamma: &GammaMatrix,
    clusters: &ClusterMatrix,
    alpha: &AlphaState,
    cfg: &SmrpmConfig,
) -> Result<f64> {
    check_dims(gamma, clusters)?;
    if k == 0 || k >= gamma.num_indices() {
        return Err(Error::Contract(format!("gamma at index {k} is not updatable")));
    }
    if i >= gamma.num_units() {
        return Err(Error::Bounds {
            index: i,
            len: gamma.num_units(),
        });
    }
    Ok(gamma_conditional_with(i, k, gamma, clusters, alpha, cfg, |u, kp| {
        is_fixed(gamma, u, kp, cfg.d_rho)
    }))
}

fn check_dims(gamma: &GammaMatrix, clusters: &ClusterMatrix) -> Result<()> {
    if gamma.num_units() != clusters.num_units() {
        return Err(Error::Dimension {
            expected: clusters.num_units(),
            got: gamma.num_units(),
        });
    }
    if gamma.num_indices() != clusters.num_indices() {
        return Err(Error::Dimension {
            expected: clusters.num_indices(),
            got: gamma.num_indices(),
        });
    }
    Ok(())
}

/// Unnormalized prior weights for reallocating unit `i` at index `k`, with
/// `i` already detached from column `k`. Writes one entry per remaining
/// cluster and a final new-cluster entry into `out`.
///
/// Assumes i ∉ R_k and a compatible state elsewhere, so the backward
/// indicator is identically one and only the forward one (via R_{k+1})
/// can bind. `fixed(u, k')` is membership in R_{k'} for any unit.
pub(crate) fn prior_weights_detached<F>(
    i: usize,
    k: usize,
    clusters: &ClusterMatrix,
    mass: f64,
    fixed: F,
    blocked: &mut Vec<bool>,
    out: &mut Vec<f64>,
) where
    F: Fn(usize, usize) -> bool,
{
    let sizes = clusters.sizes(k);
    out.clear();
    out.extend(sizes.iter().map(|&s| s as f64));
    out.push(mass);
    if k + 1 >= clusters.num_indices() || !fixed(i, k + 1) {
        return;
    }
    let (here, next) = (clusters.column(k), clusters.column(k + 1));
    let ci_next = next[i];
    blocked.clear();
    blocked.resize(sizes.len(), false);
    for u in (0..clusters.num_units()).filter(|&u| u != i && fixed(u, k + 1)) {
        if next[u] == ci_next {
            // i must rejoin the frozen units it is grouped with at k + 1.
            let forced = here[u];
            for (j, w) in out.iter_mut().enumerate() {
                if j != forced {
                    *w = 0.0;
                }
            }
            return;
        }
        blocked[here[u]] = true;
    }
    for (w, &b) in out.iter_mut().zip(blocked.iter()) {
        if b {
            *w = 0.0;
        }
    }
}

/// Prior weights for moving unit `i` at index `k`: `(Some(label), weight)` for
/// each existing cluster of ρ_k without i (labels as in the current ρ_k),
/// then `(None, weight)` for a new cluster. Infeasible moves weigh 0.
pub fn cluster_prior_weights(
    i: usize,
    k: usize,
    clusters: &ClusterMatrix,
    gamma: &GammaMatrix,
    cfg: &SmrpmConfig,
) -> Result<Vec<(Option<usize>, f64)>> {
    check_dims(gamma, clusters)?;
    if i >= gamma.num_units() || k >= gamma.num_indices() {
        return Err(Error::Bounds {
            index: i.max(k),
            len: gamma.num_units().max(gamma.num_indices()),
        });
    }
    if is_fixed(gamma, i, k, cfg.d_rho) {
        return Err(Error::FixedUnit { unit: i, index: k });
    }
    let original_last = clusters.num_clusters(k) - 1;
    let mut work = clusters.clone();
    let detached = work.detach(i, k);
    let mut out = Vec::new();
    prior_weights_detached(
        i,
        k,
        &work,
        cfg.mass,
        |u, kp| is_fixed(gamma, u, kp, cfg.d_rho),
        &mut Vec::new(),
        &mut out,
    );
    let existing = out.len() - 1;
    let mut labeled: Vec<(Option<usize>, f64)> = out[..existing]
        .iter()
        .enumerate()
        .map(|(j, &w)| {
            let label = match detached {
                Detached::Removed { slot } if j == slot => original_last,
                _ => j,
            };
            (Some(label), w)
        })
        .collect();
    labeled.sort_by_key(|(l, _)| *l);
    labeled.push((None, out[existing]));
    Ok(labeled)
}

/// α_k | γ ~ Beta(a + Σ_i γ_ik, b + n − Σ_i γ_ik).
pub fn update_alpha_beta<R: Rng + ?Sized>(
    gamma: &GammaMatrix,
    k: usize,
    a: f64,
    b: f64,
    rng: &mut R,
) -> f64 {
    let s = gamma.column_sum(k) as f64;
    let n = gamma.num_units() as f64;
    Beta::new(a + s, b + n - s)
        .expect("beta parameters are positive")
        .sample(rng)
}

/// Rows z_ik = (1, Σ_{q=1}^{d_γ} γ_{i,k−q}) for k ≥ 1, ordered i + n (k − 1).
pub fn logistic_design(gamma: &GammaMatrix, d_gamma: usize) -> Vec<[f64; 2]> {
    let n = gamma.num_units();
    let mut z = Vec::with_capacity(n * gamma.num_indices().saturating_sub(1));
    for k in 1..gamma.num_indices() {
        for i in 0..n {
            z.push([1.0, gamma.lag_sum(i, k, d_gamma) as f64]);
        }
    }
    z
}

/// Gaussian full conditional of α given ω: (mean, covariance).
pub fn alpha_logistic_posterior(
    gamma: &GammaMatrix,
    omega: &[f64],
    d_gamma: usize,
    prior_mean: [f64; 2],
    prior_cov: [[f64; 2]; 2],
) -> Result<([f64; 2], [[f64; 2]; 2])> {
    let z = logistic_design(gamma, d_gamma);
    if omega.len() != z.len() {
        return Err(Error::Dimension {
            expected: z.len(),
            got: omega.len(),
        });
    }
    let prior_prec = to_matrix(&prior_cov)
        .try_inverse()
        .ok_or_else(|| Error::LinearAlgebra("alpha prior covariance is singular".into()))?;
    let mut prec = prior_prec;
    let mut rhs = prior_prec * Vector2::new(prior_mean[0], prior_mean[1]);
    let n = gamma.num_units();
    for (row, (zr, &w)) in z.iter().zip(omega).enumerate() {
        let zv = Vector2::new(zr[0], zr[1]);
        prec += w * zv * zv.transpose();
        let kappa = if gamma.get(row % n, 1 + row / n) { 0.5 } else { -0.5 };
        rhs += kappa * zv;
    }
    let chol = prec.cholesky().ok_or_else(|| {
        let ev = prec.symmetric_eigenvalues();
        Error::LinearAlgebra(format!(
            "alpha posterior precision not positive definite (eigenvalues {:.3e}, {:.3e})",
            ev[0], ev[1]
        ))
    })?;
    let cov = chol.inverse();
    let mean = chol.solve(&rhs);
    Ok((
        [mean[0], mean[1]],
        [[cov[(0, 0)], cov[(0, 1)]], [cov[(1, 0)], cov[(1, 1)]]],
    ))
}

/// Draws α | ω, γ and then refreshes every ω_ik | α ~ PG(1, αᵀz_ik).
pub fn update_alpha_logistic<R: Rng + ?Sized>(
    gamma: &GammaMatrix,
    omega: &mut [f64],
    d_gamma: usize,
    prior_mean: [f64; 2],
    prior_cov: [[f64; 2]; 2],
    rng: &mut R,
) -> Result<[f64; 2]> {
    let (mean, cov) = alpha_logistic_posterior(gamma, omega, d_gamma, prior_mean, prior_cov)?;
    let coef = draw_bivariate_normal(mean, cov, rng)?;
    refresh_omega(gamma, coef, d_gamma, omega, rng);
    Ok(coef)
}

/// ω_ik | α, γ ~ PG(1, αᵀz_ik) for every row of the logistic design.
pub fn refresh_omega<R: Rng + ?Sized>(
    gamma: &GammaMatrix,
    coef: [f64; 2],
    d_gamma: usize,
    omega: &mut [f64],
    rng: &mut R,
) {
    for (w, z) in omega.iter_mut().zip(logistic_design(gamma, d_gamma)) {
        *w = sample_pg(coef[0] * z[0] + coef[1] * z[1], rng);
    }
}

pub(crate) fn draw_bivariate_normal<R: Rng + ?Sized>(
    mean: [f64; 2],
    cov: [[f64; 2]; 2],
    rng: &mut R,
) -> Result<[f64; 2]> {
    let l = to_matrix(&cov)
        .cholesky()
        .ok_or_else(|| Error::LinearAlgebra("covariance is not positive definite".into()))?
        .l();
    let e = Vector2::new(StandardNormal.sample(rng), StandardNormal.sample(rng));
    let d = l * e;
    Ok([mean[0] + d[0], mean[1] + d[1]])
}

/// A draw of α (and ω for the logistic form) from its prior. Fixed α is returned as is.
pub fn sample_alpha_prior<R: Rng + ?Sized>(
    cfg: &SmrpmConfig,
    n: usize,
    num_indices: usize,
    rng: &mut R,
) -> Result<AlphaState> {
    let rows = n * num_indices.saturating_sub(1);
    Ok(match &cfg.alpha {
        AlphaPrior::Beta { a, b } => {
            let beta = Beta::new(*a, *b).map_err(|e| Error::Parameter(e.to_string()))?;
            AlphaState::PerIndex((0..num_indices).map(|_| beta.sample(rng)).collect())
        }
        AlphaPrior::Logistic { mean, cov } => {
            let coef = draw_bivariate_normal(*mean, *cov, rng)?;
            let omega = (0..rows).map(|_| sample_pg(0.0, rng)).collect();
            AlphaState::Logistic { coef, omega }
        }
        AlphaPrior::Fixed(AlphaState::Logistic { coef, omega }) if omega.len() != rows => {
            AlphaState::Logistic {
                coef: *coef,
                omega: vec![0.25; rows],
            }
        }
        AlphaPrior::Fixed(state) => state.clone(),
    })
}

/// Forward simulation of (ρ_1..ρ_K, γ) from the prior given α.
///
/// ρ_1 is a CRP draw; for k ≥ 1 γ_k is drawn first, the frozen units R_k
/// keep their grouping from ρ_{k−1}, and the others are seated sequentially
/// by the CRP predictive, which is the CRP conditioned on its restriction
/// to R_k.
pub fn sample_prior<R: Rng + ?Sized>(
    n: usize,
    num_indices: usize,
    cfg: &SmrpmConfig,
    alpha: &AlphaState,
    rng: &mut R,
) -> (ClusterMatrix, GammaMatrix) {
    let mut gamma = GammaMatrix::zeros(n, num_indices);
    let mut rows = vec![vec![0usize; num_indices]; n];
    let mut labels = vec![usize::MAX; n];
    let mut sizes: Vec<usize> = Vec::new();
    for k in 0..num_indices {
        for i in (0..n).filter(|_| k > 0) {
            let p = alpha.persistence_prob(&gamma, i, k, cfg.d_gamma);
            gamma.put(i, k, rng.random::<f64>() < p);
        }
        let prev = labels.clone();
        labels.fill(usize::MAX);
        sizes.clear();
        // Frozen units keep their grouping from k − 1.
        let mut map: Vec<usize> = vec![usize::MAX; n];
        for i in (0..n).filter(|&i| k > 0 && is_fixed(&gamma, i, k, cfg.d_rho)) {
            let p = prev[i];
            if map[p] == usize::MAX {
                map[p] = sizes.len();
                sizes.push(0);
            }
            labels[i] = map[p];
            sizes[map[p]] += 1;
        }
        let mut seated: usize = sizes.iter().sum();
        for i in 0..n {
            if labels[i] != usize::MAX {
                continue;
            }
            let u = rng.random::<f64>() * (seated as f64 + cfg.mass);
            let mut acc = 0.0;
            let mut choice = sizes.len();
            for (j, &s) in sizes.iter().enumerate() {
                acc += s as f64;
                if u < acc {
                    choice = j;
                    break;
                }
            }
            if choice == sizes.len() {
                sizes.push(0);
            }
            sizes[choice] += 1;
            labels[i] = choice;
            seated += 1;
        }
        for i in 0..n {
            rows[i][k] = labels[i];
        }
    }
    let clusters = ClusterMatrix::from_rows(&rows).expect("rectangular by construction");
    (clusters, gamma)
}

/// Every unit frozen at k agrees between ρ_{k−1} and ρ_k, for all k ≥ 1.
pub fn is_compatible_state(clusters: &ClusterMatrix, gamma: &GammaMatrix, d_rho: usize) -> bool {
    let mut scratch = crate::partition::Scratch::default();
    let mut mask = vec![false; clusters.num_units()];
    (1..clusters.num_indices()).all(|k| {
        for (i, m) in mask.iter_mut().enumerate() {
            *m = is_fixed(gamma, i, k, d_rho);
        }
        crate::partition::agree_on(clusters.column(k - 1), clusters.column(k), &mask, &mut scratch)
    })
}
