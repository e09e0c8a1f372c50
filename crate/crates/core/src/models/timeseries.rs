//! Time-series model: n series of K observations with cluster-specific
//! means and variances at every time point,
//!
//!   Y_ik ~ N(μ*_{k,c_ik}, σ*²_{k,c_ik}),
//!   μ*_kj ~ N(θ_k, τ²_k),  σ*²_kj ~ IG(a_σ, b_σ),
//!   θ_k ~ N(φ0, λ²),  τ²_k ~ IG(a_τ, b_τ),  φ0 ~ N(m0, s0²),  λ² ~ IG(a_λ, b_λ).

use super::{
    inv_gamma, log_inv_gamma_pdf, log_normal_pdf, normal, permute, ClusterModel, Conditional,
    GenerativeModel,
};
use crate::error::{Error, Result};
use crate::partition::{ClusterMatrix, Detached};
use rand::Rng;

/// Rectangular n × K observations, one row per series.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    rows: Vec<Vec<f64>>,
}

impl TimeSeriesDataset {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.first().map(Vec::len).ok_or_else(|| Error::Empty("no series".into()))?;
        if k == 0 {
            return Err(Error::Empty("series have no observations".into()));
        }
        for r in &rows {
            if r.len() != k {
                return Err(Error::Dimension {
                    expected: k,
                    got: r.len(),
                });
            }
            if !r.iter().all(|v| v.is_finite()) {
                return Err(Error::Validation("non-finite observation".into()));
            }
        }
        Ok(Self { rows })
    }

    pub fn num_series(&self) -> usize {
        self.rows.len()
    }

    pub fn num_times(&self) -> usize {
        self.rows[0].len()
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.rows[i][k]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeSeriesHyper {
    pub m0: f64,
    pub s0_sq: f64,
    pub a_lambda: f64,
    pub b_lambda: f64,
    pub a_tau: f64,
    pub b_tau: f64,
    pub a_sigma: f64,
    pub b_sigma: f64,
}

impl Default for TimeSeriesHyper {
    fn default() -> Self {
        Self {
            m0: 0.0,
            s0_sq: 1.0,
            a_lambda: 1.0,
            b_lambda: 1.0,
            a_tau: 1.0,
            b_tau: 1.0,
            a_sigma: 1.0,
            b_sigma: 1.0,
        }
    }
}

impl TimeSeriesHyper {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            self.s0_sq,
            self.a_lambda,
            self.b_lambda,
            self.a_tau,
            self.b_tau,
            self.a_sigma,
            self.b_sigma,
        ];
        if !self.m0.is_finite() || !pos.iter().all(|v| *v > 0.0 && v.is_finite()) {
            return Err(Error::Parameter(format!("invalid time-series hyperparameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesState {
    pub mu_star: Vec<Vec<f64>>,
    pub sigma2_star: Vec<Vec<f64>>,
    pub theta: Vec<f64>,
    pub tau2: Vec<f64>,
    pub phi0: f64,
    pub lambda2: f64,
}

#[derive(Debug, Clone)]
pub struct TimeSeriesModel {
    data: TimeSeriesDataset,
    hyper: TimeSeriesHyper,
    state: TimeSeriesState,
    sigma_shape_offset: f64,
}

impl TimeSeriesModel {
    pub fn new(data: TimeSeriesDataset, hyper: TimeSeriesHyper) -> Result<Self> {
        hyper.validate()?;
        let kk = data.num_times();
        let state = TimeSeriesState {
            mu_star: vec![vec![0.0]; kk],
            sigma2_star: vec![vec![1.0]; kk],
            theta: vec![0.0; kk],
            tau2: vec![1.0; kk],
            phi0: 0.0,
            lambda2: 1.0,
        };
        Ok(Self {
            data,
            hyper,
            state,
            sigma_shape_offset: 0.0,
        })
    }

    pub fn data(&self) -> &TimeSeriesDataset {
        &self.data
    }

    pub fn hyper(&self) -> &TimeSeriesHyper {
        &self.hyper
    }

    pub fn current(&self) -> &TimeSeriesState {
        &self.state
    }

    pub fn set_state(&mut self, state: TimeSeriesState, clusters: &ClusterMatrix) -> Result<()> {
        let kk = clusters.num_indices();
        let ok = state.mu_star.len() == kk
            && state.sigma2_star.len() == kk
            && state.theta.len() == kk
            && state.tau2.len() == kk
            && (0..kk).all(|k| {
                state.mu_star[k].len() == clusters.num_clusters(k)
                    && state.sigma2_star[k].len() == clusters.num_clusters(k)
            });
        if !ok {
            return Err(Error::Contract("state does not match the cluster matrix".into()));
        }
        self.state = state;
        Ok(())
    }

    #[doc(hidden)]
    pub fn set_sigma_shape_offset(&mut self, offset: f64) {
        self.sigma_shape_offset = offset;
    }

    /// Single-cluster start: μ*_k1 at the cross-sectional mean, the rest
    /// drawn from the prior.
    pub fn initialize<R: Rng + ?Sized>(&mut self, clusters: &ClusterMatrix, rng: &mut R) {
        let h = self.hyper;
        let (n, kk) = (self.data.num_series(), self.data.num_times());
        let st = &mut self.state;
        st.phi0 = normal(h.m0, h.s0_sq, rng);
        st.lambda2 = inv_gamma(h.a_lambda, h.b_lambda, rng);
        for k in 0..kk {
            st.theta[k] = normal(st.phi0, st.lambda2, rng);
            st.tau2[k] = inv_gamma(h.a_tau, h.b_tau, rng);
            let mean = (0..n).map(|i| self.data.get(i, k)).sum::<f64>() / n as f64;
            st.mu_star[k] = vec![mean; clusters.num_clusters(k)];
            st.sigma2_star[k] = (0..clusters.num_clusters(k))
                .map(|_| inv_gamma(h.a_sigma, h.b_sigma, rng))
                .collect();
        }
    }

    /// log N(y_ik; μ*, σ*²) for cluster `j`, or for a new cluster with `aux`.
    pub fn loglik(&self, i: usize, k: usize, j: usize, aux: Option<(f64, f64)>, clusters: &ClusterMatrix) -> Result<f64> {
        let jk = clusters.num_clusters(k);
        let (mu, s2) = match j.cmp(&jk) {
            std::cmp::Ordering::Less => (self.state.mu_star[k][j], self.state.sigma2_star[k][j]),
            std::cmp::Ordering::Equal => aux.ok_or_else(|| {
                Error::Contract("a new cluster needs auxiliary parameters".into())
            })?,
            std::cmp::Ordering::Greater => return Err(Error::Bounds { index: j, len: jk + 1 }),
        };
        Ok(log_normal_pdf(self.data.get(i, k), mu, s2))
    }

    pub fn phi0_conditional(&self) -> Conditional {
        let (h, st) = (&self.hyper, &self.state);
        let kk = st.theta.len() as f64;
        let prec = 1.0 / h.s0_sq + kk / st.lambda2;
        Conditional::Normal {
            mean: (h.m0 / h.s0_sq + st.theta.iter().sum::<f64>() / st.lambda2) / prec,
            var: 1.0 / prec,
        }
    }

    pub fn lambda2_conditional(&self) -> Conditional {
        let (h, st) = (&self.hyper, &self.state);
        Conditional::InvGamma {
            shape: h.a_lambda + 0.5 * st.theta.len() as f64,
            rate: h.b_lambda + 0.5 * st.theta.iter().map(|t| (t - st.phi0).powi(2)).sum::<f64>(),
        }
    }

    pub fn theta_conditional(&self, k: usize) -> Conditional {
        let st = &self.state;
        let jk = st.mu_star[k].len() as f64;
        let prec = 1.0 / st.lambda2 + jk / st.tau2[k];
        Conditional::Normal {
            mean: (st.phi0 / st.lambda2 + st.mu_star[k].iter().sum::<f64>() / st.tau2[k]) / prec,
            var: 1.0 / prec,
        }
    }

    pub fn tau2_conditional(&self, k: usize) -> Conditional {
        let (h, st) = (&self.hyper, &self.state);
        Conditional::InvGamma {
            shape: h.a_tau + 0.5 * st.mu_star[k].len() as f64,
            rate: h.b_tau + 0.5 * st.mu_star[k].iter().map(|m| (m - st.theta[k]).powi(2)).sum::<f64>(),
        }
    }

    fn members(&self, k: usize, j: usize, clusters: &ClusterMatrix) -> impl Iterator<Item = f64> + '_ {
        let col = clusters.column(k).to_vec();
        (0..col.len())
            .filter(move |&i| col[i] == j)
            .map(move |i| self.data.get(i, k))
    }

    pub fn mu_star_conditional(&self, k: usize, j: usize, clusters: &ClusterMatrix) -> Conditional {
        let st = &self.state;
        let (mut cnt, mut sum) = (0.0, 0.0);
        for y in self.members(k, j, clusters) {
            cnt += 1.0;
            sum += y;
        }
        let s2 = st.sigma2_star[k][j];
        let prec = 1.0 / st.tau2[k] + cnt / s2;
        Conditional::Normal {
            mean: (st.theta[k] / st.tau2[k] + sum / s2) / prec,
            var: 1.0 / prec,
        }
    }

    pub fn sigma2_star_conditional(&self, k: usize, j: usize, clusters: &ClusterMatrix) -> Conditional {
        let (h, st) = (&self.hyper, &self.state);
        let mu = st.mu_star[k][j];
        let (mut cnt, mut ss) = (0.0, 0.0);
        for y in self.members(k, j, clusters) {
            cnt += 1.0;
            ss += (y - mu).powi(2);
        }
        Conditional::InvGamma {
            shape: h.a_sigma + 0.5 * cnt + self.sigma_shape_offset,
            rate: h.b_sigma + 0.5 * ss,
        }
    }

    /// Log density of data and all continuous parameters given the partitions.
    pub fn log_joint(&self, clusters: &ClusterMatrix) -> f64 {
        let (h, st) = (&self.hyper, &self.state);
        let mut lp = self.log_likelihood(clusters);
        for k in 0..st.theta.len() {
            for (m, s) in st.mu_star[k].iter().zip(&st.sigma2_star[k]) {
                lp += log_normal_pdf(*m, st.theta[k], st.tau2[k]);
                lp += log_inv_gamma_pdf(*s, h.a_sigma, h.b_sigma);
            }
            lp += log_normal_pdf(st.theta[k], st.phi0, st.lambda2);
            lp += log_inv_gamma_pdf(st.tau2[k], h.a_tau, h.b_tau);
        }
        lp + log_normal_pdf(st.phi0, h.m0, h.s0_sq) + log_inv_gamma_pdf(st.lambda2, h.a_lambda, h.b_lambda)
    }
}

impl ClusterModel for TimeSeriesModel {
    type Aux = (f64, f64);
    type State = TimeSeriesState;

    fn num_units(&self) -> usize {
        self.data.num_series()
    }

    fn num_indices(&self) -> usize {
        self.data.num_times()
    }

    fn on_detach(&mut self, k: usize, detached: Detached) -> Option<(f64, f64)> {
        match detached {
            Detached::Removed { slot } => Some((
                self.state.mu_star[k].swap_remove(slot),
                self.state.sigma2_star[k].swap_remove(slot),
            )),
            Detached::Kept { .. } => None,
        }
    }

    fn draw_aux<R: Rng + ?Sized>(&mut self, _i: usize, k: usize, _: &ClusterMatrix, rng: &mut R) -> (f64, f64) {
        let h = &self.hyper;
        (
            normal(self.state.theta[k], self.state.tau2[k], rng),
            inv_gamma(h.a_sigma, h.b_sigma, rng),
        )
    }

    fn log_weights(&mut self, i: usize, k: usize, _clusters: &ClusterMatrix, aux: &(f64, f64), out: &mut [f64]) {
        let y = self.data.get(i, k);
        let st = &self.state;
        let jk = st.mu_star[k].len();
        for (j, w) in out.iter_mut().enumerate() {
            let (m, s) = if j < jk {
                (st.mu_star[k][j], st.sigma2_star[k][j])
            } else {
                *aux
            };
            *w += log_normal_pdf(y, m, s);
        }
    }

    fn on_attach(&mut self, k: usize, j: usize, aux: (f64, f64)) {
        if j == self.state.mu_star[k].len() {
            self.state.mu_star[k].push(aux.0);
            self.state.sigma2_star[k].push(aux.1);
        }
    }

    fn on_relabel(&mut self, k: usize, order: &[usize]) {
        permute(&mut self.state.mu_star[k], order);
        permute(&mut self.state.sigma2_star[k], order);
    }

    fn update_params<R: Rng + ?Sized>(&mut self, clusters: &ClusterMatrix, rng: &mut R) {
        self.state.phi0 = self.phi0_conditional().sample(rng);
        self.state.lambda2 = self.lambda2_conditional().sample(rng);
        for k in 0..self.state.theta.len() {
            self.state.theta[k] = self.theta_conditional(k).sample(rng);
            self.state.tau2[k] = self.tau2_conditional(k).sample(rng);
        }
        for k in 0..self.state.theta.len() {
            for j in 0..clusters.num_clusters(k) {
                self.state.mu_star[k][j] = self.mu_star_conditional(k, j, clusters).sample(rng);
                self.state.sigma2_star[k][j] = self.sigma2_star_conditional(k, j, clusters).sample(rng);
            }
        }
    }

    fn is_consistent(&self, clusters: &ClusterMatrix) -> bool {
        (0..clusters.num_indices()).all(|k| {
            self.state.mu_star[k].len() == clusters.num_clusters(k)
                && self.state.sigma2_star[k].len() == clusters.num_clusters(k)
        })
    }

    fn state(&self) -> TimeSeriesState {
        self.state.clone()
    }

    fn log_likelihood(&self, clusters: &ClusterMatrix) -> f64 {
        let st = &self.state;
        let mut total = 0.0;
        for k in 0..self.data.num_times() {
            for (i, &j) in clusters.column(k).iter().enumerate() {
                total += log_normal_pdf(self.data.get(i, k), st.mu_star[k][j], st.sigma2_star[k][j]);
            }
        }
        total
    }
}

impl GenerativeModel for TimeSeriesModel {
    fn draw_prior<R: Rng + ?Sized>(&mut self, clusters: &ClusterMatrix, rng: &mut R) {
        let h = self.hyper;
        let st = &mut self.state;
        st.phi0 = normal(h.m0, h.s0_sq, rng);
        st.lambda2 = inv_gamma(h.a_lambda, h.b_lambda, rng);
        for k in 0..st.theta.len() {
            st.theta[k] = normal(st.phi0, st.lambda2, rng);
            st.tau2[k] = inv_gamma(h.a_tau, h.b_tau, rng);
            let jk = clusters.num_clusters(k);
            st.mu_star[k] = (0..jk).map(|_| normal(st.theta[k], st.tau2[k], rng)).collect();
            st.sigma2_star[k] = (0..jk).map(|_| inv_gamma(h.a_sigma, h.b_sigma, rng)).collect();
        }
    }

    fn resimulate<R: Rng + ?Sized>(&mut self, clusters: &ClusterMatrix, rng: &mut R) {
        let st = &self.state;
        for (i, row) in self.data.rows.iter_mut().enumerate() {
            for (k, y) in row.iter_mut().enumerate() {
                let j = clusters.label(i, k);
                *y = normal(st.mu_star[k][j], st.sigma2_star[k][j], rng);
            }
        }
    }

    fn statistics(&self, _clusters: &ClusterMatrix, out: &mut Vec<(&'static str, f64)>) {
        let st = &self.state;
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let mu: Vec<f64> = st.mu_star.iter().flatten().copied().collect();
        let s2: Vec<f64> = st.sigma2_star.iter().flatten().copied().collect();
        let ys: Vec<f64> = self.data.rows.iter().flatten().copied().collect();
        out.push(("phi0", st.phi0));
        out.push(("lambda2", st.lambda2));
        out.push(("theta_mean", mean(&st.theta)));
        out.push(("tau2_mean", mean(&st.tau2)));
        out.push(("mu_star_mean", mean(&mu)));
        out.push(("sigma2_star_mean", mean(&s2)));
        out.push(("y_mean", mean(&ys)));
        out.push(("y_sq_mean", ys.iter().map(|y| y * y).sum::<f64>() / ys.len() as f64));
    }
}
