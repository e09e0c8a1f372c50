//! Functional model: curves observed with Gaussian noise around a B-spline
//! expansion whose coefficients are locally clustered,
//!
//!   Y_i(x) ~ N(Σ_k b_k(x) θ*_{k,c_ik}, σ²),
//!   θ*_{1j} ~ N(0, τ²),  θ*_{kj} ~ N(φ · mean{θ*_{k−1,l} : l ∈ C^{(→j)}_{k−1}}, τ²),
//!
//! where C^{(→j)}_{k−1} are the clusters at k − 1 holding some member of
//! cluster j at k. Inverse-gamma priors on σ², τ² and a normal prior on φ.

use super::{
    inv_gamma, log_inv_gamma_pdf, log_normal_pdf, normal, permute, ClusterModel, Conditional,
    GenerativeModel,
};
use crate::bspline::{BasisSpec, DesignMatrix};
use crate::error::{Error, Result};
use crate::partition::{ClusterMatrix, Detached};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Curves as sorted evaluation points with observations.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalDataset {
    x: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
}

impl FunctionalDataset {
    /// One `(x, y)` pair of equal-length vectors per curve. Points are sorted
    /// by `x`; repeated points within a curve are rejected.
    pub fn new(curves: Vec<(Vec<f64>, Vec<f64>)>) -> Result<Self> {
        if curves.is_empty() {
            return Err(Error::Empty("no curves".into()));
        }
        let mut xs = Vec::with_capacity(curves.len());
        let mut ys = Vec::with_capacity(curves.len());
        for (i, (x, y)) in curves.into_iter().enumerate() {
            if x.len() != y.len() {
                return Err(Error::Dimension {
                    expected: x.len(),
                    got: y.len(),
                });
            }
            if x.is_empty() {
                return Err(Error::Empty(format!("curve {i} has no points")));
            }
            if !x.iter().chain(&y).all(|v| v.is_finite()) {
                return Err(Error::Validation(format!("curve {i} has non-finite values")));
            }
            let mut pairs: Vec<(f64, f64)> = x.into_iter().zip(y).collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::Validation(format!("curve {i} repeats an evaluation point")));
            }
            let (x, y) = pairs.into_iter().unzip();
            xs.push(x);
            ys.push(y);
        }
        Ok(Self { x: xs, y: ys })
    }

    pub fn num_curves(&self) -> usize {
        self.x.len()
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.x[i]
    }

    pub fn y(&self, i: usize) -> &[f64] {
        &self.y[i]
    }

    pub fn num_points(&self, i: usize) -> usize {
        self.x[i].len()
    }

    pub fn max_points(&self) -> usize {
        self.x.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn total_points(&self) -> usize {
        self.x.iter().map(Vec::len).sum()
    }

    /// Smallest and largest evaluation point over all curves.
    pub fn domain(&self) -> (f64, f64) {
        let lo = self.x.iter().map(|x| x[0]).fold(f64::INFINITY, f64::min);
        let hi = self.x.iter().map(|x| x[x.len() - 1]).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// Sorted union of evaluation points.
    pub fn grid(&self) -> Vec<f64> {
        let mut g: Vec<f64> = self.x.iter().flatten().copied().collect();
        g.sort_by(f64::total_cmp);
        g.dedup();
        g
    }

    /// Subtract `shifts[i]` from every evaluation point of curve `i`.
    pub fn shifted(&self, shifts: &[f64]) -> Result<Self> {
        if shifts.len() != self.num_curves() {
            return Err(Error::Dimension {
                expected: self.num_curves(),
                got: shifts.len(),
            });
        }
        let x = self
            .x
            .iter()
            .zip(shifts)
            .map(|(x, s)| x.iter().map(|v| v - s).collect())
            .collect();
        Ok(Self { x, y: self.y.clone() })
    }
}

/// Prior hyperparameters: φ ~ N(m0, s0²), τ² ~ IG(a_τ, b_τ), σ² ~ IG(a_σ, b_σ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionalHyper {
    pub m0: f64,
    pub s0_sq: f64,
    pub a_tau: f64,
    pub b_tau: f64,
    pub a_sigma: f64,
    pub b_sigma: f64,
}

impl Default for FunctionalHyper {
    fn default() -> Self {
        Self {
            m0: 0.0,
            s0_sq: 1.0,
            a_tau: 1.0,
            b_tau: 1.0,
            a_sigma: 1.0,
            b_sigma: 1.0,
        }
    }
}

impl FunctionalHyper {
    pub fn validate(&self) -> Result<()> {
        let pos = [self.s0_sq, self.a_tau, self.b_tau, self.a_sigma, self.b_sigma];
        if !self.m0.is_finite() || !pos.iter().all(|v| *v > 0.0 && v.is_finite()) {
            return Err(Error::Parameter(format!("invalid functional hyperparameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalState {
    /// θ*_{kj}, ragged by index.
    pub theta_star: Vec<Vec<f64>>,
    pub sigma2: f64,
    pub tau2: f64,
    pub phi: f64,
}

impl FunctionalState {
    /// Coefficient vector θ_i of unit `i`.
    pub fn coefficients(&self, i: usize, clusters: &ClusterMatrix) -> Vec<f64> {
        (0..self.theta_star.len())
            .map(|k| self.theta_star[k][clusters.label(i, k)])
            .collect()
    }
}

#[derive(Debug, Clone, Default)]
struct MoveScratch {
    marks: Vec<bool>,
}

/// Partition-dependent bookkeeping for the θ* block at one index.
#[derive(Debug, Clone, Default)]
struct Links {
    /// back[j]: clusters at k − 1 feeding cluster j at k (sorted).
    back: Vec<Vec<usize>>,
    /// members[j]: units in cluster j at k, ascending.
    members: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct FunctionalModel {
    data: FunctionalDataset,
    basis: BasisSpec,
    designs: Vec<DesignMatrix>,
    hyper: FunctionalHyper,
    state: FunctionalState,
    scratch: MoveScratch,
    sigma_shape_offset: f64,
    ridge_fallbacks: usize,
}

impl FunctionalModel {
    /// Builds design matrices; state starts at θ* = 0 with one cluster per
    /// index and unit variances until initialized.
    pub fn new(data: FunctionalDataset, basis: BasisSpec, hyper: FunctionalHyper) -> Result<Self> {
        hyper.validate()?;
        let designs = (0..data.num_curves())
            .map(|i| basis.design_matrix(data.x(i)))
            .collect::<Result<Vec<_>>>()?;
        let state = FunctionalState {
            theta_star: vec![vec![0.0]; basis.num_basis()],
            sigma2: 1.0,
            tau2: 1.0,
            phi: 1.0,
        };
        Ok(Self {
            data,
            basis,
            designs,
            hyper,
            state,
            scratch: MoveScratch::default(),
            sigma_shape_offset: 0.0,
            ridge_fallbacks: 0,
        })
    }

    pub fn data(&self) -> &FunctionalDataset {
        &self.data
    }

    pub fn basis(&self) -> &BasisSpec {
        &self.basis
    }

    pub fn hyper(&self) -> &FunctionalHyper {
        &self.hyper
    }

    pub fn current(&self) -> &FunctionalState {
        &self.state
    }

    pub fn set_state(&mut self, state: FunctionalState, clusters: &ClusterMatrix) -> Result<()> {
        let ok = state.theta_star.len() == clusters.num_indices()
            && state
                .theta_star
                .iter()
                .enumerate()
                .all(|(k, t)| t.len() == clusters.num_clusters(k))
            && state.sigma2 > 0.0
            && state.tau2 > 0.0;
        if !ok {
            return Err(Error::Contract("state does not match the cluster matrix".into()));
        }
        self.state = state;
        Ok(())
    }

    /// Number of per-curve least-squares fits that needed a ridge fallback.
    pub fn ridge_fallbacks(&self) -> usize {
        self.ridge_fallbacks
    }

    /// Deliberately biases the σ² shape; exists only to check that the
    /// joint-distribution test catches a broken conditional.
    #[doc(hidden)]
    pub fn set_sigma_shape_offset(&mut self, offset: f64) {
        self.sigma_shape_offset = offset;
    }

    /// Starting state for a single-cluster-per-index partition: θ*_{k1} is
    /// the mean of per-curve least-squares coefficients, the remaining
    /// parameters are prior draws.
    pub fn initialize<R: Rng + ?Sized>(&mut self, clusters: &ClusterMatrix, rng: &mut R) {
        let kk = self.basis.num_basis();
        let mut mean = vec![0.0; kk];
        for i in 0..self.data.num_curves() {
            let (coef, ridge) = least_squares(&self.designs[i], self.data.y(i));
            self.ridge_fallbacks += usize::from(ridge);
            for (m, c) in mean.iter_mut().zip(coef) {
                *m += c / self.data.num_curves() as f64;
            }
        }
        self.state.theta_star = (0..kk)
            .map(|k| vec![mean[k]; clusters.num_clusters(k)])
            .collect();
        let h = self.hyper;
        self.state.sigma2 = inv_gamma(h.a_sigma, h.b_sigma, rng);
        self.state.tau2 = inv_gamma(h.a_tau, h.b_tau, rng);
        self.state.phi = normal(h.m0, h.s0_sq, rng);
    }

    /// Fitted values of curve `i` at its evaluation points.
    pub fn fitted(&self, i: usize, clusters: &ClusterMatrix) -> Vec<f64> {
        self.designs[i].apply(&self.state.coefficients(i, clusters))
    }

    /// Log-likelihood of curve `i` with c_ik set to `j`. `j` equal to the
    /// current cluster count means a new cluster with coefficient `aux`.
    pub fn loglik_curve_at_label(
        &self,
        i: usize,
        k: usize,
        j: usize,
        aux: Option<f64>,
        clusters: &ClusterMatrix,
    ) -> Result<f64> {
        let jk = clusters.num_clusters(k);
        let theta_j = match j.cmp(&jk) {
            std::cmp::Ordering::Less => self.state.theta_star[k][j],
            std::cmp::Ordering::Equal => aux.ok_or_else(|| {
                Error::Contract("a new cluster needs an auxiliary coefficient".into())
            })?,
            std::cmp::Ordering::Greater => return Err(Error::Bounds { index: j, len: jk + 1 }),
        };
        let d = &self.designs[i];
        let y = self.data.y(i);
        let s2 = self.state.sigma2;
        let mut total = 0.0;
        for m in 0..d.num_rows() {
            let (first, vals) = d.row(m);
            let mut pred = 0.0;
            for (o, &b) in vals.iter().enumerate() {
                let kp = first + o;
                let t = if kp == k {
                    theta_j
                } else {
                    self.state.theta_star[kp][clusters.label(i, kp)]
                };
                pred += b * t;
            }
            total += log_normal_pdf(y[m], pred, s2);
        }
        Ok(total)
    }

    fn links(&self, clusters: &ClusterMatrix) -> Vec<Links> {
        let kk = clusters.num_indices();
        let mut out = Vec::with_capacity(kk);
        for k in 0..kk {
            let jk = clusters.num_clusters(k);
            let mut members = vec![Vec::new(); jk];
            for (i, &l) in clusters.column(k).iter().enumerate() {
                members[l].push(i);
            }
            let back = if k == 0 {
                vec![Vec::new(); jk]
            } else {
                let prev = clusters.column(k - 1);
                members
                    .iter()
                    .map(|m| {
                        let mut b: Vec<usize> = m.iter().map(|&u| prev[u]).collect();
                        b.sort_unstable();
                        b.dedup();
                        b
                    })
                    .collect()
            };
            out.push(Links { back, members });
        }
        out
    }

    fn back_mean(&self, k: usize, back: &[usize]) -> f64 {
        back.iter().map(|&l| self.state.theta_star[k - 1][l]).sum::<f64>() / back.len() as f64
    }

    fn theta_conditional_with(
        &self,
        k: usize,
        j: usize,
        links: &[Links],
        clusters: &ClusterMatrix,
    ) -> Conditional {
        let st = &self.state;
        let (tau_inv, sig_inv, phi) = (1.0 / st.tau2, 1.0 / st.sigma2, st.phi);
        let mut prec = tau_inv;
        let mut lin = if k == 0 {
            0.0
        } else {
            tau_inv * phi * self.back_mean(k, &links[k].back[j])
        };
        if k + 1 < links.len() {
            for (jp, back) in links[k + 1].back.iter().enumerate() {
                if back.binary_search(&j).is_err() {
                    continue;
                }
                let c = back.len() as f64;
                let others: f64 = back
                    .iter()
                    .filter(|&&l| l != j)
                    .map(|&l| st.theta_star[k][l])
                    .sum();
                let eps = st.theta_star[k + 1][jp] - phi * others / c;
                prec += tau_inv * phi * phi / (c * c);
                lin += tau_inv * phi * eps / c;
            }
        }
        for &i in &links[k].members[j] {
            let d = &self.designs[i];
            let y = self.data.y(i);
            for m in d.rows_touching(k) {
                let (first, vals) = d.row(m);
                let mut r = y[m];
                let mut bk = 0.0;
                for (o, &b) in vals.iter().enumerate() {
                    let kp = first + o;
                    if kp == k {
                        bk = b;
                    } else {
                        r -= b * st.theta_star[kp][clusters.label(i, kp)];
                    }
                }
                prec += sig_inv * bk * bk;
                lin += sig_inv * bk * r;
            }
        }
        Conditional::Normal {
            mean: lin / prec,
            var: 1.0 / prec,
        }
    }

    /// Full conditional of θ*_{kj}.
    pub fn theta_star_conditional(&self, k: usize, j: usize, clusters: &ClusterMatrix) -> Result<Conditional> {
        self.check(clusters)?;
        if k >= clusters.num_indices() || j >= clusters.num_clusters(k) {
            return Err(Error::Contract(format!("no cluster {j} at index {k}")));
        }
        Ok(self.theta_conditional_with(k, j, &self.links(clusters), clusters))
    }

    pub fn update_theta_star<R: Rng + ?Sized>(
        &mut self,
        k: usize,
        j: usize,
        clusters: &ClusterMatrix,
        rng: &mut R,
    ) -> Result<f64> {
        let v = self.theta_star_conditional(k, j, clusters)?.sample(rng);
        self.state.theta_star[k][j] = v;
        Ok(v)
    }

    fn squared_residuals(&self, clusters: &ClusterMatrix) -> f64 {
        (0..self.data.num_curves())
            .map(|i| {
                self.fitted(i, clusters)
                    .iter()
                    .zip(self.data.y(i))
                    .map(|(p, y)| (y - p).powi(2))
                    .sum::<f64>()
            })
            .sum()
    }

    pub fn sigma2_conditional(&self, clusters: &ClusterMatrix) -> Result<Conditional> {
        self.check(clusters)?;
        Ok(Conditional::InvGamma {
            shape: self.hyper.a_sigma + 0.5 * self.data.total_points() as f64 + self.sigma_shape_offset,
            rate: self.hyper.b_sigma + 0.5 * self.squared_residuals(clusters),
        })
    }

    pub fn update_sigma2<R: Rng + ?Sized>(&mut self, clusters: &ClusterMatrix, rng: &mut R) -> Result<f64> {
        let v = self.sigma2_conditional(clusters)?.sample(rng);
        self.state.sigma2 = v;
        Ok(v)
    }

    fn tau2_conditional_with(&self, links: &[Links]) -> Conditional {
        let st = &self.state;
        let count: usize = st.theta_star.iter().map(Vec::len).sum();
        let mut ss: f64 = st.theta_star[0].iter().map(|t| t * t).sum();
        for k in 1..st.theta_star.len() {
            for (j, t) in st.theta_star[k].iter().enumerate() {
                ss += (t - st.phi * self.back_mean(k, &links[k].back[j])).powi(2);
            }
        }
        Conditional::InvGamma {
            shape: self.hyper.a_tau + 0.5 * count as f64,
            rate: self.hyper.b_tau + 0.5 * ss,
        }
    }

    pub fn tau2_conditional(&self, clusters: &ClusterMatrix) -> Result<Conditional> {
        self.check(clusters)?;
        Ok(self.tau2_conditional_with(&self.links(clusters)))
    }

    pub fn update_tau2<R: Rng + ?Sized>(&mut self, clusters: &ClusterMatrix, rng: &mut R) -> Result<f64> {
        let v = self.tau2_conditional(clusters)?.sample(rng);
        self.state.tau2 = v;
        Ok(v)
    }

    fn phi_conditional_with(&self, links: &[Links]) -> Conditional {
        let st = &self.state;
        let h = &self.hyper;
        let mut prec = 1.0 / h.s0_sq;
        let mut lin = h.m0 / h.s0_sq;
        for k in 1..st.theta_star.len() {
            for (j, t) in st.theta_star[k].iter().enumerate() {
                let b = self.back_mean(k, &links[k].back[j]);
                prec += b * b / st.tau2;
                lin += t * b / st.tau2;
            }
        }
        Conditional::Normal {
            mean: lin / prec,
            var: 1.0 / prec,
        }
    }

    pub fn phi_conditional(&self, clusters: &ClusterMatrix) -> Result<Conditional> {
        self.check(clusters)?;
        Ok(self.phi_conditional_with(&self.links(clusters)))
    }

    pub fn update_phi<R: Rng + ?Sized>(&mut self, clusters: &ClusterMatrix, rng: &mut R) -> Result<f64> {
        let v = self.phi_conditional(clusters)?.sample(rng);
        self.state.phi = v;
        Ok(v)
    }

    /// Log density of everything the continuous parameters touch: data
    /// likelihood, θ* prior given the partitions, and the σ², τ², φ priors.
    pub fn log_joint(&self, clusters: &ClusterMatrix) -> f64 {
        let st = &self.state;
        let h = &self.hyper;
        let links = self.links(clusters);
        let mut lp = self.log_likelihood(clusters);
        for (k, row) in st.theta_star.iter().enumerate() {
            for (j, &t) in row.iter().enumerate() {
                let m = if k == 0 {
                    0.0
                } else {
                    st.phi * self.back_mean(k, &links[k].back[j])
                };
                lp += log_normal_pdf(t, m, st.tau2);
            }
        }
        lp + log_inv_gamma_pdf(st.sigma2, h.a_sigma, h.b_sigma)
            + log_inv_gamma_pdf(st.tau2, h.a_tau, h.b_tau)
            + log_normal_pdf(st.phi, h.m0, h.s0_sq)
    }

    fn check(&self, clusters: &ClusterMatrix) -> Result<()> {
        if clusters.num_units() != self.data.num_curves() || !self.is_consistent(clusters) {
            return Err(Error::Contract("cluster matrix does not match the model state".into()));
        }
        Ok(())
    }
}

/// Least-squares coefficients, falling back to a small ridge when BᵀB is
/// (numerically) singular. The flag reports the fallback.
pub(crate) fn least_squares(design: &DesignMatrix, y: &[f64]) -> (Vec<f64>, bool) {
    let kk = design.num_basis();
    let mut gram = DMatrix::<f64>::zeros(kk, kk);
    let mut rhs = DVector::<f64>::zeros(kk);
    for (m, &ym) in y.iter().enumerate() {
        let (first, vals) = design.row(m);
        for (a, &ba) in vals.iter().enumerate() {
            rhs[first + a] += ba * ym;
            for (b, &bb) in vals.iter().enumerate() {
                gram[(first + a, first + b)] += ba * bb;
            }
        }
    }
    let eig = gram.clone().symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max().max(1e-300));
    let ridge = lo <= 1e-10 * hi;
    if ridge {
        let lambda = 1e-6 * hi.max(1.0);
        for d in 0..kk {
            gram[(d, d)] += lambda;
        }
    }
    let sol = gram
        .cholesky()
        .map(|c| c.solve(&rhs))
        .unwrap_or_else(|| DVector::zeros(kk));
    (sol.iter().copied().collect(), ridge)
}

impl ClusterModel for FunctionalModel {
    type Aux = f64;
    type State = FunctionalState;

    fn num_units(&self) -> usize {
        self.data.num_curves()
    }

    fn num_indices(&self) -> usize {
        self.basis.num_basis()
    }

    fn on_detach(&mut self, k: usize, detached: Detached) -> Option<f64> {
        match detached {
            Detached::Removed { slot } => Some(self.state.theta_star[k].swap_remove(slot)),
            Detached::Kept { .. } => None,
        }
    }

    fn draw_aux<R: Rng + ?Sized>(&mut self, i: usize, k: usize, clusters: &ClusterMatrix, rng: &mut R) -> f64 {
        let mean = if k == 0 {
            0.0
        } else {
            self.state.phi * self.state.theta_star[k - 1][clusters.label(i, k - 1)]
        };
        normal(mean, self.state.tau2, rng)
    }

    fn log_weights(&mut self, i: usize, k: usize, clusters: &ClusterMatrix, aux: &f64, out: &mut [f64]) {
        let st = &self.state;
        let jk = clusters.num_clusters(k);
        debug_assert_eq!(out.len(), jk + 1);
        let theta_at = |j: usize| if j < jk { st.theta_star[k][j] } else { *aux };

        // Likelihood of curve i, through the points basis k touches.
        let d = &self.designs[i];
        let y = self.data.y(i);
        let (mut s_rb, mut s_bb) = (0.0, 0.0);
        for m in d.rows_touching(k) {
            let (first, vals) = d.row(m);
            let mut r = y[m];
            let mut bk = 0.0;
            for (o, &b) in vals.iter().enumerate() {
                let kp = first + o;
                if kp == k {
                    bk = b;
                } else {
                    r -= b * st.theta_star[kp][clusters.label(i, kp)];
                }
            }
            s_rb += r * bk;
            s_bb += bk * bk;
        }
        let half_prec = 0.5 / st.sigma2;
        for (j, w) in out.iter_mut().enumerate() {
            let t = theta_at(j);
            *w += -half_prec * (t * t * s_bb - 2.0 * t * s_rb);
        }

        // θ*_{kj} prior: joining j may add c_{i,k−1} to j's back-set. For a
        // new cluster this factor cancels against the auxiliary proposal.
        if k > 0 {
            let prev = clusters.column(k - 1);
            let here = clusters.column(k);
            let jp = clusters.num_clusters(k - 1);
            let li = prev[i];
            let marks = &mut self.scratch.marks;
            marks.clear();
            marks.resize(jk * jp, false);
            for (u, (&h, &p)) in here.iter().zip(prev).enumerate() {
                if u != i {
                    marks[h * jp + p] = true;
                }
            }
            for (j, w) in out.iter_mut().enumerate().take(jk) {
                let row = &marks[j * jp..(j + 1) * jp];
                if row[li] {
                    continue;
                }
                let (mut s, mut c) = (0.0, 0.0);
                for (l, _) in row.iter().enumerate().filter(|(_, &b)| b) {
                    s += st.theta_star[k - 1][l];
                    c += 1.0;
                }
                let t = st.theta_star[k][j];
                let without = log_normal_pdf(t, st.phi * s / c, st.tau2);
                let with = log_normal_pdf(t, st.phi * (s + st.theta_star[k - 1][li]) / (c + 1.0), st.tau2);
                *w += with - without;
            }
        }

        // θ*_{k+1} prior of i's cluster there: its back-set includes i's label at k.
        if k + 1 < clusters.num_indices() {
            let here = clusters.column(k);
            let next = clusters.column(k + 1);
            let target = next[i];
            let marks = &mut self.scratch.marks;
            marks.clear();
            marks.resize(jk, false);
            for (u, (&h, &nx)) in here.iter().zip(next).enumerate() {
                if u != i && nx == target {
                    marks[h] = true;
                }
            }
            let (mut s, mut c) = (0.0, 0.0);
            for (l, _) in marks.iter().enumerate().filter(|(_, &b)| b) {
                s += st.theta_star[k][l];
                c += 1.0;
            }
            let t_next = st.theta_star[k + 1][target];
            for (j, w) in out.iter_mut().enumerate() {
                let (sj, cj) = if j < jk && marks[j] {
                    (s, c)
                } else {
                    (s + theta_at(j), c + 1.0)
                };
                *w += log_normal_pdf(t_next, st.phi * sj / cj, st.tau2);
            }
        }
    }

    fn on_attach(&mut self, k: usize, j: usize, aux: f64) {
        if j == self.state.theta_star[k].len() {
            self.state.theta_star[k].push(aux);
        }
    }

    fn on_relabel(&mut self, k: usize, order: &[usize]) {
        permute(&mut self.state.theta_star[k], order);
    }

    fn update_params<R: Rng + ?Sized>(&mut self, clusters: &ClusterMatrix, rng: &mut R) {
        let links = self.links(clusters);
        for k in 0..clusters.num_indices() {
            for j in 0..clusters.num_clusters(k) {
                let v = self.theta_conditional_with(k, j, &links, clusters).sample(rng);
                self.state.theta_star[k][j] = v;
            }
        }
        self.state.sigma2 = self
            .sigma2_conditional(clusters)
            .expect("consistent state")
            .sample(rng);
        self.state.tau2 = self.tau2_conditional_with(&links).sample(rng);
        self.state.phi = self.phi_conditional_with(&links).sample(rng);
    }

    fn is_consistent(&self, clusters: &ClusterMatrix) -> bool {
        self.state.theta_star.len() == clusters.num_indices()
            && self
                .state
                .theta_star
                .iter()
                .enumerate()
                .all(|(k, t)| t.len() == clusters.num_clusters(k))
    }

    fn state(&self) -> FunctionalState {
        self.state.clone()
    }

    fn log_likelihood(&self, clusters: &ClusterMatrix) -> f64 {
        let s2 = self.state.sigma2;
        (0..self.data.num_curves())
            .map(|i| {
                self.fitted(i, clusters)
                    .iter()
                    .zip(self.data.y(i))
                    .map(|(p, y)| log_normal_pdf(*y, *p, s2))
                    .sum::<f64>()
            })
            .sum()
    }
}

impl GenerativeModel for FunctionalModel {
    fn draw_prior<R: Rng + ?Sized>(&mut self, clusters: &ClusterMatrix, rng: &mut R) {
        let h = self.hyper;
        self.state.phi = normal(h.m0, h.s0_sq, rng);
        self.state.tau2 = inv_gamma(h.a_tau, h.b_tau, rng);
        self.state.sigma2 = inv_gamma(h.a_sigma, h.b_sigma, rng);
        let links = self.links(clusters);
        let mut theta: Vec<Vec<f64>> = Vec::with_capacity(clusters.num_indices());
        for k in 0..clusters.num_indices() {
            let row = (0..clusters.num_clusters(k))
                .map(|j| {
                    let m = if k == 0 {
                        0.0
                    } else {
                        let b = &links[k].back[j];
                        self.state.phi * b.iter().map(|&l| theta[k - 1][l]).sum::<f64>() / b.len() as f64
                    };
                    normal(m, self.state.tau2, rng)
                })
                .collect();
            theta.push(row);
        }
        self.state.theta_star = theta;
    }

    fn resimulate<R: Rng + ?Sized>(&mut self, clusters: &ClusterMatrix, rng: &mut R) {
        for i in 0..self.data.num_curves() {
            let f = self.fitted(i, clusters);
            self.data.y[i] = f.iter().map(|&m| normal(m, self.state.sigma2, rng)).collect();
        }
    }

    fn statistics(&self, _clusters: &ClusterMatrix, out: &mut Vec<(&'static str, f64)>) {
        let st = &self.state;
        let all: Vec<f64> = st.theta_star.iter().flatten().copied().collect();
        let ys: Vec<f64> = self.data.y.iter().flatten().copied().collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64;
        out.push(("sigma2", st.sigma2));
        out.push(("tau2", st.tau2));
        out.push(("phi", st.phi));
        out.push(("phi_sq", st.phi * st.phi));
        out.push(("theta_mean", mean(&all)));
        out.push(("theta_sq_mean", sq(&all)));
        out.push(("theta_first", mean(&st.theta_star[0])));
        out.push(("y_mean", mean(&ys)));
        out.push(("y_sq_mean", sq(&ys)));
    }
}

#[cfg(test)]
mod tests;
