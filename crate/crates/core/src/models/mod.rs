//! Observation models layered on the partition prior: the functional
//! B-spline model, the time-series model, and a likelihood-free model that
//! leaves the sampler targeting the prior alone.

pub mod functional;
pub mod timeseries;

pub use functional::{FunctionalDataset, FunctionalHyper, FunctionalModel, FunctionalState};
pub use timeseries::{TimeSeriesDataset, TimeSeriesHyper, TimeSeriesModel, TimeSeriesState};

use crate::partition::{ClusterMatrix, Detached};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

/// A closed-form full conditional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Conditional {
    Normal { mean: f64, var: f64 },
    /// Inverse gamma with shape and rate.
    InvGamma { shape: f64, rate: f64 },
}

impl Conditional {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Conditional::Normal { mean, var } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + var.sqrt() * z
            }
            Conditional::InvGamma { shape, rate } => inv_gamma(shape, rate, rng),
        }
    }

    /// Unnormalized log density.
    pub fn log_kernel(&self, x: f64) -> f64 {
        match *self {
            Conditional::Normal { mean, var } => -0.5 * (x - mean).powi(2) / var,
            Conditional::InvGamma { shape, rate } => -(shape + 1.0) * x.ln() - rate / x,
        }
    }

    /// Mode of the density.
    pub fn mode(&self) -> f64 {
        match *self {
            Conditional::Normal { mean, .. } => mean,
            Conditional::InvGamma { shape, rate } => rate / (shape + 1.0),
        }
    }
}

pub(crate) fn inv_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    let g: f64 = Gamma::new(shape, 1.0 / rate)
        .expect("inverse gamma parameters are positive")
        .sample(rng);
    1.0 / g
}

pub(crate) fn normal<R: Rng + ?Sized>(mean: f64, var: f64, rng: &mut R) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    mean + var.sqrt() * z
}

pub(crate) fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (x - mean).powi(2) / var)
}

pub(crate) fn log_inv_gamma_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - libm::lgamma(shape) - (shape + 1.0) * x.ln() - rate / x
}

/// Per-cluster parameters plus the likelihood the c-move needs.
///
/// The sampler drives reallocations through a fixed protocol: the unit is
/// detached from the column (`on_detach` mirrors a vanished cluster with a
/// swap-remove and hands its parameters back for reuse as the auxiliary
/// draw), candidates are scored with `log_weights`, the chosen cluster is
/// attached (`on_attach` keeps the auxiliary parameters if a new cluster is
/// opened), and a relabeling is mirrored through `on_relabel`.
pub trait ClusterModel {
    /// Parameters of one cluster at one index.
    type Aux: Clone;
    /// Snapshot stored per retained iteration.
    type State: Clone + std::fmt::Debug;

    fn num_units(&self) -> usize;
    fn num_indices(&self) -> usize;

    fn on_detach(&mut self, k: usize, detached: Detached) -> Option<Self::Aux>;

    /// Auxiliary parameters for a prospective new cluster of unit `i` at `k`.
    fn draw_aux<R: Rng + ?Sized>(
        &mut self,
        i: usize,
        k: usize,
        clusters: &ClusterMatrix,
        rng: &mut R,
    ) -> Self::Aux;

    /// Adds model log-weights (likelihood and any partition-dependent prior
    /// terms) for each existing cluster of column `k` and, last, the new one.
    /// Unit `i` is detached from column `k`.
    fn log_weights(&mut self, i: usize, k: usize, clusters: &ClusterMatrix, aux: &Self::Aux, out: &mut [f64]);

    fn on_attach(&mut self, k: usize, j: usize, aux: Self::Aux);

    /// Column `k` was relabeled with `order[new] = old`.
    fn on_relabel(&mut self, k: usize, order: &[usize]);

    /// Gibbs updates of all continuous parameters given the partitions.
    fn update_params<R: Rng + ?Sized>(&mut self, clusters: &ClusterMatrix, rng: &mut R);

    /// Parameter lengths match the cluster counts.
    fn is_consistent(&self, clusters: &ClusterMatrix) -> bool;

    fn state(&self) -> Self::State;

    /// Total data log-likelihood under the current state.
    fn log_likelihood(&self, clusters: &ClusterMatrix) -> f64;
}

/// Model-side hooks for joint-distribution testing: draw parameters from the
/// prior given partitions, resimulate data, and report summary statistics.
pub trait GenerativeModel: ClusterModel {
    fn draw_prior<R: Rng + ?Sized>(&mut self, clusters: &ClusterMatrix, rng: &mut R);
    fn resimulate<R: Rng + ?Sized>(&mut self, clusters: &ClusterMatrix, rng: &mut R);
    fn statistics(&self, clusters: &ClusterMatrix, out: &mut Vec<(&'static str, f64)>);
}

/// No observations: the sampler then targets the partition prior itself.
#[derive(Debug, Clone)]
pub struct PriorOnly {
    n: usize,
    num_indices: usize,
}

impl PriorOnly {
    pub fn new(n: usize, num_indices: usize) -> Self {
        Self { n, num_indices }
    }
}

impl ClusterModel for PriorOnly {
    type Aux = ();
    type State = ();

    fn num_units(&self) -> usize {
        self.n
    }

    fn num_indices(&self) -> usize {
        self.num_indices
    }

    fn on_detach(&mut self, _k: usize, detached: Detached) -> Option<()> {
        matches!(detached, Detached::Removed { .. }).then_some(())
    }

    fn draw_aux<R: Rng + ?Sized>(&mut self, _: usize, _: usize, _: &ClusterMatrix, _: &mut R) {}

    fn log_weights(&mut self, _: usize, _: usize, _: &ClusterMatrix, _: &(), _: &mut [f64]) {}

    fn on_attach(&mut self, _: usize, _: usize, _: ()) {}

    fn on_relabel(&mut self, _: usize, _: &[usize]) {}

    fn update_params<R: Rng + ?Sized>(&mut self, _: &ClusterMatrix, _: &mut R) {}

    fn is_consistent(&self, clusters: &ClusterMatrix) -> bool {
        clusters.num_units() == self.n && clusters.num_indices() == self.num_indices
    }

    fn state(&self) {}

    fn log_likelihood(&self, _: &ClusterMatrix) -> f64 {
        0.0
    }
}

impl GenerativeModel for PriorOnly {
    fn draw_prior<R: Rng + ?Sized>(&mut self, _: &ClusterMatrix, _: &mut R) {}
    fn resimulate<R: Rng + ?Sized>(&mut self, _: &ClusterMatrix, _: &mut R) {}
    fn statistics(&self, _: &ClusterMatrix, _: &mut Vec<(&'static str, f64)>) {}
}

/// Mirror a column relabeling onto a ragged per-cluster vector.
pub(crate) fn permute<T: Clone>(v: &mut Vec<T>, order: &[usize]) {
    *v = order.iter().map(|&o| v[o].clone()).collect();
}
