//! Gibbs sampler over (ρ_1..ρ_K, γ, α, model parameters).
//!
//! One sweep is a systematic scan: every γ_ik with k ≥ 1, then every c_ik
//! with i ∉ R_k (auxiliary-parameter reallocation with a single auxiliary
//! draw), then α (and the Pólya-Gamma latents), then the model block.

mod enumerate;
mod geweke;

pub use enumerate::{enumerate_joint, JointTable};
pub use geweke::{geweke_test, GewekeReport, GewekeStat};

use crate::bspline::BasisSpec;
use crate::error::{Error, Result};
use crate::models::{
    ClusterModel, FunctionalDataset, FunctionalHyper, FunctionalModel, FunctionalState,
    TimeSeriesDataset, TimeSeriesHyper, TimeSeriesModel, TimeSeriesState,
};
use crate::partition::ClusterMatrix;
use crate::prior::{
    gamma_conditional_with, is_compatible_state, prior_weights_detached, refresh_omega,
    sample_alpha_prior, update_alpha_beta, update_alpha_logistic, AlphaPrior, AlphaState,
    GammaMatrix, SmrpmConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// How often invariants are re-checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssertLevel {
    Off,
    /// Every 100th sweep.
    Sampled,
    Full,
}

impl AssertLevel {
    pub const ENV: &'static str = "SMRPM_ASSERT_LEVEL";

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "off" => Ok(Self::Off),
            "sampled" => Ok(Self::Sampled),
            "full" => Ok(Self::Full),
            other => Err(Error::Parameter(format!(
                "{}: expected off, sampled or full, got {other:?}",
                Self::ENV
            ))),
        }
    }

    /// From the environment; full in debug builds and sampled otherwise when unset.
    pub fn from_env() -> Result<Self> {
        match std::env::var(Self::ENV) {
            Ok(v) => Self::parse(&v),
            Err(_) if cfg!(debug_assertions) => Ok(Self::Full),
            Err(_) => Ok(Self::Sampled),
        }
    }

    fn due(self, sweep: u64) -> bool {
        match self {
            Self::Off => false,
            Self::Sampled => sweep.is_multiple_of(100),
            Self::Full => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Functional {
        basis: BasisSpec,
        hyper: FunctionalHyper,
    },
    TimeSeries {
        hyper: TimeSeriesHyper,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Data {
    Functional(FunctionalDataset),
    TimeSeries(TimeSeriesDataset),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelState {
    Functional(FunctionalState),
    TimeSeries(TimeSeriesState),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub total_iters: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub model: ModelSpec,
    pub smrpm: SmrpmConfig,
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.total_iters == 0 || self.thin == 0 {
            return Err(Error::Parameter("total_iters and thin must be positive".into()));
        }
        if self.burn_in >= self.total_iters {
            return Err(Error::Parameter(format!(
                "burn_in {} must be below total_iters {}",
                self.burn_in, self.total_iters
            )));
        }
        self.smrpm.validate()?;
        match &self.model {
            ModelSpec::Functional { hyper, .. } => hyper.validate(),
            ModelSpec::TimeSeries { hyper } => hyper.validate(),
        }
    }

    /// ⌊(total − burn-in) / thin⌋.
    pub fn num_samples(&self) -> usize {
        self.total_iters.saturating_sub(self.burn_in) / self.thin.max(1)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub sweeps: u64,
    /// Reallocations that opened a new cluster.
    pub new_clusters: u64,
    pub gamma_flips: u64,
    pub invariant_checks: u64,
    pub ridge_fallbacks: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput<S> {
    pub clusters: Vec<ClusterMatrix>,
    pub gammas: Vec<GammaMatrix>,
    pub alphas: Vec<AlphaState>,
    pub states: Vec<S>,
    /// Log-likelihood after every sweep, burn-in included.
    pub loglik: Vec<f64>,
    pub counters: Counters,
}

/// The full sampler state for one chain.
#[derive(Debug, Clone)]
pub struct Chain<M> {
    pub model: M,
    clusters: ClusterMatrix,
    gamma: GammaMatrix,
    alpha: AlphaState,
    cfg: SmrpmConfig,
    // fixed[i + n k]: number of γ_iq = 1 in the window k − d_ρ + 1 ..= k.
    fixed: Vec<u32>,
    assert_level: AssertLevel,
    counters: Counters,
    weights: Vec<f64>,
    blocked: Vec<bool>,
}

impl<M: ClusterModel> Chain<M> {
    pub fn new(
        model: M,
        clusters: ClusterMatrix,
        gamma: GammaMatrix,
        alpha: AlphaState,
        cfg: SmrpmConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let (n, kk) = (model.num_units(), model.num_indices());
        let dims = [
            (clusters.num_units(), n),
            (clusters.num_indices(), kk),
            (gamma.num_units(), n),
            (gamma.num_indices(), kk),
        ];
        for (got, expected) in dims {
            if got != expected {
                return Err(Error::Dimension { expected, got });
            }
        }
        if !is_compatible_state(&clusters, &gamma, cfg.d_rho) || !model.is_consistent(&clusters) {
            return Err(Error::Contract("initial state violates an invariant".into()));
        }
        let mut chain = Self {
            model,
            clusters,
            gamma,
            alpha,
            cfg,
            fixed: Vec::new(),
            assert_level: AssertLevel::Full,
            counters: Counters::default(),
            weights: Vec::new(),
            blocked: Vec::new(),
        };
        chain.fixed = chain.recount();
        Ok(chain)
    }

    pub fn with_assert_level(mut self, level: AssertLevel) -> Self {
        self.assert_level = level;
        self
    }

    pub fn clusters(&self) -> &ClusterMatrix {
        &self.clusters
    }

    pub fn gamma(&self) -> &GammaMatrix {
        &self.gamma
    }

    pub fn alpha(&self) -> &AlphaState {
        &self.alpha
    }

    pub fn config(&self) -> &SmrpmConfig {
        &self.cfg
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    /// Replace the partition/γ/α state, e.g. with a fresh prior draw.
    pub fn reset(&mut self, clusters: ClusterMatrix, gamma: GammaMatrix, alpha: AlphaState) {
        self.clusters = clusters;
        self.gamma = gamma;
        self.alpha = alpha;
        self.fixed = self.recount();
    }

    fn recount(&self) -> Vec<u32> {
        let (n, kk) = (self.gamma.num_units(), self.gamma.num_indices());
        let mut out = vec![0; n * kk];
        for k in 0..kk {
            for i in 0..n {
                let lo = k.saturating_sub(self.cfg.d_rho - 1);
                out[i + n * k] = (lo..=k).filter(|&q| self.gamma.get(i, q)).count() as u32;
            }
        }
        out
    }

    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.gamma_block(rng);
        self.cluster_block(rng);
        self.alpha_block(rng);
        self.model.update_params(&self.clusters, rng);
        self.counters.sweeps += 1;
        if self.assert_level.due(self.counters.sweeps) {
            self.check_invariants();
        }
    }

    pub fn gamma_block<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let (n, kk) = (self.gamma.num_units(), self.gamma.num_indices());
        for k in 1..kk {
            for i in 0..n {
                let fixed = &self.fixed;
                let p = gamma_conditional_with(i, k, &self.gamma, &self.clusters, &self.alpha, &self.cfg, |u, q| {
                    fixed[u + n * q] > 0
                });
                let value = rng.random::<f64>() < p;
                if value == self.gamma.get(i, k) {
                    continue;
                }
                self.gamma.put(i, k, value);
                self.counters.gamma_flips += 1;
                for q in k..(k + self.cfg.d_rho).min(kk) {
                    let c = &mut self.fixed[i + n * q];
                    if value {
                        *c += 1;
                    } else {
                        *c -= 1;
                    }
                }
            }
        }
    }

    pub fn cluster_block<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let (n, kk) = (self.clusters.num_units(), self.clusters.num_indices());
        for k in 0..kk {
            for i in 0..n {
                if self.fixed[i + n * k] == 0 {
                    self.move_unit(i, k, rng);
                }
            }
        }
    }

    fn move_unit<R: Rng + ?Sized>(&mut self, i: usize, k: usize, rng: &mut R) {
        let n = self.clusters.num_units();
        let detached = self.clusters.detach(i, k);
        let aux = match self.model.on_detach(k, detached) {
            Some(aux) => aux,
            None => self.model.draw_aux(i, k, &self.clusters, rng),
        };
        let fixed = &self.fixed;
        prior_weights_detached(
            i,
            k,
            &self.clusters,
            self.cfg.mass,
            |u, q| fixed[u + n * q] > 0,
            &mut self.blocked,
            &mut self.weights,
        );
        for w in self.weights.iter_mut() {
            *w = w.ln();
        }
        self.model.log_weights(i, k, &self.clusters, &aux, &mut self.weights);
        let j = sample_log_weights(&mut self.weights, rng);
        if j == self.clusters.num_clusters(k) {
            self.counters.new_clusters += 1;
        }
        self.model.on_attach(k, j, aux);
        self.clusters.attach(i, k, j);
        if let Some(order) = self.clusters.canonicalize(k) {
            self.model.on_relabel(k, &order);
        }
    }

    pub fn alpha_block<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        match (&self.cfg.alpha, &mut self.alpha) {
            (AlphaPrior::Beta { a, b }, AlphaState::PerIndex(p)) => {
                for (k, pk) in p.iter_mut().enumerate().skip(1) {
                    *pk = update_alpha_beta(&self.gamma, k, *a, *b, rng);
                }
            }
            (AlphaPrior::Logistic { mean, cov }, AlphaState::Logistic { coef, omega }) => {
                let d = self.cfg.d_gamma;
                refresh_omega(&self.gamma, *coef, d, omega, rng);
                *coef = update_alpha_logistic(&self.gamma, omega, d, *mean, *cov, rng)
                    .unwrap_or_else(|e| panic!("alpha update failed: {e}"));
            }
            (AlphaPrior::Fixed(_), _) => {}
            (prior, state) => panic!("alpha state {state:?} does not match prior {prior:?}"),
        }
    }

    /// Panics with a state dump on any violation.
    pub fn check_invariants(&mut self) {
        self.counters.invariant_checks += 1;
        let mut problems = Vec::new();
        if !self.clusters.is_consistent() {
            problems.push("cluster matrix is not canonical or sizes are stale");
        }
        if !is_compatible_state(&self.clusters, &self.gamma, self.cfg.d_rho) {
            problems.push("compatibility violated");
        }
        if (0..self.gamma.num_units()).any(|i| self.gamma.get(i, 0)) {
            problems.push("gamma column 0 is not zero");
        }
        if !self.model.is_consistent(&self.clusters) {
            problems.push("model parameters do not match cluster counts");
        }
        if self.fixed != self.recount() {
            problems.push("frozen-unit counts are stale");
        }
        if !problems.is_empty() {
            panic!(
                "sampler invariant violated after sweep {}: {}\nclusters: {:?}\ngamma: {:?}\nalpha: {:?}\nmodel: {:?}",
                self.counters.sweeps,
                problems.join("; "),
                self.clusters.to_rows(),
                self.gamma.to_rows(),
                self.alpha,
                self.model.state(),
            );
        }
    }

    /// Runs `total` sweeps and keeps every `thin`-th after `burn_in`.
    pub fn run<R: Rng + ?Sized>(&mut self, total: usize, burn_in: usize, thin: usize, rng: &mut R) -> ChainOutput<M::State> {
        let thin = thin.max(1);
        let keep = total.saturating_sub(burn_in) / thin;
        let mut out = ChainOutput {
            clusters: Vec::with_capacity(keep),
            gammas: Vec::with_capacity(keep),
            alphas: Vec::with_capacity(keep),
            states: Vec::with_capacity(keep),
            loglik: Vec::with_capacity(total),
            counters: Counters::default(),
        };
        for t in 1..=total {
            self.sweep(rng);
            out.loglik.push(self.model.log_likelihood(&self.clusters));
            if t > burn_in && (t - burn_in).is_multiple_of(thin) {
                out.clusters.push(self.clusters.clone());
                out.gammas.push(self.gamma.clone());
                out.alphas.push(self.alpha.clone());
                out.states.push(self.model.state());
            }
        }
        out.counters = self.counters;
        out
    }
}

/// Index drawn proportionally to exp(`log_w`); overwrites the buffer.
pub(crate) fn sample_log_weights<R: Rng + ?Sized>(log_w: &mut [f64], rng: &mut R) -> usize {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert!(max.is_finite(), "no feasible move: log weights {log_w:?}");
    let mut total = 0.0;
    for w in log_w.iter_mut() {
        *w = (*w - max).exp();
        total += *w;
    }
    let mut u = rng.random::<f64>() * total;
    for (j, &w) in log_w.iter().enumerate() {
        if u < w {
            return j;
        }
        u -= w;
    }
    // Rounding: last positive entry.
    log_w.iter().rposition(|&w| w > 0.0).expect("some weight is positive")
}

/// Seeded generator for chain `chain` of a run.
pub fn chain_rng(seed: u64, chain: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain);
    rng
}

/// Single-cluster partitions, zero γ, α from its prior.
pub fn initial_partition_state<R: Rng + ?Sized>(
    n: usize,
    num_indices: usize,
    cfg: &SmrpmConfig,
    rng: &mut R,
) -> Result<(ClusterMatrix, GammaMatrix, AlphaState)> {
    Ok((
        ClusterMatrix::single_cluster(n, num_indices),
        GammaMatrix::zeros(n, num_indices),
        sample_alpha_prior(cfg, n, num_indices, rng)?,
    ))
}

/// Initial sampler state: one cluster per index, γ = 0, functional θ* at the
/// mean of per-curve least-squares fits and everything else from the prior.
pub fn initialize<R: Rng + ?Sized>(data: &Data, cfg: &ChainConfig, rng: &mut R) -> Result<(ClusterMatrix, GammaMatrix, ModelState)> {
    let chain = build_chain(data, cfg, rng)?;
    Ok(match chain {
        AnyChain::Functional(c) => (c.clusters, c.gamma, ModelState::Functional(c.model.state())),
        AnyChain::TimeSeries(c) => (c.clusters, c.gamma, ModelState::TimeSeries(c.model.state())),
    })
}

enum AnyChain {
    Functional(Chain<FunctionalModel>),
    TimeSeries(Chain<TimeSeriesModel>),
}

fn build_chain<R: Rng + ?Sized>(data: &Data, cfg: &ChainConfig, rng: &mut R) -> Result<AnyChain> {
    cfg.validate()?;
    match (data, &cfg.model) {
        (Data::Functional(d), ModelSpec::Functional { basis, hyper }) => {
            let mut model = FunctionalModel::new(d.clone(), basis.clone(), *hyper)?;
            let (c, g, a) = initial_partition_state(d.num_curves(), basis.num_basis(), &cfg.smrpm, rng)?;
            model.initialize(&c, rng);
            Ok(AnyChain::Functional(Chain::new(model, c, g, a, cfg.smrpm.clone())?))
        }
        (Data::TimeSeries(d), ModelSpec::TimeSeries { hyper }) => {
            let mut model = TimeSeriesModel::new(d.clone(), *hyper)?;
            let (c, g, a) = initial_partition_state(d.num_series(), d.num_times(), &cfg.smrpm, rng)?;
            model.initialize(&c, rng);
            Ok(AnyChain::TimeSeries(Chain::new(model, c, g, a, cfg.smrpm.clone())?))
        }
        _ => Err(Error::Contract("data and model kind differ".into())),
    }
}

/// Runs chain 0 of the configuration.
pub fn run_chain(data: &Data, cfg: &ChainConfig) -> Result<ChainOutput<ModelState>> {
    run_chain_indexed(data, cfg, 0, AssertLevel::from_env()?)
}

/// Runs chain `chain` (an independent stream of the same seed).
pub fn run_chain_indexed(data: &Data, cfg: &ChainConfig, chain: u64, level: AssertLevel) -> Result<ChainOutput<ModelState>> {
    let mut rng = chain_rng(cfg.seed, chain);
    let (total, burn, thin) = (cfg.total_iters, cfg.burn_in, cfg.thin);
    Ok(match build_chain(data, cfg, &mut rng)? {
        AnyChain::Functional(c) => {
            let mut c = c.with_assert_level(level);
            let mut out = c.run(total, burn, thin, &mut rng);
            out.counters.ridge_fallbacks = c.model.ridge_fallbacks() as u64;
            map_states(out, ModelState::Functional)
        }
        AnyChain::TimeSeries(c) => {
            let mut c = c.with_assert_level(level);
            map_states(c.run(total, burn, thin, &mut rng), ModelState::TimeSeries)
        }
    })
}

fn map_states<S, T>(out: ChainOutput<S>, f: impl Fn(S) -> T) -> ChainOutput<T> {
    ChainOutput {
        clusters: out.clusters,
        gammas: out.gammas,
        alphas: out.alphas,
        states: out.states.into_iter().map(f).collect(),
        loglik: out.loglik,
        counters: out.counters,
    }
}
