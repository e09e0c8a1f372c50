//! Fixtures for the sampler benchmarks: chains on simulated data, warmed up
//! past the single-cluster start so a sweep reflects steady-state cost.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use smrpm_core::inference::{initial_partition_state, AssertLevel, Chain};
use smrpm_core::models::{FunctionalHyper, FunctionalModel, PriorOnly, TimeSeriesHyper, TimeSeriesModel};
use smrpm_core::sim::{simulate_functional, simulate_ts, FunctionalScenario, TsScenario};
use smrpm_core::{AlphaPrior, BasisSpec, SmrpmConfig};

pub const WARMUP: usize = 50;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Functional chain on the reference design with `n_rep` curves per row.
pub fn functional_chain(n_rep: usize, cfg: SmrpmConfig, rng: &mut ChaCha8Rng) -> Chain<FunctionalModel> {
    let basis = BasisSpec::even(0.0, 1.0, 3, 12).expect("valid basis");
    let sim = simulate_functional(&FunctionalScenario::new(n_rep, 0.5), &basis, rng).expect("simulation");
    let n = sim.data.num_curves();
    let mut model = FunctionalModel::new(sim.data, basis, FunctionalHyper::default()).expect("model");
    let (c, g, a) = initial_partition_state(n, 12, &cfg, rng).expect("prior state");
    model.initialize(&c, rng);
    warm(Chain::new(model, c, g, a, cfg).expect("chain"), rng)
}

/// Time-series chain on the order-1 reference with `n_rep` series per row.
pub fn timeseries_chain(n_rep: usize, cfg: SmrpmConfig, rng: &mut ChaCha8Rng) -> Chain<TimeSeriesModel> {
    let scn = TsScenario {
        order: 1,
        n_rep,
        sigma2: 1.0,
    };
    let (data, _) = simulate_ts(&scn, rng).expect("simulation");
    let (n, kk) = (data.num_series(), data.num_times());
    let mut model = TimeSeriesModel::new(data, TimeSeriesHyper::default()).expect("model");
    let (c, g, a) = initial_partition_state(n, kk, &cfg, rng).expect("prior state");
    model.initialize(&c, rng);
    warm(Chain::new(model, c, g, a, cfg).expect("chain"), rng)
}

/// Partition prior alone, no data.
pub fn prior_chain(n: usize, kk: usize, cfg: SmrpmConfig, rng: &mut ChaCha8Rng) -> Chain<PriorOnly> {
    let (c, g, a) = initial_partition_state(n, kk, &cfg, rng).expect("prior state");
    warm(Chain::new(PriorOnly::new(n, kk), c, g, a, cfg).expect("chain"), rng)
}

pub fn independent(d_rho: usize) -> SmrpmConfig {
    SmrpmConfig::new(d_rho, 0)
}

pub fn logistic(d_rho: usize, d_gamma: usize) -> SmrpmConfig {
    SmrpmConfig::new(d_rho, d_gamma).with_alpha(AlphaPrior::Logistic {
        mean: [0.0, 0.0],
        cov: [[1.0, 0.0], [0.0, 1.0]],
    })
}

fn warm<M: smrpm_core::models::ClusterModel>(chain: Chain<M>, rng: &mut ChaCha8Rng) -> Chain<M> {
    let mut chain = chain.with_assert_level(AssertLevel::Off);
    for _ in 0..WARMUP {
        chain.sweep(rng);
    }
    chain
}
