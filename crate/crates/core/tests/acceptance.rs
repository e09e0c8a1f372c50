//! Acceptance battery: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so lines come out in order.
//! Exit status is non-zero when a gated criterion fails; criterion 6 is
//! reported but not gated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use smrpm_core::inference::{
    enumerate_joint, geweke_test, run_chain_indexed, AssertLevel, Chain, ChainConfig, Data, ModelSpec,
};
use smrpm_core::models::{
    Conditional, FunctionalDataset, FunctionalHyper, FunctionalModel, FunctionalState, PriorOnly, TimeSeriesDataset,
    TimeSeriesHyper, TimeSeriesModel, TimeSeriesState,
};
use smrpm_core::partition::{crp_log_eppf, enumerate_partitions};
use smrpm_core::postproc::{ari, binder_loss, binder_point_estimate, coclustering_matrix, fari, CoclusterMatrix};
use smrpm_core::prior::{cluster_prior_weights, gamma_full_conditional, sample_pg};
use smrpm_core::sim::{simulate_functional, FunctionalScenario};
use smrpm_core::{AlphaPrior, AlphaState, BasisSpec, ClusterMatrix, GammaMatrix, LabelVector, SmrpmConfig};
use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::time::Instant;

// Pinned tolerances.
const TV_TOL: f64 = 0.02;
const PRIOR_SWEEPS: usize = 200_000;
const TRPM_TOL: f64 = 1e-12;
const TRPM_STATES: usize = 10_000;
const PG_DRAWS: usize = 100_000;
const PG_MEAN_REL: f64 = 0.01;
const PG_VAR_REL: f64 = 0.05;
const GEWEKE_ROUNDS: usize = 100_000;
const GEWEKE_Z: f64 = 4.0;
const GEWEKE_MUTANT_Z: f64 = 10.0;
const GRID_INSTANCES: usize = 100;
const CURVATURE_REL: f64 = 0.02;
const SIM_REPLICATES: u64 = 10;
const SIM_ITERS: usize = 10_000;
const SIM_BURN: usize = 5_000;
const SIM_THIN: usize = 5;
const SIM_REQUIRED: usize = 8;
const BINDER_MATRICES: usize = 50;
const BINDER_TOL: f64 = 1e-9;
const EPPF_TOL: f64 = 1e-12;
const UNITY_TOL: f64 = 1e-12;
const LOCAL_TOL: f64 = 1e-12;

/// Compatibility bookkeeping shared by every chain run in the battery.
static CHECKED_STATES: AtomicUsize = AtomicUsize::new(0);
static VIOLATIONS: AtomicUsize = AtomicUsize::new(0);
static INTERNAL_CHECKS: AtomicU64 = AtomicU64::new(0);

struct Outcome {
    pass: bool,
    detail: String,
}

fn main() {
    let criteria: Vec<(usize, &str, bool, fn() -> Outcome)> = vec![
        (1, "prior oracle equivalence", true, prior_oracle),
        (2, "tRPM reduction", true, trpm_reduction),
        (3, "Polya-Gamma moments", true, polya_gamma_moments),
        (4, "Geweke joint-distribution test", true, geweke),
        (5, "conjugate grid checks", true, grid_checks),
        (6, "simulation ranking", false, simulation_ranking),
        (7, "compatibility invariant", true, compatibility),
        (8, "metrics sanity", true, metrics_sanity),
        (9, "B-spline correctness", true, bspline_checks),
    ];
    let mut gated_failures = 0;
    for (id, name, gated, run) in criteria {
        let t = Instant::now();
        let out = catch_unwind(run).unwrap_or_else(|e| Outcome {
            pass: false,
            detail: format!("panicked: {}", panic_text(&e)),
        });
        let tag = if out.pass { "PASS" } else { "FAIL" };
        let note = if gated { "" } else { " [reported, not gated]" };
        println!("criterion {id} {tag}: {name}: {} ({:.1}s){note}", out.detail, t.elapsed().as_secs_f64());
        if gated && !out.pass {
            gated_failures += 1;
        }
    }
    if gated_failures > 0 {
        std::process::exit(1);
    }
}

fn panic_text(e: &Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<String>()
        .cloned()
        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_default()
}

/// Independent check of ρ^{R_k}_{k−1} = ρ^{R_k}_k for every k ≥ 1.
fn record_compatibility(clusters: &ClusterMatrix, gamma: &GammaMatrix, d_rho: usize) {
    CHECKED_STATES.fetch_add(1, Ordering::Relaxed);
    for k in 1..clusters.num_indices() {
        let frozen: Vec<usize> = (0..clusters.num_units())
            .filter(|&i| (k.saturating_sub(d_rho - 1)..=k).any(|q| gamma.get(i, q)))
            .collect();
        for (a, &u) in frozen.iter().enumerate() {
            for &v in &frozen[a + 1..] {
                let before = clusters.label(u, k - 1) == clusters.label(v, k - 1);
                let after = clusters.label(u, k) == clusters.label(v, k);
                if before != after {
                    VIOLATIONS.fetch_add(1, Ordering::Relaxed);
                    return;
                }
            }
        }
    }
}

// ---------------------------------------------------------------- 1

fn prior_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (d_rho, d_gamma) in [(1, 0), (2, 0)] {
        let cfg = SmrpmConfig::new(d_rho, d_gamma)
            .with_mass(1.0)
            .with_alpha(AlphaPrior::Fixed(AlphaState::PerIndex(vec![0.5; 3])));
        let exact = enumerate_joint(3, 3, &cfg).expect("enumeration").partition_marginal();
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + d_rho as u64);
        let mut chain = Chain::new(
            PriorOnly::new(3, 3),
            ClusterMatrix::single_cluster(3, 3),
            GammaMatrix::zeros(3, 3),
            AlphaState::PerIndex(vec![0.5; 3]),
            cfg,
        )
        .expect("chain")
        .with_assert_level(AssertLevel::Full);
        let mut freq: BTreeMap<Vec<Vec<usize>>, usize> = BTreeMap::new();
        let run = catch_unwind(AssertUnwindSafe(|| {
            for _ in 0..PRIOR_SWEEPS {
                chain.sweep(&mut rng);
                record_compatibility(chain.clusters(), chain.gamma(), d_rho);
                *freq.entry(chain.clusters().to_rows()).or_default() += 1;
            }
        }));
        if run.is_err() {
            VIOLATIONS.fetch_add(1, Ordering::Relaxed);
            return Outcome {
                pass: false,
                detail: format!("chain ({d_rho},{d_gamma}) aborted on an invariant check"),
            };
        }
        INTERNAL_CHECKS.fetch_add(chain.counters().invariant_checks, Ordering::Relaxed);
        let mut keys: Vec<&Vec<Vec<usize>>> = exact.keys().collect();
        keys.extend(freq.keys());
        keys.sort();
        keys.dedup();
        let tv = keys
            .iter()
            .map(|key| {
                let p = exact.get(*key).copied().unwrap_or(0.0);
                let q = freq.get(*key).copied().unwrap_or(0) as f64 / PRIOR_SWEEPS as f64;
                (p - q).abs()
            })
            .sum::<f64>()
            / 2.0;
        worst = worst.max(tv);
        parts.push(format!("TV({d_rho},{d_gamma}) = {tv:.4}"));
    }
    Outcome {
        pass: worst < TV_TOL,
        detail: format!("{} over {PRIOR_SWEEPS} sweeps, tol {TV_TOL}", parts.join(", ")),
    }
}

// ---------------------------------------------------------------- 2

/// log CRP EPPF from block sizes.
fn log_eppf(sizes: &[usize], mass: f64) -> f64 {
    let n: usize = sizes.iter().sum();
    if n == 0 {
        return 0.0;
    }
    sizes.len() as f64 * mass.ln() + libm::lgamma(mass) - libm::lgamma(mass + n as f64)
        + sizes.iter().map(|&s| libm::lgamma(s as f64)).sum::<f64>()
}

fn block_sizes(labels: &[usize], members: &[usize]) -> Vec<usize> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &u in members {
        *counts.entry(labels[u]).or_default() += 1;
    }
    counts.into_values().collect()
}

fn same_grouping(a: &[usize], b: &[usize], members: &[usize]) -> bool {
    members
        .iter()
        .all(|&u| members.iter().all(|&v| (a[u] == a[v]) == (b[u] == b[v])))
}

/// tRPM transition density P(ρ_k | γ_k, ρ_{k−1}) with R_k = {i : γ_ik = 1}.
fn trpm_transition(prev: &[usize], now: &[usize], frozen: &[usize], mass: f64) -> f64 {
    if !same_grouping(prev, now, frozen) {
        return 0.0;
    }
    let all: Vec<usize> = (0..now.len()).collect();
    (log_eppf(&block_sizes(now, &all), mass) - log_eppf(&block_sizes(now, frozen), mass)).exp()
}

fn random_trpm_state(rng: &mut ChaCha8Rng) -> (ClusterMatrix, GammaMatrix, Vec<f64>, f64) {
    let n = rng.random_range(2..=6);
    let kk = rng.random_range(2..=5);
    let mut gamma = GammaMatrix::zeros(n, kk);
    for k in 1..kk {
        for i in 0..n {
            gamma.set(i, k, rng.random_bool(0.5)).unwrap();
        }
    }
    let mut rows = vec![vec![0usize; kk]; n];
    for row in rows.iter_mut() {
        row[0] = rng.random_range(0..n);
    }
    for k in 1..kk {
        for i in 0..n {
            // Frozen units keep their previous label, so ρ_k stays compatible.
            rows[i][k] = if gamma.get(i, k) { rows[i][k - 1] } else { rng.random_range(0..n) };
        }
    }
    let alpha: Vec<f64> = (0..kk).map(|_| rng.random_range(0.05..0.95)).collect();
    (ClusterMatrix::from_rows(&rows).unwrap(), gamma, alpha, rng.random_range(0.2..3.0))
}

fn trpm_reduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut mismatched = 0;
    for _ in 0..TRPM_STATES {
        let (c, g, alpha, mass) = random_trpm_state(&mut rng);
        let (n, kk) = (c.num_units(), c.num_indices());
        let cfg = SmrpmConfig::new(1, 0)
            .with_mass(mass)
            .with_alpha(AlphaPrior::Fixed(AlphaState::PerIndex(alpha.clone())));
        let state = AlphaState::PerIndex(alpha.clone());

        // γ_ik: Bernoulli(α_k) prior times the transition into k.
        let (i, k) = (rng.random_range(0..n), rng.random_range(1..kk));
        let frozen_with = |on: bool| -> Vec<usize> {
            (0..n).filter(|&u| if u == i { on } else { g.get(u, k) }).collect()
        };
        let (prev, now) = (c.column(k - 1), c.column(k));
        let p1 = alpha[k] * trpm_transition(prev, now, &frozen_with(true), mass);
        let p0 = (1.0 - alpha[k]) * trpm_transition(prev, now, &frozen_with(false), mass);
        let oracle = p1 / (p1 + p0);
        let got = gamma_full_conditional(i, k, &g, &c, &state, &cfg).unwrap();
        worst = worst.max((got - oracle).abs());

        // c_ik for a free unit: EPPF ratio times the forward indicator, on
        // the unnormalized |S_j| / M scale.
        let free: Vec<(usize, usize)> = (0..kk)
            .flat_map(|k| (0..n).map(move |i| (i, k)))
            .filter(|&(i, k)| !g.get(i, k))
            .collect();
        let (i, k) = free[rng.random_range(0..free.len())];
        let all: Vec<usize> = (0..n).collect();
        let others: Vec<usize> = all.iter().copied().filter(|&u| u != i).collect();
        let base = log_eppf(&block_sizes(c.column(k), &others), mass);
        let weight = |target: usize| -> f64 {
            let mut col = c.column(k).to_vec();
            col[i] = target;
            let mut w = (log_eppf(&block_sizes(&col, &all), mass) - base).exp() * (mass + (n - 1) as f64);
            if k + 1 < kk {
                let frozen: Vec<usize> = (0..n).filter(|&u| g.get(u, k + 1)).collect();
                if !same_grouping(&col, c.column(k + 1), &frozen) {
                    w = 0.0;
                }
            }
            w
        };
        let got = cluster_prior_weights(i, k, &c, &g, &cfg).unwrap();
        let mut expected: Vec<(Option<usize>, f64)> = others
            .iter()
            .map(|&u| c.label(u, k))
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .map(|l| (Some(l), weight(l)))
            .collect();
        expected.push((None, weight(usize::MAX)));
        if got.len() != expected.len() {
            mismatched += 1;
            continue;
        }
        for ((la, wa), (lb, wb)) in got.iter().zip(&expected) {
            if la != lb {
                mismatched += 1;
            }
            worst = worst.max((wa - wb).abs());
        }
    }
    Outcome {
        pass: worst <= TRPM_TOL && mismatched == 0,
        detail: format!("max abs diff {worst:.2e} over {TRPM_STATES} states, {mismatched} label mismatches, tol {TRPM_TOL:e}"),
    }
}

// ---------------------------------------------------------------- 3

fn polya_gamma_moments() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut pass = true;
    let mut parts = Vec::new();
    for c in [0.0f64, 1.0, 3.0] {
        let draws: Vec<f64> = (0..PG_DRAWS).map(|_| sample_pg(c, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / PG_DRAWS as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (PG_DRAWS - 1) as f64;
        let (m, v) = if c == 0.0 {
            (0.25, 1.0 / 24.0)
        } else {
            let m = (c / 2.0).tanh() / (2.0 * c);
            let v = (c.sinh() - c) / (4.0 * c.powi(3) * (c / 2.0).cosh().powi(2));
            (m, v)
        };
        let (em, ev) = ((mean - m).abs() / m, (var - v).abs() / v);
        pass &= em < PG_MEAN_REL && ev < PG_VAR_REL;
        parts.push(format!("c={c}: mean err {:.2}%, var err {:.2}%", 100.0 * em, 100.0 * ev));
    }
    Outcome {
        pass,
        detail: format!("{} (tol {}% / {}%)", parts.join("; "), 100.0 * PG_MEAN_REL, 100.0 * PG_VAR_REL),
    }
}

// ---------------------------------------------------------------- 4

fn geweke_functional() -> FunctionalModel {
    let basis = BasisSpec::even(0.0, 1.0, 3, 6).unwrap();
    let xs: Vec<f64> = (0..10).map(|m| m as f64 / 9.0).collect();
    let data = FunctionalDataset::new((0..4).map(|_| (xs.clone(), vec![0.0; 10])).collect()).unwrap();
    let hyper = FunctionalHyper {
        m0: 0.0,
        s0_sq: 0.1,
        a_tau: 6.0,
        b_tau: 5.0,
        a_sigma: 6.0,
        b_sigma: 5.0,
    };
    FunctionalModel::new(data, basis, hyper).unwrap()
}

fn geweke_timeseries() -> TimeSeriesModel {
    let data = TimeSeriesDataset::new(vec![vec![0.0; 4]; 4]).unwrap();
    let hyper = TimeSeriesHyper {
        m0: 0.0,
        s0_sq: 1.0,
        a_lambda: 6.0,
        b_lambda: 5.0,
        a_tau: 6.0,
        b_tau: 5.0,
        a_sigma: 6.0,
        b_sigma: 5.0,
    };
    TimeSeriesModel::new(data, hyper).unwrap()
}

fn geweke() -> Outcome {
    let jobs: Vec<(&str, usize, usize)> = vec![("functional", 3, 3), ("time series", 2, 0), ("time series", 2, 2)];
    let results: Vec<(String, f64, f64)> = jobs
        .par_iter()
        .map(|&(name, d_rho, d_gamma)| {
            let cfg = SmrpmConfig::new(d_rho, d_gamma);
            let run = |mutate: bool| {
                if name == "functional" {
                    let mut m = geweke_functional();
                    if mutate {
                        m.set_sigma_shape_offset(1.0);
                    }
                    geweke_test(m, &cfg, GEWEKE_ROUNDS, 1).unwrap().max_abs_z()
                } else {
                    let mut m = geweke_timeseries();
                    if mutate {
                        m.set_sigma_shape_offset(1.0);
                    }
                    geweke_test(m, &cfg, GEWEKE_ROUNDS, 2).unwrap().max_abs_z()
                }
            };
            (format!("{name} ({d_rho},{d_gamma})"), run(false), run(true))
        })
        .collect();
    let pass = results.iter().all(|(_, z, zm)| *z < GEWEKE_Z && *zm > GEWEKE_MUTANT_Z);
    let parts: Vec<String> = results
        .iter()
        .map(|(n, z, zm)| format!("{n}: max|z| {z:.2}, mutant {zm:.1}"))
        .collect();
    Outcome {
        pass,
        detail: format!(
            "{} over {GEWEKE_ROUNDS} rounds (need < {GEWEKE_Z}, mutant > {GEWEKE_MUTANT_Z})",
            parts.join("; ")
        ),
    }
}

// ---------------------------------------------------------------- 5

/// Grid oracle for one conditional against the log joint `f` in that
/// coordinate. Returns (argmax within one step, relative curvature error).
fn grid_check(cond: Conditional, f: impl Fn(f64) -> f64) -> (bool, f64) {
    let mode = cond.mode();
    let curvature = match cond {
        Conditional::Normal { var, .. } => -1.0 / var,
        Conditional::InvGamma { shape, rate } => -(shape + 1.0).powi(3) / (rate * rate),
    };
    let sd = (-1.0 / curvature).sqrt();
    let step = sd / 100.0;
    let positive = matches!(cond, Conditional::InvGamma { .. });
    let mut best = (f64::NEG_INFINITY, f64::NAN);
    for m in -400i32..=400 {
        let x = mode + m as f64 * step;
        if positive && x <= 0.0 {
            continue;
        }
        let v = f(x);
        if v > best.0 {
            best = (v, x);
        }
    }
    let h = sd / 20.0;
    let fd = (f(mode + h) - 2.0 * f(mode) + f(mode - h)) / (h * h);
    ((best.1 - mode).abs() <= step * (1.0 + 1e-9), (fd - curvature).abs() / curvature.abs())
}

fn random_columns(n: usize, kk: usize, rng: &mut ChaCha8Rng) -> ClusterMatrix {
    let rows: Vec<Vec<usize>> = (0..n).map(|_| (0..kk).map(|_| rng.random_range(0..3)).collect()).collect();
    ClusterMatrix::from_rows(&rows).unwrap()
}

fn grid_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut checked, mut argmax_fail, mut worst): (usize, usize, f64) = (0, 0, 0.0);
    let mut tally = |(ok, err): (bool, f64)| {
        checked += 1;
        argmax_fail += usize::from(!ok);
        worst = worst.max(err);
    };
    for _ in 0..GRID_INSTANCES {
        // Functional model: n = 3, cubic basis with 6 functions.
        let basis = BasisSpec::even(0.0, 1.0, 3, 6).unwrap();
        let curves = (0..3)
            .map(|_| {
                let mut xs: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..1.0)).collect();
                xs.sort_by(f64::total_cmp);
                let ys = xs.iter().map(|_| rng.random_range(-2.0..2.0)).collect();
                (xs, ys)
            })
            .collect();
        let hyper = FunctionalHyper {
            m0: rng.random_range(-1.0..1.0),
            s0_sq: rng.random_range(0.2..2.0),
            a_tau: rng.random_range(0.5..4.0),
            b_tau: rng.random_range(0.5..4.0),
            a_sigma: rng.random_range(0.5..4.0),
            b_sigma: rng.random_range(0.5..4.0),
        };
        let c = random_columns(3, 6, &mut rng);
        let mut model = FunctionalModel::new(FunctionalDataset::new(curves).unwrap(), basis, hyper).unwrap();
        let state = FunctionalState {
            theta_star: (0..6).map(|k| (0..c.num_clusters(k)).map(|_| rng.random_range(-2.0..2.0)).collect()).collect(),
            sigma2: rng.random_range(0.3..2.0),
            tau2: rng.random_range(0.3..2.0),
            phi: rng.random_range(-1.0..1.0),
        };
        model.set_state(state.clone(), &c).unwrap();
        let joint = |edit: &dyn Fn(&mut FunctionalState, f64), x: f64| {
            let mut m = model.clone();
            let mut s = state.clone();
            edit(&mut s, x);
            m.set_state(s, &c).unwrap();
            m.log_joint(&c)
        };
        tally(grid_check(model.sigma2_conditional(&c).unwrap(), |x| joint(&|s, x| s.sigma2 = x, x)));
        tally(grid_check(model.tau2_conditional(&c).unwrap(), |x| joint(&|s, x| s.tau2 = x, x)));
        tally(grid_check(model.phi_conditional(&c).unwrap(), |x| joint(&|s, x| s.phi = x, x)));
        for k in 0..6 {
            for j in 0..c.num_clusters(k) {
                let cond = model.theta_star_conditional(k, j, &c).unwrap();
                tally(grid_check(cond, |x| joint(&|s, x| s.theta_star[k][j] = x, x)));
            }
        }

        // Time-series model: n = 4, K = 3.
        let rows = (0..4).map(|_| (0..3).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let hyper = TimeSeriesHyper {
            m0: rng.random_range(-1.0..1.0),
            s0_sq: rng.random_range(0.2..2.0),
            a_lambda: rng.random_range(0.5..4.0),
            b_lambda: rng.random_range(0.5..4.0),
            a_tau: rng.random_range(0.5..4.0),
            b_tau: rng.random_range(0.5..4.0),
            a_sigma: rng.random_range(0.5..4.0),
            b_sigma: rng.random_range(0.5..4.0),
        };
        let c = random_columns(4, 3, &mut rng);
        let mut model = TimeSeriesModel::new(TimeSeriesDataset::new(rows).unwrap(), hyper).unwrap();
        let state = TimeSeriesState {
            mu_star: (0..3).map(|k| (0..c.num_clusters(k)).map(|_| rng.random_range(-2.0..2.0)).collect()).collect(),
            sigma2_star: (0..3).map(|k| (0..c.num_clusters(k)).map(|_| rng.random_range(0.3..2.0)).collect()).collect(),
            theta: (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
            tau2: (0..3).map(|_| rng.random_range(0.3..2.0)).collect(),
            phi0: rng.random_range(-1.0..1.0),
            lambda2: rng.random_range(0.3..2.0),
        };
        model.set_state(state.clone(), &c).unwrap();
        let joint = |edit: &dyn Fn(&mut TimeSeriesState, f64), x: f64| {
            let mut m = model.clone();
            let mut s = state.clone();
            edit(&mut s, x);
            m.set_state(s, &c).unwrap();
            m.log_joint(&c)
        };
        tally(grid_check(model.phi0_conditional(), |x| joint(&|s, x| s.phi0 = x, x)));
        tally(grid_check(model.lambda2_conditional(), |x| joint(&|s, x| s.lambda2 = x, x)));
        for k in 0..3 {
            tally(grid_check(model.theta_conditional(k), |x| joint(&|s, x| s.theta[k] = x, x)));
            tally(grid_check(model.tau2_conditional(k), |x| joint(&|s, x| s.tau2[k] = x, x)));
            for j in 0..c.num_clusters(k) {
                let cond = model.mu_star_conditional(k, j, &c);
                tally(grid_check(cond, |x| joint(&|s, x| s.mu_star[k][j] = x, x)));
                let cond = model.sigma2_star_conditional(k, j, &c);
                tally(grid_check(cond, |x| joint(&|s, x| s.sigma2_star[k][j] = x, x)));
            }
        }
    }
    Outcome {
        pass: argmax_fail == 0 && worst < CURVATURE_REL,
        detail: format!(
            "{checked} conditionals on {GRID_INSTANCES} instances per model: {argmax_fail} argmax misses, \
             max curvature error {:.3}% (tol one step / {}%)",
            100.0 * worst,
            100.0 * CURVATURE_REL
        ),
    }
}

// ---------------------------------------------------------------- 6

fn simulation_ranking() -> Outcome {
    let basis = BasisSpec::even(0.0, 1.0, 3, 12).unwrap();
    let orders = [(3usize, 3usize), (3, 0), (1, 0)];
    let rows: Vec<(u64, [f64; 3])> = (0..SIM_REPLICATES)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + rep);
            let sim = simulate_functional(&FunctionalScenario::new(10, 1.0), &basis, &mut rng).unwrap();
            let grid = sim.data.grid();
            let mut scores = [0.0; 3];
            for (slot, &(d_rho, d_gamma)) in orders.iter().enumerate() {
                let cfg = ChainConfig {
                    total_iters: SIM_ITERS,
                    burn_in: SIM_BURN,
                    thin: SIM_THIN,
                    seed: 7 + rep,
                    model: ModelSpec::Functional {
                        basis: basis.clone(),
                        hyper: FunctionalHyper::default(),
                    },
                    smrpm: SmrpmConfig::new(d_rho, d_gamma),
                };
                let data = Data::Functional(sim.data.clone());
                let out = catch_unwind(AssertUnwindSafe(|| run_chain_indexed(&data, &cfg, 0, AssertLevel::Full)));
                let Ok(Ok(out)) = out else {
                    VIOLATIONS.fetch_add(1, Ordering::Relaxed);
                    scores[slot] = f64::NAN;
                    continue;
                };
                INTERNAL_CHECKS.fetch_add(out.counters.invariant_checks, Ordering::Relaxed);
                for (c, g) in out.clusters.iter().zip(&out.gammas) {
                    record_compatibility(c, g, d_rho);
                }
                scores[slot] = fari(&sim.truth, &out.clusters, &basis, &grid).unwrap();
            }
            (rep, scores)
        })
        .collect();
    let ordered = rows.iter().filter(|(_, s)| s[0] >= s[1] && s[1] >= s[2]).count();
    let mean = |slot: usize| rows.iter().map(|(_, s)| s[slot]).sum::<f64>() / rows.len() as f64;
    for (rep, s) in &rows {
        println!(
            "    replicate {rep}: fARI (3,3) {:.3}  (3,0) {:.3}  (1,0) {:.3}{}",
            s[0],
            s[1],
            s[2],
            if s[0] >= s[1] && s[1] >= s[2] { "" } else { "  out of order" }
        );
    }
    Outcome {
        pass: ordered >= SIM_REQUIRED,
        detail: format!(
            "ordering (3,3) >= (3,0) >= (1,0) in {ordered}/{SIM_REPLICATES} replicates (need {SIM_REQUIRED}); \
             mean fARI {:.3} / {:.3} / {:.3}",
            mean(0),
            mean(1),
            mean(2)
        ),
    }
}

// ---------------------------------------------------------------- 7

fn compatibility() -> Outcome {
    let (states, bad, internal) = (
        CHECKED_STATES.load(Ordering::Relaxed),
        VIOLATIONS.load(Ordering::Relaxed),
        INTERNAL_CHECKS.load(Ordering::Relaxed),
    );
    Outcome {
        pass: bad == 0 && states > 0 && internal > 0,
        detail: format!(
            "{bad} violations; {states} stored states re-checked independently, \
             {internal} full in-sampler checks across criteria 1 and 6"
        ),
    }
}

// ---------------------------------------------------------------- 8

fn metrics_sanity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut ari_bad = 0;
    for _ in 0..200 {
        let n = rng.random_range(1..20);
        let raw: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let p = LabelVector::from_labels(&raw);
        if ari(&p, &p).unwrap() != 1.0 {
            ari_bad += 1;
        }
    }

    let mut binder_bad = 0;
    let mut worst_gap: f64 = 0.0;
    for m in 0..BINDER_MATRICES {
        let n = 2 + m % 7;
        let samples: Vec<LabelVector> = (0..rng.random_range(1..30))
            .map(|_| {
                let blocks = rng.random_range(1..=n);
                LabelVector::from_labels(&(0..n).map(|_| rng.random_range(0..blocks)).collect::<Vec<_>>())
            })
            .collect();
        let pi: CoclusterMatrix = coclustering_matrix(&samples).unwrap();
        let brute = enumerate_partitions(n)
            .iter()
            .map(|p| binder_loss(p.labels(), &pi))
            .fold(f64::INFINITY, f64::min);
        let found = binder_loss(binder_point_estimate(&pi, 10, &mut rng).labels(), &pi);
        let gap = found - brute;
        worst_gap = worst_gap.max(gap);
        if gap > BINDER_TOL {
            binder_bad += 1;
        }
    }

    let mut eppf_err: f64 = 0.0;
    for n in 1..=6 {
        for mass in [0.3, 1.0, 2.5] {
            let total: f64 = enumerate_partitions(n)
                .iter()
                .map(|p| crp_log_eppf(p, mass).unwrap().exp())
                .sum();
            eppf_err = eppf_err.max((total - 1.0).abs());
        }
    }
    Outcome {
        pass: ari_bad == 0 && binder_bad == 0 && eppf_err <= EPPF_TOL,
        detail: format!(
            "ari(p,p) != 1 in {ari_bad}/200; Binder above brute force on {binder_bad}/{BINDER_MATRICES} \
             (max gap {worst_gap:.1e}, tol {BINDER_TOL:e}); EPPF sum error {eppf_err:.1e} (tol {EPPF_TOL:e})"
        ),
    }
}

// ---------------------------------------------------------------- 9

fn bspline_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut bases = Vec::new();
    for degree in 0..=4 {
        bases.push(BasisSpec::even(0.0, 1.0, degree, degree + 7).unwrap());
        // Uneven interior knots on [−1, 2].
        let mut interior: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..2.0)).collect();
        interior.sort_by(f64::total_cmp);
        let mut knots = vec![-1.0; degree + 1];
        knots.extend(interior);
        knots.extend(vec![2.0; degree + 1]);
        bases.push(BasisSpec::new(degree, knots).unwrap());
    }
    let mut unity: f64 = 0.0;
    let mut local: f64 = 0.0;
    for basis in &bases {
        let (lo, hi) = basis.domain();
        let grid: Vec<f64> = (0..10_000).map(|m| lo + (hi - lo) * m as f64 / 9_999.0).collect();
        for &x in &grid {
            let s: f64 = basis.eval(x).unwrap().iter().sum();
            unity = unity.max((s - 1.0).abs());
        }
        let (d, kk) = (basis.degree(), basis.num_basis());
        for first in 0..=(kk - d - 1) {
            let a: Vec<f64> = (0..kk).map(|_| rng.random_range(-3.0..3.0)).collect();
            let mut b: Vec<f64> = (0..kk).map(|_| rng.random_range(-3.0..3.0)).collect();
            b[first..=first + d].copy_from_slice(&a[first..=first + d]);
            for &x in grid.iter().filter(|&&x| basis.first_active(x).unwrap() == first) {
                let diff = basis.eval_curve(&a, x).unwrap() - basis.eval_curve(&b, x).unwrap();
                local = local.max(diff.abs());
            }
        }
    }
    Outcome {
        pass: unity <= UNITY_TOL && local <= LOCAL_TOL,
        detail: format!(
            "{} bases on 10^4 points: unity error {unity:.1e} (tol {UNITY_TOL:e}), \
             shared-span difference {local:.1e} (tol {LOCAL_TOL:e})",
            bases.len()
        ),
    }
}
