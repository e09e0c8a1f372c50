use crate::config::{ModelKind, RunConfig};
use crate::output::{self, PARAMS, PARTITIONS};
use crate::{svg, CliError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use smrpm_core::data::{
    align_rows, default_knot_count, load_functional_csv, load_labels_csv, load_timeseries_csv, register_shift,
    write_functional_csv, write_labels_csv, write_timeseries_csv,
};
use smrpm_core::inference::{
    enumerate_joint, geweke_test, run_chain_indexed, AssertLevel, Chain, ChainConfig, ChainOutput, Data, ModelSpec,
    ModelState,
};
use smrpm_core::models::{FunctionalDataset, FunctionalModel, PriorOnly, TimeSeriesDataset, TimeSeriesModel};
use smrpm_core::postproc::{
    ari, conditional_functional_estimate, conditional_timeseries_estimate, fari, functional_partition_at,
    functional_predictions, posterior_ari, rmse, summarize as summarize_samples, timeseries_predictions,
};
use smrpm_core::sim::{simulate_functional, simulate_ts, FunctionalScenario, TsScenario};
use smrpm_core::{AlphaPrior, AlphaState, BasisSpec, ClusterMatrix, GammaMatrix};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

/// Loaded input with its series ids and, for curves, the basis.
struct Input {
    ids: Vec<String>,
    data: Data,
    basis: Option<BasisSpec>,
}

fn load_input(cfg: &RunConfig) -> Result<Input, CliError> {
    let path = cfg.data_path()?;
    match cfg.model {
        ModelKind::Functional => {
            let (ids, raw) = load_functional_csv(path)?;
            let data = register_shift(&raw, &ids, &cfg.shifts)?;
            let basis = build_basis(cfg, &data)?;
            Ok(Input {
                ids,
                data: Data::Functional(data),
                basis: Some(basis),
            })
        }
        ModelKind::TimeSeries => {
            let (ids, data) = load_timeseries_csv(path)?;
            Ok(Input {
                ids,
                data: Data::TimeSeries(data),
                basis: None,
            })
        }
    }
}

/// Explicit knots win; otherwise an evenly spaced basis over the data range
/// with the configured (or heuristic) count plus the tuning offset.
fn build_basis(cfg: &RunConfig, data: &FunctionalDataset) -> Result<BasisSpec, CliError> {
    if let Some(knots) = &cfg.knots {
        return Ok(BasisSpec::new(cfg.degree, knots.clone())?);
    }
    let base = cfg.num_basis.unwrap_or_else(|| default_knot_count(data, cfg.degree)) as i64;
    let count = (base + cfg.knot_offset).max(cfg.degree as i64 + 1) as usize;
    let (lo, hi) = data.domain();
    Ok(BasisSpec::even(lo, hi, cfg.degree, count)?)
}

fn chain_config(cfg: &RunConfig, input: &Input) -> ChainConfig {
    let model = match (&input.data, &input.basis) {
        (Data::Functional(_), Some(basis)) => ModelSpec::Functional {
            basis: basis.clone(),
            hyper: cfg.functional,
        },
        _ => ModelSpec::TimeSeries { hyper: cfg.timeseries },
    };
    ChainConfig {
        total_iters: cfg.iters,
        burn_in: cfg.burn_in,
        thin: cfg.thin,
        seed: cfg.seed,
        model,
        smrpm: cfg.smrpm.clone(),
    }
}

fn out_dir(cfg: &RunConfig) -> Result<&Path, CliError> {
    std::fs::create_dir_all(&cfg.out)
        .map_err(|e| CliError::new(format!("cannot create {}: {e}", cfg.out.display())))?;
    Ok(&cfg.out)
}

fn create(path: PathBuf) -> Result<BufWriter<File>, CliError> {
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| CliError::new(format!("cannot write {}: {e}", path.display())))
}

pub fn simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let id = |i: usize| format!("ref{}_{:02}", i / cfg.n_rep + 1, i % cfg.n_rep + 1);
    let truth = match cfg.model {
        ModelKind::Functional => {
            let basis = BasisSpec::even(0.0, 1.0, cfg.degree, cfg.num_basis.unwrap_or(12))?;
            let sim = simulate_functional(&FunctionalScenario::new(cfg.n_rep, cfg.sigma2), &basis, &mut rng)?;
            let ids: Vec<String> = (0..sim.data.num_curves()).map(id).collect();
            write_functional_csv(create(dir.join("data.csv"))?, &ids, &sim.data)?;
            let mut w = csv::Writer::from_writer(create(dir.join("theta_star.csv"))?);
            w.write_record(["k", "j", "value"])?;
            for (k, row) in sim.theta_star.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    w.write_record([(k + 1).to_string(), (j + 1).to_string(), v.to_string()])?;
                }
            }
            w.flush()?;
            (ids, sim.truth)
        }
        ModelKind::TimeSeries => {
            let scn = TsScenario {
                order: cfg.order,
                n_rep: cfg.n_rep,
                sigma2: cfg.sigma2,
            };
            let (data, truth) = simulate_ts(&scn, &mut rng)?;
            let ids: Vec<String> = (0..data.num_series()).map(id).collect();
            write_timeseries_csv(create(dir.join("data.csv"))?, &ids, &data)?;
            (ids, truth)
        }
    };
    write_labels_csv(create(dir.join("truth.csv"))?, &truth.0, &truth.1)?;
    println!("simulated {} series into {}", truth.0.len(), dir.display());
    Ok(())
}

pub fn fit(cfg: &RunConfig) -> Result<(), CliError> {
    let input = load_input(cfg)?;
    let chain_cfg = chain_config(cfg, &input);
    chain_cfg.validate()?;
    let level = AssertLevel::from_env()?;
    let dir = out_dir(cfg)?;
    let chains: Vec<ChainOutput<ModelState>> = (0..cfg.chains as u64)
        .into_par_iter()
        .map(|c| run_chain_indexed(&input.data, &chain_cfg, c, level))
        .collect::<Result<_, _>>()?;
    output::write_partitions(&dir.join(PARTITIONS), &input.ids, &chains, cfg.burn_in, cfg.thin)?;
    output::write_params(&dir.join(PARAMS), &chains, cfg.burn_in, cfg.thin)?;

    let mut manifest = format!(
        "version = {VERSION}\nconfig_hash = {}\nseed = {}\nchains = {}\nmodel = {}\nd_rho = {}\nd_gamma = {}\n",
        cfg.hash(),
        cfg.seed,
        cfg.chains,
        cfg.model.name(),
        cfg.smrpm.d_rho,
        cfg.smrpm.d_gamma
    );
    if let Some(b) = &input.basis {
        manifest += &format!("degree = {}\nnum_basis = {}\n", b.degree(), b.num_basis());
    }
    manifest += &format!(
        "samples_per_chain = {}\nassert_level = {level:?}\n",
        chain_cfg.num_samples()
    );
    for (c, out) in chains.iter().enumerate() {
        let k = out.counters;
        manifest += &format!(
            "chain {}: sweeps = {}, new_clusters = {}, gamma_flips = {}, invariant_checks = {}, ridge_fallbacks = {}\n",
            c + 1,
            k.sweeps,
            k.new_clusters,
            k.gamma_flips,
            k.invariant_checks,
            k.ridge_fallbacks
        );
    }
    output::write_text(&dir.join("manifest.txt"), &manifest)?;
    println!(
        "fit {} chain(s), {} samples each, into {}",
        cfg.chains,
        chain_cfg.num_samples(),
        dir.display()
    );
    Ok(())
}

pub fn summarize(cfg: &RunConfig) -> Result<(), CliError> {
    let input = load_input(cfg)?;
    let dir = out_dir(cfg)?;
    let samples = output::read_partitions(&dir.join(PARTITIONS), &input.ids)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let summary = summarize_samples(&samples, cfg.restarts, &mut rng)?;
    write_labels_csv(create(dir.join("point_partitions.csv"))?, &input.ids, &summary.point)?;

    let mut w = csv::Writer::from_writer(create(dir.join("jk_posterior.csv"))?);
    w.write_record(["k", "clusters", "prob"])?;
    for (k, row) in summary.cluster_counts.iter().enumerate() {
        for (j, p) in row.iter().enumerate() {
            w.write_record([(k + 1).to_string(), (j + 1).to_string(), p.to_string()])?;
        }
    }
    w.flush()?;

    let point = &summary.point;
    let burn = cfg.estimate_iters / 2;
    let mut est = csv::Writer::from_writer(create(dir.join("parameter_estimates.csv"))?);
    est.write_record(["param", "k", "j", "value"])?;
    let mut grid = csv::Writer::from_writer(create(dir.join("curves_grid.csv"))?);
    // Per series: (x, fitted, local cluster) for the optional render.
    let mut lines: Vec<Vec<(f64, f64, usize)>> = vec![Vec::new(); input.ids.len()];
    match (&input.data, &input.basis) {
        (Data::Functional(d), Some(basis)) => {
            let mut model = FunctionalModel::new(d.clone(), basis.clone(), cfg.functional)?;
            let s = conditional_functional_estimate(&mut model, point, cfg.estimate_iters, burn, &mut rng)?;
            for (k, row) in s.theta_star.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    est.write_record(["theta_star", &(k + 1).to_string(), &(j + 1).to_string(), &v.to_string()])?;
                }
            }
            for (name, v) in [("sigma2", s.sigma2), ("tau2", s.tau2), ("phi", s.phi)] {
                est.write_record([name, "", "", &v.to_string()])?;
            }
            grid.write_record(["series_id", "x", "fitted", "local_cluster"])?;
            let (lo, hi) = basis.domain();
            let coefs: Vec<Vec<f64>> = (0..input.ids.len()).map(|i| s.coefficients(i, point)).collect();
            for m in 0..cfg.grid_points {
                let x = lo + (hi - lo) * m as f64 / (cfg.grid_points - 1) as f64;
                let local = functional_partition_at(point, basis, x)?;
                for (i, id) in input.ids.iter().enumerate() {
                    let y = basis.eval_curve(&coefs[i], x)?;
                    let l = local.labels()[i] + 1;
                    lines[i].push((x, y, l));
                    grid.write_record([id, &x.to_string(), &y.to_string(), &l.to_string()])?;
                }
            }
        }
        (Data::TimeSeries(d), _) => {
            let mut model = TimeSeriesModel::new(d.clone(), cfg.timeseries)?;
            let s = conditional_timeseries_estimate(&mut model, point, cfg.estimate_iters, burn, &mut rng)?;
            for k in 0..s.theta.len() {
                for j in 0..s.mu_star[k].len() {
                    let (ks, js) = ((k + 1).to_string(), (j + 1).to_string());
                    est.write_record(["mu_star", &ks, &js, &s.mu_star[k][j].to_string()])?;
                    est.write_record(["sigma2_star", &ks, &js, &s.sigma2_star[k][j].to_string()])?;
                }
                est.write_record(["theta", &(k + 1).to_string(), "", &s.theta[k].to_string()])?;
                est.write_record(["tau2", &(k + 1).to_string(), "", &s.tau2[k].to_string()])?;
            }
            est.write_record(["phi0", "", "", &s.phi0.to_string()])?;
            est.write_record(["lambda2", "", "", &s.lambda2.to_string()])?;
            grid.write_record(["series_id", "k", "fitted", "local_cluster"])?;
            let fitted = timeseries_predictions(point, &s);
            for (i, id) in input.ids.iter().enumerate() {
                for (k, y) in fitted[i].iter().enumerate() {
                    let l = point.label(i, k) + 1;
                    lines[i].push(((k + 1) as f64, *y, l));
                    grid.write_record([id, &(k + 1).to_string(), &y.to_string(), &l.to_string()])?;
                }
            }
        }
        _ => unreachable!("functional input always carries a basis"),
    }
    est.flush()?;
    grid.flush()?;
    if cfg.svg {
        output::write_text(&dir.join("curves.svg"), &svg::render(&lines))?;
    }
    println!("summarized {} samples into {}", samples.len(), dir.display());
    Ok(())
}

pub fn metrics(cfg: &RunConfig) -> Result<(), CliError> {
    let input = load_input(cfg)?;
    let dir = out_dir(cfg)?;
    let (tids, raw_truth) = load_labels_csv(cfg.truth_path()?)?;
    let truth = align_rows(&raw_truth, &tids, &input.ids)?;
    let samples = output::read_partitions(&dir.join(PARTITIONS), &input.ids)?;
    if truth.num_indices() != samples[0].num_indices() {
        return Err(CliError::new(format!(
            "truth has {} indices but the samples have {}",
            truth.num_indices(),
            samples[0].num_indices()
        )));
    }
    let point_path = dir.join("point_partitions.csv");
    let point = if point_path.exists() {
        let (pids, p) = load_labels_csv(&point_path)?;
        Some(align_rows(&p, &pids, &input.ids)?)
    } else {
        None
    };

    let mut w = csv::Writer::from_writer(create(dir.join("metrics.csv"))?);
    w.write_record(["metric", "k", "value"])?;
    let kk = truth.num_indices();
    let mut mean = 0.0;
    for k in 0..kk {
        let col: Vec<_> = samples.iter().map(|s| s.partition(k)).collect();
        let v = posterior_ari(&truth.partition(k), &col)?;
        mean += v / kk as f64;
        w.write_record(["posterior_ari", &(k + 1).to_string(), &v.to_string()])?;
    }
    w.write_record(["mean_posterior_ari", "", &mean.to_string()])?;
    if let Some(p) = &point {
        for k in 0..kk {
            let v = ari(&truth.partition(k), &p.partition(k))?;
            w.write_record(["point_ari", &(k + 1).to_string(), &v.to_string()])?;
        }
    }
    let params = dir.join(PARAMS);
    match (&input.data, &input.basis) {
        (Data::Functional(d), Some(basis)) => {
            // Window convention: curves share a local cluster at x when all
            // d + 1 active coefficients share labels.
            let f = fari(&truth, &samples, basis, &d.grid())?;
            w.write_record(["fari_window", "", &f.to_string()])?;
            if params.exists() {
                let states = output::read_functional_params(&params, &samples)?;
                let preds = samples
                    .iter()
                    .zip(&states)
                    .map(|(c, s)| functional_predictions(d, basis, c, s))
                    .collect::<Result<Vec<_>, _>>()?;
                let observed: Vec<Vec<f64>> = (0..d.num_curves()).map(|i| d.y(i).to_vec()).collect();
                w.write_record(["rmse", "", &rmse(&observed, &preds)?.to_string()])?;
            }
        }
        (Data::TimeSeries(d), _) => {
            if params.exists() {
                let states = output::read_timeseries_params(&params, &samples)?;
                let preds: Vec<_> = samples
                    .iter()
                    .zip(&states)
                    .map(|(c, s)| timeseries_predictions(c, s))
                    .collect();
                w.write_record(["rmse", "", &rmse(d.rows(), &preds)?.to_string()])?;
            }
        }
        _ => unreachable!("functional input always carries a basis"),
    }
    w.flush()?;
    println!("mean posterior ARI {mean:.4}; metrics written to {}", dir.display());
    Ok(())
}

pub fn geweke(cfg: &RunConfig) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    let n = cfg.units.unwrap_or(4);
    let report = match cfg.model {
        ModelKind::Functional => {
            let basis = BasisSpec::even(0.0, 1.0, cfg.degree, cfg.indices.unwrap_or(6))?;
            let xs: Vec<f64> = (0..10).map(|m| m as f64 / 9.0).collect();
            let data = FunctionalDataset::new((0..n).map(|_| (xs.clone(), vec![0.0; xs.len()])).collect())?;
            geweke_test(FunctionalModel::new(data, basis, cfg.functional)?, &cfg.smrpm, cfg.rounds, cfg.seed)?
        }
        ModelKind::TimeSeries => {
            let data = TimeSeriesDataset::new(vec![vec![0.0; cfg.indices.unwrap_or(4)]; n])?;
            geweke_test(TimeSeriesModel::new(data, cfg.timeseries)?, &cfg.smrpm, cfg.rounds, cfg.seed)?
        }
    };
    let mut w = csv::Writer::from_writer(create(dir.join("geweke.csv"))?);
    w.write_record(["statistic", "marginal_mean", "successive_mean", "z"])?;
    for s in &report.stats {
        w.write_record([
            s.name.to_string(),
            s.marginal_mean.to_string(),
            s.successive_mean.to_string(),
            s.z.to_string(),
        ])?;
    }
    w.flush()?;
    println!("geweke: {} rounds, max |z| = {:.3}", report.rounds, report.max_abs_z());
    Ok(())
}

pub fn oracle(cfg: &RunConfig) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    let (n, kk) = (cfg.units.unwrap_or(3), cfg.indices.unwrap_or(3));
    let alpha = match (cfg.smrpm.d_gamma, cfg.oracle_alpha.as_slice()) {
        (0, [p]) => AlphaState::PerIndex(vec![*p; kk]),
        (_, [a, b]) if cfg.smrpm.d_gamma > 0 => AlphaState::Logistic {
            coef: [*a, *b],
            omega: Vec::new(),
        },
        _ => {
            return Err(CliError::new(
                "oracle_alpha needs one value when d_gamma = 0 and two when d_gamma > 0",
            ))
        }
    };
    let smrpm = cfg.smrpm.clone().with_alpha(AlphaPrior::Fixed(alpha.clone()));
    let exact = enumerate_joint(n, kk, &smrpm)?.partition_marginal();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut chain = Chain::new(
        PriorOnly::new(n, kk),
        ClusterMatrix::single_cluster(n, kk),
        GammaMatrix::zeros(n, kk),
        alpha,
        smrpm,
    )?
    .with_assert_level(AssertLevel::from_env()?);
    let mut freq: BTreeMap<Vec<Vec<usize>>, usize> = BTreeMap::new();
    for _ in 0..cfg.sweeps {
        chain.sweep(&mut rng);
        *freq.entry(chain.clusters().to_rows()).or_default() += 1;
    }
    let mut w = csv::Writer::from_writer(create(dir.join("oracle.csv"))?);
    w.write_record(["sequence", "exact", "empirical"])?;
    let mut tv = 0.0;
    for (rows, p) in &exact {
        let q = freq.get(rows).copied().unwrap_or(0) as f64 / cfg.sweeps as f64;
        tv += (p - q).abs() / 2.0;
        w.write_record([describe(rows), p.to_string(), q.to_string()])?;
    }
    // Sequences the enumeration rules out would be a sampler bug.
    let stray: usize = freq.iter().filter(|(k, _)| !exact.contains_key(*k)).map(|(_, c)| c).sum();
    tv += stray as f64 / cfg.sweeps as f64 / 2.0;
    w.flush()?;
    println!(
        "oracle: {} sequences, {} sweeps, total variation {tv:.4}, {stray} impossible visits",
        exact.len(),
        cfg.sweeps
    );
    Ok(())
}

/// Partition sequence as `1 1 2 | 1 2 2`, one block per index, 1-based.
fn describe(rows: &[Vec<usize>]) -> String {
    let kk = rows.first().map_or(0, Vec::len);
    (0..kk)
        .map(|k| rows.iter().map(|r| (r[k] + 1).to_string()).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join(" | ")
}
