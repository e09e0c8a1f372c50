//! Chain sample files. Indices and labels are 1-based on disk.

use crate::CliError;
use smrpm_core::inference::{ChainOutput, ModelState};
use smrpm_core::models::{FunctionalState, TimeSeriesState};
use smrpm_core::{AlphaState, ClusterMatrix};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

pub const PARTITIONS: &str = "samples_partitions.csv";
pub const PARAMS: &str = "samples_params.csv";

/// Sweep number of the `s`-th stored sample.
fn sweep_of(s: usize, burn_in: usize, thin: usize) -> usize {
    burn_in + (s + 1) * thin
}

pub fn write_partitions(
    path: &Path,
    ids: &[String],
    chains: &[ChainOutput<ModelState>],
    burn_in: usize,
    thin: usize,
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(["chain", "iter", "series_id", "k", "label"])?;
    for (c, out) in chains.iter().enumerate() {
        for (s, m) in out.clusters.iter().enumerate() {
            let iter = sweep_of(s, burn_in, thin).to_string();
            for (i, id) in ids.iter().enumerate() {
                for k in 0..m.num_indices() {
                    w.write_record([
                        &(c + 1).to_string(),
                        &iter,
                        id,
                        &(k + 1).to_string(),
                        &(m.label(i, k) + 1).to_string(),
                    ])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn param_rows(state: &ModelState, alpha: &AlphaState, out: &mut Vec<(&'static str, String, String, f64)>) {
    let none = String::new;
    match state {
        ModelState::Functional(s) => {
            for (k, row) in s.theta_star.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    out.push(("theta_star", (k + 1).to_string(), (j + 1).to_string(), *v));
                }
            }
            out.push(("sigma2", none(), none(), s.sigma2));
            out.push(("tau2", none(), none(), s.tau2));
            out.push(("phi", none(), none(), s.phi));
        }
        ModelState::TimeSeries(s) => {
            for k in 0..s.theta.len() {
                for j in 0..s.mu_star[k].len() {
                    out.push(("mu_star", (k + 1).to_string(), (j + 1).to_string(), s.mu_star[k][j]));
                    out.push(("sigma2_star", (k + 1).to_string(), (j + 1).to_string(), s.sigma2_star[k][j]));
                }
                out.push(("theta", (k + 1).to_string(), none(), s.theta[k]));
                out.push(("tau2", (k + 1).to_string(), none(), s.tau2[k]));
            }
            out.push(("phi0", none(), none(), s.phi0));
            out.push(("lambda2", none(), none(), s.lambda2));
        }
    }
    match alpha {
        AlphaState::PerIndex(p) => {
            for (k, v) in p.iter().enumerate().skip(1) {
                out.push(("alpha", (k + 1).to_string(), none(), *v));
            }
        }
        AlphaState::Logistic { coef, .. } => {
            out.push(("alpha_intercept", none(), none(), coef[0]));
            out.push(("alpha_slope", none(), none(), coef[1]));
        }
    }
}

pub fn write_params(path: &Path, chains: &[ChainOutput<ModelState>], burn_in: usize, thin: usize) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(["chain", "iter", "param", "k", "j", "value"])?;
    let mut rows = Vec::new();
    for (c, out) in chains.iter().enumerate() {
        for (s, (state, alpha)) in out.states.iter().zip(&out.alphas).enumerate() {
            let iter = sweep_of(s, burn_in, thin);
            rows.clear();
            param_rows(state, alpha, &mut rows);
            rows.push(("loglik", String::new(), String::new(), out.loglik[iter - 1]));
            for (name, k, j, v) in &rows {
                w.write_record([&(c + 1).to_string(), &iter.to_string(), *name, k, j, &v.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Samples in file order, keyed by (chain, iter); rows follow `ids`.
pub fn read_partitions(path: &Path, ids: &[String]) -> Result<Vec<ClusterMatrix>, CliError> {
    let pos: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut samples: BTreeMap<(usize, usize), Vec<Vec<usize>>> = BTreeMap::new();
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| CliError::new(format!("cannot read {}: {e}", path.display())))?;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = || CliError::new(format!("{} line {}: malformed row", path.display(), line + 2));
        let num = |f: usize| rec.get(f).and_then(|v| v.parse::<usize>().ok()).ok_or_else(bad);
        let (chain, iter, k, label) = (num(0)?, num(1)?, num(3)?, num(4)?);
        let i = *pos
            .get(rec.get(2).ok_or_else(bad)?)
            .ok_or_else(|| CliError::new(format!("{} line {}: unknown series", path.display(), line + 2)))?;
        if k == 0 || label == 0 {
            return Err(bad());
        }
        let rows = samples.entry((chain, iter)).or_insert_with(|| vec![Vec::new(); ids.len()]);
        if rows[i].len() < k {
            rows[i].resize(k, 0);
        }
        rows[i][k - 1] = label;
    }
    if samples.is_empty() {
        return Err(CliError::new(format!("{} holds no samples", path.display())));
    }
    samples
        .into_values()
        .map(|rows| ClusterMatrix::from_rows(&rows).map_err(CliError::from))
        .collect()
}

/// Parameter states in the same (chain, iter) order as [`read_partitions`].
pub fn read_functional_params(path: &Path, clusters: &[ClusterMatrix]) -> Result<Vec<FunctionalState>, CliError> {
    let grouped = read_param_rows(path)?;
    if grouped.len() != clusters.len() {
        return Err(CliError::new("parameter and partition files hold different samples"));
    }
    grouped
        .into_values()
        .zip(clusters)
        .map(|(rows, c)| {
            let mut s = FunctionalState {
                theta_star: (0..c.num_indices()).map(|k| vec![0.0; c.num_clusters(k)]).collect(),
                sigma2: 0.0,
                tau2: 0.0,
                phi: 0.0,
            };
            for (name, k, j, v) in rows {
                match (name.as_str(), k, j) {
                    ("theta_star", Some(k), Some(j)) => *slot(&mut s.theta_star, k, j)? = v,
                    ("sigma2", ..) => s.sigma2 = v,
                    ("tau2", ..) => s.tau2 = v,
                    ("phi", ..) => s.phi = v,
                    _ => {}
                }
            }
            Ok(s)
        })
        .collect()
}

pub fn read_timeseries_params(path: &Path, clusters: &[ClusterMatrix]) -> Result<Vec<TimeSeriesState>, CliError> {
    let grouped = read_param_rows(path)?;
    if grouped.len() != clusters.len() {
        return Err(CliError::new("parameter and partition files hold different samples"));
    }
    grouped
        .into_values()
        .zip(clusters)
        .map(|(rows, c)| {
            let kk = c.num_indices();
            let mut s = TimeSeriesState {
                mu_star: (0..kk).map(|k| vec![0.0; c.num_clusters(k)]).collect(),
                sigma2_star: (0..kk).map(|k| vec![0.0; c.num_clusters(k)]).collect(),
                theta: vec![0.0; kk],
                tau2: vec![0.0; kk],
                phi0: 0.0,
                lambda2: 0.0,
            };
            for (name, k, j, v) in rows {
                match (name.as_str(), k, j) {
                    ("mu_star", Some(k), Some(j)) => *slot(&mut s.mu_star, k, j)? = v,
                    ("sigma2_star", Some(k), Some(j)) => *slot(&mut s.sigma2_star, k, j)? = v,
                    ("theta", Some(k), None) if k <= kk => s.theta[k - 1] = v,
                    ("tau2", Some(k), None) if k <= kk => s.tau2[k - 1] = v,
                    ("phi0", ..) => s.phi0 = v,
                    ("lambda2", ..) => s.lambda2 = v,
                    _ => {}
                }
            }
            Ok(s)
        })
        .collect()
}

fn slot(table: &mut [Vec<f64>], k: usize, j: usize) -> Result<&mut f64, CliError> {
    table
        .get_mut(k.wrapping_sub(1))
        .and_then(|row| row.get_mut(j.wrapping_sub(1)))
        .ok_or_else(|| CliError::new(format!("parameter index ({k}, {j}) does not match the partitions")))
}

type ParamRow = (String, Option<usize>, Option<usize>, f64);

fn read_param_rows(path: &Path) -> Result<BTreeMap<(usize, usize), Vec<ParamRow>>, CliError> {
    let mut out: BTreeMap<(usize, usize), Vec<ParamRow>> = BTreeMap::new();
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| CliError::new(format!("cannot read {}: {e}", path.display())))?;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = || CliError::new(format!("{} line {}: malformed row", path.display(), line + 2));
        let field = |f: usize| rec.get(f).ok_or_else(bad);
        let chain: usize = field(0)?.parse().map_err(|_| bad())?;
        let iter: usize = field(1)?.parse().map_err(|_| bad())?;
        let idx = |s: &str| if s.is_empty() { Ok(None) } else { s.parse().map(Some).map_err(|_| bad()) };
        let value: f64 = field(5)?.parse().map_err(|_| bad())?;
        out.entry((chain, iter))
            .or_default()
            .push((field(2)?.to_string(), idx(field(3)?)?, idx(field(4)?)?, value));
    }
    Ok(out)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut f = File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}
