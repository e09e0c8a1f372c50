//! Simulation generators built on shipped reference label matrices.
//!
//! Each reference matrix has five rows; a dataset replicates every row
//! `n_rep` times, so rows `r n_rep .. (r + 1) n_rep` share reference row `r`.

use crate::bspline::BasisSpec;
use crate::error::{Error, Result};
use crate::models::{FunctionalDataset, TimeSeriesDataset};
use crate::partition::ClusterMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

const TS_ORDER1_LABELS: &str = include_str!("../fixtures/ts_order1_labels.csv");
const TS_ORDER1_MEANS: &str = include_str!("../fixtures/ts_order1_means.csv");
const TS_ORDER2_LABELS: &str = include_str!("../fixtures/ts_order2_labels.csv");
const TS_ORDER2_MEANS: &str = include_str!("../fixtures/ts_order2_means.csv");
const FUNCTIONAL_LABELS: &str = include_str!("../fixtures/functional_labels.csv");

/// Number of reference rows in every fixture.
pub const N_REF: usize = 5;

/// Raw 1-based label rows of a fixture.
fn raw_labels(src: &str) -> Result<Vec<Vec<usize>>> {
    let (_, c) = crate::data::read_labels_csv(src.as_bytes())?;
    let mut rows = vec![vec![0; c.num_indices()]; c.num_units()];
    let mut rdr = csv::Reader::from_reader(src.as_bytes());
    for rec in rdr.records() {
        let rec = rec?;
        let r: usize = rec[0].trim_start_matches("ref").parse().map_err(|_| Error::Validation("fixture id".into()))?;
        let k: usize = rec[1].parse().map_err(|_| Error::Validation("fixture index".into()))?;
        rows[r - 1][k - 1] = rec[2].parse().map_err(|_| Error::Validation("fixture label".into()))?;
    }
    Ok(rows)
}

fn replicate(rows: &[Vec<usize>], n_rep: usize) -> Result<ClusterMatrix> {
    let full: Vec<Vec<usize>> = rows
        .iter()
        .flat_map(|r| std::iter::repeat_n(r.clone(), n_rep))
        .collect();
    ClusterMatrix::from_rows(&full)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TsScenario {
    /// Dependence order of the reference partitions, 1 or 2.
    pub order: usize,
    pub n_rep: usize,
    pub sigma2: f64,
}

impl TsScenario {
    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.order) || self.n_rep == 0 || !(self.sigma2 >= 0.0) {
            return Err(Error::Parameter(format!("invalid scenario {self:?}")));
        }
        Ok(())
    }
}

/// Reference label rows (raw, 1-based) and μ*[k][label − 1] for an order.
pub fn ts_reference(order: usize) -> Result<(Vec<Vec<usize>>, Vec<Vec<f64>>)> {
    let (labels, means) = match order {
        1 => (TS_ORDER1_LABELS, TS_ORDER1_MEANS),
        2 => (TS_ORDER2_LABELS, TS_ORDER2_MEANS),
        _ => return Err(Error::Parameter(format!("no reference for order {order}"))),
    };
    let rows = raw_labels(labels)?;
    let kk = rows[0].len();
    let mut mu = vec![Vec::new(); kk];
    let mut rdr = csv::Reader::from_reader(means.as_bytes());
    for rec in rdr.records() {
        let rec = rec?;
        let bad = || Error::Validation("malformed mean fixture".into());
        let k: usize = rec[0].parse().map_err(|_| bad())?;
        let l: usize = rec[1].parse().map_err(|_| bad())?;
        let m: f64 = rec[2].parse().map_err(|_| bad())?;
        let slot = mu.get_mut(k - 1).ok_or_else(bad)?;
        if slot.len() < l {
            slot.resize(l, f64::NAN);
        }
        slot[l - 1] = m;
    }
    Ok((rows, mu))
}

/// Y_ik ~ N(μ*_{k, c_ik}, σ*²) on the replicated reference matrix.
pub fn simulate_ts<R: Rng + ?Sized>(scenario: &TsScenario, rng: &mut R) -> Result<(TimeSeriesDataset, ClusterMatrix)> {
    scenario.validate()?;
    let (rows, mu) = ts_reference(scenario.order)?;
    let sd = scenario.sigma2.sqrt();
    let mut data = Vec::with_capacity(rows.len() * scenario.n_rep);
    for r in &rows {
        for _ in 0..scenario.n_rep {
            let y = r
                .iter()
                .enumerate()
                .map(|(k, &l)| {
                    let z: f64 = StandardNormal.sample(rng);
                    mu[k][l - 1] + sd * z
                })
                .collect();
            data.push(y);
        }
    }
    Ok((TimeSeriesDataset::new(data)?, replicate(&rows, scenario.n_rep)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionalScenario {
    pub n_rep: usize,
    pub sigma2: f64,
    /// Evaluation points on the common grid over the basis domain.
    pub num_points: usize,
    /// Coefficient dynamics used to generate θ*.
    pub phi: f64,
    pub tau2: f64,
}

impl FunctionalScenario {
    /// 100 grid points, φ = 0.8, τ² = 4.
    pub fn new(n_rep: usize, sigma2: f64) -> Self {
        Self {
            n_rep,
            sigma2,
            num_points: 100,
            phi: 0.8,
            tau2: 4.0,
        }
    }
}

/// The five-row reference matrix for the functional study (12 bases).
pub fn functional_reference() -> Result<ClusterMatrix> {
    Ok(crate::data::read_labels_csv(FUNCTIONAL_LABELS.as_bytes())?.1)
}

#[derive(Debug, Clone)]
pub struct FunctionalSimulation {
    pub data: FunctionalDataset,
    pub truth: ClusterMatrix,
    pub theta_star: Vec<Vec<f64>>,
}

/// θ* from the autoregressive cluster prior on the reference partitions,
/// then noisy curves on an equispaced grid.
pub fn simulate_functional<R: Rng + ?Sized>(
    scenario: &FunctionalScenario,
    basis: &BasisSpec,
    rng: &mut R,
) -> Result<FunctionalSimulation> {
    let reference = functional_reference()?;
    if basis.num_basis() != reference.num_indices() {
        return Err(Error::Dimension {
            expected: reference.num_indices(),
            got: basis.num_basis(),
        });
    }
    if scenario.n_rep == 0 || scenario.num_points < 2 || !(scenario.sigma2 >= 0.0) || !(scenario.tau2 > 0.0) {
        return Err(Error::Parameter(format!("invalid scenario {scenario:?}")));
    }
    let theta_star = draw_theta(&reference, scenario.phi, scenario.tau2, rng);
    let truth = replicate(&reference.to_rows(), scenario.n_rep)?;
    let (lo, hi) = basis.domain();
    let xs: Vec<f64> = (0..scenario.num_points)
        .map(|m| lo + (hi - lo) * m as f64 / (scenario.num_points - 1) as f64)
        .collect();
    let design = basis.design_matrix(&xs)?;
    let sd = scenario.sigma2.sqrt();
    let mut curves = Vec::with_capacity(truth.num_units());
    for i in 0..truth.num_units() {
        let coef: Vec<f64> = (0..truth.num_indices())
            .map(|k| theta_star[k][truth.label(i, k)])
            .collect();
        let ys = design
            .apply(&coef)
            .into_iter()
            .map(|f| {
                let z: f64 = StandardNormal.sample(rng);
                f + sd * z
            })
            .collect();
        curves.push((xs.clone(), ys));
    }
    Ok(FunctionalSimulation {
        data: FunctionalDataset::new(curves)?,
        truth,
        theta_star,
    })
}

fn draw_theta<R: Rng + ?Sized>(c: &ClusterMatrix, phi: f64, tau2: f64, rng: &mut R) -> Vec<Vec<f64>> {
    let sd = tau2.sqrt();
    let mut theta: Vec<Vec<f64>> = Vec::with_capacity(c.num_indices());
    for k in 0..c.num_indices() {
        let row = (0..c.num_clusters(k))
            .map(|j| {
                let mean = if k == 0 {
                    0.0
                } else {
                    // Mean over the clusters at k − 1 that feed cluster j.
                    let mut back: Vec<usize> = (0..c.num_units())
                        .filter(|&i| c.label(i, k) == j)
                        .map(|i| c.label(i, k - 1))
                        .collect();
                    back.sort_unstable();
                    back.dedup();
                    phi * back.iter().map(|&l| theta[k - 1][l]).sum::<f64>() / back.len() as f64
                };
                let z: f64 = StandardNormal.sample(rng);
                mean + sd * z
            })
            .collect();
        theta.push(row);
    }
    theta
}
