//! Exact joint law of (ρ_1..ρ_K, γ) for tiny instances by exhaustive enumeration.

use crate::error::{Error, Result};
use crate::partition::{crp_log_eppf, enumerate_partitions, ClusterMatrix, LabelVector};
use crate::prior::{is_fixed, AlphaPrior, AlphaState, GammaMatrix, SmrpmConfig};
use std::collections::BTreeMap;

/// Largest Bell(n)^K · 2^{n(K−1)} accepted.
const MAX_STATES: f64 = 2e6;

#[derive(Debug, Clone)]
pub struct JointTable {
    pub entries: Vec<(ClusterMatrix, GammaMatrix, f64)>,
}

impl JointTable {
    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.2).sum()
    }

    /// Law of the partition sequence alone, keyed by `ClusterMatrix::to_rows`.
    pub fn partition_marginal(&self) -> BTreeMap<Vec<Vec<usize>>, f64> {
        let mut out = BTreeMap::new();
        for (c, _, p) in &self.entries {
            *out.entry(c.to_rows()).or_insert(0.0) += p;
        }
        out
    }
}

/// Every (ρ, γ) pair with positive probability under the prior with fixed α.
pub fn enumerate_joint(n: usize, num_indices: usize, cfg: &SmrpmConfig) -> Result<JointTable> {
    cfg.validate()?;
    let AlphaPrior::Fixed(alpha) = &cfg.alpha else {
        return Err(Error::Parameter("enumeration needs a fixed alpha".into()));
    };
    if n == 0 || num_indices == 0 {
        return Err(Error::Empty("no units or indices".into()));
    }
    if let AlphaState::PerIndex(p) = alpha {
        if p.len() != num_indices {
            return Err(Error::Dimension {
                expected: num_indices,
                got: p.len(),
            });
        }
    }
    let parts = enumerate_partitions(n);
    let states = (parts.len() as f64).powi(num_indices as i32) * 2f64.powi((n * (num_indices - 1)) as i32);
    if states > MAX_STATES {
        return Err(Error::TooLarge(format!(
            "{states:.0} states for n = {n}, K = {num_indices}"
        )));
    }
    let log_eppf: Vec<f64> = parts
        .iter()
        .map(|p| crp_log_eppf(p, cfg.mass))
        .collect::<Result<_>>()?;
    let mut walk = Walk {
        n,
        num_indices,
        cfg,
        alpha,
        parts: &parts,
        log_eppf: &log_eppf,
        gamma: GammaMatrix::zeros(n, num_indices),
        path: Vec::with_capacity(num_indices),
        out: Vec::new(),
    };
    for (r, lp) in log_eppf.iter().enumerate() {
        walk.path.push(r);
        walk.descend(1, *lp)?;
        walk.path.pop();
    }
    Ok(JointTable { entries: walk.out })
}

struct Walk<'a> {
    n: usize,
    num_indices: usize,
    cfg: &'a SmrpmConfig,
    alpha: &'a AlphaState,
    parts: &'a [LabelVector],
    log_eppf: &'a [f64],
    gamma: GammaMatrix,
    path: Vec<usize>,
    out: Vec<(ClusterMatrix, GammaMatrix, f64)>,
}

impl Walk<'_> {
    fn descend(&mut self, k: usize, log_p: f64) -> Result<()> {
        if k == self.num_indices {
            let cols = self.path.iter().map(|&r| self.parts[r].clone()).collect();
            self.out.push((ClusterMatrix::from_columns(cols)?, self.gamma.clone(), log_p.exp()));
            return Ok(());
        }
        let n = self.n;
        for bits in 0u32..(1 << n) {
            // γ_k given its past, unit by unit (the lag window only reaches back).
            let mut lg = 0.0;
            for i in 0..n {
                let v = bits >> i & 1 == 1;
                self.gamma.put(i, k, v);
                let p = self.alpha.persistence_prob(&self.gamma, i, k, self.cfg.d_gamma);
                lg += if v { p.ln() } else { (1.0 - p).ln() };
            }
            if lg == f64::NEG_INFINITY {
                continue;
            }
            let fixed: Vec<usize> = (0..n)
                .filter(|&i| is_fixed(&self.gamma, i, k, self.cfg.d_rho))
                .collect();
            let prev = &self.parts[self.path[k - 1]];
            let prev_reduced = prev.reduce(&fixed)?;
            let norm = if fixed.is_empty() {
                0.0
            } else {
                crp_log_eppf(&prev_reduced, self.cfg.mass)?
            };
            for r in 0..self.parts.len() {
                if !fixed.is_empty() && self.parts[r].reduce(&fixed)? != prev_reduced {
                    continue;
                }
                self.path.push(r);
                self.descend(k + 1, log_p + lg + self.log_eppf[r] - norm)?;
                self.path.pop();
            }
        }
        for i in 0..n {
            self.gamma.put(i, k, false);
        }
        Ok(())
    }
}
