//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Unknown keys are rejected
//! together, so a typo never silently falls back to a default.

use crate::CliError;
use sha2::{Digest, Sha256};
use smrpm_core::models::{FunctionalHyper, TimeSeriesHyper};
use smrpm_core::{AlphaPrior, SmrpmConfig};
use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("model", "functional | timeseries"),
    ("data", "input CSV (series_id,x,y or series_id,k,y)"),
    ("truth", "true labels (series_id,k,label), used by metrics"),
    ("out", "output directory"),
    ("iters", "total sweeps per chain"),
    ("burn_in", "sweeps discarded before storing"),
    ("thin", "keep every thin-th sweep after burn-in"),
    ("seed", "base RNG seed"),
    ("chains", "independent chains, run in parallel"),
    ("d_rho", "partition dependence order"),
    ("d_gamma", "order of the persistence autoregression (0 = independent)"),
    ("mass", "CRP concentration M"),
    ("alpha_a", "Beta prior shape a for per-index persistence (d_gamma = 0)"),
    ("alpha_b", "Beta prior shape b"),
    ("alpha_mean", "logistic coefficient prior mean, two values (d_gamma > 0)"),
    ("alpha_cov", "logistic coefficient prior covariance, four values row-major"),
    ("degree", "B-spline degree"),
    ("num_basis", "number of basis functions; default max points / 3"),
    ("knot_offset", "added to the default basis count (tuning)"),
    ("knots", "explicit full knot vector, overrides num_basis"),
    ("shifts", "registration shifts, id:value pairs separated by commas"),
    ("m0", "prior mean of the coefficient autoregression"),
    ("s0_sq", "prior variance of the coefficient autoregression"),
    ("a_tau", "inverse-gamma shape for tau^2"),
    ("b_tau", "inverse-gamma rate for tau^2"),
    ("a_sigma", "inverse-gamma shape for sigma^2"),
    ("b_sigma", "inverse-gamma rate for sigma^2"),
    ("a_lambda", "inverse-gamma shape for lambda^2 (time series)"),
    ("b_lambda", "inverse-gamma rate for lambda^2 (time series)"),
    ("restarts", "Binder search restarts per index"),
    ("estimate_iters", "parameter sweeps for conditional estimates"),
    ("grid_points", "points per curve in curves_grid.csv"),
    ("svg", "true to also render curves.svg"),
    ("n_rep", "simulate: replicates per reference row"),
    ("sigma2", "simulate: noise variance"),
    ("order", "simulate: dependence order of the time-series reference, 1 or 2"),
    ("units", "geweke/oracle: number of units"),
    ("indices", "geweke/oracle: number of indices (geweke functional: basis count)"),
    ("rounds", "geweke: successive-conditional rounds"),
    ("sweeps", "oracle: prior-only sweeps"),
    ("oracle_alpha", "oracle: fixed persistence probability (d_gamma = 0) or two logistic coefficients"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Functional,
    TimeSeries,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Functional => "functional",
            ModelKind::TimeSeries => "timeseries",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelKind,
    pub data: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub out: PathBuf,
    pub iters: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub chains: usize,
    pub smrpm: SmrpmConfig,
    pub degree: usize,
    pub num_basis: Option<usize>,
    pub knot_offset: i64,
    pub knots: Option<Vec<f64>>,
    pub shifts: HashMap<String, f64>,
    pub functional: FunctionalHyper,
    pub timeseries: TimeSeriesHyper,
    pub restarts: usize,
    pub estimate_iters: usize,
    pub grid_points: usize,
    pub svg: bool,
    pub n_rep: usize,
    pub sigma2: f64,
    pub order: usize,
    pub units: Option<usize>,
    pub indices: Option<usize>,
    pub rounds: usize,
    pub sweeps: usize,
    pub oracle_alpha: Vec<f64>,
    /// Canonical `key=value` lines after overrides, hashed into the manifest.
    canonical: BTreeMap<String, String>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub chains: Option<usize>,
    pub out: Option<PathBuf>,
    pub knot_offset: Option<i64>,
}

pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::new(format!("config line {}: expected key = value", n + 1)))?;
        let k = k.trim().to_string();
        if map.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(CliError::new(format!("config line {}: duplicate key {k}", n + 1)));
        }
    }
    let unknown: Vec<&str> = map
        .keys()
        .filter(|k| !KEYS.iter().any(|(known, _)| known == k))
        .map(String::as_str)
        .collect();
    if !unknown.is_empty() {
        return Err(CliError::new(format!("unknown config keys: {}", unknown.join(", "))));
    }
    Ok(map)
}

struct Reader<'a> {
    map: &'a BTreeMap<String, String>,
    bad: Vec<String>,
}

impl Reader<'_> {
    fn get<T: std::str::FromStr>(&mut self, key: &str, default: T) -> T {
        match self.map.get(key) {
            None => default,
            Some(v) => v.parse().unwrap_or_else(|_| {
                self.bad.push(format!("{key} = {v}"));
                default
            }),
        }
    }

    fn opt<T: std::str::FromStr>(&mut self, key: &str) -> Option<T> {
        let v = self.map.get(key)?;
        let parsed = v.parse().ok();
        if parsed.is_none() {
            self.bad.push(format!("{key} = {v}"));
        }
        parsed
    }

    fn list(&mut self, key: &str) -> Option<Vec<f64>> {
        let v = self.map.get(key)?;
        let parsed: Result<Vec<f64>, _> = v.split([',', ' ']).filter(|s| !s.is_empty()).map(str::parse).collect();
        match parsed {
            Ok(xs) => Some(xs),
            Err(_) => {
                self.bad.push(format!("{key} = {v}"));
                None
            }
        }
    }
}

impl RunConfig {
    /// Reads `path`; relative paths inside are taken from the file's directory.
    pub fn load(path: &Path, over: &Overrides) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::new(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_text(&text, base, over)
    }

    pub fn from_text(text: &str, base: &Path, over: &Overrides) -> Result<Self, CliError> {
        let mut map = parse_pairs(text)?;
        if let Some(s) = over.seed {
            map.insert("seed".into(), s.to_string());
        }
        if let Some(c) = over.chains {
            map.insert("chains".into(), c.to_string());
        }
        if let Some(o) = over.knot_offset {
            map.insert("knot_offset".into(), o.to_string());
        }
        let mut r = Reader { map: &map, bad: Vec::new() };
        let model = match map.get("model").map(String::as_str) {
            None | Some("functional") => ModelKind::Functional,
            Some("timeseries") => ModelKind::TimeSeries,
            Some(other) => {
                r.bad.push(format!("model = {other}"));
                ModelKind::Functional
            }
        };
        let path_of = |key: &str| map.get(key).map(|p| base.join(p));
        let d_rho = r.get("d_rho", 3usize);
        let d_gamma = r.get("d_gamma", 0usize);
        let mut smrpm = SmrpmConfig::new(d_rho, d_gamma).with_mass(r.get("mass", 1.0));
        if d_gamma == 0 {
            smrpm = smrpm.with_alpha(AlphaPrior::Beta {
                a: r.get("alpha_a", 1.0),
                b: r.get("alpha_b", 1.0),
            });
        } else {
            let mean = r.list("alpha_mean").unwrap_or(vec![0.0, 0.0]);
            let cov = r.list("alpha_cov").unwrap_or(vec![1.0, 0.0, 0.0, 1.0]);
            if mean.len() != 2 || cov.len() != 4 {
                r.bad.push("alpha_mean needs 2 values and alpha_cov 4".into());
            } else {
                smrpm = smrpm.with_alpha(AlphaPrior::Logistic {
                    mean: [mean[0], mean[1]],
                    cov: [[cov[0], cov[1]], [cov[2], cov[3]]],
                });
            }
        }
        let functional = FunctionalHyper {
            m0: r.get("m0", 0.0),
            s0_sq: r.get("s0_sq", 1.0),
            a_tau: r.get("a_tau", 1.0),
            b_tau: r.get("b_tau", 1.0),
            a_sigma: r.get("a_sigma", 1.0),
            b_sigma: r.get("b_sigma", 1.0),
        };
        let timeseries = TimeSeriesHyper {
            m0: functional.m0,
            s0_sq: functional.s0_sq,
            a_lambda: r.get("a_lambda", 1.0),
            b_lambda: r.get("b_lambda", 1.0),
            a_tau: functional.a_tau,
            b_tau: functional.b_tau,
            a_sigma: functional.a_sigma,
            b_sigma: functional.b_sigma,
        };
        let mut shifts = HashMap::new();
        if let Some(spec) = map.get("shifts") {
            for pair in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                match pair.rsplit_once(':').map(|(id, v)| (id.trim(), v.trim().parse::<f64>())) {
                    Some((id, Ok(v))) => {
                        shifts.insert(id.to_string(), v);
                    }
                    _ => r.bad.push(format!("shifts entry {pair}")),
                }
            }
        }
        let cfg = RunConfig {
            model,
            data: path_of("data"),
            truth: path_of("truth"),
            out: over.out.clone().or_else(|| path_of("out")).unwrap_or_else(|| PathBuf::from("smrpm-out")),
            iters: r.get("iters", 10_000),
            burn_in: r.get("burn_in", 5_000),
            thin: r.get("thin", 5),
            seed: r.get("seed", 1),
            chains: r.get("chains", 1),
            smrpm,
            degree: r.get("degree", 3),
            num_basis: r.opt("num_basis"),
            knot_offset: r.get("knot_offset", 0),
            knots: r.list("knots"),
            shifts,
            functional,
            timeseries,
            restarts: r.get("restarts", 20),
            estimate_iters: r.get("estimate_iters", 2_000),
            grid_points: r.get("grid_points", 200),
            svg: r.get("svg", false),
            n_rep: r.get("n_rep", 10),
            sigma2: r.get("sigma2", 1.0),
            order: r.get("order", 1),
            units: r.opt("units"),
            indices: r.opt("indices"),
            rounds: r.get("rounds", 100_000),
            sweeps: r.get("sweeps", 200_000),
            oracle_alpha: r.list("oracle_alpha").unwrap_or(vec![0.5]),
            canonical: map.clone(),
        };
        if !r.bad.is_empty() {
            return Err(CliError::new(format!("invalid config values: {}", r.bad.join("; "))));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let mut bad = Vec::new();
        if self.thin == 0 || self.burn_in >= self.iters {
            bad.push("need thin >= 1 and burn_in < iters".to_string());
        }
        if self.chains == 0 {
            bad.push("chains must be positive".into());
        }
        if self.grid_points < 2 || self.restarts == 0 || self.estimate_iters < 2 {
            bad.push("grid_points >= 2, restarts >= 1 and estimate_iters >= 2 required".into());
        }
        if let Err(e) = self.smrpm.validate() {
            bad.push(e.to_string());
        }
        if let Err(e) = self.functional.validate() {
            bad.push(e.to_string());
        }
        if let Err(e) = self.timeseries.validate() {
            bad.push(e.to_string());
        }
        for (key, path) in [("data", &self.data), ("truth", &self.truth)] {
            if let Some(p) = path {
                if !p.exists() {
                    bad.push(format!("{key}: {} does not exist", p.display()));
                }
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(CliError::new(format!("invalid config: {}", bad.join("; "))))
        }
    }

    /// SHA-256 over the sorted effective key/value pairs (output path excluded).
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.canonical.iter().filter(|(k, _)| k.as_str() != "out") {
            h.update(format!("{k}={v}\n").as_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn data_path(&self) -> Result<&Path, CliError> {
        self.data
            .as_deref()
            .ok_or_else(|| CliError::new("config key `data` is required for this command"))
    }

    pub fn truth_path(&self) -> Result<&Path, CliError> {
        self.truth
            .as_deref()
            .ok_or_else(|| CliError::new("config key `truth` is required for this command"))
    }
}
