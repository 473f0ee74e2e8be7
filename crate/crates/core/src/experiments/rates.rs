//! Error decay with sample size on the triple-well Langevin system.

use std::path::Path;

use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use super::{check_trials, langevin_pairs, loglog_slope, mean, write_echo, MIN_SUCCESS_RATIO};
use crate::dynamics::LangevinRun;
use crate::estimators::{eig, fit, Method, RegressorSpec};
use crate::output::{fmt_real, write_csv};
use crate::reference::{generator_spectrum, Grid, ReferenceSpectrum};
use crate::{Error, KernelSpec, PotentialSpec, Result, TrajectoryDataset};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RatesConfig {
    /// Sample sizes; every trial uses prefixes of one trajectory.
    pub ns: Vec<usize>,
    pub trials: usize,
    pub base_seed: u64,
    pub rank: usize,
    pub gamma: f64,
    pub kernel: KernelSpec,
    pub methods: Vec<Method>,
    pub potential: PotentialSpec,
    pub run: LangevinRun,
    /// Recorded steps per lag; the lag time is `stride * run.dt`.
    pub stride: usize,
    pub grid: Grid,
}

impl Default for RatesConfig {
    fn default() -> Self {
        RatesConfig {
            ns: vec![250, 500, 1000, 2000],
            trials: 20,
            base_seed: 0,
            rank: 4,
            gamma: 1e-5,
            kernel: KernelSpec::rbf(0.175),
            methods: vec![Method::Pcr, Method::Rrr],
            potential: PotentialSpec::triple_well(1.0),
            run: LangevinRun::default(),
            stride: 10,
            grid: Grid::triple_well_default(),
        }
    }
}

impl RatesConfig {
    pub fn lag_time(&self) -> f64 {
        self.run.dt * self.stride as f64
    }

    pub fn validate(&self) -> Result<()> {
        let op = "rates config";
        check_trials(op, self.trials)?;
        if self.ns.len() < 2 || self.ns.iter().any(|&n| n < 2) {
            return Err(Error::contract(op, "need at least two sample sizes, each at least 2"));
        }
        if self.ns.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::contract(op, "sample sizes must be strictly increasing"));
        }
        if self.methods.is_empty() {
            return Err(Error::contract(op, "methods must be nonempty"));
        }
        if self.stride == 0 {
            return Err(Error::contract(op, "stride must be positive"));
        }
        self.potential.validate()?;
        RegressorSpec::new(self.methods[0], self.rank, self.gamma, self.kernel.clone()).validate()
    }
}

/// Per-index errors of one fit.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexedErrors {
    pub lambda: Vec<c64>,
    pub abs_err: Vec<f64>,
    /// Squared `L²(π)` distance to the true eigenfunction.
    pub eigfun_err: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RatesRecord {
    pub trial: usize,
    pub method: Method,
    pub n: usize,
    pub outcome: std::result::Result<IndexedErrors, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RatesSummary {
    pub method: Method,
    /// Zero-based eigenvalue index.
    pub index: usize,
    /// Trial means, one per sample size.
    pub mean_abs_err: Vec<f64>,
    pub mean_eigfun_err: Vec<f64>,
    pub successes: Vec<usize>,
    pub eigenvalue_slope: f64,
    pub eigenfunction_slope: f64,
}

impl RatesSummary {
    pub fn enough_successes(&self, trials: usize) -> bool {
        self.successes.iter().all(|&s| s as f64 >= MIN_SUCCESS_RATIO * trials as f64)
    }
}

#[derive(Clone, Debug)]
pub struct RatesResult {
    pub config: RatesConfig,
    pub reference: ReferenceSpectrum,
    pub records: Vec<RatesRecord>,
    /// Aligned estimated eigenfunctions at the reference nodes, from the first
    /// trial at the largest sample size, keyed by method.
    pub eigenfunctions: Vec<(Method, Mat<c64>)>,
}

fn fit_one(
    spec: &RegressorSpec,
    data: &TrajectoryDataset,
    reference: &ReferenceSpectrum,
    nodes: &Mat<f64>,
) -> Result<(IndexedErrors, Mat<c64>)> {
    let model = fit(spec, data)?;
    let d = eig(&model)?;
    let count = d.len().min(reference.len());
    let psi = model.eigenfunctions(&d, nodes.as_ref())?;
    let mut aligned = Mat::zeros(nodes.nrows(), count);
    let mut errs = IndexedErrors {
        lambda: d.values[..count].to_vec(),
        abs_err: Vec::with_capacity(count),
        eigfun_err: Vec::with_capacity(count),
    };
    for i in 0..count {
        errs.abs_err.push((d.values[i] - reference.eigenvalues[i]).norm());
        let col: Vec<c64> = psi.col(i).iter().copied().collect();
        errs.eigfun_err.push(reference.l2pi_compare(i, &col)?);
        for (k, v) in reference.align(i, &col)?.into_iter().enumerate() {
            aligned[(k, i)] = v;
        }
    }
    Ok((errs, aligned))
}

pub fn run_langevin_rates(config: &RatesConfig) -> Result<RatesResult> {
    config.validate()?;
    let reference = generator_spectrum(&config.potential, &config.grid, config.rank, config.lag_time())?;
    let nodes = Mat::from_fn(reference.nodes.len(), 1, |i, _| reference.nodes[i]);
    let n_max = *config.ns.last().expect("validated");
    let mut records = Vec::new();
    let mut eigenfunctions = Vec::new();
    for trial in 0..config.trials {
        let seed = config.base_seed + trial as u64;
        let data = langevin_pairs(&config.potential, &config.run, config.stride, n_max, seed);
        for &n in &config.ns {
            for &method in &config.methods {
                let spec = RegressorSpec::new(method, config.rank, config.gamma, config.kernel.clone());
                let outcome = match &data {
                    Ok(data) => fit_one(&spec, &data.slice(0, n), &reference, &nodes).map_err(|e| e.to_string()),
                    Err(e) => Err(e.to_string()),
                };
                let outcome = outcome.map(|(errs, aligned)| {
                    if trial == 0 && n == n_max {
                        eigenfunctions.push((method, aligned));
                    }
                    errs
                });
                if let Err(msg) = &outcome {
                    log::warn!("trial {trial} n={n} {} failed: {msg}", method.name());
                }
                records.push(RatesRecord {
                    trial,
                    method,
                    n,
                    outcome,
                });
            }
        }
    }
    Ok(RatesResult {
        config: config.clone(),
        reference,
        records,
        eigenfunctions,
    })
}

impl RatesResult {
    pub fn summary(&self) -> Result<Vec<RatesSummary>> {
        let ns: Vec<f64> = self.config.ns.iter().map(|&n| n as f64).collect();
        let mut out = Vec::new();
        for &method in &self.config.methods {
            for index in 0..self.reference.len() {
                let mut s = RatesSummary {
                    method,
                    index,
                    mean_abs_err: Vec::new(),
                    mean_eigfun_err: Vec::new(),
                    successes: Vec::new(),
                    eigenvalue_slope: f64::NAN,
                    eigenfunction_slope: f64::NAN,
                };
                for &n in &self.config.ns {
                    let (mut a, mut f) = (Vec::new(), Vec::new());
                    for rec in self.records.iter().filter(|r| r.method == method && r.n == n) {
                        if let Ok(e) = &rec.outcome {
                            if index < e.abs_err.len() {
                                a.push(e.abs_err[index]);
                                f.push(e.eigfun_err[index]);
                            }
                        }
                    }
                    s.successes.push(a.len());
                    s.mean_abs_err.push(mean(&a));
                    s.mean_eigfun_err.push(mean(&f));
                }
                s.eigenvalue_slope = loglog_slope(&ns, &s.mean_abs_err).unwrap_or(f64::NAN);
                s.eigenfunction_slope = loglog_slope(&ns, &s.mean_eigfun_err).unwrap_or(f64::NAN);
                out.push(s);
            }
        }
        Ok(out)
    }

    /// Writes per-fit errors, per-size means, slopes, the reference spectrum,
    /// estimated eigenfunctions and the config echo, all prefixed `rates_`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut rows = Vec::new();
        for rec in &self.records {
            let head = [rec.trial.to_string(), rec.method.name().into(), rec.n.to_string()];
            match &rec.outcome {
                Ok(e) => {
                    for i in 0..e.abs_err.len() {
                        let mut row = head.to_vec();
                        row.extend([
                            (i + 1).to_string(),
                            fmt_real(e.lambda[i].re),
                            fmt_real(e.lambda[i].im),
                            fmt_real(self.reference.eigenvalues[i]),
                            fmt_real(e.abs_err[i]),
                            fmt_real(e.eigfun_err[i]),
                            "ok".into(),
                        ]);
                        rows.push(row);
                    }
                }
                Err(msg) => {
                    let mut row = head.to_vec();
                    row.resize(9, String::new());
                    row.push(format!("failed: {msg}"));
                    rows.push(row);
                }
            }
        }
        write_csv(
            dir.join("rates_errors.csv"),
            &["trial", "method", "n", "i", "lambda_re", "lambda_im", "mu", "abs_err", "eigfun_err", "status"],
            &rows,
        )?;

        let summary = self.summary()?;
        let mut rows = Vec::new();
        for s in &summary {
            for (k, n) in self.config.ns.iter().enumerate() {
                rows.push(vec![
                    s.method.name().into(),
                    (s.index + 1).to_string(),
                    n.to_string(),
                    fmt_real(s.mean_abs_err[k]),
                    fmt_real(s.mean_eigfun_err[k]),
                    s.successes[k].to_string(),
                ]);
            }
        }
        write_csv(
            dir.join("rates_summary.csv"),
            &["method", "i", "n", "mean_abs_err", "mean_eigfun_err", "successes"],
            &rows,
        )?;
        let rows: Vec<Vec<String>> = summary
            .iter()
            .map(|s| {
                vec![
                    s.method.name().into(),
                    (s.index + 1).to_string(),
                    fmt_real(s.eigenvalue_slope),
                    fmt_real(s.eigenfunction_slope),
                ]
            })
            .collect();
        write_csv(
            dir.join("rates_slopes.csv"),
            &["method", "i", "eigenvalue_slope", "eigenfunction_slope"],
            &rows,
        )?;

        let mut rows = Vec::new();
        for (method, values) in &self.eigenfunctions {
            for i in 0..values.ncols() {
                for k in 0..values.nrows() {
                    rows.push(vec![
                        method.name().into(),
                        (i + 1).to_string(),
                        fmt_real(self.reference.nodes[k]),
                        fmt_real(values[(k, i)].re),
                        fmt_real(values[(k, i)].im),
                        fmt_real(self.reference.values[(k, i)]),
                    ]);
                }
            }
        }
        write_csv(
            dir.join("rates_eigenfunctions.csv"),
            &["method", "i", "x", "estimate_re", "estimate_im", "reference"],
            &rows,
        )?;
        self.reference.write_eigenvalues_csv(dir.join("rates_reference_eigenvalues.csv"))?;
        self.reference.write_eigenfunctions_csv(dir.join("rates_reference_eigenfunctions.csv"))?;
        write_echo(&self.config, &dir.join("rates_config.toml"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RatesConfig {
        RatesConfig {
            ns: vec![60, 120],
            trials: 2,
            grid: Grid {
                x_min: -1.5,
                x_max: 1.5,
                points: 400,
            },
            run: LangevinRun {
                burn_in: 500,
                ..LangevinRun::default()
            },
            ..RatesConfig::default()
        }
    }

    #[test]
    fn defaults_follow_the_experiment() {
        let c = RatesConfig::default();
        assert_eq!(c.ns, [250, 500, 1000, 2000]);
        assert!((c.lag_time() - 0.1).abs() < 1e-15);
        let parsed: RatesConfig = toml::from_str("trials = 3").unwrap();
        assert_eq!(parsed.trials, 3);
        assert_eq!(parsed.kernel, KernelSpec::rbf(0.175));
    }

    #[test]
    fn small_run_writes_outputs() {
        let res = run_langevin_rates(&small()).unwrap();
        assert_eq!(res.records.len(), 2 * 2 * 2);
        assert!(res.records.iter().all(|r| r.outcome.is_ok()));
        let summary = res.summary().unwrap();
        assert_eq!(summary.len(), 2 * 4);
        let dir = tempfile::tempdir().unwrap();
        res.write(dir.path()).unwrap();
        for f in ["rates_errors.csv", "rates_summary.csv", "rates_slopes.csv", "rates_config.toml"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let again = run_langevin_rates(&small()).unwrap();
        assert_eq!(res.records, again.records);
    }

    #[test]
    fn rejects_unsorted_sizes() {
        let c = RatesConfig {
            ns: vec![100, 50],
            ..RatesConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
