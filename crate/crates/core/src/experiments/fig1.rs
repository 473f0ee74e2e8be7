//! Leading OU eigenvalues under the good, bad and ugly kernels.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_trials, mean, write_echo, MIN_SUCCESS_RATIO};
use crate::diagnostics::{spectral_report, PcrBiasForm, SpectralReport, REPORT_HEADER};
use crate::dynamics::{simulate_ou, trajectory_to_pairs};
use crate::estimators::{eig, fit, Method, RegressorSpec};
use crate::output::write_csv;
use crate::reference::ou_spectrum;
use crate::{Error, KernelSpec, Result};

/// Distance from the reference set beyond which an estimate counts as spurious.
pub const SPURIOUS_DISTANCE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelPreset {
    Good,
    Bad,
    Ugly,
}

impl KernelPreset {
    pub fn name(&self) -> &'static str {
        match self {
            KernelPreset::Good => "good",
            KernelPreset::Bad => "bad",
            KernelPreset::Ugly => "ugly",
        }
    }

    pub fn kernel(&self, rank: usize) -> Result<KernelSpec> {
        match self {
            KernelPreset::Good => Ok(KernelSpec::good()),
            KernelPreset::Bad => KernelSpec::bad(rank),
            KernelPreset::Ugly => KernelSpec::ugly(rank),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig1Config {
    pub rank: usize,
    #[serde(default = "Fig1Config::default_n")]
    pub n: usize,
    #[serde(default = "Fig1Config::default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "Fig1Config::default_gamma")]
    pub gamma: f64,
    #[serde(default = "Fig1Config::default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "Fig1Config::default_kernels")]
    pub kernels: Vec<KernelPreset>,
    /// How many true eigenvalues estimates are matched against; 0 means `rank`.
    #[serde(default)]
    pub reference_count: usize,
    #[serde(default)]
    pub pcr_bias: PcrBiasForm,
}

impl Fig1Config {
    fn default_n() -> usize {
        4000
    }
    fn default_trials() -> usize {
        10
    }
    fn default_gamma() -> f64 {
        1e-4
    }
    fn default_methods() -> Vec<Method> {
        vec![Method::Pcr, Method::Rrr]
    }
    fn default_kernels() -> Vec<KernelPreset> {
        vec![KernelPreset::Good, KernelPreset::Bad, KernelPreset::Ugly]
    }

    /// A config with every default filled in.
    pub fn with_rank(rank: usize) -> Self {
        Fig1Config {
            rank,
            n: Self::default_n(),
            trials: Self::default_trials(),
            base_seed: 0,
            gamma: Self::default_gamma(),
            methods: Self::default_methods(),
            kernels: Self::default_kernels(),
            reference_count: rank,
            pcr_bias: PcrBiasForm::Root,
        }
    }

    /// Fill derived defaults and check the config.
    pub fn resolve(mut self) -> Result<Self> {
        let op = "fig1 config";
        check_trials(op, self.trials)?;
        if self.rank == 0 {
            return Err(Error::contract(op, "rank must be at least 1"));
        }
        if self.n < 2 {
            return Err(Error::contract(op, "n must be at least 2"));
        }
        if self.methods.is_empty() || self.kernels.is_empty() {
            return Err(Error::contract(op, "methods and kernels must be nonempty"));
        }
        if self.reference_count == 0 {
            self.reference_count = self.rank;
        }
        for k in &self.kernels {
            k.kernel(self.rank)?;
        }
        RegressorSpec::new(self.methods[0], self.rank, self.gamma, KernelSpec::good()).validate()?;
        Ok(self)
    }
}

/// One fit: a trial, a kernel and a method.
#[derive(Clone, Debug, PartialEq)]
pub struct Fig1Record {
    pub trial: usize,
    pub kernel: KernelPreset,
    pub method: Method,
    /// Below `rank` when the kernel cannot support the requested rank.
    pub rank_used: usize,
    pub outcome: std::result::Result<SpectralReport, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Fig1Summary {
    pub kernel: KernelPreset,
    pub method: Method,
    pub successes: usize,
    pub trials: usize,
    /// Trial mean of `|λ̂ᵢ - μᵢ|` with eigenvalues paired by index.
    pub indexed_err: Vec<f64>,
    /// Successful trials with an estimate at least [`SPURIOUS_DISTANCE`]
    /// away from every matched reference eigenvalue.
    pub spurious_trials: usize,
}

impl Fig1Summary {
    pub fn success_ratio(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }

    pub fn enough_successes(&self) -> bool {
        self.success_ratio() >= MIN_SUCCESS_RATIO
    }

    /// Mean over the leading `count` indices.
    pub fn mean_err(&self, count: usize) -> f64 {
        mean(&self.indexed_err[..count.min(self.indexed_err.len())])
    }

    pub fn max_err(&self) -> f64 {
        self.indexed_err.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug)]
pub struct Fig1Result {
    pub config: Fig1Config,
    pub records: Vec<Fig1Record>,
    pub truth: Vec<f64>,
}

pub fn run_fig1(config: &Fig1Config) -> Result<Fig1Result> {
    let config = config.clone().resolve()?;
    let r = config.rank;
    let reference = ou_spectrum(config.reference_count.max(r), 1.0)?;
    let matched_against = reference.eigenvalues_complex()[..config.reference_count].to_vec();
    let mut records = Vec::new();
    for trial in 0..config.trials {
        let seed = config.base_seed + trial as u64;
        let data = simulate_ou(config.n + 1, seed, 0).and_then(|t| trajectory_to_pairs(&t, 1));
        for &preset in &config.kernels {
            let kernel = preset.kernel(r)?;
            for &method in &config.methods {
                let mut rank_used = r;
                let outcome = data.as_ref().map_err(|e| e.to_string()).and_then(|data| {
                    let mut spec = RegressorSpec::new(method, r, config.gamma, kernel.clone());
                    let model = match fit(&spec, data) {
                        Err(Error::InsufficientRank { achievable, .. }) if achievable >= 1 => {
                            log::info!(
                                "trial {trial} {} {}: rank {r} unavailable, using {achievable}",
                                preset.name(),
                                method.name()
                            );
                            spec.rank = achievable;
                            rank_used = achievable;
                            fit(&spec, data)
                        }
                        other => other,
                    }
                    .map_err(|e| e.to_string())?;
                    let d = eig(&model).map_err(|e| e.to_string())?;
                    spectral_report(&model, &d, Some(&matched_against), config.pcr_bias).map_err(|e| e.to_string())
                });
                if let Err(msg) = &outcome {
                    log::warn!("trial {trial} {} {} failed: {msg}", preset.name(), method.name());
                }
                records.push(Fig1Record {
                    trial,
                    kernel: preset,
                    method,
                    rank_used,
                    outcome,
                });
            }
        }
    }
    Ok(Fig1Result {
        truth: reference.eigenvalues,
        config,
        records,
    })
}

impl Fig1Result {
    pub fn summary(&self) -> Vec<Fig1Summary> {
        let mut out = Vec::new();
        for &kernel in &self.config.kernels {
            for &method in &self.config.methods {
                let reports: Vec<&SpectralReport> = self
                    .records
                    .iter()
                    .filter(|r| r.kernel == kernel && r.method == method)
                    .filter_map(|r| r.outcome.as_ref().ok())
                    .collect();
                let count = reports.iter().map(|r| r.rows.len()).max().unwrap_or(0).min(self.truth.len());
                let indexed_err = (0..count)
                    .map(|i| {
                        let errs: Vec<f64> = reports
                            .iter()
                            .filter_map(|rep| rep.rows.get(i))
                            .map(|row| (row.lambda - self.truth[i]).norm())
                            .collect();
                        mean(&errs)
                    })
                    .collect();
                let spurious_trials = reports
                    .iter()
                    .filter(|rep| {
                        rep.rows
                            .iter()
                            .any(|row| row.matched.is_some_and(|m| m.error >= SPURIOUS_DISTANCE))
                    })
                    .count();
                out.push(Fig1Summary {
                    kernel,
                    method,
                    successes: reports.len(),
                    trials: self.config.trials,
                    indexed_err,
                    spurious_trials,
                });
            }
        }
        out
    }

    /// Writes `fig1_eigenvalues.csv`, `fig1_summary.csv` and `fig1_config.toml`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut header: Vec<&str> = REPORT_HEADER.to_vec();
        header.extend(["rank_used", "status"]);
        let mut rows = Vec::new();
        for rec in &self.records {
            match &rec.outcome {
                Ok(report) => {
                    for mut row in report.csv_rows(rec.trial, rec.method.name(), rec.kernel.name()) {
                        row.push(rec.rank_used.to_string());
                        row.push("ok".into());
                        rows.push(row);
                    }
                }
                Err(msg) => {
                    let mut row = vec![rec.trial.to_string(), rec.method.name().into(), rec.kernel.name().into()];
                    row.resize(REPORT_HEADER.len(), String::new());
                    row.push(rec.rank_used.to_string());
                    row.push(format!("failed: {msg}"));
                    rows.push(row);
                }
            }
        }
        write_csv(dir.join("fig1_eigenvalues.csv"), &header, &rows)?;

        let mut rows = Vec::new();
        for s in self.summary() {
            for (i, e) in s.indexed_err.iter().enumerate() {
                rows.push(vec![
                    s.kernel.name().into(),
                    s.method.name().into(),
                    (i + 1).to_string(),
                    crate::output::fmt_real(self.truth[i]),
                    crate::output::fmt_real(*e),
                    s.spurious_trials.to_string(),
                    s.successes.to_string(),
                    s.trials.to_string(),
                ]);
            }
        }
        write_csv(
            dir.join("fig1_summary.csv"),
            &["kernel_id", "method", "i", "mu", "mean_abs_err", "spurious_trials", "successes", "trials"],
            &rows,
        )?;
        write_echo(&self.config, &dir.join("fig1_config.toml"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_resolves_defaults() {
        let cfg: Fig1Config = toml::from_str("rank = 3").unwrap();
        let cfg = cfg.resolve().unwrap();
        assert_eq!((cfg.n, cfg.trials, cfg.gamma, cfg.reference_count), (4000, 10, 1e-4, 3));
        assert_eq!(cfg, Fig1Config::with_rank(3));
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(toml::from_str::<Fig1Config>("rank = 3\ngama = 1.0").is_err());
    }

    #[test]
    fn small_run_is_deterministic() {
        let cfg = Fig1Config {
            n: 200,
            trials: 2,
            ..Fig1Config::with_rank(3)
        };
        let a = run_fig1(&cfg).unwrap();
        let b = run_fig1(&cfg).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.records.len(), 2 * 3 * 2);
        let dir = tempfile::tempdir().unwrap();
        a.write(dir.path()).unwrap();
        let first = std::fs::read(dir.path().join("fig1_eigenvalues.csv")).unwrap();
        b.write(dir.path()).unwrap();
        assert_eq!(first, std::fs::read(dir.path().join("fig1_eigenvalues.csv")).unwrap());
        let text = String::from_utf8(first).unwrap();
        assert!(text.starts_with("trial,method,kernel_id,i,lambda_re"));
    }
}
