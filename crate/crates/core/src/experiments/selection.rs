//! Kernel selection by empirical spectral bias.
//!
//! RRR is fitted on a training block for every kernel in the grid. The
//! distortion of each eigenfunction is estimated on a validation block, and
//! the kernel with the smallest mean spectral bias is selected. A held-out
//! test block scores one-step forecasts of the state itself.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{langevin_pairs, mean, write_echo};
use crate::diagnostics::{bias_factor, metric_distortion_on, PcrBiasForm};
use crate::dynamics::LangevinRun;
use crate::estimators::{eig, fit, Method, RegressorSpec};
use crate::output::{fmt_real, write_csv};
use crate::{Error, KernelSpec, PotentialSpec, Result, TrajectoryDataset};

/// Seven squared-exponential and twelve Matérn kernels.
pub fn default_selection_grid() -> Vec<KernelSpec> {
    let mut grid: Vec<KernelSpec> = [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35]
        .into_iter()
        .map(KernelSpec::rbf)
        .collect();
    for nu in [1.5, 2.5] {
        for l in [0.05, 0.1, 0.15, 0.2, 0.25, 0.3] {
            grid.push(KernelSpec::matern(nu, l));
        }
    }
    grid
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionConfig {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub rank: usize,
    pub gamma: f64,
    pub kernels: Vec<KernelSpec>,
    pub base_seed: u64,
    pub potential: PotentialSpec,
    pub run: LangevinRun,
    pub stride: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            train: 2000,
            validation: 1000,
            test: 1000,
            rank: 5,
            gamma: 1e-6,
            kernels: default_selection_grid(),
            base_seed: 0,
            potential: PotentialSpec::triple_well(1.0),
            run: LangevinRun::default(),
            stride: 10,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        let op = "model selection config";
        if self.train <= self.rank || self.validation == 0 || self.test == 0 {
            return Err(Error::contract(
                op,
                "need train > rank and nonempty validation and test blocks",
            ));
        }
        if self.kernels.is_empty() {
            return Err(Error::contract(op, "kernel grid is empty"));
        }
        if self.stride == 0 {
            return Err(Error::contract(op, "stride must be positive"));
        }
        self.potential.validate()?;
        for k in &self.kernels {
            RegressorSpec::new(Method::Rrr, self.rank, self.gamma, k.clone()).validate()?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelectionRow {
    pub kernel: KernelSpec,
    /// Mean over eigenvalues of the validation spectral bias.
    pub mean_s_hat: f64,
    pub rmse: f64,
    pub status: std::result::Result<(), String>,
}

#[derive(Clone, Debug)]
pub struct SelectionResult {
    pub config: SelectionConfig,
    pub rows: Vec<SelectionRow>,
}

fn score(spec: &RegressorSpec, train: &TrajectoryDataset, val: &TrajectoryDataset, test: &TrajectoryDataset) -> Result<(f64, f64)> {
    let model = fit(spec, train)?;
    let d = eig(&model)?;
    let factor = bias_factor(&model, PcrBiasForm::Root)?;
    let eta = metric_distortion_on(&model, &d, val.x.as_ref())?;
    let s: Vec<f64> = eta.iter().map(|e| e * factor).collect();
    let pred = model.predict(test.x.as_ref(), train.y.as_ref())?;
    let mut sq = 0.0;
    for i in 0..pred.nrows() {
        for j in 0..pred.ncols() {
            sq += (pred[(i, j)] - test.y[(i, j)]).powi(2);
        }
    }
    let rmse = (sq / (pred.nrows() * pred.ncols()) as f64).sqrt();
    Ok((mean(&s), rmse))
}

pub fn run_model_selection(config: &SelectionConfig) -> Result<SelectionResult> {
    config.validate()?;
    let total = config.train + config.validation + config.test;
    let data = langevin_pairs(&config.potential, &config.run, config.stride, total, config.base_seed)?;
    let train = data.slice(0, config.train);
    let val = data.slice(config.train, config.train + config.validation);
    let test = data.slice(config.train + config.validation, total);
    let rows = config
        .kernels
        .iter()
        .map(|k| {
            let spec = RegressorSpec::new(Method::Rrr, config.rank, config.gamma, k.clone());
            match score(&spec, &train, &val, &test) {
                Ok((s, rmse)) => SelectionRow {
                    kernel: k.clone(),
                    mean_s_hat: s,
                    rmse,
                    status: Ok(()),
                },
                Err(e) => {
                    log::warn!("kernel {} failed: {e}", k.label());
                    SelectionRow {
                        kernel: k.clone(),
                        mean_s_hat: f64::NAN,
                        rmse: f64::NAN,
                        status: Err(e.to_string()),
                    }
                }
            }
        })
        .collect();
    Ok(SelectionResult {
        config: config.clone(),
        rows,
    })
}

impl SelectionResult {
    /// Index of the successful kernel with the smallest mean spectral bias;
    /// the first one wins ties.
    pub fn selected(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, r) in self.rows.iter().enumerate() {
            if r.status.is_ok() && best.is_none_or(|b| r.mean_s_hat < self.rows[b].mean_s_hat) {
                best = Some(i);
            }
        }
        best
    }

    /// One-based position of each kernel when sorted by forecast RMSE, among
    /// successful kernels.
    pub fn rmse_ranks(&self) -> Vec<Option<usize>> {
        self.rows
            .iter()
            .map(|r| {
                r.status.as_ref().ok().map(|_| {
                    1 + self
                        .rows
                        .iter()
                        .filter(|o| o.status.is_ok() && o.rmse < r.rmse)
                        .count()
                })
            })
            .collect()
    }

    /// Writes `selection.csv` and `selection_config.toml`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let chosen = self.selected();
        let ranks = self.rmse_ranks();
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                vec![
                    (i + 1).to_string(),
                    r.kernel.label(),
                    fmt_real(r.mean_s_hat),
                    fmt_real(r.rmse),
                    ranks[i].map(|k| k.to_string()).unwrap_or_default(),
                    (chosen == Some(i)).to_string(),
                    match &r.status {
                        Ok(()) => "ok".into(),
                        Err(m) => format!("failed: {m}"),
                    },
                ]
            })
            .collect();
        write_csv(
            dir.join("selection.csv"),
            &["kernel_id", "kernel", "mean_s_hat", "rmse", "rmse_rank", "selected", "status"],
            &rows,
        )?;
        write_echo(&self.config, &dir.join("selection_config.toml"))
    }
}
