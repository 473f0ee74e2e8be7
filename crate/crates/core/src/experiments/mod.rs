//! Desk-scale reproductions of the three experiments.
//!
//! Each runner is deterministic in its config: trial `t` draws its data from
//! seed `base_seed + t`, trials run in order, and rows are emitted in a fixed
//! order. A failing fit marks its trial as failed instead of aborting the
//! sweep. Summaries average over successful trials only and report how many
//! succeeded.

mod fig1;
mod rates;
mod selection;

pub use fig1::{run_fig1, Fig1Config, Fig1Record, Fig1Result, Fig1Summary, KernelPreset, SPURIOUS_DISTANCE};
pub use rates::{run_langevin_rates, IndexedErrors, RatesConfig, RatesRecord, RatesResult, RatesSummary};
pub use selection::{default_selection_grid, run_model_selection, SelectionConfig, SelectionResult, SelectionRow};

use std::path::Path;

use serde::Serialize;

use crate::dynamics::{simulate_langevin, trajectory_to_pairs, LangevinRun};
use crate::{Error, PotentialSpec, Result, TrajectoryDataset};

/// Fraction of trials that must succeed for a summary to count.
pub const MIN_SUCCESS_RATIO: f64 = 0.8;

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::contract("loglog_slope", "need at least two paired points"));
    }
    if x.iter().chain(y).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::contract("loglog_slope", "values must be positive and finite"));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::contract("loglog_slope", "abscissae are all equal"));
    }
    Ok(sxy / sxx)
}

/// Langevin pairs at `stride` recorded steps apart: `count` consecutive
/// pairs from a single trajectory thinned by `stride`.
pub(crate) fn langevin_pairs(
    potential: &PotentialSpec,
    run: &LangevinRun,
    stride: usize,
    count: usize,
    seed: u64,
) -> Result<TrajectoryDataset> {
    if stride == 0 {
        return Err(Error::contract("langevin_pairs", "stride must be positive"));
    }
    let traj = simulate_langevin(potential, run, count * stride + 1, seed)?;
    trajectory_to_pairs(&traj.thin(stride), 1)
}

/// Writes the resolved config next to the outputs it produced.
pub(crate) fn write_echo<T: Serialize>(config: &T, path: &Path) -> Result<()> {
    let text = toml::to_string(config).map_err(|e| Error::Unsupported(format!("config echo: {e}")))?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn check_trials(op: &'static str, trials: usize) -> Result<()> {
    if trials == 0 {
        Err(Error::contract(op, "trials must be at least 1"))
    } else {
        Ok(())
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_exact_power_law() {
        let x = [250.0, 500.0, 1000.0, 2000.0];
        let y: Vec<f64> = x.iter().map(|n: &f64| n.powf(-0.5)).collect();
        assert!((loglog_slope(&x, &y).unwrap() + 0.5).abs() < 1e-12);
    }

    #[test]
    fn slope_contracts() {
        assert!(loglog_slope(&[1.0], &[1.0]).is_err());
        assert!(loglog_slope(&[1.0, 2.0], &[0.0, 1.0]).is_err());
        assert!(loglog_slope(&[2.0, 2.0], &[1.0, 3.0]).is_err());
    }
}
