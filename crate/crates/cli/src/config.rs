//! TOML configs for the subcommands and their strict loader.
//!
//! Every struct rejects unknown keys. Fields a flag can override are
//! optional here and resolved in the command that uses them.

use std::path::Path;

use koopspec::dynamics::LangevinRun;
use koopspec::reference::Grid;
use koopspec::PotentialSpec;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Parse a config file, naming the path and the offending key on failure.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    parse(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
}

pub fn parse<T: DeserializeOwned>(text: &str) -> Result<T, String> {
    let de = toml::Deserializer::new(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        let inner = e.into_inner().to_string();
        if key == "." {
            inner.trim_end().to_string()
        } else {
            format!("at key `{key}`: {}", inner.trim_end())
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum System {
    /// Exact unit-lag Ornstein–Uhlenbeck recursion.
    Ou,
    /// Overdamped Langevin dynamics in `potential`.
    Langevin,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub system: Option<System>,
    /// Recorded states written to the CSV.
    pub n: Option<usize>,
    pub seed: Option<u64>,
    /// Discarded OU steps before recording.
    #[serde(default)]
    pub burn_in: usize,
    #[serde(default = "triple_well")]
    pub potential: PotentialSpec,
    #[serde(default)]
    pub run: LangevinRun,
    /// Langevin: integration records kept, one every `stride`.
    #[serde(default = "one")]
    pub stride: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            system: None,
            n: None,
            seed: None,
            burn_in: 0,
            potential: triple_well(),
            run: LangevinRun::default(),
            stride: 1,
        }
    }
}

fn triple_well() -> PotentialSpec {
    PotentialSpec::triple_well(1.0)
}

fn one() -> usize {
    1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceSystem {
    /// Closed-form Ornstein–Uhlenbeck spectrum.
    Ou,
    /// Discretized generator of `potential`.
    Generator,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    pub system: Option<ReferenceSystem>,
    pub count: Option<usize>,
    pub lag_time: Option<f64>,
    #[serde(default = "triple_well")]
    pub potential: PotentialSpec,
    /// Defaults to a grid suited to `potential`.
    pub grid: Option<Grid>,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig {
            system: None,
            count: None,
            lag_time: None,
            potential: triple_well(),
            grid: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use koopspec::experiments::{Fig1Config, RatesConfig};
    use koopspec::RegressorSpec;

    #[test]
    fn duplicate_key_is_named() {
        let err = parse::<Fig1Config>("rank = 3\nrank = 4").unwrap_err();
        assert!(err.contains("rank"), "{err}");
    }

    #[test]
    fn type_mismatch_reports_key_path() {
        let err = parse::<RatesConfig>("trials = 3\n[run]\ndt = \"fast\"").unwrap_err();
        assert!(err.contains("run.dt"), "{err}");
        // tagged kernel tables report the enclosing key
        let text = "method = \"rrr\"\nrank = 2\ngamma = 1e-3\n[kernel]\ntype = \"rbf\"\nlengthscale = \"wide\"";
        let err = parse::<RegressorSpec>(text).unwrap_err();
        assert!(err.contains("kernel") && err.contains("wide"), "{err}");
    }

    #[test]
    fn unknown_key_rejected() {
        let err = parse::<SimulateConfig>("system = \"ou\"\nsteps = 3").unwrap_err();
        assert!(err.contains("steps"), "{err}");
    }

    #[test]
    fn empty_simulate_config_has_no_system() {
        let cfg: SimulateConfig = parse("").unwrap();
        assert_eq!(cfg.system, None);
        assert_eq!(cfg.stride, 1);
    }
}
