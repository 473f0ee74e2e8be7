//! Subcommand implementations. Every output path is resolved inside the
//! output directory.

use std::path::{Component, Path, PathBuf};

use koopspec::diagnostics::{spectral_report, REPORT_HEADER};
use koopspec::dynamics::{load_csv_trajectory, simulate_langevin, simulate_ou, trajectory_to_pairs};
use koopspec::estimators::{eig, fit, read_model, write_model};
use koopspec::experiments::{
    run_fig1, run_langevin_rates, run_model_selection, Fig1Config, RatesConfig, SelectionConfig,
};
use koopspec::output::{fmt_real, write_csv};
use koopspec::reference::{default_grid, generator_spectrum, ou_spectrum};
use koopspec::{c64, PcrBiasForm, RegressorSpec};
use serde::Serialize;

use crate::config::{self, ReferenceConfig, ReferenceSystem, SimulateConfig, System};
use crate::{BiasForm, CliError, Command, ExperimentName, Global};

const DEFAULT_STEPS: usize = 1000;
const DEFAULT_REFERENCE_COUNT: usize = 5;
const DEFAULT_LAG_TIME: f64 = 1.0;

pub fn dispatch(global: &Global, command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate { config, system, n, out } => simulate(global, config.as_deref(), system, n, &out),
        Command::Fit { config, data, lag, out } => fit_model(global, &config, &data, lag, &out),
        Command::Eig { model, out } => eigenvalues(global, &model, &out),
        Command::Diagnose {
            model,
            reference,
            ou,
            pcr_bias,
            out,
        } => diagnose(global, &model, reference.as_deref(), ou, pcr_bias, &out),
        Command::Reference {
            config,
            system,
            count,
            lag_time,
        } => reference(global, config.as_deref(), system, count, lag_time),
        Command::Experiment { name, config } => experiment(global, name, config.as_deref()),
    }
}

/// `rel` joined onto the output directory; absolute paths and `..` are refused.
fn output_path(global: &Global, rel: &Path) -> Result<PathBuf, CliError> {
    let escapes = rel
        .components()
        .any(|c| !matches!(c, Component::Normal(_) | Component::CurDir));
    if escapes || rel.as_os_str().is_empty() {
        return Err(CliError::Usage(format!(
            "output path {} must be relative to the output directory and stay inside it",
            rel.display()
        )));
    }
    Ok(global.out_dir.join(rel))
}

fn require_file(kind: &str, path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{kind} file not found: {}", path.display())))
    }
}

/// Rejected configs are usage errors, not domain failures.
fn invalid(e: koopspec::Error) -> CliError {
    CliError::Usage(format!("invalid config: {e}"))
}

fn echo<T: Serialize>(global: &Global, config: &T, rel: &Path) -> Result<(), CliError> {
    let path = output_path(global, rel)?;
    let text = toml::to_string(config).map_err(|e| CliError::Usage(format!("cannot serialize config: {e}")))?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| koopspec::Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    std::fs::write(&path, text).map_err(|e| koopspec::Error::Io { path, source: e })?;
    Ok(())
}

fn simulate(
    global: &Global,
    config: Option<&Path>,
    system: Option<System>,
    n: Option<usize>,
    out: &Path,
) -> Result<(), CliError> {
    let mut cfg: SimulateConfig = config.map(config::load).transpose()?.unwrap_or_default();
    let system = system.or(cfg.system).ok_or_else(|| {
        CliError::Usage("simulate needs a system: pass --system or set `system` in the config".into())
    })?;
    cfg.system = Some(system);
    let n = *cfg.n.insert(n.or(cfg.n).unwrap_or(DEFAULT_STEPS));
    let seed = *cfg.seed.insert(global.seed.or(cfg.seed).unwrap_or(0));
    if cfg.stride == 0 {
        return Err(CliError::Usage("invalid config: stride must be positive".into()));
    }
    let path = output_path(global, out)?;
    let traj = match system {
        System::Ou => simulate_ou(n, seed, cfg.burn_in)?,
        System::Langevin => {
            let steps = n.saturating_sub(1) * cfg.stride + 1;
            simulate_langevin(&cfg.potential, &cfg.run, steps.max(n), seed)?.thin(cfg.stride)
        }
    };
    traj.write_csv(&path)?;
    echo(global, &cfg, &out.with_extension("toml"))?;
    log::info!("wrote {} states to {}", traj.len(), path.display());
    Ok(())
}

fn fit_model(global: &Global, config: &Path, data: &Path, lag: usize, out: &Path) -> Result<(), CliError> {
    let spec: RegressorSpec = config::load(config)?;
    spec.validate().map_err(invalid)?;
    require_file("data", data)?;
    let path = output_path(global, out)?;
    let traj = load_csv_trajectory(data, 1.0)?;
    let pairs = trajectory_to_pairs(&traj, lag)?;
    let model = fit(&spec, &pairs)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| koopspec::Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    write_model(&model, &path)?;
    echo(global, &spec, &out.with_extension("toml"))?;
    log::info!("fitted {} on {} pairs, model at {}", spec.method.name(), pairs.n(), path.display());
    Ok(())
}

fn load_model(path: &Path) -> Result<koopspec::FittedModel, CliError> {
    require_file("model", path)?;
    Ok(read_model(path)?)
}

fn eigenvalues(global: &Global, model: &Path, out: &Path) -> Result<(), CliError> {
    let model = load_model(model)?;
    let path = output_path(global, out)?;
    let d = eig(&model)?;
    let rows: Vec<Vec<String>> = d
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| vec![(i + 1).to_string(), fmt_real(v.re), fmt_real(v.im), fmt_real(v.norm())])
        .collect();
    write_csv(&path, &["i", "lambda_re", "lambda_im", "modulus"], &rows)?;
    Ok(())
}

/// Reads the `mu` column (and `mu_im` when present) of a reference CSV.
fn read_reference(path: &Path) -> Result<Vec<c64>, CliError> {
    require_file("reference", path)?;
    let mut reader = csv::Reader::from_path(path).map_err(koopspec::Error::from)?;
    let header = reader.headers().map_err(koopspec::Error::from)?.clone();
    let col = |name: &str| header.iter().position(|h| h.trim() == name);
    let re = col("mu").ok_or_else(|| CliError::Usage(format!("{}: no `mu` column", path.display())))?;
    let im = col("mu_im");
    let mut out = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(koopspec::Error::from)?;
        let num = |i: usize| {
            rec.get(i).and_then(|s| s.trim().parse::<f64>().ok()).ok_or_else(|| {
                CliError::Domain(koopspec::Error::Parse {
                    path: path.to_path_buf(),
                    line: k + 2,
                    detail: "expected a number".into(),
                })
            })
        };
        out.push(c64::new(num(re)?, im.map(num).transpose()?.unwrap_or(0.0)));
    }
    Ok(out)
}

fn diagnose(
    global: &Global,
    model: &Path,
    reference: Option<&Path>,
    ou: bool,
    form: BiasForm,
    out: &Path,
) -> Result<(), CliError> {
    let model = load_model(model)?;
    let path = output_path(global, out)?;
    let d = eig(&model)?;
    let truth = match (reference, ou) {
        (Some(p), _) => Some(read_reference(p)?),
        (None, true) => Some(ou_spectrum(d.len().max(1), 1.0)?.eigenvalues_complex()),
        (None, false) => None,
    };
    let form = match form {
        BiasForm::Root => PcrBiasForm::Root,
        BiasForm::Plain => PcrBiasForm::Plain,
    };
    let report = spectral_report(&model, &d, truth.as_deref(), form)?;
    let rows = report.csv_rows(0, model.spec.method.name(), &model.spec.kernel.label());
    write_csv(&path, &REPORT_HEADER, &rows)?;
    Ok(())
}

fn reference(
    global: &Global,
    config: Option<&Path>,
    system: Option<ReferenceSystem>,
    count: Option<usize>,
    lag_time: Option<f64>,
) -> Result<(), CliError> {
    let mut cfg: ReferenceConfig = config.map(config::load).transpose()?.unwrap_or_default();
    let system = *cfg.system.insert(system.or(cfg.system).ok_or_else(|| {
        CliError::Usage("reference needs a system: pass --system or set `system` in the config".into())
    })?);
    let count = *cfg.count.insert(count.or(cfg.count).unwrap_or(DEFAULT_REFERENCE_COUNT));
    let lag = *cfg.lag_time.insert(lag_time.or(cfg.lag_time).unwrap_or(DEFAULT_LAG_TIME));
    let eig_path = output_path(global, Path::new("reference_eigenvalues.csv"))?;
    let fun_path = output_path(global, Path::new("reference_eigenfunctions.csv"))?;
    let spectrum = match system {
        ReferenceSystem::Ou => {
            cfg.grid = None;
            ou_spectrum(count, lag)?
        }
        ReferenceSystem::Generator => {
            let grid = *cfg.grid.get_or_insert_with(|| default_grid(&cfg.potential));
            generator_spectrum(&cfg.potential, &grid, count, lag)?
        }
    };
    spectrum.write_eigenvalues_csv(&eig_path)?;
    spectrum.write_eigenfunctions_csv(&fun_path)?;
    echo(global, &cfg, Path::new("reference_config.toml"))?;
    Ok(())
}

fn experiment(global: &Global, name: ExperimentName, config: Option<&Path>) -> Result<(), CliError> {
    let dir = &global.out_dir;
    match name {
        ExperimentName::Fig1 => {
            let path = config.ok_or_else(|| CliError::Usage("fig1 needs --config with at least `rank`".into()))?;
            let mut cfg: Fig1Config = config::load(path)?;
            if let Some(s) = global.seed {
                cfg.base_seed = s;
            }
            let cfg = cfg.resolve().map_err(invalid)?;
            let res = run_fig1(&cfg)?;
            res.write(dir)?;
            for s in res.summary() {
                let errs: Vec<String> = s.indexed_err.iter().map(|e| format!("{e:.4}")).collect();
                println!(
                    "{} {}: mean |err| [{}], spurious in {}/{} successful trials of {}",
                    s.kernel.name(),
                    s.method.name(),
                    errs.join(", "),
                    s.spurious_trials,
                    s.successes,
                    s.trials
                );
            }
        }
        ExperimentName::Rates => {
            let mut cfg: RatesConfig = config.map(config::load).transpose()?.unwrap_or_default();
            if let Some(s) = global.seed {
                cfg.base_seed = s;
            }
            cfg.validate().map_err(invalid)?;
            let res = run_langevin_rates(&cfg)?;
            res.write(dir)?;
            for s in res.summary()? {
                println!(
                    "{} i={}: eigenvalue slope {:.3}, eigenfunction slope {:.3}",
                    s.method.name(),
                    s.index + 1,
                    s.eigenvalue_slope,
                    s.eigenfunction_slope,
                );
            }
        }
        ExperimentName::ModelSelection => {
            let mut cfg: SelectionConfig = config.map(config::load).transpose()?.unwrap_or_default();
            if let Some(s) = global.seed {
                cfg.base_seed = s;
            }
            cfg.validate().map_err(invalid)?;
            let res = run_model_selection(&cfg)?;
            res.write(dir)?;
            match res.selected() {
                Some(i) => println!("selected {} (mean s_hat {:.3e})", res.rows[i].kernel.label(), res.rows[i].mean_s_hat),
                None => println!("no kernel could be scored"),
            }
        }
    }
    Ok(())
}
