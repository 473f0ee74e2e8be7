//! Acceptance checks. Prints one PASS/FAIL line per criterion. Set
//! `KOOPSPEC_ACCEPTANCE_STRICT=1` to exit nonzero when any criterion fails.
//! A single argument runs only the criteria whose name contains it.

mod common;

use std::time::Instant;

use common::{features, linear_pairs, oracle_spectrum, ou_pairs, worst_relative_gap};
use koopspec::diagnostics::{davis_kahan_bound, metric_distortion};
use koopspec::dynamics::NormalStream;
use koopspec::estimators::{eig, fit, svals_b};
use koopspec::experiments::{
    run_fig1, run_langevin_rates, run_model_selection, Fig1Config, KernelPreset, RatesConfig, SelectionConfig,
};
use koopspec::numerics::sym_eig;
use koopspec::reference::{generator_spectrum, ou_spectrum, Grid};
use koopspec::{c64, KernelSpec, Mat, Method, PotentialSpec, RegressorSpec, TrajectoryDataset};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn eigenvalues(spec: &RegressorSpec, data: &TrajectoryDataset) -> Vec<c64> {
    eig(&fit(spec, data).expect("fit")).expect("eig").values
}

fn oracle_gate() -> Verdict {
    let start = Instant::now();
    let mut worst: (f64, f64) = (0.0, 0.0);
    let mut cases = 0;
    for seed in 0..20u64 {
        for n in [10, 50, 200] {
            let linear = linear_pairs(n, seed);
            let ou = ou_pairs(n, seed);
            let setups = [
                (KernelSpec::Linear, &linear),
                (KernelSpec::good(), &ou),
                (KernelSpec::bad(3).unwrap(), &ou),
            ];
            for (kernel, data) in setups {
                let (px, py) = features(&kernel, data);
                for method in [Method::Krr, Method::Pcr, Method::Rrr] {
                    for rank in [1, 3] {
                        let spec = RegressorSpec::new(method, rank, 1e-3, kernel.clone());
                        let model = fit(&spec, data).expect("fit");
                        let d = eig(&model).expect("eig");
                        let eta = metric_distortion(&model, &d).expect("distortion");
                        let oracle = oracle_spectrum(px.as_ref(), py.as_ref(), method, rank, 1e-3);
                        let (v, e) = worst_relative_gap(&d.values, &eta, &oracle, rank);
                        worst = (worst.0.max(v), worst.1.max(e));
                        cases += 1;
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst.0 <= 1e-6 && worst.1 <= 1e-6 && secs < 60.0,
        format!(
            "{cases} fits, max rel. eigenvalue gap {:.2e}, max rel. distortion gap {:.2e} (tol 1e-6), {secs:.1}s (limit 60s)",
            worst.0, worst.1
        ),
    )
}

fn one_sample() -> Verdict {
    let data = TrajectoryDataset {
        x: Mat::from_fn(1, 1, |_, _| 1.0),
        y: Mat::from_fn(1, 1, |_, _| 0.5),
        lag: 1,
    };
    let mut worst: f64 = 0.0;
    for method in [Method::Krr, Method::Pcr, Method::Rrr] {
        for (gamma, want) in [(0.0, 0.5), (0.1, 0.5 / 1.1)] {
            let v = eigenvalues(&RegressorSpec::new(method, 1, gamma, KernelSpec::Linear), &data);
            worst = worst.max((v[0] - c64::new(want, 0.0)).norm());
        }
    }
    verdict(worst <= 1e-12, format!("max deviation {worst:.2e} (tol 1e-12)"))
}

fn full_rank_identity() -> Verdict {
    let data = ou_pairs(50, 0);
    let kernel = KernelSpec::matern(1.5, 0.3);
    let rrr = eigenvalues(&RegressorSpec::new(Method::Rrr, 50, 1e-6, kernel.clone()), &data);
    let krr = eigenvalues(&RegressorSpec::new(Method::Krr, 1, 1e-6, kernel), &data);
    let mut worst: f64 = 0.0;
    for v in &rrr {
        let d = krr.iter().map(|k| (k - v).norm()).fold(f64::INFINITY, f64::min);
        worst = worst.max(d);
    }
    verdict(
        worst <= 1e-8 && rrr.len() == krr.len(),
        format!("{} vs {} eigenvalues, max deviation {worst:.2e} (tol 1e-8)", rrr.len(), krr.len()),
    )
}

fn fig1() -> Verdict {
    let start = Instant::now();
    let cfg = Fig1Config::with_rank(3);
    let res = run_fig1(&cfg).expect("fig1 run");
    let secs = start.elapsed().as_secs_f64();
    let mut pass = secs < 600.0;
    let mut parts = Vec::new();
    let need = (0.8 * cfg.trials as f64).ceil() as usize;
    for s in res.summary() {
        pass &= s.enough_successes();
        let errs: Vec<String> = s.indexed_err.iter().map(|e| format!("{e:.3}")).collect();
        let ok = match (s.kernel, s.method) {
            (KernelPreset::Good, _) | (KernelPreset::Bad, Method::Rrr) => {
                s.indexed_err.len() == 3 && s.max_err() <= 0.05
            }
            _ => s.spurious_trials >= need,
        };
        pass &= ok;
        parts.push(format!(
            "{}/{} err=[{}] spurious={}/{}",
            s.kernel.name(),
            s.method.name(),
            errs.join(","),
            s.spurious_trials,
            s.successes
        ));
    }
    verdict(pass, format!("{}; {secs:.0}s (limit 600s)", parts.join("; ")))
}

fn rates() -> Verdict {
    let start = Instant::now();
    let res = run_langevin_rates(&RatesConfig::default()).expect("rates run");
    let summary = res.summary().expect("summary");
    let trials = res.config.trials;
    let slope = |m: Method, i: usize| {
        summary
            .iter()
            .find(|s| s.method == m && s.index == i)
            .map(|s| (s.eigenvalue_slope, s.enough_successes(trials)))
            .expect("summary row")
    };
    let (rrr, rrr_ok) = slope(Method::Rrr, 1);
    let (pcr, pcr_ok) = slope(Method::Pcr, 0);
    let all: Vec<String> = summary
        .iter()
        .map(|s| format!("{}{}={:.3}", s.method.name(), s.index + 1, s.eigenvalue_slope))
        .collect();
    verdict(
        rrr <= -0.3 && pcr >= -0.15 && rrr_ok && pcr_ok,
        format!(
            "RRR second-eigenvalue slope {rrr:.3} (<= -0.3), PCR leading-eigenvalue slope {pcr:.3} (>= -0.15); all [{}]; {:.0}s",
            all.join(" "),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn generator_check() -> Verdict {
    let quad = PotentialSpec::quadratic(1.0, 1.0);
    let truth = ou_spectrum(3, 1.0).expect("ou").eigenvalues;
    let at = |points| {
        generator_spectrum(&quad, &Grid { x_min: -6.0, x_max: 6.0, points }, 3, 1.0)
            .expect("generator")
            .eigenvalues
    };
    let coarse = at(2000);
    let fine = at(4000);
    let worst = coarse.iter().zip(&truth).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let e_coarse = (coarse[1] - truth[1]).abs();
    let e_fine = (fine[1] - truth[1]).abs();
    let ratio = e_coarse / e_fine;
    verdict(
        worst <= 1e-3 && ratio >= 3.0,
        format!("max error at N=2000 {worst:.2e} (tol 1e-3); second-eigenvalue error ratio N=2000/N=4000 {ratio:.2} (>= 3)"),
    )
}

fn random_spec(g: &mut NormalStream, k: usize) -> (RegressorSpec, TrajectoryDataset) {
    let methods = [Method::Krr, Method::Pcr, Method::Rrr];
    let kernels = [
        KernelSpec::rbf(0.5),
        KernelSpec::matern(2.5, 0.8),
        KernelSpec::good(),
        KernelSpec::bad(3).unwrap(),
    ];
    let n = 20 + (k * 7) % 40;
    let gamma = 10f64.powf(-2.0 - 4.0 * g.next_normal().abs().min(1.0));
    let spec = RegressorSpec::new(methods[k % 3], 1 + k % 4, gamma, kernels[(k / 3) % 4].clone());
    (spec, ou_pairs(n, 1000 + k as u64))
}

fn properties() -> Verdict {
    let mut g = NormalStream::new(42);
    let mut failures = Vec::new();

    let mut min_margin = f64::INFINITY;
    for k in 0..100 {
        let (spec, data) = random_spec(&mut g, k);
        let model = fit(&spec, &data).expect("fit");
        let d = eig(&model).expect("eig");
        let top = sym_eig(model.k.as_ref()).expect("sym eig").values[0];
        for e in metric_distortion(&model, &d).expect("distortion") {
            min_margin = min_margin.min(e * top.sqrt() - 1.0);
        }
    }
    if min_margin < -1e-10 {
        failures.push(format!("distortion lower bound violated by {min_margin:.2e}"));
    }

    let mut worst_sv = f64::NEG_INFINITY;
    for k in 0..100 {
        let (spec, data) = random_spec(&mut g, k);
        let svals = svals_b(&data, &spec.kernel, spec.gamma, 4).expect("svals");
        let model = fit(&RegressorSpec::new(Method::Krr, 1, spec.gamma, spec.kernel.clone()), &data).expect("fit");
        let l_top = sym_eig(model.l.as_ref()).expect("sym eig").values[0];
        for s in svals {
            worst_sv = worst_sv.max(s * s - l_top * (1.0 + 1e-10));
        }
    }
    if worst_sv > 0.0 {
        failures.push(format!("singular value bound violated by {worst_sv:.2e}"));
    }

    let dk_ok = davis_kahan_bound(0.0, 0.5) == 0.0
        && (davis_kahan_bound(0.1, 0.5) - 0.5).abs() < 1e-15
        && davis_kahan_bound(0.5, 0.5).is_infinite()
        && davis_kahan_bound(0.6, 0.5).is_infinite()
        && (davis_kahan_bound(0.2, 1.0) - 0.5).abs() < 1e-15;
    if !dk_ok {
        failures.push("subspace bound arithmetic".into());
    }

    let mut worst_perm: f64 = 0.0;
    for k in 0..10 {
        let (spec, data) = random_spec(&mut g, k);
        let n = data.n();
        let order: Vec<usize> = (0..n).map(|i| (i * 7 + 3) % n).collect();
        let mut seen = order.clone();
        seen.sort_unstable();
        seen.dedup();
        let order: Vec<usize> = if seen.len() == n { order } else { (0..n).rev().collect() };
        let a = eigenvalues(&spec, &data);
        let b = eigenvalues(&spec, &data.permuted(&order));
        for v in &a {
            let d = b.iter().map(|w| (w - v).norm()).fold(f64::INFINITY, f64::min);
            worst_perm = worst_perm.max(d);
        }
    }
    if worst_perm > 1e-8 {
        failures.push(format!("fit not permutation invariant ({worst_perm:.2e})"));
    }

    let determinism = deterministic_outputs();
    if let Err(e) = &determinism {
        failures.push(e.clone());
    }

    verdict(
        failures.is_empty(),
        if failures.is_empty() {
            format!(
                "distortion margin {min_margin:.2e} >= 0, singular value excess {worst_sv:.2e} <= 0, permutation drift {worst_perm:.2e}, experiment CSVs byte-identical"
            )
        } else {
            failures.join("; ")
        },
    )
}

fn deterministic_outputs() -> Result<(), String> {
    let small_run = koopspec::dynamics::LangevinRun {
        burn_in: 500,
        ..Default::default()
    };
    let fig1 = Fig1Config {
        n: 300,
        trials: 2,
        ..Fig1Config::with_rank(3)
    };
    let rates = RatesConfig {
        ns: vec![80, 160],
        trials: 2,
        run: small_run,
        grid: Grid {
            x_min: -1.5,
            x_max: 1.5,
            points: 300,
        },
        ..RatesConfig::default()
    };
    let selection = SelectionConfig {
        train: 150,
        validation: 50,
        test: 50,
        kernels: vec![KernelSpec::rbf(0.2), KernelSpec::matern(2.5, 0.2)],
        run: small_run,
        ..SelectionConfig::default()
    };
    let mut snapshots = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        run_fig1(&fig1).and_then(|r| r.write(dir.path())).map_err(|e| e.to_string())?;
        run_langevin_rates(&rates).and_then(|r| r.write(dir.path())).map_err(|e| e.to_string())?;
        run_model_selection(&selection).and_then(|r| r.write(dir.path())).map_err(|e| e.to_string())?;
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir.path())
            .map_err(|e| e.to_string())?
            .map(|e| {
                let e = e.expect("dir entry");
                (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).expect("read"))
            })
            .collect();
        files.sort();
        snapshots.push(files);
    }
    if snapshots[0].len() < 10 {
        return Err(format!("expected all experiment outputs, found {}", snapshots[0].len()));
    }
    if snapshots[0] != snapshots[1] {
        return Err("experiment outputs differ between identical runs".into());
    }
    Ok(())
}

fn model_selection() -> Verdict {
    let start = Instant::now();
    let mut hits = 0;
    let mut parts = Vec::new();
    for seed in 0..5u64 {
        let res = run_model_selection(&SelectionConfig {
            base_seed: seed,
            ..SelectionConfig::default()
        })
        .expect("selection run");
        let chosen = res.selected();
        let ranks = res.rmse_ranks();
        let rank = chosen.and_then(|c| ranks[c]);
        if rank.is_some_and(|r| r <= 3) {
            hits += 1;
        }
        let label = chosen.map(|c| res.rows[c].kernel.label()).unwrap_or_else(|| "none".into());
        let best = res.rows.iter().filter(|r| r.status.is_ok()).map(|r| r.rmse).fold(f64::INFINITY, f64::min);
        let excess = chosen.map_or(f64::NAN, |c| res.rows[c].rmse / best - 1.0);
        parts.push(format!(
            "seed {seed}: {label} rank {} (rmse +{:.2}% over best)",
            rank.map_or("-".into(), |r| r.to_string()),
            100.0 * excess
        ));
    }
    verdict(
        hits >= 4,
        format!(
            "{hits}/5 repetitions select a top-3 kernel (need 4); {}; {:.0}s",
            parts.join(", "),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn main() {
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let criteria: [(&str, fn() -> Verdict); 8] = [
        ("oracle equivalence of dual and feature-space fits", oracle_gate),
        ("one-sample closed form", one_sample),
        ("full-rank RRR equals KRR", full_rank_identity),
        ("OU leading eigenvalues under good/bad/ugly kernels", fig1),
        ("Langevin error decay contrast", rates),
        ("generator discretization cross-check", generator_check),
        ("property suites", properties),
        ("kernel selection by spectral bias", model_selection),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        if filter.as_ref().is_some_and(|f| !name.contains(f.as_str())) {
            continue;
        }
        let v = check();
        if !v.pass {
            failed += 1;
        }
        println!("{} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        // Failures are reported, not hidden; a strict run turns them into a
        // nonzero exit for CI gating.
        if std::env::var_os("KOOPSPEC_ACCEPTANCE_STRICT").is_some_and(|v| v == "1") {
            std::process::exit(1);
        }
    }
}
