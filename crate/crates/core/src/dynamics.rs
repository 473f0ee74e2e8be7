//! Trajectory simulators and conversion into training pairs.
//!
//! Randomness comes from ChaCha8 seeded with `seed_from_u64`; standard normals
//! are drawn by the Box–Muller transform from pairs of uniforms, using both
//! outputs in order (cosine branch first). Given a seed, trajectories are
//! identical on every platform.

use std::f64::consts::TAU;
use std::path::Path;

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::output::{fmt_real, write_csv};
use crate::{Error, Result};

/// Escape radius beyond which an integration is declared unstable.
pub const BLOW_UP_RADIUS: f64 = 10.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    /// One state per row.
    pub states: Mat<f64>,
    /// Time between recorded states.
    pub dt: f64,
    pub seed: u64,
}

/// Paired snapshots `(x_i, y_i)` with `y_i` recorded `lag` steps after `x_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryDataset {
    pub x: Mat<f64>,
    pub y: Mat<f64>,
    pub lag: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    /// `U(x) = θ x² / 2`
    Quadratic,
    /// Confining `x⁸` term with three Gaussian barriers.
    TripleWell,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    /// Stiffness of the quadratic potential; unused otherwise.
    #[serde(default = "one")]
    pub theta: f64,
    /// Inverse temperature.
    #[serde(default = "one")]
    pub beta: f64,
}

fn one() -> f64 {
    1.0
}

impl PotentialSpec {
    pub fn quadratic(theta: f64, beta: f64) -> Self {
        PotentialSpec {
            kind: PotentialKind::Quadratic,
            theta,
            beta,
        }
    }

    pub fn triple_well(beta: f64) -> Self {
        PotentialSpec {
            kind: PotentialKind::TripleWell,
            theta: 1.0,
            beta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::contract("potential", format!("beta must be positive, got {}", self.beta)));
        }
        if self.kind == PotentialKind::Quadratic && !(self.theta.is_finite() && self.theta > 0.0) {
            return Err(Error::contract("potential", format!("theta must be positive, got {}", self.theta)));
        }
        Ok(())
    }
}

/// Integration settings for overdamped Langevin dynamics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LangevinRun {
    /// Time between recorded states.
    pub dt: f64,
    /// Euler–Maruyama steps per recorded state.
    pub substeps: usize,
    /// Recorded states simulated and discarded before recording starts.
    pub burn_in: usize,
    pub x0: f64,
}

impl Default for LangevinRun {
    fn default() -> Self {
        LangevinRun {
            dt: 1e-2,
            substeps: 10,
            burn_in: 10_000,
            x0: 0.0,
        }
    }
}

/// Standard normal stream: ChaCha8 uniforms through Box–Muller.
#[derive(Clone, Debug)]
pub struct NormalStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn new(seed: u64) -> Self {
        NormalStream {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // 1 - U lies in (0, 1], keeping the logarithm finite.
        let u1: f64 = 1.0 - self.rng.random::<f64>();
        let u2: f64 = self.rng.random::<f64>();
        let radius = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (TAU * u2).sin_cos();
        self.spare = Some(radius * s);
        radius * c
    }
}

/// `U(x)` and `U'(x)`.
pub fn potential_value_grad(spec: &PotentialSpec, x: f64) -> (f64, f64) {
    match spec.kind {
        PotentialKind::Quadratic => (0.5 * spec.theta * x * x, spec.theta * x),
        PotentialKind::TripleWell => {
            let g0 = (-80.0 * x * x).exp();
            let a = x - 0.5;
            let g1 = (-80.0 * a * a).exp();
            let b = x + 0.5;
            let g2 = (-40.0 * b * b).exp();
            let x7 = x.powi(7);
            let u = 4.0 * (x7 * x + 0.8 * g0 + 0.2 * g1 + 0.5 * g2);
            let du = 4.0 * (8.0 * x7 - 128.0 * x * g0 - 32.0 * a * g1 - 40.0 * b * g2);
            (u, du)
        }
    }
}

/// Exact unit-lag Ornstein–Uhlenbeck sampling started in stationarity:
/// `X_t = e⁻¹ X_{t-1} + sqrt(1 - e⁻²) ε_t`.
pub fn simulate_ou(n_steps: usize, seed: u64, burn_in: usize) -> Result<Trajectory> {
    if n_steps < 2 {
        return Err(Error::contract("simulate_ou", format!("need at least 2 steps, got {n_steps}")));
    }
    let decay = (-1f64).exp();
    let noise = (1.0 - decay * decay).sqrt();
    let mut normals = NormalStream::new(seed);
    let mut x = normals.next_normal();
    for _ in 0..burn_in {
        x = decay * x + noise * normals.next_normal();
    }
    let mut states = Mat::zeros(n_steps, 1);
    for t in 0..n_steps {
        if t > 0 {
            x = decay * x + noise * normals.next_normal();
        }
        states[(t, 0)] = x;
    }
    Ok(Trajectory {
        states,
        dt: 1.0,
        seed,
    })
}

/// Euler–Maruyama integration of `dX = -U'(X) dt + sqrt(2/β) dW`.
pub fn simulate_langevin(
    spec: &PotentialSpec,
    run: &LangevinRun,
    n_steps: usize,
    seed: u64,
) -> Result<Trajectory> {
    spec.validate()?;
    if !(run.dt.is_finite() && run.dt > 0.0) || run.substeps == 0 {
        return Err(Error::contract(
            "simulate_langevin",
            format!("need dt > 0 and substeps >= 1, got dt={} substeps={}", run.dt, run.substeps),
        ));
    }
    if n_steps < 2 {
        return Err(Error::contract("simulate_langevin", format!("need at least 2 steps, got {n_steps}")));
    }
    let h = run.dt / run.substeps as f64;
    let amp = (2.0 * h / spec.beta).sqrt();
    let mut normals = NormalStream::new(seed);
    let mut x = run.x0;
    let mut states = Mat::zeros(n_steps, 1);
    for t in 0..run.burn_in + n_steps {
        let record = t >= run.burn_in;
        if record && t == run.burn_in {
            states[(0, 0)] = x;
            continue;
        }
        for _ in 0..run.substeps {
            let (_, du) = potential_value_grad(spec, x);
            x += -du * h + amp * normals.next_normal();
            if !(x.abs() <= BLOW_UP_RADIUS) {
                return Err(Error::BlowUp { step: t, value: x.abs() });
            }
        }
        if record {
            states[(t - run.burn_in, 0)] = x;
        }
    }
    Ok(Trajectory {
        states,
        dt: run.dt,
        seed,
    })
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.states.ncols()
    }

    /// Keep every `stride`-th state.
    pub fn thin(&self, stride: usize) -> Trajectory {
        let stride = stride.max(1);
        let keep = self.len().div_ceil(stride);
        Trajectory {
            states: Mat::from_fn(keep, self.dim(), |i, j| self.states[(i * stride, j)]),
            dt: self.dt * stride as f64,
            seed: self.seed,
        }
    }

    /// Header `t,x1,...,xd`; `t` is the recording time.
    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim()).map(|k| format!("x{k}")));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows: Vec<Vec<String>> = (0..self.len())
            .map(|i| {
                std::iter::once(fmt_real(i as f64 * self.dt))
                    .chain((0..self.dim()).map(|k| fmt_real(self.states[(i, k)])))
                    .collect()
            })
            .collect();
        write_csv(path, &header, &rows)
    }
}

/// `X = states[0..T-lag)`, `Y = states[lag..T)`.
pub fn trajectory_to_pairs(traj: &Trajectory, lag: usize) -> Result<TrajectoryDataset> {
    let t = traj.len();
    if lag == 0 || lag >= t {
        return Err(Error::contract(
            "trajectory_to_pairs",
            format!("lag must lie in 1..{t}, got {lag}"),
        ));
    }
    let n = t - lag;
    let d = traj.dim();
    Ok(TrajectoryDataset {
        x: Mat::from_fn(n, d, |i, j| traj.states[(i, j)]),
        y: Mat::from_fn(n, d, |i, j| traj.states[(i + lag, j)]),
        lag,
    })
}

impl TrajectoryDataset {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Rows `start..end` of both sides.
    pub fn slice(&self, start: usize, end: usize) -> TrajectoryDataset {
        let d = self.dim();
        TrajectoryDataset {
            x: Mat::from_fn(end - start, d, |i, j| self.x[(start + i, j)]),
            y: Mat::from_fn(end - start, d, |i, j| self.y[(start + i, j)]),
            lag: self.lag,
        }
    }

    /// Rows reordered so that row `i` is old row `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> TrajectoryDataset {
        let d = self.dim();
        TrajectoryDataset {
            x: Mat::from_fn(order.len(), d, |i, j| self.x[(order[i], j)]),
            y: Mat::from_fn(order.len(), d, |i, j| self.y[(order[i], j)]),
            lag: self.lag,
        }
    }
}

/// Read a numeric CSV trajectory.
///
/// A header row is detected by the presence of a non-numeric cell; when the
/// first header cell is `t` that column holds times and is dropped.
/// Headerless files hold states only.
pub fn load_csv_trajectory<P: AsRef<Path>>(path: P, dt: f64) -> Result<Trajectory> {
    let path = path.as_ref();
    let parse_err = |line: usize, detail: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        detail,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => parse_err(0, format!("{other:?}")),
        })?;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut drop_time = false;
    let mut width = None;
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(idx + 1, e.to_string()))?;
        let line = record.position().map_or(idx + 1, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(vals) => {
                let vals = if drop_time { vals[1..].to_vec() } else { vals };
                match width {
                    None => width = Some(record.len()),
                    Some(w) if w != record.len() => {
                        return Err(parse_err(line, format!("expected {w} columns, found {}", record.len())));
                    }
                    _ => {}
                }
                if vals.iter().any(|v| !v.is_finite()) {
                    return Err(parse_err(line, "non-finite value".into()));
                }
                rows.push(vals);
            }
            Err(_) if width.is_none() && rows.is_empty() => {
                // header row
                drop_time = record[0].eq_ignore_ascii_case("t");
                width = Some(record.len());
            }
            Err(e) => return Err(parse_err(line, format!("non-numeric cell: {e}"))),
        }
    }
    if rows.is_empty() {
        return Err(parse_err(1, "no data rows".into()));
    }
    let d = rows[0].len();
    if d == 0 {
        return Err(parse_err(1, "no state columns".into()));
    }
    Ok(Trajectory {
        states: Mat::from_fn(rows.len(), d, |i, j| rows[i][j]),
        dt,
        seed: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn mean_var(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
    }

    fn column(traj: &Trajectory) -> Vec<f64> {
        (0..traj.len()).map(|i| traj.states[(i, 0)]).collect()
    }

    #[test]
    fn ou_is_deterministic() {
        let a = simulate_ou(500, 7, 3).unwrap();
        let b = simulate_ou(500, 7, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, simulate_ou(500, 8, 3).unwrap());
    }

    #[test]
    fn ou_stationary_moments() {
        let traj = simulate_ou(100_000, 11, 0).unwrap();
        let xs = column(&traj);
        let n = xs.len() as f64;
        let rho = (-1f64).exp();
        let (_, var) = mean_var(&xs);
        // Variance of the sample variance of an AR(1) with unit variance.
        let se_var = (2.0 * (1.0 + rho * rho) / (1.0 - rho * rho) / n).sqrt();
        assert!((var - 1.0).abs() < 3.0 * se_var, "variance {var}");
        let lag1: f64 = xs.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (n - 1.0);
        let se_rho = ((1.0 - rho * rho) / n).sqrt();
        assert!((lag1 / var - rho).abs() < 3.0 * se_rho, "autocorrelation {}", lag1 / var);
    }

    #[test]
    fn quadratic_potential_example() {
        assert_eq!(potential_value_grad(&PotentialSpec::quadratic(1.0, 1.0), 2.0), (2.0, 2.0));
    }

    #[test]
    fn triple_well_at_origin() {
        let spec = PotentialSpec::triple_well(1.0);
        let (u, du) = potential_value_grad(&spec, 0.0);
        let expect_u = 4.0 * (0.8 + 0.2 * (-20f64).exp() + 0.5 * (-10f64).exp());
        assert!((u - expect_u).abs() < 1e-14);
        let expect_du = 4.0 * (16.0 * (-20f64).exp() - 20.0 * (-10f64).exp());
        assert!((du - expect_du).abs() < 1e-14);
        let h = 1e-6;
        let fd = (potential_value_grad(&spec, h).0 - potential_value_grad(&spec, -h).0) / (2.0 * h);
        assert!((fd - du).abs() < 1e-5);
    }

    #[test]
    fn langevin_noise_free_decay() {
        let run = LangevinRun { dt: 1.0, substeps: 100, burn_in: 0, x0: 1.0 };
        let traj = simulate_langevin(&PotentialSpec::quadratic(1.0, 1e6), &run, 2, 3).unwrap();
        assert!((traj.states[(1, 0)] - (-1f64).exp()).abs() < 1e-2);
    }

    #[test]
    fn langevin_quadratic_stationary_variance() {
        let run = LangevinRun { dt: 1.0, substeps: 100, burn_in: 10, x0: 0.0 };
        let traj = simulate_langevin(&PotentialSpec::quadratic(1.0, 1.0), &run, 100_000, 5).unwrap();
        let (_, var) = mean_var(&column(&traj));
        let rho = (-1f64).exp();
        let se = (2.0 * (1.0 + rho * rho) / (1.0 - rho * rho) / 100_000.0).sqrt();
        assert!((var - 1.0).abs() < 3.0 * se, "variance {var}");
    }

    #[test]
    fn triple_well_mass_in_unit_interval() {
        let traj = simulate_langevin(&PotentialSpec::triple_well(1.0), &LangevinRun::default(), 20_000, 1).unwrap();
        let inside = column(&traj).iter().filter(|x| x.abs() <= 1.0).count();
        assert!(inside as f64 > 0.99 * traj.len() as f64);
    }

    #[test]
    fn langevin_blow_up_is_reported() {
        let run = LangevinRun { dt: 1.0, substeps: 1, burn_in: 0, x0: 1.2 };
        let err = simulate_langevin(&PotentialSpec::triple_well(1.0), &run, 10, 0).unwrap_err();
        assert!(matches!(err, Error::BlowUp { .. }));
    }

    #[test]
    fn pairs_examples() {
        let traj = Trajectory {
            states: Mat::from_fn(3, 1, |i, _| [1.0, 2.0, 3.0][i]),
            dt: 1.0,
            seed: 0,
        };
        let p = trajectory_to_pairs(&traj, 1).unwrap();
        assert_eq!(p.x, Mat::from_fn(2, 1, |i, _| [1.0, 2.0][i]));
        assert_eq!(p.y, Mat::from_fn(2, 1, |i, _| [2.0, 3.0][i]));
        let p = trajectory_to_pairs(&traj, 2).unwrap();
        assert_eq!((p.x[(0, 0)], p.y[(0, 0)], p.n()), (1.0, 3.0, 1));
        assert!(trajectory_to_pairs(&traj, 3).is_err());
        assert!(trajectory_to_pairs(&traj, 0).is_err());
    }

    fn temp_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn csv_loader_cases() {
        let plain = temp_csv("0.5\n-1.25\n2\n");
        let t = load_csv_trajectory(plain.path(), 0.1).unwrap();
        assert_eq!((t.len(), t.dim()), (3, 1));

        let with_time = temp_csv("t,x1\n0,0.5\n0.1,-1.25\n0.2,2\n");
        let u = load_csv_trajectory(with_time.path(), 0.1).unwrap();
        assert_eq!(t.states, u.states);

        let named = temp_csv("x1\n0.5\n-1.25\n2\n");
        assert_eq!(load_csv_trajectory(named.path(), 0.1).unwrap().states, t.states);

        let empty = temp_csv("");
        assert!(matches!(load_csv_trajectory(empty.path(), 1.0), Err(Error::Parse { .. })));

        let ragged = temp_csv("1,2\n3,4\n5\n");
        match load_csv_trajectory(ragged.path(), 1.0) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let junk = temp_csv("1,2\n3,oops\n");
        match load_csv_trajectory(junk.path(), 1.0) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_write_then_load_is_exact() {
        let traj = simulate_ou(50, 3, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.csv");
        traj.write_csv(&path).unwrap();
        let back = load_csv_trajectory(&path, 1.0).unwrap();
        assert_eq!(back.states, traj.states);
    }

    #[test]
    fn thinning_keeps_every_stride() {
        let traj = simulate_ou(10, 1, 0).unwrap();
        let thin = traj.thin(3);
        assert_eq!(thin.len(), 4);
        assert_eq!(thin.states[(2, 0)], traj.states[(6, 0)]);
        assert_eq!(thin.dt, 3.0);
    }

    proptest! {
        #[test]
        fn triple_well_gradient_matches_finite_difference(x in -1.5f64..1.5) {
            let spec = PotentialSpec::triple_well(1.0);
            let h = 1e-6;
            let fd = (potential_value_grad(&spec, x + h).0 - potential_value_grad(&spec, x - h).0) / (2.0 * h);
            let du = potential_value_grad(&spec, x).1;
            prop_assert!((fd - du).abs() <= 1e-5 * du.abs().max(1.0));
        }

        #[test]
        fn pairs_row_identity(n in 3usize..60, lag in 1usize..5, seed in 0u64..1000) {
            prop_assume!(lag < n);
            let traj = simulate_ou(n, seed, 0).unwrap();
            let p = trajectory_to_pairs(&traj, lag).unwrap();
            prop_assert_eq!(p.n(), n - lag);
            for i in 0..p.n() {
                prop_assert_eq!(p.y[(i, 0)], traj.states[(i + lag, 0)]);
                if i + lag < p.n() {
                    prop_assert_eq!(p.y[(i, 0)], p.x[(i + lag, 0)]);
                }
            }
        }

        #[test]
        fn simulators_are_pure(seed in 0u64..10_000) {
            let run = LangevinRun { dt: 1e-2, substeps: 5, burn_in: 20, x0: 0.1 };
            let spec = PotentialSpec::triple_well(1.0);
            prop_assert_eq!(simulate_langevin(&spec, &run, 30, seed).unwrap(), simulate_langevin(&spec, &run, 30, seed).unwrap());
        }
    }
}
