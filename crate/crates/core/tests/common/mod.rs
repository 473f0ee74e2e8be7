//! Explicit feature-space estimators used as an independent oracle for the
//! dual-form fits. Operators act on feature-space coefficient vectors `w`,
//! with `h(x) = ⟨w, φ(x)⟩`.

#![allow(dead_code)]

use faer::{c64, Mat, MatRef, Side};
use koopspec::dynamics::{simulate_ou, trajectory_to_pairs, NormalStream};
use koopspec::{KernelSpec, Method, TrajectoryDataset};

pub struct OracleSpectrum {
    /// Sorted by decreasing modulus.
    pub values: Vec<c64>,
    /// `‖w‖ / sqrt(wᴴ C w)` for each right eigenvector `w`.
    pub eta: Vec<f64>,
}

fn sym_desc(a: MatRef<'_, f64>) -> (Vec<f64>, Mat<f64>) {
    let e = a.self_adjoint_eigen(Side::Lower).expect("symmetric eigensolve");
    let n = a.nrows();
    let s = e.S().column_vector();
    let u = e.U();
    let values = (0..n).rev().map(|i| s[i]).collect();
    let vectors = Mat::from_fn(n, n, |i, j| u[(i, n - 1 - j)]);
    (values, vectors)
}

/// `Σ_j f(λ_j) v_j v_jᵀ` over the first `count` eigenpairs.
fn spectral_fn(values: &[f64], vectors: &Mat<f64>, count: usize, f: impl Fn(f64) -> f64) -> Mat<f64> {
    let d = vectors.nrows();
    let scaled = Mat::from_fn(d, count, |i, j| vectors[(i, j)] * f(values[j]));
    &scaled * vectors.subcols(0, count).transpose()
}

/// Feature-space estimator of the transfer operator.
pub fn feature_operator(phi_x: MatRef<'_, f64>, phi_y: MatRef<'_, f64>, method: Method, rank: usize, gamma: f64) -> (Mat<f64>, Mat<f64>) {
    let n = phi_x.nrows() as f64;
    let d = phi_x.ncols();
    let mut cov = phi_x.transpose() * phi_x;
    let mut cross = phi_x.transpose() * phi_y;
    for j in 0..d {
        for i in 0..d {
            cov[(i, j)] /= n;
            cross[(i, j)] /= n;
        }
    }
    let cov = Mat::from_fn(d, d, |i, j| 0.5 * (cov[(i, j)] + cov[(j, i)]));
    let (lam, vecs) = sym_desc(cov.as_ref());
    let g = match method {
        Method::Krr => &spectral_fn(&lam, &vecs, d, |l| 1.0 / (l.max(0.0) + gamma)) * &cross,
        Method::Pcr => &spectral_fn(&lam, &vecs, rank, |l| 1.0 / (l + gamma)) * &cross,
        Method::Rrr => {
            let w = spectral_fn(&lam, &vecs, d, |l| 1.0 / (l.max(0.0) + gamma).sqrt());
            let b = &w * &cross;
            let bbt = &b * b.transpose();
            let bbt = Mat::from_fn(d, d, |i, j| 0.5 * (bbt[(i, j)] + bbt[(j, i)]));
            let (_, p) = sym_desc(bbt.as_ref());
            let proj = p.subcols(0, rank) * p.subcols(0, rank).transpose();
            &w * &(&proj * &b)
        }
    };
    (g, cov)
}

pub fn oracle_spectrum(phi_x: MatRef<'_, f64>, phi_y: MatRef<'_, f64>, method: Method, rank: usize, gamma: f64) -> OracleSpectrum {
    let (g, cov) = feature_operator(phi_x, phi_y, method, rank, gamma);
    let e = g.eigen().expect("general eigensolve");
    let s = e.S().column_vector();
    let u = e.U();
    let d = g.nrows();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| s[j].norm().total_cmp(&s[i].norm()).then(s[j].im.total_cmp(&s[i].im)));
    let mut values = Vec::new();
    let mut eta = Vec::new();
    for &k in &order {
        values.push(s[k]);
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..d {
            num += u[(i, k)].norm_sqr();
            let mut cw = c64::new(0.0, 0.0);
            for j in 0..d {
                cw += u[(j, k)] * cov[(i, j)];
            }
            den += (u[(i, k)].conj() * cw).re;
        }
        eta.push((num / den).sqrt());
    }
    OracleSpectrum { values, eta }
}

/// Weighted feature matrices for a dataset under a finite-rank kernel.
pub fn features(kernel: &KernelSpec, data: &TrajectoryDataset) -> (Mat<f64>, Mat<f64>) {
    let map = kernel.feature_map(data.dim()).expect("finite feature map");
    (map.feature_matrix(data.x.as_ref()), map.feature_matrix(data.y.as_ref()))
}

/// `n` pairs from a stable four-dimensional linear system `y = A x + noise`.
pub fn linear_pairs(n: usize, seed: u64) -> TrajectoryDataset {
    let d = 4;
    let mut g = NormalStream::new(seed);
    // A = Q diag(0.9, 0.6, -0.5, 0.3) Qᵀ + small skew part, Q from a random matrix
    let raw = Mat::from_fn(d, d, |_, _| g.next_normal());
    let sym = &raw * raw.transpose();
    let (_, q) = sym_desc(sym.as_ref());
    let diag = [0.9, 0.6, -0.5, 0.3];
    let scaled = Mat::from_fn(d, d, |i, j| q[(i, j)] * diag[j]);
    let mut a = &scaled * q.transpose();
    a[(0, 1)] += 0.05;
    a[(1, 0)] -= 0.05;
    let x = Mat::from_fn(n, d, |_, _| g.next_normal());
    let mut y = &x * a.transpose();
    for i in 0..n {
        for j in 0..d {
            y[(i, j)] += 0.1 * g.next_normal();
        }
    }
    TrajectoryDataset { x, y, lag: 1 }
}

pub fn ou_pairs(n: usize, seed: u64) -> TrajectoryDataset {
    trajectory_to_pairs(&simulate_ou(n + 1, seed, 0).expect("ou"), 1).expect("pairs")
}

/// Largest relative deviation between dual and oracle eigenvalues and
/// distortions over the leading `count` eigenvalues. Each dual eigenvalue is
/// compared with its nearest oracle eigenvalue.
pub fn worst_relative_gap(dual_values: &[c64], dual_eta: &[f64], oracle: &OracleSpectrum, count: usize) -> (f64, f64) {
    let mut worst_val: f64 = 0.0;
    let mut worst_eta: f64 = 0.0;
    for i in 0..count.min(dual_values.len()) {
        let (k, dist) = oracle
            .values
            .iter()
            .enumerate()
            .map(|(k, v)| (k, (v - dual_values[i]).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("nonempty oracle");
        worst_val = worst_val.max(dist / oracle.values[k].norm());
        worst_eta = worst_eta.max((dual_eta[i] - oracle.eta[k]).abs() / oracle.eta[k]);
    }
    (worst_val, worst_eta)
}
