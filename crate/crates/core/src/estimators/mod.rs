//! Kernel ridge (KRR), principal component (PCR) and reduced rank (RRR)
//! regression of the transfer operator, in dual form.
//!
//! Every fitted estimator is represented as `G = S* U Vᵀ Z`, where `S*` and
//! `Z*` embed coefficient vectors over the inputs and outputs respectively.
//! With scaled Gram matrices `K = k(xᵢ,xⱼ)/n`, `L = k(yᵢ,yⱼ)/n` and
//! `M = k(yᵢ,xⱼ)/n`, the nonzero spectrum of `G` is the spectrum of the small
//! matrix `Vᵀ M U`, and an eigenvector `v̂` of it lifts to the eigenfunction
//! with input coefficients `U v̂`.
//!
//! * KRR: `U = (K + γI)⁻¹`, `V = I`.
//! * PCR: `U = Q_r (Λ_r + γ)⁻¹`, `V = Q_r` from the top of `K = QΛQᵀ`.
//! * RRR: `V = W`, `U = (K + γI)⁻¹ L W`, where `W` holds the leading
//!   solutions of `K L w = σ² (K + γI) w` normalized to `wᵀ L w = 1`.
//!
//! The RRR pencil is reduced to a symmetric problem in the eigenbasis of `K`.
//! Writing `D = Λ/(Λ+γ)` over the numerically nonzero part of the spectrum,
//! the matrix `H = D^½ Qᵀ L Q D^½` shares its nonzero eigenvalues `σ²` with
//! `(K+γI)⁻¹ K L`, and `w = Q D^½ z / σ` solves the pencil with the required
//! normalization. Directions in the null space of `K` are dropped; they are
//! annihilated by `S*` and so do not change the estimator.

mod archive;

pub use archive::{read_model, write_model};

use faer::{c64, Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::kernels::{gram, gram_sym, KernelSpec};
use crate::numerics::{cholesky_psd, eig_small, mul_real_complex, psd_eig, sym_eig, symmetrize, SymEig};
use crate::{Error, Result, TrajectoryDataset};

/// Cutoff relative to the largest eigenvalue below which a reduced-matrix
/// eigenvalue counts as zero.
pub const ZERO_EIGENVALUE_TOL: f64 = 1e-12;
/// Relative cutoff on the covariance spectrum for PCR.
pub const PCR_RANK_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Krr,
    Pcr,
    Rrr,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Krr => "krr",
            Method::Pcr => "pcr",
            Method::Rrr => "rrr",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressorSpec {
    pub method: Method,
    /// Ignored by KRR.
    #[serde(default = "unit_rank")]
    pub rank: usize,
    pub gamma: f64,
    pub kernel: KernelSpec,
}

fn unit_rank() -> usize {
    1
}

impl RegressorSpec {
    pub fn new(method: Method, rank: usize, gamma: f64, kernel: KernelSpec) -> Self {
        RegressorSpec {
            method,
            rank,
            gamma,
            kernel,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::contract("fit", format!("gamma must be a nonnegative real, got {}", self.gamma)));
        }
        if self.method != Method::Krr && self.rank == 0 {
            return Err(Error::contract("fit", "rank must be at least 1"));
        }
        Ok(())
    }
}

/// A fitted estimator `G = S* U Vᵀ Z` together with its training data.
#[derive(Clone, Debug)]
pub struct FittedModel {
    pub spec: RegressorSpec,
    pub x: Mat<f64>,
    pub y: Mat<f64>,
    /// n × m, with m = rank for PCR/RRR and m = n for KRR.
    pub u: Mat<f64>,
    pub v: Mat<f64>,
    /// `k(xᵢ, xⱼ) / n`
    pub k: Mat<f64>,
    /// `k(yᵢ, yⱼ) / n`
    pub l: Mat<f64>,
    /// `k(yᵢ, xⱼ) / n`
    pub m: Mat<f64>,
    /// Eigendecomposition of `K` with eigenvalues clamped at zero.
    pub k_eig: SymEig,
    /// Eigenvalues of `K`, descending and clamped at zero (PCR and RRR).
    pub cov_spectrum: Option<Vec<f64>>,
    /// Singular values of `(K+γI)^{-½}`-whitened cross-covariance, padded with
    /// zeros to length n (RRR only).
    pub b_svals: Option<Vec<f64>>,
}

/// Spectral decomposition of a fitted estimator.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenDecomposition {
    /// Nonzero eigenvalues, descending modulus.
    pub values: Vec<c64>,
    /// Column i holds `U v̂ᵢ`, the input coefficients of the eigenfunction.
    pub right_coeffs: Mat<c64>,
    /// Column i holds `(λ̂ᵢ/|λ̂ᵢ|) V ûᵢ`, the output coefficients of the left
    /// eigenfunction.
    pub left_coeffs: Mat<c64>,
    /// Set when the reduced matrix is numerically defective.
    pub defective: bool,
}

impl EigenDecomposition {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub(crate) struct Grams {
    pub k: Mat<f64>,
    pub l: Mat<f64>,
    pub m: Mat<f64>,
}

pub(crate) fn scaled_grams(kernel: &KernelSpec, x: MatRef<'_, f64>, y: MatRef<'_, f64>) -> Result<Grams> {
    let inv_n = 1.0 / x.nrows() as f64;
    let scale = |mut g: Mat<f64>| {
        for j in 0..g.ncols() {
            for i in 0..g.nrows() {
                g[(i, j)] *= inv_n;
            }
        }
        g
    };
    Ok(Grams {
        k: scale(gram_sym(kernel, x)?),
        l: scale(gram_sym(kernel, y)?),
        m: scale(gram(kernel, y, x)?),
    })
}

fn check_data(op: &'static str, data: &TrajectoryDataset) -> Result<()> {
    if data.n() == 0 {
        return Err(Error::contract(op, "empty dataset"));
    }
    if data.x.ncols() != data.y.ncols() || data.x.nrows() != data.y.nrows() {
        return Err(Error::contract(op, "inputs and outputs differ in shape"));
    }
    if !crate::numerics::all_finite(data.x.as_ref()) || !crate::numerics::all_finite(data.y.as_ref()) {
        return Err(Error::contract(op, "non-finite sample"));
    }
    Ok(())
}

fn shifted(a: MatRef<'_, f64>, gamma: f64) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] + if i == j { gamma } else { 0.0 })
}

fn require_invertible(k: MatRef<'_, f64>) -> Result<()> {
    cholesky_psd(k, &[0.0]).map(|_| ())
}

/// Leading pencil pairs in the eigenbasis of `K`.
struct PencilReduction {
    /// Kept covariance eigenvalues and vectors.
    lam: Vec<f64>,
    q: Mat<f64>,
    /// Eigenvalues σ² of H, descending, and H's eigenvectors.
    sigma2: Vec<f64>,
    z: Mat<f64>,
}

fn reduce_pencil(cov: &SymEig, l: MatRef<'_, f64>, gamma: f64) -> Result<PencilReduction> {
    let n = cov.values.len();
    let top = cov.values.first().copied().unwrap_or(0.0);
    let cutoff = n as f64 * f64::EPSILON * top;
    let p = cov.values.iter().take_while(|&&v| v > cutoff && v > 0.0).count();
    let lam: Vec<f64> = cov.values[..p].to_vec();
    let q = cov.vectors.subcols(0, p).to_owned();
    let root_d: Vec<f64> = lam.iter().map(|&v| (v / (v + gamma)).sqrt()).collect();
    let lq = l * &q;
    let mut h = q.transpose() * &lq;
    for j in 0..p {
        for i in 0..p {
            h[(i, j)] *= root_d[i] * root_d[j];
        }
    }
    symmetrize(&mut h);
    let e = sym_eig(h.as_ref())?;
    Ok(PencilReduction {
        lam,
        q,
        sigma2: e.values,
        z: e.vectors,
    })
}

impl PencilReduction {
    /// Number of pencil values distinguishable from zero.
    fn numerical_rank(&self) -> usize {
        let p = self.sigma2.len();
        let top = self.sigma2.first().copied().unwrap_or(0.0);
        let tol = p as f64 * f64::EPSILON * top;
        self.sigma2.iter().take_while(|&&s| s > tol && s > 0.0).count()
    }

    fn b_svals(&self, n: usize) -> Vec<f64> {
        let mut out: Vec<f64> = self.sigma2.iter().map(|s| s.max(0.0).sqrt()).collect();
        out.resize(n, 0.0);
        out
    }
}

fn clamp_spectrum(values: &[f64]) -> Vec<f64> {
    values.iter().map(|v| v.max(0.0)).collect()
}

/// Fit an estimator on paired data.
pub fn fit(spec: &RegressorSpec, data: &TrajectoryDataset) -> Result<FittedModel> {
    spec.validate()?;
    check_data("fit", data)?;
    let n = data.n();
    let r = spec.rank;
    if spec.method != Method::Krr && r > n {
        return Err(Error::InsufficientRank {
            requested: r,
            achievable: n,
        });
    }
    let g = scaled_grams(&spec.kernel, data.x.as_ref(), data.y.as_ref())?;
    let gamma = spec.gamma;
    let cov = psd_eig(g.k.as_ref())?;

    let (u, v, cov_spectrum, b_svals) = match spec.method {
        Method::Krr => {
            if gamma == 0.0 {
                require_invertible(g.k.as_ref())?;
            }
            let chol = cholesky_psd(shifted(g.k.as_ref(), gamma).as_ref(), &[0.0])?;
            (chol.inverse(), Mat::<f64>::identity(n, n), None, None)
        }
        Method::Pcr => {
            let top = cov.values[0];
            let achievable = cov.values.iter().take_while(|&&v| v > PCR_RANK_TOL * top && v > 0.0).count();
            if achievable < r {
                return Err(Error::InsufficientRank {
                    requested: r,
                    achievable,
                });
            }
            let v = cov.vectors.subcols(0, r).to_owned();
            let u = Mat::from_fn(n, r, |i, j| v[(i, j)] / (cov.values[j] + gamma));
            (u, v, Some(clamp_spectrum(&cov.values)), None)
        }
        Method::Rrr => {
            if gamma == 0.0 {
                require_invertible(g.k.as_ref())?;
            }
            let red = reduce_pencil(&cov, g.l.as_ref(), gamma)?;
            let achievable = red.numerical_rank();
            if achievable < r {
                return Err(Error::InsufficientRank {
                    requested: r,
                    achievable,
                });
            }
            let p = red.lam.len();
            // W = Q D^½ Z_r / σ
            let scaled_z = Mat::from_fn(p, r, |i, j| {
                red.z[(i, j)] * (red.lam[i] / (red.lam[i] + gamma)).sqrt() / red.sigma2[j].sqrt()
            });
            let w = &red.q * &scaled_z;
            // U = Q (Λ+γ)⁻¹ Qᵀ L W
            let lw = &g.l * &w;
            let mut proj = red.q.transpose() * &lw;
            for j in 0..r {
                for i in 0..p {
                    proj[(i, j)] /= red.lam[i] + gamma;
                }
            }
            let u = &red.q * &proj;
            (u, w, Some(clamp_spectrum(&cov.values)), Some(red.b_svals(n)))
        }
    };

    if !crate::numerics::all_finite(u.as_ref()) || !crate::numerics::all_finite(v.as_ref()) {
        return Err(Error::Solver("non-finite dual coefficients".into()));
    }
    Ok(FittedModel {
        spec: spec.clone(),
        x: data.x.clone(),
        y: data.y.clone(),
        u,
        v,
        k: g.k,
        l: g.l,
        m: g.m,
        k_eig: clamped(cov),
        cov_spectrum,
        b_svals,
    })
}

fn clamped(mut e: SymEig) -> SymEig {
    e.values.iter_mut().for_each(|v| *v = v.max(0.0));
    e
}

/// Spectral decomposition through the reduced matrix `Vᵀ M U`.
pub fn eig(model: &FittedModel) -> Result<EigenDecomposition> {
    let vm = model.v.transpose() * &model.m;
    let reduced = &vm * &model.u;
    let small = eig_small(reduced.as_ref())?;
    let largest = small.values.first().map_or(0.0, |v| v.norm());
    let keep: Vec<usize> = (0..small.values.len())
        .filter(|&i| small.values[i].norm() > ZERO_EIGENVALUE_TOL * largest)
        .collect();
    let m = reduced.nrows();
    let right = Mat::from_fn(m, keep.len(), |i, j| small.right[(i, keep[j])]);
    let left = Mat::from_fn(m, keep.len(), |i, j| {
        let lam = small.values[keep[j]];
        small.left[(i, keep[j])] * (lam / lam.norm())
    });
    Ok(EigenDecomposition {
        values: keep.iter().map(|&i| small.values[i]).collect(),
        right_coeffs: mul_real_complex(model.u.as_ref(), right.as_ref()),
        left_coeffs: mul_real_complex(model.v.as_ref(), left.as_ref()),
        defective: small.defective,
    })
}

impl FittedModel {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Squared RKHS norms `cᴴ K c` and squared empirical `L²` norms `‖K c‖²`
    /// of the functions with input coefficients `c` (one per column).
    ///
    /// Both are evaluated in the eigenbasis of `K`, which keeps them
    /// nonnegative and consistent for coefficients that are large along
    /// numerically null directions.
    pub fn input_norms(&self, coeffs: MatRef<'_, c64>) -> (Vec<f64>, Vec<f64>) {
        let proj = mul_real_complex(self.k_eig.vectors.transpose(), coeffs);
        let lam = &self.k_eig.values;
        (0..coeffs.ncols())
            .map(|j| {
                let mut rkhs = 0.0;
                let mut l2 = 0.0;
                for (k, l) in lam.iter().take(proj.nrows()).enumerate() {
                    let a = proj[(k, j)].norm_sqr() * l;
                    rkhs += a;
                    l2 += a * l;
                }
                (rkhs, l2)
            })
            .unzip()
    }

    /// `ψ̂ᵢ(x) = n^{-½} Σⱼ (U v̂ᵢ)ⱼ k(x, xⱼ)` at each row of `points`.
    pub fn eigenfunctions(&self, decomp: &EigenDecomposition, points: MatRef<'_, f64>) -> Result<Mat<c64>> {
        self.check_points("evaluate_eigenfunctions", points)?;
        let kx = gram(&self.spec.kernel, points, self.x.as_ref())?;
        let mut out = mul_real_complex(kx.as_ref(), decomp.right_coeffs.as_ref());
        let s = 1.0 / (self.n() as f64).sqrt();
        for j in 0..out.ncols() {
            for i in 0..out.nrows() {
                out[(i, j)] *= s;
            }
        }
        Ok(out)
    }

    /// Conditional expectation of an observable one lag ahead:
    /// `n⁻¹ κ(x)ᵀ U Vᵀ F` with raw kernel sections `κ(x) = [k(xᵢ, x)]`.
    /// Row j of `observable` holds `f(yⱼ)`.
    pub fn predict(&self, points: MatRef<'_, f64>, observable: MatRef<'_, f64>) -> Result<Mat<f64>> {
        self.check_points("predict", points)?;
        if observable.nrows() != self.n() {
            return Err(Error::contract(
                "predict",
                format!("observable has {} rows, model has {} samples", observable.nrows(), self.n()),
            ));
        }
        let kx = gram(&self.spec.kernel, points, self.x.as_ref())?;
        let vf = self.v.transpose() * observable;
        let uvf = &self.u * &vf;
        let mut out = &kx * &uvf;
        let s = 1.0 / self.n() as f64;
        for j in 0..out.ncols() {
            for i in 0..out.nrows() {
                out[(i, j)] *= s;
            }
        }
        Ok(out)
    }

    fn check_points(&self, op: &'static str, points: MatRef<'_, f64>) -> Result<()> {
        if points.ncols() != self.dim() {
            return Err(Error::contract(
                op,
                format!("points have dimension {}, model has {}", points.ncols(), self.dim()),
            ));
        }
        Ok(())
    }
}

fn padded(mut values: Vec<f64>, count: usize) -> Vec<f64> {
    values.resize(count.max(values.len()), 0.0);
    values.truncate(count);
    values
}

/// Leading singular values of the whitened cross-covariance operator, the
/// square roots of the top eigenvalues of `(K+γI)⁻¹ K L`.
pub fn svals_b(data: &TrajectoryDataset, kernel: &KernelSpec, gamma: f64, count: usize) -> Result<Vec<f64>> {
    kernel.validate()?;
    check_data("svals_b", data)?;
    if count > data.n() {
        return Err(Error::contract("svals_b", format!("requested {count} values from {} samples", data.n())));
    }
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::contract("svals_b", format!("gamma must be nonnegative, got {gamma}")));
    }
    let g = scaled_grams(kernel, data.x.as_ref(), data.y.as_ref())?;
    let cov = psd_eig(g.k.as_ref())?;
    let red = reduce_pencil(&cov, g.l.as_ref(), gamma)?;
    Ok(padded(red.b_svals(data.n()), count))
}

/// Leading eigenvalues of the empirical covariance, i.e. of `K`.
pub fn cov_eigs(data: &TrajectoryDataset, kernel: &KernelSpec, count: usize) -> Result<Vec<f64>> {
    kernel.validate()?;
    check_data("cov_eigs", data)?;
    if count > data.n() {
        return Err(Error::contract("cov_eigs", format!("requested {count} values from {} samples", data.n())));
    }
    let mut k = gram_sym(kernel, data.x.as_ref())?;
    let inv_n = 1.0 / data.n() as f64;
    for j in 0..k.ncols() {
        for i in 0..k.nrows() {
            k[(i, j)] *= inv_n;
        }
    }
    let cov = psd_eig(k.as_ref())?;
    Ok(padded(clamp_spectrum(&cov.values), count))
}
