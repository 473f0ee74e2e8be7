//! Dense linear algebra on top of `faer`.
//!
//! Symmetric spectra are returned in descending order and general spectra in
//! descending modulus, so that downstream code can talk about "the (r+1)-th
//! value" without re-sorting.

use faer::linalg::solvers::DenseSolveCore;
use faer::linalg::triangular_solve::{
    solve_lower_triangular_in_place, solve_upper_triangular_in_place,
};
use faer::{c64, Mat, MatRef, Par, Side};

use crate::{Error, Result};

/// Relative jitter levels tried by [`cholesky_psd`], in units of `max|A_ij|`.
pub const DEFAULT_JITTER: [f64; 5] = [0.0, 1e-12, 1e-10, 1e-8, 1e-6];

const SYMMETRY_TOL: f64 = 1e-10;
const DEFECT_TOL: f64 = 1e-12;
/// [`psd_eig`] gives up on the low-rank path past `n / LOW_RANK_FRACTION` columns.
const LOW_RANK_FRACTION: usize = 8;

#[derive(Clone, Debug)]
pub struct SymEig {
    /// Descending.
    pub values: Vec<f64>,
    /// Orthonormal columns, paired with the leading `values`. May have fewer
    /// columns than `values` has entries when the trailing values are zero.
    pub vectors: Mat<f64>,
}

#[derive(Clone, Debug)]
pub struct SmallEig {
    /// Sorted by descending modulus.
    pub values: Vec<c64>,
    /// Unit-norm right eigenvectors as columns.
    pub right: Mat<c64>,
    /// Left eigenvectors `u` with `u^H A = λ u^H`, scaled so that `u^H v = 1`.
    pub left: Mat<c64>,
    /// Set when some eigenvalue is (numerically) defective.
    pub defective: bool,
}

#[derive(Clone, Debug)]
pub struct Cholesky {
    /// Lower-triangular `R` with `R R^T = A + jitter I`.
    pub factor: Mat<f64>,
    /// Absolute diagonal shift that made the factorization succeed.
    pub jitter: f64,
}

pub fn max_abs(a: MatRef<'_, f64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].abs());
        }
    }
    m
}

pub(crate) fn all_finite(a: MatRef<'_, f64>) -> bool {
    (0..a.ncols()).all(|j| (0..a.nrows()).all(|i| a[(i, j)].is_finite()))
}

fn all_finite_c(a: MatRef<'_, c64>) -> bool {
    (0..a.ncols()).all(|j| (0..a.nrows()).all(|i| a[(i, j)].re.is_finite() && a[(i, j)].im.is_finite()))
}

fn check_symmetric(op: &'static str, a: MatRef<'_, f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::contract(
            op,
            format!("expected a square matrix, got {}x{}", a.nrows(), a.ncols()),
        ));
    }
    if !all_finite(a) {
        return Err(Error::contract(op, "non-finite entry"));
    }
    let tol = SYMMETRY_TOL * max_abs(a);
    for j in 0..a.ncols() {
        for i in 0..j {
            if (a[(i, j)] - a[(j, i)]).abs() > tol {
                return Err(Error::contract(
                    op,
                    format!("matrix is not symmetric at ({i}, {j})"),
                ));
            }
        }
    }
    Ok(())
}

/// Eigendecomposition of a symmetric matrix, eigenvalues descending.
pub fn sym_eig(a: MatRef<'_, f64>) -> Result<SymEig> {
    check_symmetric("sym_eig", a)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(SymEig {
            values: Vec::new(),
            vectors: Mat::zeros(0, 0),
        });
    }
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Solver(format!("symmetric eigensolver: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let values: Vec<f64> = (0..n).rev().map(|i| s[i]).collect();
    let vectors = Mat::from_fn(n, n, |i, j| u[(i, n - 1 - j)]);
    if values.iter().any(|v| !v.is_finite()) || !all_finite(vectors.as_ref()) {
        return Err(Error::Solver("symmetric eigensolver produced non-finite output".into()));
    }
    Ok(SymEig { values, vectors })
}

/// Eigendecomposition of a positive semidefinite matrix that exploits low
/// numerical rank.
///
/// A diagonally pivoted Cholesky factor `G` with `A ≈ G Gᵀ` is grown until
/// the trace of the residual drops below `n ε tr(A)`. When that happens within
/// `n / LOW_RANK_FRACTION` columns the spectrum is read off a thin QR of `G`;
/// otherwise this falls back to [`sym_eig`]. On the low-rank path `vectors`
/// has only as many columns as the factor, and the remaining entries of
/// `values` are zero.
pub fn psd_eig(a: MatRef<'_, f64>) -> Result<SymEig> {
    check_symmetric("psd_eig", a)?;
    let n = a.nrows();
    let budget = n / LOW_RANK_FRACTION;
    if budget == 0 {
        return sym_eig(a);
    }
    let trace: f64 = (0..n).map(|i| a[(i, i)].max(0.0)).sum();
    let tol = n as f64 * f64::EPSILON * trace;
    let mut diag: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    let mut g = Mat::<f64>::zeros(n, budget);
    let mut rank = 0;
    loop {
        let residual: f64 = diag.iter().map(|d| d.max(0.0)).sum();
        if residual <= tol {
            break;
        }
        if rank == budget {
            return sym_eig(a);
        }
        let (piv, &d) = diag
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.total_cmp(y.1))
            .expect("nonempty diagonal");
        if d <= 0.0 {
            break;
        }
        let root = d.sqrt();
        for i in 0..n {
            let mut v = a[(i, piv)];
            for k in 0..rank {
                v -= g[(i, k)] * g[(piv, k)];
            }
            g[(i, rank)] = v / root;
        }
        for (i, d) in diag.iter_mut().enumerate() {
            *d -= g[(i, rank)] * g[(i, rank)];
        }
        diag[piv] = 0.0;
        rank += 1;
    }
    let mut values = vec![0.0; n];
    if rank == 0 {
        return Ok(SymEig {
            values,
            vectors: Mat::zeros(n, 0),
        });
    }
    let qr = g.subcols(0, rank).qr();
    let q = qr.compute_thin_Q();
    let r = qr.thin_R();
    let mut small = r * r.transpose();
    symmetrize(&mut small);
    let e = sym_eig(small.as_ref())?;
    values[..rank].copy_from_slice(&e.values);
    Ok(SymEig {
        values,
        vectors: &q * &e.vectors,
    })
}

/// Cholesky factorization with an escalating diagonal shift.
///
/// `schedule` holds relative levels; the absolute shift is `level * max|A_ij|`.
pub fn cholesky_psd(a: MatRef<'_, f64>, schedule: &[f64]) -> Result<Cholesky> {
    check_symmetric("cholesky_psd", a)?;
    let n = a.nrows();
    let scale = max_abs(a);
    let mut last = 0.0;
    for &level in schedule {
        let jitter = level * scale;
        last = jitter;
        let shifted = Mat::from_fn(n, n, |i, j| a[(i, j)] + if i == j { jitter } else { 0.0 });
        if let Ok(llt) = shifted.llt(Side::Lower) {
            let l = llt.L();
            let factor = Mat::from_fn(n, n, |i, j| if i >= j { l[(i, j)] } else { 0.0 });
            if all_finite(factor.as_ref()) {
                return Ok(Cholesky { factor, jitter });
            }
        }
    }
    Err(Error::NotPsd { jitter: last })
}

impl Cholesky {
    /// `R^{-1} B`.
    pub fn solve_lower(&self, b: MatRef<'_, f64>) -> Mat<f64> {
        let mut x = b.to_owned();
        solve_lower_triangular_in_place(self.factor.as_ref(), x.as_mut(), Par::Seq);
        x
    }

    /// `R^{-T} B`.
    pub fn solve_upper(&self, b: MatRef<'_, f64>) -> Mat<f64> {
        let mut x = b.to_owned();
        solve_upper_triangular_in_place(self.factor.transpose(), x.as_mut(), Par::Seq);
        x
    }

    /// `(A + jitter I)^{-1} B`.
    pub fn solve(&self, b: MatRef<'_, f64>) -> Mat<f64> {
        let y = self.solve_lower(b);
        self.solve_upper(y.as_ref())
    }

    /// `(A + jitter I)^{-1}`, exactly symmetric.
    pub fn inverse(&self) -> Mat<f64> {
        let n = self.factor.nrows();
        let mut inv = self.solve(Mat::<f64>::identity(n, n).as_ref());
        symmetrize(&mut inv);
        inv
    }
}

/// Top-`count` solutions of `A w = σ² B w` for symmetric PSD `A` and PD `B`.
///
/// `B` is whitened by its Cholesky factor; the returned vectors satisfy
/// `w^T B w = 1`.
pub fn gen_eig_psd(a: MatRef<'_, f64>, b: MatRef<'_, f64>, count: usize) -> Result<SymEig> {
    check_symmetric("gen_eig_psd", a)?;
    check_symmetric("gen_eig_psd", b)?;
    let n = a.nrows();
    if b.nrows() != n {
        return Err(Error::contract("gen_eig_psd", "A and B differ in size"));
    }
    if count > n {
        return Err(Error::contract(
            "gen_eig_psd",
            format!("requested {count} pairs from a {n}x{n} pencil"),
        ));
    }
    let chol = cholesky_psd(b, &DEFAULT_JITTER).map_err(|e| match e {
        Error::NotPsd { jitter } => Error::DegeneratePencil { jitter },
        other => other,
    })?;
    // R^{-1} A R^{-T}
    let left = chol.solve_lower(a);
    let mut whitened = chol.solve_lower(left.transpose());
    symmetrize(&mut whitened);
    let eig = sym_eig(whitened.as_ref())?;
    let z = eig.vectors.subcols(0, count).to_owned();
    let vectors = chol.solve_upper(z.as_ref());
    let values = eig.values[..count].iter().map(|v| v.max(0.0)).collect();
    Ok(SymEig { values, vectors })
}

/// Full eigendecomposition of a small general real matrix.
pub fn eig_small(a: MatRef<'_, f64>) -> Result<SmallEig> {
    let r = a.nrows();
    if r == 0 || a.ncols() != r {
        return Err(Error::contract(
            "eig_small",
            format!("expected a nonempty square matrix, got {}x{}", a.nrows(), a.ncols()),
        ));
    }
    if !all_finite(a) {
        return Err(Error::contract("eig_small", "non-finite entry"));
    }
    let (values, right) = sorted_eigen(a)?;

    let mut defective = false;
    let inv = right.as_ref().partial_piv_lu().inverse();
    let left = if all_finite_c(inv.as_ref()) {
        Mat::from_fn(r, r, |i, j| inv[(j, i)].conj())
    } else {
        defective = true;
        left_by_transpose(a, &values, right.as_ref())?
    };

    for i in 0..r {
        let mut dot = c64::new(0.0, 0.0);
        let (mut nu, mut nv) = (0.0, 0.0);
        for k in 0..r {
            dot += left[(k, i)].conj() * right[(k, i)];
            nu += left[(k, i)].norm_sqr();
            nv += right[(k, i)].norm_sqr();
        }
        if !(dot.norm() >= DEFECT_TOL * (nu * nv).sqrt()) {
            defective = true;
        }
    }
    Ok(SmallEig {
        values,
        right,
        left,
        defective,
    })
}

/// Diagonal similarity `D⁻¹ A D` with power-of-two entries that brings row
/// and column norms of each index close together (Parlett–Reinsch).
fn balance(a: MatRef<'_, f64>) -> (Mat<f64>, Vec<f64>) {
    const RADIX: f64 = 2.0;
    let n = a.nrows();
    let mut b = a.to_owned();
    let mut d = vec![1.0; n];
    let mut converged = false;
    while !converged {
        converged = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += b[(j, i)].abs();
                    r += b[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let total = c + r;
            let mut f = 1.0;
            while c < r / RADIX {
                c *= RADIX;
                r /= RADIX;
                f *= RADIX;
            }
            while c >= r * RADIX {
                c /= RADIX;
                r *= RADIX;
                f /= RADIX;
            }
            if (c + r) < 0.95 * total {
                converged = false;
                d[i] *= f;
                for j in 0..n {
                    b[(i, j)] /= f;
                    b[(j, i)] *= f;
                }
            }
        }
    }
    (b, d)
}

fn sorted_eigen(a: MatRef<'_, f64>) -> Result<(Vec<c64>, Mat<c64>)> {
    let r = a.nrows();
    let (balanced, scale) = balance(a);
    let evd = balanced
        .eigen()
        .map_err(|e| Error::Solver(format!("general eigensolver: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (s[i], s[j]);
        b.norm()
            .total_cmp(&a.norm())
            .then(b.im.total_cmp(&a.im))
            .then(b.re.total_cmp(&a.re))
    });
    let values: Vec<c64> = order.iter().map(|&i| s[i]).collect();
    let mut right = Mat::from_fn(r, r, |i, j| u[(i, order[j])] * scale[i]);
    for j in 0..r {
        let norm: f64 = (0..r).map(|i| right[(i, j)].norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 {
            for i in 0..r {
                right[(i, j)] /= norm;
            }
        }
    }
    if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) || !all_finite_c(right.as_ref()) {
        return Err(Error::Solver("general eigensolver produced non-finite output".into()));
    }
    Ok((values, right))
}

/// Fallback pairing when the right eigenvector matrix is singular: left
/// vectors of `A` are right vectors of `A^T` for the conjugate eigenvalue.
fn left_by_transpose(a: MatRef<'_, f64>, values: &[c64], right: MatRef<'_, c64>) -> Result<Mat<c64>> {
    let r = a.nrows();
    let (tvalues, tvecs) = sorted_eigen(a.transpose())?;
    let mut left = Mat::<c64>::zeros(r, r);
    let mut used = vec![false; r];
    for (i, lam) in values.iter().enumerate() {
        let target = lam.conj();
        let k = (0..r)
            .filter(|&k| !used[k])
            .min_by(|&p, &q| (tvalues[p] - target).norm().total_cmp(&(tvalues[q] - target).norm()))
            .expect("as many candidates as eigenvalues");
        used[k] = true;
        let mut dot = c64::new(0.0, 0.0);
        for m in 0..r {
            dot += tvecs[(m, k)].conj() * right[(m, i)];
        }
        // Rescale so that u^H v = 1 whenever the pairing is not orthogonal.
        let scale = if dot.norm() > 0.0 { c64::new(1.0, 0.0) / dot.conj() } else { c64::new(1.0, 0.0) };
        for m in 0..r {
            left[(m, i)] = tvecs[(m, k)] * scale;
        }
    }
    Ok(left)
}

/// Replace `a` by `(a + a^T) / 2`.
pub fn symmetrize(a: &mut Mat<f64>) {
    let n = a.nrows();
    for j in 0..n {
        for i in 0..j {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}

/// Real-by-complex product, computed as two real products.
pub fn mul_real_complex(a: MatRef<'_, f64>, b: MatRef<'_, c64>) -> Mat<c64> {
    let re = Mat::from_fn(b.nrows(), b.ncols(), |i, j| b[(i, j)].re);
    let im = Mat::from_fn(b.nrows(), b.ncols(), |i, j| b[(i, j)].im);
    let pr = a * &re;
    let pi = a * &im;
    Mat::from_fn(a.nrows(), b.ncols(), |i, j| c64::new(pr[(i, j)], pi[(i, j)]))
}

/// Column-wise `c_j^H A c_j` for Hermitian-real `A`; imaginary parts cancel.
pub fn quadratic_forms(a: MatRef<'_, f64>, c: MatRef<'_, c64>) -> Vec<f64> {
    let ac = mul_real_complex(a, c);
    (0..c.ncols())
        .map(|j| (0..c.nrows()).map(|i| (c[(i, j)].conj() * ac[(i, j)]).re).sum())
        .collect()
}
