//! Positive-definite kernels and Gram assembly.
//!
//! The squared-exponential kernel uses `exp(-|x - x'|² / (2ℓ²))`. Matérn
//! kernels use the usual closed forms with `√3 d/ℓ` and `√5 d/ℓ`.
//!
//! The Hermite-spectral family is built from the eigenfunctions of the unit-lag
//! Ornstein–Uhlenbeck transfer operator: with `μ_j = exp(-rate (j-1))` and a
//! permutation `Π` of `1..=T`,
//!
//! ```text
//! k(x, x') = Σ_i μ_{Π(i)}^{2ν} f_i(x) f_i(x')
//! ```
//!
//! where `f_i` are normalized probabilists' Hermite polynomials. Reordering the
//! weights changes which eigenfunctions the kernel favours, which is how the
//! good/bad/ugly presets are produced.

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Largest Hermite index for which the normalized recurrence is trusted.
pub const HERMITE_MAX_INDEX: usize = 150;
/// Truncation used by the good/bad/ugly presets.
pub const PRESET_TRUNCATION: usize = 53;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    Rbf {
        lengthscale: f64,
    },
    Matern {
        smoothness: f64,
        lengthscale: f64,
    },
    Linear,
    HermiteSpectral {
        truncation: usize,
        exponent: f64,
        /// One-based; identity when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        permutation: Option<Vec<usize>>,
        #[serde(default = "unit_rate")]
        base_rate: f64,
    },
}

fn unit_rate() -> f64 {
    1.0
}

/// Explicit finite feature map of a kernel: `k(x, x') = Σ w_i² f_i(x) f_i(x')`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMapView {
    pub dimension: usize,
    pub weights: Vec<f64>,
    /// For Hermite-spectral kernels, the one-based index `Π(i)` of the
    /// eigenvalue weighting feature `i`. Identity for linear kernels.
    pub weight_index: Vec<usize>,
    hermite: bool,
}

impl FeatureMapView {
    /// Weighted features `w_i f_i(x)`.
    pub fn features(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dimension];
        self.fill(x, &mut out);
        out
    }

    fn fill(&self, x: &[f64], out: &mut [f64]) {
        if self.hermite {
            hermite_values(x[0], out);
        } else {
            out.copy_from_slice(x);
        }
        for (o, w) in out.iter_mut().zip(&self.weights) {
            *o *= w;
        }
    }

    /// Weighted feature matrix, one row per point.
    pub fn feature_matrix(&self, points: MatRef<'_, f64>) -> Mat<f64> {
        let mut f = Mat::zeros(points.nrows(), self.dimension);
        let mut row = vec![0.0; self.dimension];
        let mut x = vec![0.0; points.ncols()];
        for i in 0..points.nrows() {
            for (k, v) in x.iter_mut().enumerate() {
                *v = points[(i, k)];
            }
            self.fill(&x, &mut row);
            for (k, v) in row.iter().enumerate() {
                f[(i, k)] = *v;
            }
        }
        f
    }
}

impl KernelSpec {
    pub fn rbf(lengthscale: f64) -> Self {
        KernelSpec::Rbf { lengthscale }
    }

    pub fn matern(smoothness: f64, lengthscale: f64) -> Self {
        KernelSpec::Matern {
            smoothness,
            lengthscale,
        }
    }

    /// Weights follow the OU spectrum: the leading eigenfunctions dominate.
    pub fn good() -> Self {
        KernelSpec::HermiteSpectral {
            truncation: PRESET_TRUNCATION,
            exponent: 1.0,
            permutation: None,
            base_rate: 1.0,
        }
    }

    /// Leading `rank` eigenfunctions demoted behind the next `rank`, with a
    /// flattened weight profile.
    pub fn bad(rank: usize) -> Result<Self> {
        Self::scrambled(rank, 1.0 / (rank * rank) as f64)
    }

    /// Same reordering as [`KernelSpec::bad`] with a sharpened profile, which
    /// makes the kernel numerically low rank.
    pub fn ugly(rank: usize) -> Result<Self> {
        Self::scrambled(rank, (rank * rank) as f64)
    }

    fn scrambled(rank: usize, exponent: f64) -> Result<Self> {
        if rank == 0 || 2 * rank > PRESET_TRUNCATION {
            return Err(Error::contract(
                "kernel preset",
                format!("rank {rank} outside 1..={}", PRESET_TRUNCATION / 2),
            ));
        }
        Ok(KernelSpec::HermiteSpectral {
            truncation: PRESET_TRUNCATION,
            exponent,
            permutation: Some(swap_shift_permutation(PRESET_TRUNCATION, rank)),
            base_rate: 1.0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |detail: String| Err(Error::contract("kernel spec", detail));
        match self {
            KernelSpec::Rbf { lengthscale } => {
                if !(lengthscale.is_finite() && *lengthscale > 0.0) {
                    return bad(format!("lengthscale must be positive, got {lengthscale}"));
                }
            }
            KernelSpec::Matern {
                smoothness,
                lengthscale,
            } => {
                if !(lengthscale.is_finite() && *lengthscale > 0.0) {
                    return bad(format!("lengthscale must be positive, got {lengthscale}"));
                }
                if *smoothness != 1.5 && *smoothness != 2.5 {
                    return bad(format!("Matern smoothness must be 1.5 or 2.5, got {smoothness}"));
                }
            }
            KernelSpec::Linear => {}
            KernelSpec::HermiteSpectral {
                truncation,
                exponent,
                permutation,
                base_rate,
            } => {
                if *truncation == 0 || *truncation > HERMITE_MAX_INDEX {
                    return bad(format!("truncation must lie in 1..={HERMITE_MAX_INDEX}, got {truncation}"));
                }
                if !(exponent.is_finite() && *exponent > 0.0) {
                    return bad(format!("exponent must be positive, got {exponent}"));
                }
                if !(base_rate.is_finite() && *base_rate > 0.0) {
                    return bad(format!("base_rate must be positive, got {base_rate}"));
                }
                if let Some(p) = permutation {
                    let mut seen = vec![false; *truncation];
                    if p.len() != *truncation {
                        return bad(format!("permutation has {} entries, expected {truncation}", p.len()));
                    }
                    for &v in p {
                        if v == 0 || v > *truncation || seen[v - 1] {
                            return bad(format!("permutation is not a bijection on 1..={truncation}"));
                        }
                        seen[v - 1] = true;
                    }
                }
            }
        }
        Ok(())
    }

    /// Short human-readable label, stable across runs.
    pub fn label(&self) -> String {
        match self {
            KernelSpec::Rbf { lengthscale } => format!("rbf(l={lengthscale})"),
            KernelSpec::Matern {
                smoothness,
                lengthscale,
            } => format!("matern(nu={smoothness},l={lengthscale})"),
            KernelSpec::Linear => "linear".into(),
            KernelSpec::HermiteSpectral {
                truncation,
                exponent,
                permutation,
                base_rate,
            } => {
                let perm = if permutation.is_some() { ",permuted" } else { "" };
                format!("hermite(T={truncation},nu={exponent},rate={base_rate}{perm})")
            }
        }
    }

    /// Finite feature map, available for linear and Hermite-spectral kernels.
    pub fn feature_map(&self, dim: usize) -> Option<FeatureMapView> {
        match self {
            KernelSpec::Linear => Some(FeatureMapView {
                dimension: dim,
                weights: vec![1.0; dim],
                weight_index: (1..=dim).collect(),
                hermite: false,
            }),
            KernelSpec::HermiteSpectral {
                truncation,
                exponent,
                permutation,
                base_rate,
            } if dim == 1 => {
                let index: Vec<usize> = match permutation {
                    Some(p) => p.clone(),
                    None => (1..=*truncation).collect(),
                };
                let weights = index
                    .iter()
                    .map(|&p| (-exponent * base_rate * (p as f64 - 1.0)).exp())
                    .collect();
                Some(FeatureMapView {
                    dimension: *truncation,
                    weights,
                    weight_index: index,
                    hermite: true,
                })
            }
            _ => None,
        }
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if matches!(self, KernelSpec::HermiteSpectral { .. }) && d != 1 {
            return Err(Error::contract(
                "kernel eval",
                format!("Hermite-spectral kernels act on scalars, got dimension {d}"),
            ));
        }
        Ok(())
    }
}

/// The permutation that swaps `i ↔ 2r - i + 1` on the first `r` indices and
/// shifts `r < i ≤ 2r` down by `r`; identity beyond `2r`. One-based.
pub fn swap_shift_permutation(truncation: usize, rank: usize) -> Vec<usize> {
    (1..=truncation)
        .map(|i| {
            if i <= rank {
                2 * rank - i + 1
            } else if i <= 2 * rank {
                i - rank
            } else {
                i
            }
        })
        .collect()
}

/// Normalized Hermite eigenfunction `f_j = He_{j-1} / sqrt((j-1)!)`, `j ≥ 1`.
pub fn hermite_eigenfunction(j: usize, x: f64) -> Result<f64> {
    if j == 0 || j > HERMITE_MAX_INDEX {
        return Err(Error::contract(
            "hermite_eigenfunction",
            format!("index {j} outside 1..={HERMITE_MAX_INDEX}"),
        ));
    }
    let mut out = vec![0.0; j];
    hermite_values(x, &mut out);
    Ok(out[j - 1])
}

/// Fill `out[k] = f_{k+1}(x)` by the normalized three-term recurrence.
pub(crate) fn hermite_values(x: f64, out: &mut [f64]) {
    let (mut prev, mut cur) = (0.0, 1.0);
    for (k, o) in out.iter_mut().enumerate() {
        *o = cur;
        // f_{j+1} = (x f_j - sqrt(j-1) f_{j-1}) / sqrt(j), with j = k + 1.
        let j = (k + 1) as f64;
        let next = (x * cur - (j - 1.0).sqrt() * prev) / j.sqrt();
        prev = cur;
        cur = next;
    }
}

pub fn eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::contract(
            "kernel eval",
            format!("point dimensions differ: {} vs {}", x.len(), y.len()),
        ));
    }
    spec.check_dim(x.len())?;
    Ok(match spec {
        KernelSpec::HermiteSpectral { .. } => {
            let view = spec.feature_map(1).expect("scalar input checked");
            let (fx, fy) = (view.features(x), view.features(y));
            fx.iter().zip(&fy).map(|(a, b)| a * b).sum()
        }
        _ => pair(spec, x, y),
    })
}

fn pair(spec: &KernelSpec, x: &[f64], y: &[f64]) -> f64 {
    match spec {
        KernelSpec::Rbf { lengthscale } => (-sq_dist(x, y) / (2.0 * lengthscale * lengthscale)).exp(),
        KernelSpec::Matern {
            smoothness,
            lengthscale,
        } => {
            let d = sq_dist(x, y).sqrt() / lengthscale;
            if *smoothness == 1.5 {
                let s = 3f64.sqrt() * d;
                (1.0 + s) * (-s).exp()
            } else {
                let s = 5f64.sqrt() * d;
                (1.0 + s + s * s / 3.0) * (-s).exp()
            }
        }
        KernelSpec::Linear => x.iter().zip(y).map(|(a, b)| a * b).sum(),
        KernelSpec::HermiteSpectral { .. } => unreachable!("handled through the feature map"),
    }
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn row(m: MatRef<'_, f64>, i: usize) -> Vec<f64> {
    (0..m.ncols()).map(|k| m[(i, k)]).collect()
}

/// Raw (unscaled) cross Gram matrix `[k(x_i, x'_j)]`.
pub fn gram(spec: &KernelSpec, xs: MatRef<'_, f64>, ys: MatRef<'_, f64>) -> Result<Mat<f64>> {
    if xs.ncols() != ys.ncols() {
        return Err(Error::contract(
            "gram",
            format!("point dimensions differ: {} vs {}", xs.ncols(), ys.ncols()),
        ));
    }
    spec.check_dim(xs.ncols())?;
    if let Some(view) = spec.feature_map(xs.ncols()) {
        let fx = view.feature_matrix(xs);
        let fy = view.feature_matrix(ys);
        return Ok(&fx * fy.transpose());
    }
    let yrows: Vec<Vec<f64>> = (0..ys.nrows()).map(|j| row(ys, j)).collect();
    let mut g = Mat::zeros(xs.nrows(), ys.nrows());
    for i in 0..xs.nrows() {
        let x = row(xs, i);
        for (j, y) in yrows.iter().enumerate() {
            g[(i, j)] = pair(spec, &x, y);
        }
    }
    Ok(g)
}

/// Raw Gram matrix of one point set; exactly symmetric by construction.
pub fn gram_sym(spec: &KernelSpec, xs: MatRef<'_, f64>) -> Result<Mat<f64>> {
    spec.check_dim(xs.ncols())?;
    let n = xs.nrows();
    let mut g = if let Some(view) = spec.feature_map(xs.ncols()) {
        let f = view.feature_matrix(xs);
        &f * f.transpose()
    } else {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| row(xs, i)).collect();
        let mut g = Mat::zeros(n, n);
        for j in 0..n {
            for i in 0..=j {
                g[(i, j)] = pair(spec, &rows[i], &rows[j]);
            }
        }
        g
    };
    for j in 0..n {
        for i in j + 1..n {
            g[(i, j)] = g[(j, i)];
        }
    }
    Ok(g)
}
