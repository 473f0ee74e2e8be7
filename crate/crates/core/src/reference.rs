//! Ground-truth Koopman spectra.
//!
//! The Ornstein–Uhlenbeck spectrum is analytic. For other one-dimensional
//! Langevin potentials the backward generator is discretized on a uniform grid
//! in flux form: neighbouring nodes exchange probability at rates
//! `exp(-β (U_j - U_i) / 2) / (β h²)`. This chain has `e^{-βU}` as its exact
//! invariant law and no flux through the ends (reflecting walls), and after
//! conjugation by `diag(sqrt(π))` it becomes a symmetric tridiagonal matrix
//! with constant off-diagonal. To second order in `h` it agrees with the
//! central-difference discretization of `β⁻¹ f'' - U' f'`.

use std::path::Path;

use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use crate::dynamics::{potential_value_grad, PotentialKind, PotentialSpec};
use crate::kernels::{hermite_values, HERMITE_MAX_INDEX};
use crate::numerics::sym_eig;
use crate::output::{fmt_real, write_csv};
use crate::{Error, Result};

/// Largest tolerated `|ν₁|` for a discretized generator.
pub const TOP_EIGENVALUE_TOL: f64 = 1e-6;
/// Minimum number of Gauss–Hermite nodes behind an analytic spectrum.
pub const MIN_QUADRATURE_NODES: usize = 60;
/// Minimum number of grid points for a generator discretization.
pub const MIN_GRID_POINTS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    AnalyticOu,
    GeneratorFd,
}

impl Provenance {
    pub fn name(&self) -> &'static str {
        match self {
            Provenance::AnalyticOu => "analytic_ou",
            Provenance::GeneratorFd => "generator_fd",
        }
    }
}

/// Uniform grid `x_min = x_1 < … < x_N = x_max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
}

impl Grid {
    /// Covers the triple-well invariant law with negligible outside mass.
    pub fn triple_well_default() -> Self {
        Grid {
            x_min: -1.5,
            x_max: 1.5,
            points: 3000,
        }
    }

    pub fn step(&self) -> f64 {
        (self.x_max - self.x_min) / (self.points - 1) as f64
    }

    fn nodes(&self) -> Vec<f64> {
        let h = self.step();
        (0..self.points).map(|i| self.x_min + i as f64 * h).collect()
    }
}

/// Koopman eigenpairs with a quadrature rule for the invariant law.
///
/// Eigenfunction indices are zero-based: `eigenfunction(0, x) ≡ 1`.
#[derive(Clone, Debug)]
pub struct ReferenceSpectrum {
    /// Descending, starting at 1.
    pub eigenvalues: Vec<f64>,
    pub lag_time: f64,
    pub nodes: Vec<f64>,
    /// Quadrature weights for π; they sum to 1.
    pub weights: Vec<f64>,
    /// `values[(node, j)]`, unit norm in the quadrature inner product.
    pub values: Mat<f64>,
    pub provenance: Provenance,
}

/// Gauss–Hermite rule for the standard normal law, by Golub–Welsch.
pub fn gauss_hermite(m: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if m == 0 {
        return Err(Error::contract("gauss_hermite", "need at least one node"));
    }
    let jacobi = Mat::from_fn(m, m, |i, j| {
        if i.abs_diff(j) == 1 {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let e = sym_eig(jacobi.as_ref())?;
    // Eigenvector components lose relative accuracy in the tails, so polish
    // each node with Newton on f_{m+1} and take the weight from the
    // Christoffel function 1 / Σ_{j≤m} f_j(x)².
    let mut vals = vec![0.0; m + 1];
    let mut nodes = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    for k in (0..m).rev() {
        let mut x = e.values[k];
        for _ in 0..3 {
            hermite_values(x, &mut vals);
            // f_{m+1}' = sqrt(m) f_m
            let slope = (m as f64).sqrt() * vals[m - 1];
            if slope != 0.0 {
                x -= vals[m] / slope;
            }
        }
        hermite_values(x, &mut vals);
        nodes.push(x);
        weights.push(1.0 / vals[..m].iter().map(|v| v * v).sum::<f64>());
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok((nodes, weights))
}

/// `μ_j = exp(-(j-1) lag_time)` with normalized Hermite eigenfunctions.
pub fn ou_spectrum(m: usize, lag_time: f64) -> Result<ReferenceSpectrum> {
    if m == 0 || m > HERMITE_MAX_INDEX {
        return Err(Error::contract(
            "ou_spectrum",
            format!("count {m} outside 1..={HERMITE_MAX_INDEX}"),
        ));
    }
    check_lag("ou_spectrum", lag_time)?;
    let (nodes, weights) = gauss_hermite(MIN_QUADRATURE_NODES.max(m + 1))?;
    let mut row = vec![0.0; m];
    let mut values = Mat::zeros(nodes.len(), m);
    for (i, &x) in nodes.iter().enumerate() {
        hermite_values(x, &mut row);
        for j in 0..m {
            values[(i, j)] = row[j];
        }
    }
    Ok(ReferenceSpectrum {
        eigenvalues: (0..m).map(|j| (-(j as f64) * lag_time).exp()).collect(),
        lag_time,
        nodes,
        weights,
        values,
        provenance: Provenance::AnalyticOu,
    })
}

fn check_lag(op: &'static str, lag_time: f64) -> Result<()> {
    if lag_time.is_finite() && lag_time > 0.0 {
        Ok(())
    } else {
        Err(Error::contract(op, format!("lag time must be positive, got {lag_time}")))
    }
}

/// Leading generator eigenvalues `0 = ν₁ > ν₂ ≥ …` on the grid, with the
/// symmetric eigenvectors and the normalized invariant density at the nodes.
fn generator_eigs(potential: &PotentialSpec, grid: &Grid, m: usize) -> Result<(Vec<f64>, Mat<f64>, Vec<f64>)> {
    let op = "generator_spectrum";
    potential.validate()?;
    if grid.points < MIN_GRID_POINTS {
        return Err(Error::contract(
            op,
            format!("need at least {MIN_GRID_POINTS} grid points, got {}", grid.points),
        ));
    }
    if !(grid.x_min.is_finite() && grid.x_max.is_finite() && grid.x_min < grid.x_max) {
        return Err(Error::contract(op, format!("bad interval [{}, {}]", grid.x_min, grid.x_max)));
    }
    if m == 0 || m > grid.points {
        return Err(Error::contract(op, format!("count {m} outside 1..={}", grid.points)));
    }
    let beta = potential.beta;
    let h = grid.step();
    let nodes = grid.nodes();
    let u: Vec<f64> = nodes.iter().map(|&x| potential_value_grad(potential, x).0).collect();
    let scale = 1.0 / (beta * h * h);
    let n = grid.points;
    let sym = Mat::from_fn(n, n, |i, j| {
        if i.abs_diff(j) == 1 {
            scale
        } else if i == j {
            let mut d = 0.0;
            if i > 0 {
                d += (-0.5 * beta * (u[i - 1] - u[i])).exp();
            }
            if i + 1 < n {
                d += (-0.5 * beta * (u[i + 1] - u[i])).exp();
            }
            -scale * d
        } else {
            0.0
        }
    });
    let e = sym_eig(sym.as_ref())?;
    let mut nu: Vec<f64> = e.values[..m].to_vec();
    if !(nu[0].abs() <= TOP_EIGENVALUE_TOL) {
        return Err(Error::Discretization(format!(
            "top generator eigenvalue {:e} deviates from 0 by more than {TOP_EIGENVALUE_TOL:e}; refine the grid",
            nu[0]
        )));
    }
    // constants are an exact null vector of the chain
    nu[0] = 0.0;
    let u_min = u.iter().copied().fold(f64::INFINITY, f64::min);
    let mut density: Vec<f64> = u.iter().map(|&v| (-beta * (v - u_min)).exp()).collect();
    let mass: f64 = density.iter().sum();
    density.iter_mut().for_each(|p| *p /= mass);
    Ok((nu, e.vectors.subcols(0, m).to_owned(), density))
}

/// Koopman spectrum of `dX = -U'(X) dt + sqrt(2/β) dW` from the discretized
/// generator: `μ_j = exp(ν_j lag_time)`.
pub fn generator_spectrum(potential: &PotentialSpec, grid: &Grid, m: usize, lag_time: f64) -> Result<ReferenceSpectrum> {
    check_lag("generator_spectrum", lag_time)?;
    let (nu, vecs, density) = generator_eigs(potential, grid, m)?;
    let n = grid.points;
    let mut weights: Vec<f64> = density
        .iter()
        .enumerate()
        .map(|(i, p)| if i == 0 || i + 1 == n { 0.5 * p } else { *p })
        .collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);

    let mut values = Mat::zeros(n, m);
    for j in 0..m {
        // The symmetric eigenvector carries a sqrt(π) factor.
        let mut f: Vec<f64> = (0..n).map(|i| vecs[(i, j)] / density[i].sqrt()).collect();
        let norm = f.iter().zip(&weights).map(|(v, w)| w * v * v).sum::<f64>().sqrt();
        // Sign: the largest component of the symmetric vector is positive.
        let pivot = (0..n)
            .max_by(|&a, &b| vecs[(a, j)].abs().total_cmp(&vecs[(b, j)].abs()))
            .expect("nonempty grid");
        let sign = if vecs[(pivot, j)] < 0.0 { -1.0 } else { 1.0 };
        f.iter_mut().for_each(|v| *v *= sign / norm);
        for i in 0..n {
            values[(i, j)] = f[i];
        }
    }
    Ok(ReferenceSpectrum {
        eigenvalues: nu.iter().map(|v| (v * lag_time).exp()).collect(),
        lag_time,
        nodes: grid.nodes(),
        weights,
        values,
        provenance: Provenance::GeneratorFd,
    })
}

impl ReferenceSpectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvalues_complex(&self) -> Vec<c64> {
        self.eigenvalues.iter().map(|&v| c64::new(v, 0.0)).collect()
    }

    /// Eigenfunction `j` (zero-based) at an arbitrary point. Grid-based spectra
    /// interpolate linearly and hold the end values outside the grid.
    pub fn eigenfunction(&self, j: usize, x: f64) -> Result<f64> {
        if j >= self.len() {
            return Err(Error::contract(
                "eigenfunction",
                format!("index {j} outside 0..{}", self.len()),
            ));
        }
        match self.provenance {
            Provenance::AnalyticOu => {
                let mut out = vec![0.0; j + 1];
                hermite_values(x, &mut out);
                Ok(out[j])
            }
            Provenance::GeneratorFd => {
                let nodes = &self.nodes;
                let last = nodes.len() - 1;
                if x <= nodes[0] {
                    return Ok(self.values[(0, j)]);
                }
                if x >= nodes[last] {
                    return Ok(self.values[(last, j)]);
                }
                let h = (nodes[last] - nodes[0]) / last as f64;
                let k = (((x - nodes[0]) / h).floor() as usize).min(last - 1);
                let t = (x - nodes[k]) / h;
                Ok((1.0 - t) * self.values[(k, j)] + t * self.values[(k + 1, j)])
            }
        }
    }

    /// Quadrature inner product `Σ w_i a_i b_i`.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.weights.iter().zip(a).zip(b).map(|((w, x), y)| w * x * y).sum()
    }

    /// `‖f̂ - f_j‖²` in `L²(π)` after scaling `f̂` to unit norm and rotating its
    /// phase onto `f_j`. `estimated` holds values at the quadrature nodes.
    pub fn l2pi_compare(&self, j: usize, estimated: &[c64]) -> Result<f64> {
        let aligned = self.align(j, estimated)?;
        Ok((0..self.nodes.len())
            .map(|i| self.weights[i] * (aligned[i] - self.values[(i, j)]).norm_sqr())
            .sum())
    }

    /// `estimated` scaled to unit norm with the phase that maximizes its real
    /// inner product with `f_j`.
    pub fn align(&self, j: usize, estimated: &[c64]) -> Result<Vec<c64>> {
        let op = "l2pi_compare";
        if j >= self.len() {
            return Err(Error::contract(op, format!("index {j} outside 0..{}", self.len())));
        }
        if estimated.len() != self.nodes.len() {
            return Err(Error::contract(
                op,
                format!("expected {} node values, got {}", self.nodes.len(), estimated.len()),
            ));
        }
        let norm_sq: f64 = estimated.iter().zip(&self.weights).map(|(g, w)| w * g.norm_sqr()).sum();
        if !(norm_sq > 0.0) || !norm_sq.is_finite() {
            return Err(Error::contract(op, "estimate has zero or non-finite norm"));
        }
        let overlap: c64 = (0..self.nodes.len())
            .map(|i| estimated[i].conj() * (self.weights[i] * self.values[(i, j)]))
            .sum();
        let phase = if overlap.norm() > 0.0 {
            overlap / overlap.norm()
        } else {
            c64::new(1.0, 0.0)
        };
        let scale = phase / norm_sq.sqrt();
        Ok(estimated.iter().map(|g| g * scale).collect())
    }

    /// Columns `j, mu`.
    pub fn write_eigenvalues_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let rows: Vec<Vec<String>> = self
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(j, mu)| vec![(j + 1).to_string(), fmt_real(*mu)])
            .collect();
        write_csv(path, &["j", "mu"], &rows)
    }

    /// Columns `x, weight, f1, …, fm` at the quadrature nodes.
    pub fn write_eigenfunctions_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let names: Vec<String> = (1..=self.len()).map(|j| format!("f{j}")).collect();
        let mut header = vec!["x", "weight"];
        header.extend(names.iter().map(String::as_str));
        let rows: Vec<Vec<String>> = (0..self.nodes.len())
            .map(|i| {
                let mut row = vec![fmt_real(self.nodes[i]), fmt_real(self.weights[i])];
                row.extend((0..self.len()).map(|j| fmt_real(self.values[(i, j)])));
                row
            })
            .collect();
        write_csv(path, &header, &rows)
    }
}

/// Default quadrature grid for a potential.
pub fn default_grid(potential: &PotentialSpec) -> Grid {
    match potential.kind {
        PotentialKind::TripleWell => Grid::triple_well_default(),
        PotentialKind::Quadratic => {
            // ±8 standard deviations of the invariant Gaussian
            let half = 8.0 / (potential.beta * potential.theta).sqrt();
            Grid {
                x_min: -half,
                x_max: half,
                points: 2000,
            }
        }
    }
}
