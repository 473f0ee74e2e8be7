//! Data-driven spectral diagnostics for fitted estimators.
//!
//! Everything is computed from the cached scaled Gram matrices. For input
//! coefficients `a` and output coefficients `b`,
//!
//! ```text
//! ‖S* a‖² = aᴴ K a,   ‖Z* b‖² = bᴴ L b,   ⟨S* a, Z* b⟩ = aᴴ Mᵀ b,
//! ‖S S* a‖² = ‖K a‖²
//! ```
//!
//! which is all that metric distortion and eigenvalue condition numbers need.

use faer::{c64, MatRef};
use serde::{Deserialize, Serialize};

use crate::estimators::{svals_b, EigenDecomposition, FittedModel, Method};
use crate::numerics::{mul_real_complex, quadratic_forms};
use crate::output::fmt_real;
use crate::{Error, Result, TrajectoryDataset};

/// Which covariance factor enters the PCR spectral bias.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcrBiasForm {
    /// `η̂ᵢ · sqrt(λ_{r+1}(Ĉ))`
    #[default]
    Root,
    /// `η̂ᵢ · λ_{r+1}(Ĉ)`
    Plain,
}

/// Empirical metric distortion `‖ψ̂ᵢ‖ / ‖S ψ̂ᵢ‖` on the training sample.
/// An eigenfunction that vanishes on the sample gets `+∞`.
pub fn metric_distortion(model: &FittedModel, decomp: &EigenDecomposition) -> Result<Vec<f64>> {
    nonempty("metric_distortion", decomp)?;
    let (rkhs, l2) = model.input_norms(decomp.right_coeffs.as_ref());
    Ok(rkhs.iter().zip(&l2).map(|(r, l)| ratio(*r, *l)).collect())
}

/// Metric distortion with the `L²` norm estimated on held-out points.
pub fn metric_distortion_on(
    model: &FittedModel,
    decomp: &EigenDecomposition,
    points: MatRef<'_, f64>,
) -> Result<Vec<f64>> {
    nonempty("metric_distortion", decomp)?;
    if points.nrows() == 0 {
        return Err(Error::contract("metric_distortion", "no evaluation points"));
    }
    let (rkhs, _) = model.input_norms(decomp.right_coeffs.as_ref());
    let psi = model.eigenfunctions(decomp, points)?;
    let m = points.nrows() as f64;
    Ok((0..decomp.len())
        .map(|j| {
            let l2: f64 = (0..psi.nrows()).map(|i| psi[(i, j)].norm_sqr()).sum::<f64>() / m;
            ratio(rkhs[j], l2)
        })
        .collect())
}

fn ratio(rkhs_sq: f64, l2_sq: f64) -> f64 {
    if l2_sq > 0.0 {
        (rkhs_sq.max(0.0) / l2_sq).sqrt()
    } else {
        f64::INFINITY
    }
}

fn nonempty(op: &'static str, decomp: &EigenDecomposition) -> Result<()> {
    if decomp.is_empty() {
        Err(Error::contract(op, "empty decomposition"))
    } else {
        Ok(())
    }
}

/// The trailing spectral value that multiplies the distortion in the
/// spectral bias: `σ_{r+1}` of the whitened cross-covariance for RRR, the
/// (rooted) `(r+1)`-th covariance eigenvalue for PCR.
pub fn bias_factor(model: &FittedModel, form: PcrBiasForm) -> Result<f64> {
    let r = model.spec.rank;
    let n = model.n();
    if model.spec.method == Method::Krr {
        return Err(Error::Unsupported("spectral bias is defined for PCR and RRR only".into()));
    }
    if n < r + 1 {
        return Err(Error::contract(
            "spectral_bias",
            format!("need at least rank + 1 = {} samples, have {n}", r + 1),
        ));
    }
    match model.spec.method {
        Method::Rrr => {
            let s = match &model.b_svals {
                Some(s) => s[r],
                None => {
                    let data = TrajectoryDataset {
                        x: model.x.clone(),
                        y: model.y.clone(),
                        lag: 1,
                    };
                    svals_b(&data, &model.spec.kernel, model.spec.gamma, r + 1)?[r]
                }
            };
            Ok(s)
        }
        Method::Pcr => {
            let c = match &model.cov_spectrum {
                Some(c) => c[r],
                None => model.k_eig.values[r].max(0.0),
            };
            Ok(match form {
                PcrBiasForm::Root => c.sqrt(),
                PcrBiasForm::Plain => c,
            })
        }
        Method::Krr => unreachable!(),
    }
}

/// Empirical spectral bias `ŝᵢ = η̂ᵢ · factor`, with training-sample distortion.
pub fn spectral_bias(model: &FittedModel, decomp: &EigenDecomposition, form: PcrBiasForm) -> Result<Vec<f64>> {
    let factor = bias_factor(model, form)?;
    let eta = metric_distortion(model, decomp)?;
    Ok(eta.iter().map(|e| e * factor).collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Match {
    /// Zero-based index into the reference list.
    pub index: usize,
    pub error: f64,
    /// Distance from the matched reference value to the rest of the list.
    pub gap: f64,
}

/// Closest reference value for each estimate; ties go to the smaller index.
/// Matches need not be distinct.
pub fn match_eigenvalues(estimated: &[c64], reference: &[c64]) -> Result<Vec<Match>> {
    if reference.is_empty() {
        return Err(Error::contract("match_eigenvalues", "empty reference"));
    }
    let gap = |j: usize| {
        reference
            .iter()
            .enumerate()
            .filter(|&(l, _)| l != j)
            .map(|(_, mu)| (mu - reference[j]).norm())
            .fold(f64::INFINITY, f64::min)
    };
    Ok(estimated
        .iter()
        .map(|lam| {
            let mut best = 0;
            let mut err = (lam - reference[0]).norm();
            for (j, mu) in reference.iter().enumerate().skip(1) {
                let e = (lam - mu).norm();
                if e < err {
                    best = j;
                    err = e;
                }
            }
            Match {
                index: best,
                error: err,
                gap: gap(best),
            }
        })
        .collect())
}

/// `2 e / [gap - e]₊`, infinite once the error reaches the gap.
pub fn davis_kahan_bound(error: f64, gap: f64) -> f64 {
    if error == 0.0 {
        return 0.0;
    }
    let room = gap - error;
    if room > 0.0 {
        2.0 * error / room
    } else {
        f64::INFINITY
    }
}

/// `κ(λ̂ᵢ) = ‖ξ̂ᵢ‖ ‖ψ̂ᵢ‖ / |⟨ψ̂ᵢ, ξ̂ᵢ⟩|`; infinite when the pair is orthogonal.
pub fn eig_condition_numbers(model: &FittedModel, decomp: &EigenDecomposition) -> Vec<f64> {
    let right = decomp.right_coeffs.as_ref();
    let left = decomp.left_coeffs.as_ref();
    let (nr, _) = model.input_norms(right);
    let nl = quadratic_forms(model.l.as_ref(), left);
    let mt_left = mul_real_complex(model.m.transpose(), left);
    (0..decomp.len())
        .map(|j| {
            let inner: c64 = (0..right.nrows()).map(|i| right[(i, j)].conj() * mt_left[(i, j)]).sum();
            let norms = (nr[j].max(0.0) * nl[j].max(0.0)).sqrt();
            if inner.norm() <= 1e-14 * norms || norms == 0.0 {
                f64::INFINITY
            } else {
                norms / inner.norm()
            }
        })
        .collect()
}

/// Interval for the population distortion implied by
/// `|η̂⁻² − η⁻²| ≤ ε`, where `ε` bounds the covariance estimation error.
pub fn distortion_envelope(eta_hat: f64, cov_error: f64) -> (f64, f64) {
    let inv = eta_hat.powi(-2);
    let lo = 1.0 / (inv + cov_error).sqrt();
    let hi = if inv > cov_error {
        1.0 / (inv - cov_error).sqrt()
    } else {
        f64::INFINITY
    };
    (lo, hi)
}

/// Regularity constants and spectral proxies for the concentration bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConcentrationInputs {
    /// Bound on `k(x, x)`.
    pub c_h: f64,
    /// Regularity exponent τ.
    pub tau: f64,
    /// Constant in `‖C_γ^{-½} φ(x)‖² ≤ c_τ γ^{-τ}`.
    pub c_tau: f64,
    /// Proxy for `tr(C)`.
    pub trace_est: f64,
    /// Proxy for `‖C‖`.
    pub norm_est: f64,
    /// Proxy for `tr(C_γ⁻¹ C)`.
    pub reg_trace_est: f64,
    /// Proxy for `‖C_γ⁻¹ C‖`.
    pub reg_norm_est: f64,
}

impl ConcentrationInputs {
    /// Fill the spectral proxies from an empirical covariance spectrum.
    pub fn from_spectrum(cov: &[f64], gamma: f64, c_h: f64, tau: f64, c_tau: f64) -> Self {
        let top = cov.first().copied().unwrap_or(0.0).max(0.0);
        ConcentrationInputs {
            c_h,
            tau,
            c_tau,
            trace_est: cov.iter().map(|v| v.max(0.0)).sum(),
            norm_est: top,
            reg_trace_est: cov.iter().map(|v| v.max(0.0) / (v.max(0.0) + gamma)).sum(),
            reg_norm_est: top / (top + gamma),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConcentrationBounds {
    /// Covariance and cross-covariance deviation.
    pub eps: f64,
    /// Whitened covariance deviation.
    pub eps1: f64,
    /// Regularized regression deviation.
    pub eps2: f64,
    /// As `eps2` with one more power of γ in the variance term.
    pub eps3: f64,
}

/// Plug-in evaluation of the four high-probability deviation bounds.
pub fn concentration_bounds(n: usize, gamma: f64, delta: f64, c: &ConcentrationInputs) -> Result<ConcentrationBounds> {
    let op = "concentration_bounds";
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::contract(op, format!("delta must lie in (0, 1), got {delta}")));
    }
    if n == 0 {
        return Err(Error::contract(op, "n must be positive"));
    }
    let named = [
        ("gamma", gamma),
        ("c_h", c.c_h),
        ("tau", c.tau),
        ("c_tau", c.c_tau),
        ("trace_est", c.trace_est),
        ("norm_est", c.norm_est),
        ("reg_trace_est", c.reg_trace_est),
        ("reg_norm_est", c.reg_norm_est),
    ];
    for (name, v) in named {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::contract(op, format!("{name} must be positive, got {v}")));
        }
    }
    let n = n as f64;
    let log_main = (4.0 * c.trace_est / (delta * c.norm_est)).ln();
    let eps = 4.0 * c.c_h / (3.0 * n) * log_main + (2.0 * c.norm_est / n * log_main).sqrt();

    let g_tau = gamma.powf(c.tau);
    let log_reg = (4.0 / delta).ln() + (c.reg_trace_est / c.reg_norm_est).ln();
    let eps1 = 4.0 * c.c_tau / (3.0 * n * g_tau) * log_reg + (2.0 * c.c_tau / (n * g_tau) * log_reg).sqrt();

    let lead = 4.0 * (2.0 * c.c_h).sqrt() * (2.0 / delta).ln();
    let eps2 = lead * (c.reg_trace_est / n + c.c_tau / (n * n * g_tau)).sqrt();
    let eps3 = lead * (c.reg_trace_est / n + c.c_tau / (n * n * g_tau * gamma)).sqrt();
    Ok(ConcentrationBounds { eps, eps1, eps2, eps3 })
}

/// Per-eigenvalue summary of a fitted model.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralReport {
    pub rows: Vec<ReportRow>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub lambda: c64,
    pub eta_hat: f64,
    /// Absent for KRR.
    pub s_hat: Option<f64>,
    pub kappa_hat: f64,
    pub matched: Option<Match>,
    pub dk_bound: Option<f64>,
}

pub const REPORT_HEADER: [&str; 12] = [
    "trial",
    "method",
    "kernel_id",
    "i",
    "lambda_re",
    "lambda_im",
    "eta_hat",
    "s_hat",
    "kappa_hat",
    "j_matched",
    "abs_err",
    "dk_bound",
];

pub fn spectral_report(
    model: &FittedModel,
    decomp: &EigenDecomposition,
    reference: Option<&[c64]>,
    form: PcrBiasForm,
) -> Result<SpectralReport> {
    let eta = metric_distortion(model, decomp)?;
    let s_factor = match bias_factor(model, form) {
        Ok(f) => Some(f),
        Err(Error::Unsupported(_)) => None,
        Err(e) => return Err(e),
    };
    let kappa = eig_condition_numbers(model, decomp);
    let matches = reference.map(|r| match_eigenvalues(&decomp.values, r)).transpose()?;
    Ok(SpectralReport {
        rows: (0..decomp.len())
            .map(|i| {
                let matched = matches.as_ref().map(|m| m[i]);
                ReportRow {
                    lambda: decomp.values[i],
                    eta_hat: eta[i],
                    s_hat: s_factor.map(|f| f * eta[i]),
                    kappa_hat: kappa[i],
                    matched,
                    dk_bound: matched.map(|m| davis_kahan_bound(m.error, m.gap)),
                }
            })
            .collect(),
    })
}

impl SpectralReport {
    /// Rows in the [`REPORT_HEADER`] layout; indices are one-based.
    pub fn csv_rows(&self, trial: usize, method: &str, kernel_id: &str) -> Vec<Vec<String>> {
        let opt = |v: Option<f64>| v.map(fmt_real).unwrap_or_default();
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                vec![
                    trial.to_string(),
                    method.to_string(),
                    kernel_id.to_string(),
                    (i + 1).to_string(),
                    fmt_real(r.lambda.re),
                    fmt_real(r.lambda.im),
                    fmt_real(r.eta_hat),
                    opt(r.s_hat),
                    fmt_real(r.kappa_hat),
                    r.matched.map(|m| (m.index + 1).to_string()).unwrap_or_default(),
                    opt(r.matched.map(|m| m.error)),
                    opt(r.dk_bound),
                ]
            })
            .collect()
    }
}
