//! Multivariate ESS, relative Frobenius error, chi-square quantiles and
//! confidence-ellipsoid membership.

use serde::Serialize;
use statrs::function::gamma::gamma_lr;

use crate::autocov::{autocov_direct, autocov_global};
use crate::cc::CovEstimate;
use crate::chain::{Chain, MeanVector, MultiChain};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, frobenius, log_det_pd, quadratic_form_chol, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EssValue {
    pub ess: f64,
    pub ess_per_n: f64,
}

/// `n (det ζ_0 / det Σ̂)^{1/d}` with both determinants taken in log space.
pub fn ess_from_parts(zeta0: &Matrix, sigma: &Matrix, n: usize) -> Result<EssValue> {
    if zeta0.shape() != sigma.shape() {
        return Err(Error::DimensionMismatch(format!(
            "sample covariance {:?} vs estimate {:?}",
            zeta0.shape(),
            sigma.shape()
        )));
    }
    let d = sigma.nrows() as f64;
    let log_sigma = log_det_pd(sigma).ok_or(Error::Singular)?;
    let ess = match log_det_pd(zeta0) {
        Some(log_zeta) => n as f64 * ((log_zeta - log_sigma) / d).exp(),
        // A singular sample covariance carries no information.
        None => 0.0,
    };
    Ok(EssValue {
        ess,
        ess_per_n: ess / n as f64,
    })
}

/// Multivariate ESS of `chain` under the estimate `est`.
pub fn ess(chain: &Chain, est: &CovEstimate) -> Result<EssValue> {
    let zeta0 = autocov_direct(chain, 0)?.lag(0).into_owned();
    ess_from_parts(&zeta0, &est.sigma, chain.n())
}

/// ESS over all `M·n` draws of `mc`, with `ζ_0` centred at the grand mean.
/// A single chain reduces to [`ess`].
pub fn ess_pooled(mc: &MultiChain, est: &CovEstimate) -> Result<EssValue> {
    if mc.m() == 1 {
        return ess(&mc.chains()[0], est);
    }
    let zeta0 = autocov_global(mc, 0)?.lag(0).into_owned();
    ess_from_parts(&zeta0, &est.sigma, mc.m() * mc.n())
}

/// `‖truth - estimate‖_F / ‖truth‖_F`.
pub fn rel_frobenius(estimate: &Matrix, truth: &Matrix) -> Result<f64> {
    if estimate.shape() != truth.shape() {
        return Err(Error::DimensionMismatch(format!(
            "estimate {:?} vs truth {:?}",
            estimate.shape(),
            truth.shape()
        )));
    }
    let denom = frobenius(truth);
    if denom == 0.0 {
        return Err(Error::InvalidInput("relative error against a zero matrix".into()));
    }
    Ok(frobenius(&(truth - estimate)) / denom)
}

/// Absolute tolerance on the returned quantile.
const QUANTILE_TOL: f64 = 1e-10;

/// `p`-quantile of χ²(dof), by bisection on the regularized lower incomplete
/// gamma function.
pub fn chi2_quantile(dof: usize, p: f64) -> Result<f64> {
    if dof == 0 {
        return Err(Error::Range {
            what: "degrees of freedom",
            detail: "must be positive".into(),
        });
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Range {
            what: "probability",
            detail: format!("{p} not in (0, 1)"),
        });
    }
    let k = dof as f64 / 2.0;
    let cdf = |x: f64| gamma_lr(k, x / 2.0);
    let mut hi = dof as f64 + 1.0;
    while cdf(hi) < p {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    while hi - lo > QUANTILE_TOL * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `n (x̄ - μ₀)ᵀ Σ̂⁻¹ (x̄ - μ₀)` via a triangular solve.
pub fn ellipsoid_statistic(mean: &MeanVector, sigma: &Matrix, n: usize, mu0: &MeanVector) -> Result<f64> {
    let d = sigma.nrows();
    if mean.d() != d || mu0.d() != d {
        return Err(Error::DimensionMismatch(format!(
            "mean of length {} and centre of length {} vs {d}x{d} estimate",
            mean.d(),
            mu0.d()
        )));
    }
    let lower = cholesky_lower(sigma).ok_or(Error::Singular)?;
    let diff: Vec<f64> = mean.values().iter().zip(mu0.values()).map(|(a, b)| a - b).collect();
    Ok(n as f64 * quadratic_form_chol(&lower, &diff))
}

/// Whether `mu0` lies inside the `level` confidence ellipsoid around `mean`.
pub fn ellipsoid_contains(
    mean: &MeanVector,
    est: &CovEstimate,
    n: usize,
    mu0: &MeanVector,
    level: f64,
) -> Result<bool> {
    let stat = ellipsoid_statistic(mean, &est.sigma, n, mu0)?;
    Ok(stat < chi2_quantile(est.sigma.nrows(), level)?)
}
