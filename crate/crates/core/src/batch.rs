//! Non-overlapping batch means (single chain and globally centered),
//! covariance-to-correlation splitting, and a Bartlett spectral variance
//! comparator.

use serde::{Deserialize, Serialize};

use crate::autocov::{autocov_fft, series_fft};
use crate::chain::{Chain, MultiChain};
use crate::error::{Error, Result};
use crate::linalg::{compensated_sum, symmetrize, Matrix};

/// Batch layout for a chain of length `n`: `a_n` batches of `b_n` samples,
/// with `dropped` trailing samples discarded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BatchConfig {
    pub b_n: usize,
    pub a_n: usize,
    pub dropped: usize,
}

impl BatchConfig {
    /// Layout for an explicit batch size.
    pub fn with_batch_size(n: usize, b_n: usize) -> Result<Self> {
        if b_n == 0 {
            return Err(Error::Range {
                what: "batch size",
                detail: "must be positive".into(),
            });
        }
        let a_n = n / b_n;
        if a_n < 2 {
            return Err(Error::InsufficientBatches { got: a_n });
        }
        Ok(Self {
            b_n,
            a_n,
            dropped: n - a_n * b_n,
        })
    }

    /// Number of samples actually used.
    pub fn retained(&self) -> usize {
        self.a_n * self.b_n
    }

    fn check(&self, n: usize) -> Result<()> {
        if self.a_n < 2 {
            return Err(Error::InsufficientBatches { got: self.a_n });
        }
        if self.b_n == 0 || self.retained() > n {
            return Err(Error::Range {
                what: "batch layout",
                detail: format!("{} batches of {} exceed n = {n}", self.a_n, self.b_n),
            });
        }
        Ok(())
    }
}

/// `⌊n^{1/3}⌋` in exact integer arithmetic.
pub fn integer_cbrt(n: usize) -> usize {
    let mut b = (n as f64).cbrt().floor() as usize;
    while (b + 1).pow(3) <= n {
        b += 1;
    }
    while b > 0 && b.pow(3) > n {
        b -= 1;
    }
    b
}

/// `b_n = ⌊n^{1/3}⌋`, `a_n = ⌊n / b_n⌋`.
pub fn default_batch_size(n: usize) -> Result<BatchConfig> {
    if n < 8 {
        return Err(Error::TooShort { n, min: 8 });
    }
    BatchConfig::with_batch_size(n, integer_cbrt(n))
}

/// How the batch size is chosen when none is given explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BatchRule {
    /// `b_n = ⌊n^{1/3}⌋`.
    #[default]
    CubeRoot,
    /// `b_n = ⌈c·n^{1/3}⌉` with `c` estimated from univariate autoregressive
    /// pilot fits (Liu, Vats and Flegal's batch size recommendation).
    ArPilot,
}

/// First-order bias constant `Γ = 2 Σ_k k γ_k` and asymptotic variance `Σ`
/// of one series, from a Yule-Walker AR fit with AIC-selected order.
fn ar_pilot_moments(series: &[f64]) -> (f64, f64) {
    let n = series.len();
    let center = crate::linalg::compensated_sum(series.iter().copied()) / n as f64;
    let order_max = ((10.0 * (n as f64).log10()).floor() as usize).min(n - 2);
    let gammas = series_fft(series, center, order_max);
    if !(gammas[0] > 0.0) {
        return (0.0, 0.0);
    }
    // Levinson-Durbin, keeping the AIC-best coefficient vector.
    let mut phi: Vec<f64> = Vec::new();
    let mut v = gammas[0];
    let mut best = (n as f64 * v.ln(), Vec::new(), v);
    for k in 1..=order_max {
        let acc = gammas[k] - phi.iter().enumerate().map(|(j, p)| p * gammas[k - 1 - j]).sum::<f64>();
        let kappa = acc / v;
        let mut next: Vec<f64> = (0..k - 1).map(|j| phi[j] - kappa * phi[k - 2 - j]).collect();
        next.push(kappa);
        phi = next;
        v *= 1.0 - kappa * kappa;
        if !(v > 0.0) {
            break;
        }
        let aic = n as f64 * v.ln() + 2.0 * k as f64;
        if aic < best.0 {
            best = (aic, phi.clone(), v);
        }
    }
    let (_, ar, v) = best;
    let p = ar.len();
    let var_pred = v * n as f64 / (n - (p + 1)) as f64;
    let one_minus = 1.0 - ar.iter().sum::<f64>();
    let sigma = var_pred / (one_minus * one_minus);
    if p == 0 {
        return (0.0, sigma);
    }
    let mut foo = 0.0;
    for i in 1..=p {
        for k in 1..=i {
            foo += ar[i - 1] * k as f64 * gammas[i - k];
        }
    }
    let weighted: f64 = ar.iter().enumerate().map(|(i, a)| (i + 1) as f64 * a).sum();
    let gamma = 2.0 * (foo + (sigma - gammas[0]) / 2.0 * weighted) / one_minus;
    (gamma, sigma)
}

/// Batch size from AR pilot fits, pooled over the chains of `mc`:
/// `c = (Σ_j Γ_j² / Σ_j Σ_j²)^{1/3}`, `b_n = ⌈c·n^{1/3}⌉`, capped at
/// `⌊n/(d+1)⌋`. Falls back to [`default_batch_size`] when every coordinate
/// is constant.
pub fn ar_pilot_batch_size(mc: &MultiChain) -> Result<BatchConfig> {
    let n = mc.n();
    if n < 8 {
        return Err(Error::TooShort { n, min: 8 });
    }
    let m = mc.m() as f64;
    let (mut g2, mut s2) = (0.0, 0.0);
    for j in 0..mc.d() {
        let (mut g, mut s) = (0.0, 0.0);
        for c in mc.chains() {
            let (gj, sj) = ar_pilot_moments(c.column(j));
            g += gj / m;
            s += sj / m;
        }
        g2 += g * g;
        s2 += s * s;
    }
    if !(s2 > 0.0) {
        return default_batch_size(n);
    }
    let c = (g2 / s2).cbrt();
    let cap = (n / (mc.d() + 1)).max(1);
    let b = ((c * (n as f64).cbrt()).ceil() as usize).clamp(1, cap);
    BatchConfig::with_batch_size(n, b)
}

fn batch_means(column: &[f64], cfg: &BatchConfig) -> Vec<f64> {
    column[..cfg.retained()]
        .chunks_exact(cfg.b_n)
        .map(|b| compensated_sum(b.iter().copied()) / cfg.b_n as f64)
        .collect()
}

/// Scaled outer-product sum `scale · Σ_k (x_k - c)(x_k - c)ᵀ` over batch-mean
/// vectors stored per coordinate.
fn scatter(batches: &[Vec<f64>], center: &[f64], scale: f64) -> Matrix {
    let d = batches.len();
    let dev: Vec<Vec<f64>> = batches
        .iter()
        .zip(center)
        .map(|(b, c)| b.iter().map(|x| x - c).collect())
        .collect();
    let mut out = Matrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let s = compensated_sum(dev[i].iter().zip(&dev[j]).map(|(a, b)| a * b)) * scale;
            out[(i, j)] = s;
            out[(j, i)] = s;
        }
    }
    out
}

/// `b/(a-1) Σ_k (ḡ_k - ḡ)(ḡ_k - ḡ)ᵀ` over the first `a·b` samples.
pub fn batch_means_cov(chain: &Chain, cfg: &BatchConfig) -> Result<Matrix> {
    cfg.check(chain.n())?;
    let batches: Vec<Vec<f64>> = (0..chain.d()).map(|j| batch_means(chain.column(j), cfg)).collect();
    // Mean of the retained samples equals the mean of the batch means.
    let center: Vec<f64> = batches
        .iter()
        .map(|b| compensated_sum(b.iter().copied()) / cfg.a_n as f64)
        .collect();
    Ok(scatter(&batches, &center, cfg.b_n as f64 / (cfg.a_n as f64 - 1.0)))
}

/// Globally-centered batch means:
/// `b/(M·a - 1) Σ_m Σ_k (ḡ_k^{(m)} - ḡ̄)(ḡ_k^{(m)} - ḡ̄)ᵀ`.
pub fn gbm_cov(mc: &MultiChain, cfg: &BatchConfig) -> Result<Matrix> {
    if mc.m() * cfg.a_n < 2 {
        return Err(Error::InsufficientBatches {
            got: mc.m() * cfg.a_n,
        });
    }
    cfg.check(mc.n())?;
    let d = mc.d();
    let per_chain: Vec<Vec<Vec<f64>>> = mc
        .chains()
        .iter()
        .map(|c| (0..d).map(|j| batch_means(c.column(j), cfg)).collect())
        .collect();
    // Global centering at the mean of the per-chain retained means.
    let m = mc.m() as f64;
    let center: Vec<f64> = (0..d)
        .map(|j| {
            compensated_sum(
                per_chain
                    .iter()
                    .map(|b| compensated_sum(b[j].iter().copied()) / cfg.a_n as f64),
            ) / m
        })
        .collect();
    let pooled: Vec<Vec<f64>> = (0..d)
        .map(|j| per_chain.iter().flat_map(|b| b[j].iter().copied()).collect())
        .collect();
    let scale = cfg.b_n as f64 / ((mc.m() * cfg.a_n) as f64 - 1.0);
    Ok(scatter(&pooled, &center, scale))
}

/// A covariance matrix split into standard deviations and correlations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovCorrPair {
    pub cov: Matrix,
    pub corr: Matrix,
    pub sd: Vec<f64>,
}

impl CovCorrPair {
    /// `L R L` with `L = diag(sd)`.
    pub fn reassemble(&self) -> Matrix {
        scale_correlation(&self.corr, &self.sd)
    }
}

/// `diag(sd) · corr · diag(sd)`, entrywise `sd_i · r_ij · sd_j`.
pub fn scale_correlation(corr: &Matrix, sd: &[f64]) -> Matrix {
    let d = sd.len();
    Matrix::from_fn(d, d, |i, j| sd[i] * corr[(i, j)] * sd[j])
}

/// `R = L⁻¹ Σ L⁻¹` with an exactly unit diagonal.
pub fn corr_from_cov(cov: &Matrix) -> Result<CovCorrPair> {
    let d = cov.nrows();
    let mut sd = Vec::with_capacity(d);
    for i in 0..d {
        let v = cov[(i, i)];
        if !(v > 0.0) {
            return Err(Error::DegenerateVariance { coord: i, value: v });
        }
        sd.push(v.sqrt());
    }
    let corr = Matrix::from_fn(d, d, |i, j| {
        if i == j {
            1.0
        } else {
            cov[(i, j)] / sd[i] / sd[j]
        }
    });
    Ok(CovCorrPair {
        cov: cov.clone(),
        corr: symmetrize(&corr),
        sd,
    })
}

/// Bartlett-window spectral variance estimate
/// `Σ_{|k| ≤ h} (1 - |k|/(h+1)) ζ_k`.
pub fn spectral_variance(chain: &Chain, bandwidth: usize) -> Result<Matrix> {
    if bandwidth == 0 || bandwidth >= chain.n() {
        return Err(Error::Range {
            what: "bandwidth",
            detail: format!("{bandwidth} not in 1..={}", chain.n() - 1),
        });
    }
    let seq = autocov_fft(chain, bandwidth)?;
    let mut out = seq.lag(0).into_owned();
    let h = bandwidth as f64 + 1.0;
    for k in 1..=bandwidth {
        let w = 1.0 - k as f64 / h;
        let z = seq.lag(k);
        out += (z + z.transpose()) * w;
    }
    Ok(symmetrize(&out))
}

/// `⌊n^{1/3}⌋`, the default comparator bandwidth.
pub fn default_bandwidth(n: usize) -> usize {
    integer_cbrt(n).max(1)
}
