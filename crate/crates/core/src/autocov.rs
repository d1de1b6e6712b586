//! Sample autocovariances: direct, FFT, globally centered, and the
//! within/between adjusted sequence used for parallel chains.
//!
//! Every sequence uses the divisor `n` at every lag:
//!
//! ```text
//! ζ_i = n⁻¹ Σ_{t=1}^{n-i} (x_t - c)(x_{t+i} - c)ᵀ
//! ```
//!
//! Only non-negative lags are stored; `ζ_{-i} = ζ_iᵀ`.

use std::sync::Arc;

use nalgebra::DMatrixView;
use realfft::num_complex::Complex;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use serde::Serialize;

use crate::chain::{chain_mean, global_mean, Chain, MultiChain};
use crate::error::{Error, Result};
use crate::linalg::{compensated_sum, dot, Matrix};

/// Where the deviations were centered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Centering {
    SingleChain,
    Global,
    Stan,
}

/// Lag-indexed `d×d` autocovariance matrices, lags `0..=max_lag`.
#[derive(Debug, Clone, PartialEq)]
pub struct AutocovSequence {
    data: Vec<f64>,
    d: usize,
    n: usize,
    centering: Centering,
}

impl AutocovSequence {
    fn from_lags(lags: Vec<Matrix>, d: usize, n: usize, centering: Centering) -> Self {
        let mut data = Vec::with_capacity(lags.len() * d * d);
        for m in &lags {
            data.extend_from_slice(m.as_slice());
        }
        Self {
            data,
            d,
            n,
            centering,
        }
    }

    /// Univariate sequence from scalar lags.
    pub fn from_scalars(gammas: Vec<f64>, n: usize, centering: Centering) -> Self {
        Self {
            data: gammas,
            d: 1,
            n,
            centering,
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Sample size used in the divisor.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn centering(&self) -> Centering {
        self.centering
    }

    pub fn len(&self) -> usize {
        self.data.len() / (self.d * self.d)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn max_lag(&self) -> usize {
        self.len() - 1
    }

    /// `ζ_i` for `i ≥ 0`.
    pub fn lag(&self, i: usize) -> DMatrixView<'_, f64> {
        let dd = self.d * self.d;
        DMatrixView::from_slice(&self.data[i * dd..(i + 1) * dd], self.d, self.d)
    }

    /// `ζ_i` for any signed lag, using `ζ_{-i} = ζ_iᵀ`.
    pub fn lag_signed(&self, i: isize) -> Matrix {
        let m = self.lag(i.unsigned_abs());
        if i >= 0 {
            m.into_owned()
        } else {
            m.transpose()
        }
    }

    pub fn get(&self, lag: usize, a: usize, b: usize) -> f64 {
        self.data[lag * self.d * self.d + b * self.d + a]
    }

    /// Scalar lags of a univariate sequence.
    pub fn scalars(&self) -> Result<&[f64]> {
        if self.d != 1 {
            return Err(Error::DimensionMismatch(format!(
                "expected a univariate sequence, got d = {}",
                self.d
            )));
        }
        Ok(&self.data)
    }

    /// Diagonal entry `(j, j)` across lags.
    pub fn coordinate(&self, j: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.get(i, j, j)).collect()
    }
}

fn check_max_lag(n: usize, max_lag: usize) -> Result<()> {
    if max_lag >= n {
        return Err(Error::Range {
            what: "max_lag",
            detail: format!("{max_lag} >= n = {n}"),
        });
    }
    Ok(())
}

/// One lag of the direct formula over pre-centered columns.
pub(crate) fn lag_matrix_direct(cols: &[Vec<f64>], lag: usize) -> Matrix {
    let d = cols.len();
    let n = cols[0].len();
    let nf = n as f64;
    if lag >= n {
        return Matrix::zeros(d, d);
    }
    Matrix::from_fn(d, d, |a, b| dot(&cols[a][..n - lag], &cols[b][lag..]) / nf)
}

fn direct_from_columns(cols: &[Vec<f64>], max_lag: usize) -> Vec<Matrix> {
    (0..=max_lag).map(|i| lag_matrix_direct(cols, i)).collect()
}

/// Zero-padded circular cross-correlation of centered columns. Forward
/// spectra are computed once per column; each coordinate pair costs one
/// inverse transform that yields both `r_ab` and `r_ba`.
pub(crate) struct CrossCorrelator {
    n: usize,
    pad: usize,
    spectra: Vec<Vec<Complex<f64>>>,
    inverse: Arc<dyn ComplexToReal<f64>>,
}

impl CrossCorrelator {
    pub(crate) fn pad_length(n: usize) -> usize {
        (2 * n).next_power_of_two()
    }

    pub(crate) fn new(cols: &[Vec<f64>]) -> Self {
        let n = cols[0].len();
        let pad = Self::pad_length(n);
        let mut planner = RealFftPlanner::<f64>::new();
        let forward: Arc<dyn RealToComplex<f64>> = planner.plan_fft_forward(pad);
        let inverse = planner.plan_fft_inverse(pad);
        let mut buf = forward.make_input_vec();
        let mut scratch = forward.make_scratch_vec();
        let spectra = cols
            .iter()
            .map(|c| {
                buf[..n].copy_from_slice(c);
                buf[n..].iter_mut().for_each(|v| *v = 0.0);
                let mut out = forward.make_output_vec();
                forward
                    .process_with_scratch(&mut buf, &mut out, &mut scratch)
                    .expect("forward transform buffer sizes");
                out
            })
            .collect();
        Self {
            n,
            pad,
            spectra,
            inverse,
        }
    }

    pub(crate) fn d(&self) -> usize {
        self.spectra.len()
    }

    /// Full circular correlation of columns `a` and `b`, already divided by
    /// `pad · n`: index `k < n` holds `ζ_k[a][b]`, index `pad - k` holds
    /// `ζ_k[b][a]`.
    pub(crate) fn pair(&self, a: usize, b: usize) -> Vec<f64> {
        let sa = &self.spectra[a];
        let sb = &self.spectra[b];
        let mut prod: Vec<Complex<f64>> = sa.iter().zip(sb).map(|(x, y)| x.conj() * y).collect();
        // DC and Nyquist bins of real inputs are real.
        let last = prod.len() - 1;
        prod[0].im = 0.0;
        prod[last].im = 0.0;
        let mut out = self.inverse.make_output_vec();
        self.inverse
            .process(&mut prod, &mut out)
            .expect("inverse transform buffer sizes");
        let scale = self.pad as f64 * self.n as f64;
        out.iter_mut().for_each(|v| *v /= scale);
        out
    }

    /// Lags `0..=max_lag` as `d×d` matrices.
    pub(crate) fn lag_matrices(&self, max_lag: usize) -> Vec<Matrix> {
        let d = self.d();
        let mut lags = vec![Matrix::zeros(d, d); max_lag + 1];
        for a in 0..d {
            for b in a..d {
                let full = self.pair(a, b);
                for (i, m) in lags.iter_mut().enumerate() {
                    m[(a, b)] = full[i];
                    if a != b {
                        m[(b, a)] = if i == 0 { full[0] } else { full[self.pad - i] };
                    }
                }
            }
        }
        lags
    }

    /// Univariate lags `0..=max_lag` of column `a`.
    pub(crate) fn auto(&self, a: usize, max_lag: usize) -> Vec<f64> {
        let mut full = self.pair(a, a);
        full.truncate(max_lag + 1);
        full
    }
}

/// Direct-formula autocovariances centered at `center`.
pub fn autocov_centered_direct(chain: &Chain, center: &[f64], max_lag: usize) -> Result<Vec<Matrix>> {
    check_max_lag(chain.n(), max_lag)?;
    Ok(direct_from_columns(&chain.centered_columns(center), max_lag))
}

/// FFT autocovariances centered at `center`.
pub fn autocov_centered_fft(chain: &Chain, center: &[f64], max_lag: usize) -> Result<Vec<Matrix>> {
    check_max_lag(chain.n(), max_lag)?;
    Ok(CrossCorrelator::new(&chain.centered_columns(center)).lag_matrices(max_lag))
}

/// Direct `O(d² n L)` evaluation of the sample autocovariances.
pub fn autocov_direct(chain: &Chain, max_lag: usize) -> Result<AutocovSequence> {
    let mean = chain_mean(chain);
    let lags = autocov_centered_direct(chain, mean.values(), max_lag)?;
    Ok(AutocovSequence::from_lags(lags, chain.d(), chain.n(), Centering::SingleChain))
}

/// FFT evaluation, `O(d² n log n)`.
pub fn autocov_fft(chain: &Chain, max_lag: usize) -> Result<AutocovSequence> {
    let mean = chain_mean(chain);
    let lags = autocov_centered_fft(chain, mean.values(), max_lag)?;
    Ok(AutocovSequence::from_lags(lags, chain.d(), chain.n(), Centering::SingleChain))
}

/// Univariate FFT autocovariances of one series centered at `center`.
pub(crate) fn series_fft(series: &[f64], center: f64, max_lag: usize) -> Vec<f64> {
    let col: Vec<f64> = series.iter().map(|x| x - center).collect();
    CrossCorrelator::new(&[col]).auto(0, max_lag)
}

fn average_matrices(per_chain: Vec<Vec<Matrix>>) -> Vec<Matrix> {
    let m = per_chain.len() as f64;
    let mut iter = per_chain.into_iter();
    let mut acc = iter.next().expect("at least one chain");
    for other in iter {
        for (a, b) in acc.iter_mut().zip(other) {
            *a += b;
        }
    }
    acc.iter_mut().for_each(|a| *a /= m);
    acc
}

pub(crate) fn average_series(per_chain: Vec<Vec<f64>>) -> Vec<f64> {
    let m = per_chain.len() as f64;
    let mut iter = per_chain.into_iter();
    let mut acc = iter.next().expect("at least one chain");
    for other in iter {
        for (a, b) in acc.iter_mut().zip(other) {
            *a += b;
        }
    }
    acc.iter_mut().for_each(|a| *a /= m);
    acc
}

/// Globally-centered autocovariances (direct formula per chain, averaged).
/// With one chain this reproduces [`autocov_direct`] bit for bit.
pub fn autocov_global(mc: &MultiChain, max_lag: usize) -> Result<AutocovSequence> {
    check_max_lag(mc.n(), max_lag)?;
    let center = global_mean(mc);
    let per_chain = mc
        .chains()
        .iter()
        .map(|c| autocov_centered_direct(c, center.values(), max_lag))
        .collect::<Result<Vec<_>>>()?;
    Ok(AutocovSequence::from_lags(
        average_matrices(per_chain),
        mc.d(),
        mc.n(),
        Centering::Global,
    ))
}

/// Globally-centered autocovariances via FFT. With one chain this
/// reproduces [`autocov_fft`] bit for bit.
pub fn autocov_global_fft(mc: &MultiChain, max_lag: usize) -> Result<AutocovSequence> {
    check_max_lag(mc.n(), max_lag)?;
    let center = global_mean(mc);
    let per_chain = mc
        .chains()
        .iter()
        .map(|c| autocov_centered_fft(c, center.values(), max_lag))
        .collect::<Result<Vec<_>>>()?;
    Ok(AutocovSequence::from_lags(
        average_matrices(per_chain),
        mc.d(),
        mc.n(),
        Centering::Global,
    ))
}

/// Globally-centered univariate lags of coordinate `j`.
pub(crate) fn global_series(mc: &MultiChain, j: usize, center: f64, max_lag: usize) -> Vec<f64> {
    average_series(
        mc.chains()
            .iter()
            .map(|c| series_fft(c.column(j), center, max_lag))
            .collect(),
    )
}

/// Within- and between-chain variance components.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WithinBetween {
    /// Mean of the per-chain variances, per coordinate.
    pub w: Vec<f64>,
    /// `n/(M-1) Σ_m (ḡ_m - ḡ̄)²`, per coordinate.
    pub b: Vec<f64>,
    /// Per-chain variances with divisor `n - 1`, indexed `[m][j]`.
    pub s2: Vec<Vec<f64>>,
}

pub fn within_between(mc: &MultiChain) -> Result<WithinBetween> {
    mc.require_chains(2)?;
    let n = mc.n();
    if n < 2 {
        return Err(Error::TooShort { n, min: 2 });
    }
    let d = mc.d();
    let m = mc.m();
    let means: Vec<Vec<f64>> = mc.chains().iter().map(|c| chain_mean(c).0).collect();
    let gmean = global_mean(mc);
    let s2: Vec<Vec<f64>> = mc
        .chains()
        .iter()
        .zip(&means)
        .map(|(c, mu)| {
            (0..d)
                .map(|j| {
                    compensated_sum(c.column(j).iter().map(|x| (x - mu[j]) * (x - mu[j])))
                        / (n as f64 - 1.0)
                })
                .collect()
        })
        .collect();
    let w = (0..d)
        .map(|j| compensated_sum(s2.iter().map(|s| s[j])) / m as f64)
        .collect();
    let b = (0..d)
        .map(|j| {
            let spread = compensated_sum(means.iter().map(|mu| {
                let dev = mu[j] - gmean.0[j];
                dev * dev
            }));
            n as f64 / (m as f64 - 1.0) * spread
        })
        .collect();
    Ok(WithinBetween { w, b, s2 })
}

/// Adjusted univariate lags of coordinate `j`:
/// `(B - W)/n + M⁻¹ Σ_m γ^{(m)}_i`, each chain centered at its own mean.
pub(crate) fn stan_series(mc: &MultiChain, wb: &WithinBetween, j: usize, max_lag: usize) -> Vec<f64> {
    let shift = (wb.b[j] - wb.w[j]) / mc.n() as f64;
    let avg = average_series(
        mc.chains()
            .iter()
            .map(|c| {
                let mu = chain_mean(c).0[j];
                series_fft(c.column(j), mu, max_lag)
            })
            .collect(),
    );
    avg.into_iter().map(|g| shift + g).collect()
}

/// Within/between adjusted autocovariances. Computed per coordinate; the
/// returned matrices are diagonal.
pub fn autocov_stan(mc: &MultiChain, max_lag: usize) -> Result<AutocovSequence> {
    let wb = within_between(mc)?;
    check_max_lag(mc.n(), max_lag)?;
    let d = mc.d();
    let series: Vec<Vec<f64>> = (0..d).map(|j| stan_series(mc, &wb, j, max_lag)).collect();
    let lags = (0..=max_lag)
        .map(|i| Matrix::from_fn(d, d, |a, b| if a == b { series[a][i] } else { 0.0 }))
        .collect();
    Ok(AutocovSequence::from_lags(lags, d, mc.n(), Centering::Stan))
}
