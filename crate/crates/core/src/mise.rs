//! Multivariate initial sequence estimator.
//!
//! Phase 1 accumulates `Σ = -ζ_0 + 2 Σ_i Z_i` until the partial sum is
//! positive definite (index `s_n`). Phase 2 keeps adding `2 Z_i` while the
//! determinant increases; the first non-increase at `i` sets `t_n = i - 1`
//! and the previous partial sum is returned.
//!
//! Two lag sources feed the same driver: [`MiseMode::Sequential`] computes
//! each lag from the raw samples on demand, [`MiseMode::Fft`] reads lags from
//! FFT cross-correlations materialized in growing windows.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autocov::{lag_matrix_direct, AutocovSequence, CrossCorrelator};
use crate::chain::{chain_mean, Chain};
use crate::error::{Error, Result};
use crate::linalg::{det_ldl, is_pd_unchecked, symmetrize, Matrix};

pub use crate::linalg::is_positive_definite;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MiseMode {
    #[default]
    Sequential,
    Fft,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MiseResult {
    pub sigma: Matrix,
    pub s_n: usize,
    pub t_n: usize,
    /// Highest lag included in `sigma`.
    pub lags_consumed: usize,
    /// Phase 2 reached the lag budget without a determinant decrease.
    pub budget_exhausted: bool,
    /// Determinants of `Σ_{s_n}, Σ_{s_n+1}, …` up to and including the
    /// first non-increase.
    pub det_trace: Vec<f64>,
    pub wall_clock: f64,
}

/// `Z_i = (ζ_{2i} + ζ_{2i}ᵀ)/2 + (ζ_{2i+1} + ζ_{2i+1}ᵀ)/2`.
pub fn sym_pair(zeta_even: &Matrix, zeta_odd: &Matrix) -> Result<Matrix> {
    if zeta_even.shape() != zeta_odd.shape() || zeta_even.nrows() != zeta_even.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "lag pair shapes {:?} and {:?}",
            zeta_even.shape(),
            zeta_odd.shape()
        )));
    }
    Ok(symmetrize(zeta_even) + symmetrize(zeta_odd))
}

trait LagSource {
    fn lag(&mut self, i: usize) -> Matrix;
}

struct Sequential {
    cols: Vec<Vec<f64>>,
}

impl LagSource for Sequential {
    fn lag(&mut self, i: usize) -> Matrix {
        lag_matrix_direct(&self.cols, i)
    }
}

/// Lags served from FFT cross-correlations, recomputed into a window four
/// times larger whenever a request runs past the current one.
struct FftWindowed {
    engine: CrossCorrelator,
    n: usize,
    window: Vec<Matrix>,
}

impl FftWindowed {
    const FIRST_WINDOW: usize = 64;
    const GROWTH: usize = 4;
}

impl LagSource for FftWindowed {
    fn lag(&mut self, i: usize) -> Matrix {
        let d = self.engine.d();
        if i >= self.n {
            return Matrix::zeros(d, d);
        }
        if i >= self.window.len() {
            let mut len = self.window.len().max(Self::FIRST_WINDOW);
            while len <= i {
                len *= Self::GROWTH;
            }
            let max_lag = (len - 1).min(self.n - 1);
            self.window = self.engine.lag_matrices(max_lag);
        }
        self.window[i].clone()
    }
}

struct Given<'a> {
    seq: &'a AutocovSequence,
}

impl LagSource for Given<'_> {
    fn lag(&mut self, i: usize) -> Matrix {
        if i < self.seq.len() {
            self.seq.lag(i).into_owned()
        } else {
            Matrix::zeros(self.seq.d(), self.seq.d())
        }
    }
}

fn next_pair<S: LagSource>(src: &mut S, i: usize) -> Matrix {
    let even = src.lag(2 * i);
    let odd = src.lag(2 * i + 1);
    sym_pair(&even, &odd).expect("lag shapes agree")
}

fn drive<S: LagSource>(mut src: S, n: usize) -> Result<MiseResult> {
    let start = Instant::now();
    let mut sigma = -symmetrize(&src.lag(0));

    let phase1_last = (n - 1) / 2;
    let mut s_n = None;
    for i in 0..=phase1_last {
        sigma += next_pair(&mut src, i) * 2.0;
        if is_pd_unchecked(&sigma) {
            s_n = Some(i);
            break;
        }
    }
    let s_n = s_n.ok_or(Error::NotPositiveDefinite {
        budget: phase1_last + 1,
    })?;

    let phase2_last = (n / 2).saturating_sub(1);
    let mut det_prev = det_ldl(&sigma);
    let mut det_trace = vec![det_prev];
    let mut t_n = s_n;
    let mut budget_exhausted = true;
    for i in (s_n + 1)..=phase2_last {
        let previous = sigma.clone();
        sigma += next_pair(&mut src, i) * 2.0;
        let det_now = det_ldl(&sigma);
        det_trace.push(det_now);
        if det_now <= det_prev {
            t_n = i - 1;
            sigma = previous;
            budget_exhausted = false;
            break;
        }
        det_prev = det_now;
        t_n = i;
    }
    Ok(MiseResult {
        sigma,
        s_n,
        t_n,
        lags_consumed: 2 * t_n + 1,
        budget_exhausted,
        det_trace,
        wall_clock: start.elapsed().as_secs_f64(),
    })
}

/// Multivariate initial sequence estimate of a chain.
pub fn mise(chain: &Chain, mode: MiseMode) -> Result<MiseResult> {
    let n = chain.n();
    if n < 4 {
        return Err(Error::TooShort { n, min: 4 });
    }
    let mean = chain_mean(chain);
    let cols = chain.centered_columns(mean.values());
    match mode {
        MiseMode::Sequential => drive(Sequential { cols }, n),
        MiseMode::Fft => {
            let start = Instant::now();
            let engine = CrossCorrelator::new(&cols);
            let mut out = drive(
                FftWindowed {
                    engine,
                    n,
                    window: Vec::new(),
                },
                n,
            )?;
            out.wall_clock = start.elapsed().as_secs_f64();
            Ok(out)
        }
    }
}

/// Runs the truncation rule on a precomputed autocovariance sequence. Lags
/// past the end of the sequence are zero; the loop budgets use
/// `gamma.n()`.
pub fn mise_from_autocov(gamma: &AutocovSequence) -> Result<MiseResult> {
    let n = gamma.n();
    if n < 4 {
        return Err(Error::TooShort { n, min: 4 });
    }
    drive(Given { seq: gamma }, n)
}

/// Checks the recorded determinant trace against the stopping rule.
pub fn replay_det_rule(result: &MiseResult) -> bool {
    let trace = &result.det_trace;
    let increasing = trace.windows(2).take(trace.len().saturating_sub(2)).all(|w| w[1] > w[0]);
    if result.budget_exhausted {
        return trace.windows(2).all(|w| w[1] > w[0]);
    }
    let k = trace.len();
    k >= 2 && increasing && trace[k - 1] <= trace[k - 2] && result.t_n + 2 == result.s_n + k
}
