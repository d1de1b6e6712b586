//! Univariate initial positive sequence estimator, applied per coordinate to
//! single-chain, globally-centered, or within/between adjusted
//! autocovariances.
//!
//! With `Γ_i = γ_{2i} + γ_{2i+1}`, the estimate is
//! `σ² = -γ_0 + 2 Σ_{i=0}^{k} Γ_i` where `k` is the last index of the initial
//! run of strictly positive `Γ_i`.

use rayon::prelude::*;
use serde::Serialize;

use crate::autocov::{self, AutocovSequence};
use crate::chain::{chain_mean, global_mean, Chain, MultiChain};
use crate::error::{Error, Result};

/// Outcome of one univariate initial-sequence estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IseResult {
    pub sigma2: f64,
    /// Index of the last summed pair; `-1` marks the `γ_0` fallback.
    pub k_n: i64,
    /// The `Γ_i` that were summed, in order.
    pub pairs_used: Vec<f64>,
}

/// `Γ_i` for every pair available in `gammas`; a missing odd partner at
/// the end counts as zero.
pub fn gamma_pairs(gammas: &[f64]) -> Vec<f64> {
    gammas
        .chunks(2)
        .map(|p| p[0] + p.get(1).copied().unwrap_or(0.0))
        .collect()
}

/// Initial positive sequence estimate from scalar autocovariances.
pub fn ise_from_gammas(gammas: &[f64]) -> Result<IseResult> {
    let g0 = *gammas
        .first()
        .ok_or_else(|| Error::InvalidInput("empty autocovariance sequence".into()))?;
    if !(g0 >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "lag-0 autocovariance must be non-negative, got {g0}"
        )));
    }
    let mut acc = -g0;
    let mut k_n = -1_i64;
    let mut pairs_used = Vec::new();
    for (i, p) in gammas.chunks(2).enumerate() {
        let pair = p[0] + p.get(1).copied().unwrap_or(0.0);
        if !(pair > 0.0) {
            break;
        }
        acc += 2.0 * pair;
        k_n = i as i64;
        pairs_used.push(pair);
    }
    // A strongly negative lag-1 term can drive the partial sum below zero;
    // fall back to γ_0 rather than report a negative variance.
    if k_n < 0 || acc < 0.0 {
        return Ok(IseResult {
            sigma2: g0,
            k_n: -1,
            pairs_used: Vec::new(),
        });
    }
    Ok(IseResult {
        sigma2: acc,
        k_n,
        pairs_used,
    })
}

/// Initial sequence estimate from a univariate autocovariance sequence.
pub fn ise_from_autocov(gamma: &AutocovSequence) -> Result<IseResult> {
    ise_from_gammas(gamma.scalars()?)
}

/// Replays the truncation rule against `gammas` and checks that `result`
/// is what the rule produces.
pub fn replay_truncation(gammas: &[f64], result: &IseResult) -> bool {
    let pairs = gamma_pairs(gammas);
    if result.sigma2 < 0.0 {
        return false;
    }
    if result.k_n < 0 {
        let mut acc = -gammas[0];
        for p in pairs.iter().take_while(|p| **p > 0.0) {
            acc += 2.0 * p;
        }
        let degenerate = pairs.first().map_or(true, |p| !(*p > 0.0)) || acc < 0.0;
        return degenerate && result.sigma2 == gammas[0] && result.pairs_used.is_empty();
    }
    let k = result.k_n as usize;
    if k >= pairs.len() || result.pairs_used.as_slice() != &pairs[..=k] {
        return false;
    }
    if !pairs[..=k].iter().all(|p| *p > 0.0) {
        return false;
    }
    let stopped = k + 1 == pairs.len() || !(pairs[k + 1] > 0.0);
    let mut acc = -gammas[0];
    for p in &pairs[..=k] {
        acc += 2.0 * p;
    }
    stopped && acc == result.sigma2
}

/// Which autocovariance family fed the marginal estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum IseSource {
    #[serde(rename = "ise")]
    Ise,
    #[serde(rename = "g-ise")]
    GIse,
    #[serde(rename = "stan-ise")]
    StanIse,
}

/// Diagonal matrix of marginal initial-sequence standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagonalSD {
    pub sds: Vec<f64>,
    pub source: IseSource,
    /// Per-coordinate estimates behind `sds`.
    pub results: Vec<IseResult>,
}

impl DiagonalSD {
    fn from_results(results: Vec<IseResult>, source: IseSource) -> Self {
        Self {
            sds: results.iter().map(|r| r.sigma2.sqrt()).collect(),
            source,
            results,
        }
    }

    pub fn variances(&self) -> Vec<f64> {
        self.results.iter().map(|r| r.sigma2).collect()
    }

    pub fn truncation(&self) -> Vec<i64> {
        self.results.iter().map(|r| r.k_n).collect()
    }
}

/// Initial sequence variance of a univariate chain using FFT autocovariances
/// over all lags.
pub fn ise_variance(chain: &Chain) -> Result<IseResult> {
    if chain.d() != 1 {
        return Err(Error::DimensionMismatch(format!(
            "ise_variance needs a univariate chain, got d = {}",
            chain.d()
        )));
    }
    ise_from_autocov(&autocov::autocov_fft(chain, chain.n() - 1)?)
}

/// Per-coordinate initial sequence standard deviations.
pub fn ise_diagonal(chain: &Chain) -> Result<DiagonalSD> {
    let mean = chain_mean(chain);
    let n = chain.n();
    let results = (0..chain.d())
        .into_par_iter()
        .map(|j| ise_from_gammas(&autocov::series_fft(chain.column(j), mean.0[j], n - 1)))
        .collect::<Result<Vec<_>>>()?;
    Ok(DiagonalSD::from_results(results, IseSource::Ise))
}

/// Per-coordinate initial sequence standard deviations from globally-centered
/// autocovariances.
pub fn g_ise_diagonal(mc: &MultiChain) -> Result<DiagonalSD> {
    let center = global_mean(mc);
    let n = mc.n();
    let results = (0..mc.d())
        .into_par_iter()
        .map(|j| ise_from_gammas(&autocov::global_series(mc, j, center.0[j], n - 1)))
        .collect::<Result<Vec<_>>>()?;
    Ok(DiagonalSD::from_results(results, IseSource::GIse))
}

/// Per-coordinate initial sequence standard deviations from the
/// within/between adjusted autocovariances. Needs at least two chains.
pub fn stan_ise_diagonal(mc: &MultiChain) -> Result<DiagonalSD> {
    let wb = autocov::within_between(mc)?;
    let n = mc.n();
    let results = (0..mc.d())
        .into_par_iter()
        .map(|j| ise_from_gammas(&autocov::stan_series(mc, &wb, j, n - 1)))
        .collect::<Result<Vec<_>>>()?;
    Ok(DiagonalSD::from_results(results, IseSource::StanIse))
}
