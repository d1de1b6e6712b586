//! Covariance-correlation estimators `L̂ R̂ L̂`: marginal standard deviations
//! from an initial-sequence family, correlations from (globally-centered)
//! batch means. Also hosts [`estimate`], the common entry point for every
//! method tag.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::batch::{
    ar_pilot_batch_size, batch_means_cov, corr_from_cov, default_bandwidth, default_batch_size, gbm_cov,
    scale_correlation, spectral_variance, BatchConfig, BatchRule,
};
use crate::chain::{Chain, MultiChain};
use crate::error::{Error, Result};
use crate::ise::{g_ise_diagonal, ise_diagonal, stan_ise_diagonal, DiagonalSD};
use crate::linalg::Matrix;
use crate::mise::{mise, MiseMode};

/// Estimator tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    CcIse,
    GccIse,
    StanCc,
    Mise,
    Bm,
    Sve,
    Gbm,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::CcIse,
        Method::GccIse,
        Method::StanCc,
        Method::Mise,
        Method::Bm,
        Method::Sve,
        Method::Gbm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::CcIse => "cc-ise",
            Method::GccIse => "gcc-ise",
            Method::StanCc => "stan-cc",
            Method::Mise => "mise",
            Method::Bm => "bm",
            Method::Sve => "sve",
            Method::Gbm => "gbm",
        }
    }

    /// Consumes several chains at once.
    pub fn is_parallel(self) -> bool {
        matches!(self, Method::GccIse | Method::StanCc | Method::Gbm)
    }

    pub fn min_chains(self) -> usize {
        if self == Method::StanCc {
            2
        } else {
            1
        }
    }

    /// Output is positive semi-definite by construction.
    pub fn is_psd_by_construction(self) -> bool {
        self != Method::Mise
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown method {s:?}")))
    }
}

/// Per-call diagnostics. Absent fields do not apply to the method.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Per-coordinate `k_n` of the initial-sequence marginals.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_n: Option<Vec<i64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget_exhausted: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<usize>,
    /// Seconds spent per stage.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub stages: BTreeMap<&'static str, f64>,
    pub wall_clock: f64,
}

impl Diagnostics {
    /// A single truncation summary: `t_n` for mISE, the largest marginal
    /// `k_n` for the initial-sequence families.
    pub fn truncation(&self) -> Option<f64> {
        if let Some(t) = self.t_n {
            return Some(t as f64);
        }
        self.k_n
            .as_ref()
            .and_then(|k| k.iter().max().map(|v| *v as f64))
    }
}

/// A symmetric `d×d` estimate of the asymptotic covariance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovEstimate {
    pub sigma: Matrix,
    pub method: Method,
    pub diagnostics: Diagnostics,
}

struct Stopwatch {
    start: Instant,
    lap: Instant,
    stages: BTreeMap<&'static str, f64>,
}

impl Stopwatch {
    fn new() -> Self {
        let now = Instant::now();
        Self {
            start: now,
            lap: now,
            stages: BTreeMap::new(),
        }
    }

    fn lap(&mut self, name: &'static str) {
        let now = Instant::now();
        self.stages.insert(name, (now - self.lap).as_secs_f64());
        self.lap = now;
    }

    fn total(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }
}

fn assemble(
    method: Method,
    cfg: &BatchConfig,
    corr_cov: Matrix,
    marginals: impl FnOnce() -> Result<DiagonalSD>,
) -> Result<CovEstimate> {
    let mut sw = Stopwatch::new();
    sw.stages.insert("bm", 0.0);
    let pair = corr_from_cov(&corr_cov)?;
    sw.lap("correlation");
    let diag = marginals()?;
    sw.lap("marginals");
    let sigma = scale_correlation(&pair.corr, &diag.sds);
    sw.lap("assembly");
    Ok(CovEstimate {
        sigma,
        method,
        diagnostics: Diagnostics {
            k_n: Some(diag.truncation()),
            b_n: Some(cfg.b_n),
            a_n: Some(cfg.a_n),
            wall_clock: sw.total(),
            stages: sw.stages,
            ..Default::default()
        },
    })
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let out = f()?;
    Ok((out, start.elapsed().as_secs_f64()))
}

fn finish(mut est: CovEstimate, bm_secs: f64) -> CovEstimate {
    est.diagnostics.stages.insert("bm", bm_secs);
    est.diagnostics.wall_clock += bm_secs;
    est
}

/// `L̂_ISE R̂_BM L̂_ISE`. Both factors use the same `a_n · b_n` retained
/// samples.
pub fn cc_ise(chain: &Chain, cfg: &BatchConfig) -> Result<CovEstimate> {
    let start = Instant::now();
    let data = chain.head(cfg.retained())?;
    let (bm, bm_secs) = timed(|| batch_means_cov(&data, cfg))?;
    let est = assemble(Method::CcIse, cfg, bm, || ise_diagonal(&data))?;
    let mut est = finish(est, bm_secs);
    est.diagnostics.wall_clock = start.elapsed().as_secs_f64();
    Ok(est)
}

/// `L̂_G-ISE R̂_G-BM L̂_G-ISE`. With one chain this equals [`cc_ise`].
pub fn gcc_ise(mc: &MultiChain, cfg: &BatchConfig) -> Result<CovEstimate> {
    let start = Instant::now();
    let data = mc.head(cfg.retained())?;
    let (gbm, bm_secs) = timed(|| gbm_cov(&data, cfg))?;
    let est = assemble(Method::GccIse, cfg, gbm, || g_ise_diagonal(&data))?;
    let mut est = finish(est, bm_secs);
    est.diagnostics.wall_clock = start.elapsed().as_secs_f64();
    Ok(est)
}

/// `L̂_STAN-ISE R̂_G-BM L̂_STAN-ISE`. Needs at least two chains.
pub fn stan_cc(mc: &MultiChain, cfg: &BatchConfig) -> Result<CovEstimate> {
    mc.require_chains(2)?;
    let start = Instant::now();
    let data = mc.head(cfg.retained())?;
    let (gbm, bm_secs) = timed(|| gbm_cov(&data, cfg))?;
    let est = assemble(Method::StanCc, cfg, gbm, || stan_ise_diagonal(&data))?;
    let mut est = finish(est, bm_secs);
    est.diagnostics.wall_clock = start.elapsed().as_secs_f64();
    Ok(est)
}

/// Tuning shared by all methods.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct EstimateOptions {
    /// Batch size override; chosen by `batch_rule` otherwise.
    pub batch_size: Option<usize>,
    pub batch_rule: BatchRule,
    /// Bartlett bandwidth override; `⌊n^{1/3}⌋` otherwise.
    pub bandwidth: Option<usize>,
    pub mise_mode: MiseMode,
}

impl EstimateOptions {
    pub fn batch_config(&self, mc: &MultiChain) -> Result<BatchConfig> {
        match (self.batch_size, self.batch_rule) {
            (Some(b), _) => BatchConfig::with_batch_size(mc.n(), b),
            (None, BatchRule::CubeRoot) => default_batch_size(mc.n()),
            (None, BatchRule::ArPilot) => ar_pilot_batch_size(mc),
        }
    }
}

/// Runs `method` on `mc`. Single-chain methods require exactly one chain.
pub fn estimate(method: Method, mc: &MultiChain, opts: &EstimateOptions) -> Result<CovEstimate> {
    mc.require_chains(method.min_chains())?;
    if !method.is_parallel() && mc.m() != 1 {
        return Err(Error::InvalidInput(format!(
            "{method} takes a single chain, got {}",
            mc.m()
        )));
    }
    let chain = &mc.chains()[0];
    let n = mc.n();
    match method {
        Method::CcIse => cc_ise(chain, &opts.batch_config(mc)?),
        Method::GccIse => gcc_ise(mc, &opts.batch_config(mc)?),
        Method::StanCc => stan_cc(mc, &opts.batch_config(mc)?),
        Method::Mise => {
            let r = mise(chain, opts.mise_mode)?;
            Ok(CovEstimate {
                sigma: r.sigma,
                method,
                diagnostics: Diagnostics {
                    s_n: Some(r.s_n),
                    t_n: Some(r.t_n),
                    budget_exhausted: Some(r.budget_exhausted),
                    wall_clock: r.wall_clock,
                    ..Default::default()
                },
            })
        }
        Method::Bm | Method::Gbm => {
            let cfg = opts.batch_config(mc)?;
            let (sigma, secs) = if method == Method::Bm {
                timed(|| batch_means_cov(chain, &cfg))?
            } else {
                timed(|| gbm_cov(mc, &cfg))?
            };
            Ok(CovEstimate {
                sigma,
                method,
                diagnostics: Diagnostics {
                    b_n: Some(cfg.b_n),
                    a_n: Some(cfg.a_n),
                    wall_clock: secs,
                    ..Default::default()
                },
            })
        }
        Method::Sve => {
            let h = opts.bandwidth.unwrap_or_else(|| default_bandwidth(n));
            let (sigma, secs) = timed(|| spectral_variance(chain, h))?;
            Ok(CovEstimate {
                sigma,
                method,
                diagnostics: Diagnostics {
                    bandwidth: Some(h),
                    wall_clock: secs,
                    ..Default::default()
                },
            })
        }
    }
}
