//! Asymptotic covariance estimation for Markov chain Monte Carlo output.
//!
//! Estimators: initial sequence (ISE and its multi-chain variants), the
//! multivariate initial sequence estimator (mISE), batch means, spectral
//! variance, and the composite "cc" estimators that combine marginal
//! initial-sequence variances with batch-means correlations.

pub mod autocov;
pub mod batch;
pub mod cc;
pub mod chain;
pub mod diagnostics;
pub mod error;
pub mod ise;
pub mod linalg;
pub mod mise;
pub mod var;

pub use autocov::{AutocovSequence, Centering};
pub use batch::BatchConfig;
pub use cc::{estimate, CovEstimate, Diagnostics, EstimateOptions, Method};
pub use chain::{load_chain, load_chain_path, Chain, MeanVector, MultiChain};
pub use diagnostics::{ess, rel_frobenius, EssValue};
pub use error::{Error, Result};
pub use ise::{IseResult, IseSource};
pub use linalg::Matrix;
pub use mise::{MiseMode, MiseResult};
pub use var::{build_var, run_benchmark, simulate_var, BenchmarkConfig, BenchmarkReport, VarModel};
