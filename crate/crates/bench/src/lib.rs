//! Shared fixtures for the criterion benchmarks.

use mcmc_se::var::{build_var, simulate_var};
use mcmc_se::Chain;

/// A draw from the 12-dimensional Hadamard VAR(1) model with `rho = 1.01`.
pub fn var_chain(n: usize, seed: u64) -> Chain {
    let model = build_var(12, 1.01).expect("model builds");
    simulate_var(&model, n, seed, 0).expect("simulation succeeds")
}
