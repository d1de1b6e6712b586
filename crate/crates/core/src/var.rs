//! VAR(1) ground-truth benchmark: Hadamard-based reversible models, exact
//! asymptotic covariance, seeded simulation, the replication harness, and
//! the batch-means bias experiment.
//!
//! Model: `X_t = Φ X_{t-1} + ε_t`, `ε_t ~ N(0, Ω)`. The stationary covariance
//! solves `V = Φ V Φᵀ + Ω`, and the asymptotic covariance of the sample mean
//! is `(I - Φ)⁻¹ V + V (I - Φ)⁻¹ - V`.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::batch::{batch_means_cov, corr_from_cov, default_batch_size, scale_correlation, BatchConfig};
use crate::cc::{estimate, EstimateOptions, Method};
use crate::chain::{chain_mean, global_mean, Chain, MeanVector, MultiChain};
use crate::diagnostics::{ellipsoid_contains, ess_pooled, rel_frobenius};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, log_det_pd, max_abs, max_asymmetry, symmetrize, Matrix};

/// Coverage level used by the benchmark.
pub const COVERAGE_LEVEL: f64 = 0.95;

fn is_prime(p: usize) -> bool {
    p >= 2 && (2..).take_while(|k| k * k <= p).all(|k| p % k != 0)
}

fn sylvester_double(h: &DMatrix<i64>) -> DMatrix<i64> {
    let k = h.nrows();
    DMatrix::from_fn(2 * k, 2 * k, |i, j| {
        let v = h[(i % k, j % k)];
        if i >= k && j >= k {
            -v
        } else {
            v
        }
    })
}

/// Paley type-I construction of order `q + 1` for a prime `q ≡ 3 (mod 4)`.
fn paley_one(q: usize) -> DMatrix<i64> {
    let mut residue = vec![false; q];
    for x in 1..q {
        residue[x * x % q] = true;
    }
    let chi = |a: usize| -> i64 {
        if a == 0 {
            0
        } else if residue[a] {
            1
        } else {
            -1
        }
    };
    let order = q + 1;
    DMatrix::from_fn(order, order, |i, j| {
        // Skew conference matrix S plus the identity.
        let s = match (i, j) {
            (0, 0) => 0,
            (0, _) => 1,
            (_, 0) => -1,
            _ => chi((j + q - i) % q),
        };
        s + i64::from(i == j)
    })
}

/// Hadamard matrix of the given order: Sylvester doubling on top of a base of
/// order 1, 2 or `q + 1` with `q ≡ 3 (mod 4)` prime (Paley I).
pub fn hadamard(order: usize) -> Result<DMatrix<i64>> {
    if order == 0 {
        return Err(Error::UnsupportedOrder(order));
    }
    let mut doublings = 0;
    let mut base = order;
    loop {
        let paley = base > 2 && is_prime(base - 1) && (base - 1) % 4 == 3;
        if base <= 2 || paley {
            let mut h = match base {
                1 => DMatrix::from_element(1, 1, 1),
                2 => DMatrix::from_row_slice(2, 2, &[1, 1, 1, -1]),
                _ => paley_one(base - 1),
            };
            for _ in 0..doublings {
                h = sylvester_double(&h);
            }
            return Ok(h);
        }
        if base % 2 != 0 {
            return Err(Error::UnsupportedOrder(order));
        }
        base /= 2;
        doublings += 1;
    }
}

const SCHUR_MAX_ITER: usize = 10_000;

/// Largest eigenvalue modulus. The Schur iteration can stall (it never
/// converges on the zero matrix), so a failure falls back to Gelfand's
/// formula `lim ‖Φᵏ‖^{1/k}` evaluated by repeated squaring.
fn spectral_radius(m: &Matrix) -> f64 {
    if let Some(schur) = m.clone().try_schur(f64::EPSILON, SCHUR_MAX_ITER) {
        return schur
            .complex_eigenvalues()
            .iter()
            .fold(0.0_f64, |acc, z| acc.max(z.norm()));
    }
    let mut p = m.clone();
    let mut log_scale = 0.0;
    let mut k = 1.0;
    let mut estimate = 0.0;
    for _ in 0..60 {
        let norm = crate::linalg::frobenius(&p);
        if norm == 0.0 {
            return 0.0;
        }
        p /= norm;
        log_scale += norm.ln();
        estimate = (log_scale / k).exp();
        p = &p * &p;
        log_scale *= 2.0;
        k *= 2.0;
    }
    estimate
}

/// Solves `V = Φ V Φᵀ + Ω` through `(I - Φ ⊗ Φ) vec(V) = vec(Ω)`.
pub fn stationary_v(phi: &Matrix, omega: &Matrix) -> Result<Matrix> {
    let d = phi.nrows();
    if phi.shape() != (d, d) || omega.shape() != (d, d) {
        return Err(Error::DimensionMismatch(format!(
            "phi {:?}, omega {:?}",
            phi.shape(),
            omega.shape()
        )));
    }
    let radius = spectral_radius(phi);
    if !(radius < 1.0) {
        return Err(Error::Nonstationary(format!("spectral radius {radius} >= 1")));
    }
    let system = Matrix::identity(d * d, d * d) - phi.kronecker(phi);
    let rhs = DVector::from_column_slice(omega.as_slice());
    let vec_v = system.lu().solve(&rhs).ok_or(Error::Singular)?;
    Ok(symmetrize(&Matrix::from_column_slice(d, d, vec_v.as_slice())))
}

/// A VAR(1) process with its exact stationary and asymptotic covariances.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarModel {
    pub phi: Matrix,
    pub omega: Matrix,
    pub v: Matrix,
    pub sigma_true: Matrix,
    /// Spectrum parameter for Hadamard-built models.
    pub rho: Option<f64>,
    pub d: usize,
}

impl VarModel {
    pub fn new(phi: Matrix, omega: Matrix) -> Result<Self> {
        let d = phi.nrows();
        let v = stationary_v(&phi, &omega)?;
        let inv = (Matrix::identity(d, d) - &phi)
            .try_inverse()
            .ok_or(Error::Singular)?;
        let sigma_true = symmetrize(&(&inv * &v + &v * &inv - &v));
        Ok(Self {
            phi,
            omega,
            v,
            sigma_true,
            rho: None,
            d,
        })
    }

    /// `‖V - Φ V Φᵀ - Ω‖_F / ‖Ω‖_F`.
    pub fn lyapunov_residual(&self) -> f64 {
        let r = &self.v - &self.phi * &self.v * self.phi.transpose() - &self.omega;
        crate::linalg::frobenius(&r) / crate::linalg::frobenius(&self.omega)
    }

    /// Largest asymmetry of `Φ Ω`, relative to its largest entry.
    pub fn reversibility_defect(&self) -> f64 {
        let p = &self.phi * &self.omega;
        max_asymmetry(&p) / max_abs(&p).max(f64::MIN_POSITIVE)
    }
}

/// `Ω = I`, `Φ = d⁻¹ H diag(ρ⁻¹, …, ρ⁻ᵈ) Hᵀ`. `ρ = ∞` gives `Φ = 0`.
pub fn build_var(d: usize, rho: f64) -> Result<VarModel> {
    if !(rho > 1.0) {
        return Err(Error::Nonstationary(format!("rho must exceed 1, got {rho}")));
    }
    let h = hadamard(d)?.map(|v| v as f64);
    let spectrum = DVector::from_fn(d, |k, _| rho.powi(-(k as i32 + 1)));
    let phi = symmetrize(&(&h * Matrix::from_diagonal(&spectrum) * h.transpose() / d as f64));
    let mut model = VarModel::new(phi, Matrix::identity(d, d))?;
    model.rho = Some(rho);
    Ok(model)
}

/// Mixes a base seed with stream coordinates into an independent 64-bit seed.
pub fn derive_seed(base: u64, coords: &[u64]) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    coords
        .iter()
        .fold(splitmix(base), |acc, c| splitmix(acc ^ splitmix(*c)))
}

/// Simulates `n` steps after `warmup` discarded ones, starting from the
/// stationary law `N(0, V)`.
pub fn simulate_var(model: &VarModel, n: usize, seed: u64, warmup: usize) -> Result<Chain> {
    if n < Chain::MIN_LEN {
        return Err(Error::TooShort {
            n,
            min: Chain::MIN_LEN,
        });
    }
    let d = model.d;
    let v_chol = cholesky_lower(&model.v).ok_or(Error::Singular)?;
    let e_chol = cholesky_lower(&model.omega).ok_or(Error::Singular)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = vec![0.0; d];
    let draw = |z: &mut [f64], rng: &mut ChaCha8Rng| {
        for v in z.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
    };
    let lower_mul = |l: &Matrix, z: &[f64], out: &mut [f64]| {
        for i in 0..d {
            let mut s = 0.0;
            for k in 0..=i {
                s += l[(i, k)] * z[k];
            }
            out[i] = s;
        }
    };
    let mut x = vec![0.0; d];
    draw(&mut z, &mut rng);
    lower_mul(&v_chol, &z, &mut x);
    let phi = &model.phi;
    let mut next = vec![0.0; d];
    let mut eps = vec![0.0; d];
    let mut data = vec![0.0; n * d];
    for t in 0..(warmup + n) {
        draw(&mut z, &mut rng);
        lower_mul(&e_chol, &z, &mut eps);
        for i in 0..d {
            let mut s = eps[i];
            for k in 0..d {
                s += phi[(i, k)] * x[k];
            }
            next[i] = s;
        }
        std::mem::swap(&mut x, &mut next);
        if t >= warmup {
            let row = t - warmup;
            for j in 0..d {
                data[j * n + row] = x[j];
            }
        }
    }
    Chain::new(Matrix::from_vec(n, d, data))
}

/// `M` independent chains with seeds derived from `(seed, m)`.
pub fn simulate_var_chains(model: &VarModel, n: usize, chains: usize, seed: u64) -> Result<MultiChain> {
    let list = (0..chains)
        .map(|m| simulate_var(model, n, derive_seed(seed, &[m as u64]), 0))
        .collect::<Result<Vec<_>>>()?;
    MultiChain::new(list)
}

/// Replication study configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkConfig {
    pub d: usize,
    pub rho: f64,
    pub n_grid: Vec<usize>,
    pub reps: usize,
    pub methods: Vec<Method>,
    pub seed: u64,
    /// Parallel chains per replication for the multi-chain methods.
    pub chains: usize,
    pub options: EstimateOptions,
    /// Per-method cap on replications (e.g. for the slow mISE rows).
    pub rep_limits: BTreeMap<Method, usize>,
}

impl BenchmarkConfig {
    pub fn new(d: usize, rho: f64, n_grid: Vec<usize>, reps: usize, methods: Vec<Method>, seed: u64) -> Self {
        Self {
            d,
            rho,
            n_grid,
            reps,
            methods,
            seed,
            chains: 1,
            options: EstimateOptions::default(),
            rep_limits: BTreeMap::new(),
        }
    }

    pub fn reps_for(&self, method: Method) -> usize {
        self.rep_limits.get(&method).map_or(self.reps, |&r| r.min(self.reps))
    }
}

/// One (method, n, replication) measurement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub method: Method,
    pub n: usize,
    pub rep: usize,
    pub rel_frobenius: f64,
    pub ess_per_n: f64,
    pub covered: bool,
    /// `t_n` for mISE, the largest marginal `k_n` for the ISE families.
    pub trunc: Option<f64>,
    pub wall_clock_s: f64,
}

/// A replication whose estimator failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub method: Method,
    pub n: usize,
    pub rep: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub config: BenchmarkConfig,
    pub rows: Vec<Record>,
    pub failures: Vec<Failure>,
}

/// Distribution summary of one metric.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stats {
    pub mean: f64,
    pub sd: f64,
    pub q10: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q90: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let k = values.len() as f64;
        let mean = values.iter().sum::<f64>() / k;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0)).sqrt()
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(Stats {
            mean,
            sd,
            q10: quantile(&sorted, 0.10),
            q25: quantile(&sorted, 0.25),
            median: quantile(&sorted, 0.5),
            q75: quantile(&sorted, 0.75),
            q90: quantile(&sorted, 0.90),
        })
    }

    /// Standard error of the mean.
    pub fn se(&self, count: usize) -> f64 {
        self.sd / (count as f64).sqrt()
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Aggregates for one (method, n) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: Method,
    pub n: usize,
    pub count: usize,
    pub failures: usize,
    pub coverage: f64,
    pub rel_frobenius: Stats,
    pub ess_per_n: Stats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trunc: Option<Stats>,
    pub wall_clock_s: Stats,
}

impl BenchmarkReport {
    pub fn records(&self, method: Method, n: usize) -> impl Iterator<Item = &Record> {
        self.rows.iter().filter(move |r| r.method == method && r.n == n)
    }

    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut out = Vec::new();
        for &method in &self.config.methods {
            for &n in &self.config.n_grid {
                let recs: Vec<&Record> = self.records(method, n).collect();
                if recs.is_empty() {
                    continue;
                }
                let col = |f: &dyn Fn(&Record) -> f64| recs.iter().map(|r| f(r)).collect::<Vec<_>>();
                let truncs: Vec<f64> = recs.iter().filter_map(|r| r.trunc).collect();
                out.push(SummaryRow {
                    method,
                    n,
                    count: recs.len(),
                    failures: self
                        .failures
                        .iter()
                        .filter(|f| f.method == method && f.n == n)
                        .count(),
                    coverage: recs.iter().filter(|r| r.covered).count() as f64 / recs.len() as f64,
                    rel_frobenius: Stats::of(&col(&|r| r.rel_frobenius)).expect("non-empty"),
                    ess_per_n: Stats::of(&col(&|r| r.ess_per_n)).expect("non-empty"),
                    trunc: Stats::of(&truncs),
                    wall_clock_s: Stats::of(&col(&|r| r.wall_clock_s)).expect("non-empty"),
                });
            }
        }
        out
    }

    pub fn summary_for(&self, method: Method, n: usize) -> Option<SummaryRow> {
        self.summary().into_iter().find(|s| s.method == method && s.n == n)
    }

    /// One line per record. With `timing = false` the wall-clock column is
    /// written as 0 so that reruns are byte-identical.
    pub fn write_csv<W: Write>(&self, mut out: W, timing: bool) -> Result<()> {
        writeln!(out, "method,n,rep,rel_frobenius,ess_per_n,covered,trunc,wall_clock_s")?;
        for r in &self.rows {
            let trunc = r.trunc.map(|t| format!("{t}")).unwrap_or_default();
            let wall = if timing { r.wall_clock_s } else { 0.0 };
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.method,
                r.n,
                r.rep,
                r.rel_frobenius,
                r.ess_per_n,
                u8::from(r.covered),
                trunc,
                wall
            )?;
        }
        Ok(())
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "config": self.config,
            "summary": self.summary(),
            "failures": self.failures,
        })
    }
}

fn measure(
    method: Method,
    mc: &MultiChain,
    truth: &Matrix,
    opts: &EstimateOptions,
) -> Result<(f64, f64, bool, Option<f64>, f64)> {
    let input = if method.is_parallel() {
        mc.clone()
    } else {
        MultiChain::single(mc.chains()[0].clone())
    };
    let start = Instant::now();
    let est = estimate(method, &input, opts)?;
    let wall = start.elapsed().as_secs_f64();
    let rel = rel_frobenius(&est.sigma, truth)?;
    // Parallel estimators target the per-chain Σ; the pooled mean uses M·n draws.
    let total = input.m() * input.n();
    let mean = if input.m() == 1 {
        chain_mean(&input.chains()[0])
    } else {
        global_mean(&input)
    };
    let ess = ess_pooled(&input, &est)?;
    let zero = MeanVector(vec![0.0; input.d()]);
    let covered = ellipsoid_contains(&mean, &est, total, &zero, COVERAGE_LEVEL)?;
    Ok((rel, ess.ess_per_n, covered, est.diagnostics.truncation(), wall))
}

/// Runs every method on seeded replications for every `n` in the grid.
/// Replication `r` at grid index `k` draws from seed
/// `derive_seed(seed, [k, r])`, so results do not depend on scheduling.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkReport> {
    let model = build_var(cfg.d, cfg.rho)?;
    let needs_many = cfg.methods.iter().any(|m| m.is_parallel());
    let chains = if needs_many { cfg.chains.max(1) } else { 1 };
    for &m in &cfg.methods {
        if chains < m.min_chains() {
            return Err(Error::InsufficientChains {
                min: m.min_chains(),
                got: chains,
            });
        }
    }
    let items: Vec<(usize, usize)> = (0..cfg.n_grid.len())
        .flat_map(|k| (0..cfg.reps).map(move |r| (k, r)))
        .collect();
    let results: Vec<Result<Vec<std::result::Result<Record, Failure>>>> = items
        .par_iter()
        .map(|&(k, rep)| {
            let n = cfg.n_grid[k];
            let seed = derive_seed(cfg.seed, &[k as u64, rep as u64]);
            let mc = simulate_var_chains(&model, n, chains, seed)?;
            Ok(cfg
                .methods
                .iter()
                .filter(|&&m| rep < cfg.reps_for(m))
                .map(|&method| match measure(method, &mc, &model.sigma_true, &cfg.options) {
                    Ok((rel_frobenius, ess_per_n, covered, trunc, wall_clock_s)) => Ok(Record {
                        method,
                        n,
                        rep,
                        rel_frobenius,
                        ess_per_n,
                        covered,
                        trunc,
                        wall_clock_s,
                    }),
                    Err(e) => Err(Failure {
                        method,
                        n,
                        rep,
                        error: e.to_string(),
                    }),
                })
                .collect())
        })
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for batch in results {
        for item in batch? {
            match item {
                Ok(r) => rows.push(r),
                Err(f) => failures.push(f),
            }
        }
    }
    let order = |m: Method| cfg.methods.iter().position(|x| *x == m).unwrap_or(usize::MAX);
    rows.sort_by_key(|r| (order(r.method), r.n, r.rep));
    failures.sort_by_key(|f| (order(f.method), f.n, f.rep));
    Ok(BenchmarkReport {
        config: cfg.clone(),
        rows,
        failures,
    })
}

/// Batch-means bias study configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasConfig {
    pub d: usize,
    pub rho_grid: Vec<f64>,
    pub n: usize,
    /// Batch size; `⌊n^{1/3}⌋` when absent.
    pub b_n: Option<usize>,
    pub reps: usize,
    pub seed: u64,
}

impl BiasConfig {
    /// Mixing intensities from slow (`ρ` near 1) to fast.
    pub const DEFAULT_RHO_GRID: [f64; 5] = [1.01, 1.02, 1.05, 1.1, 1.2];
    pub const DEFAULT_N: usize = 10_000;
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasRow {
    pub rho: f64,
    pub cov_rel_bias: f64,
    pub corr_rel_bias: f64,
    pub cov_rel_det: f64,
    pub corr_rel_det: f64,
}

/// Entrywise relative error averaged over entries whose true value is not
/// (numerically) zero.
fn mean_relative_error(est: &Matrix, truth: &Matrix) -> f64 {
    let floor = 1e-12 * max_abs(truth);
    let (sum, count) = est
        .iter()
        .zip(truth.iter())
        .filter(|(_, t)| t.abs() > floor)
        .fold((0.0, 0usize), |(s, c), (e, t)| (s + (e - t) / t, c + 1));
    sum / count as f64
}

fn relative_det(est: &Matrix, log_det_truth: f64) -> f64 {
    let d = est.nrows() as f64;
    log_det_pd(est).map_or(0.0, |l| ((l - log_det_truth) / d).exp())
}

/// Compares `Σ̂_BM` against `L R̂_BM L` (true marginal scales, batch-means
/// correlations) in relative bias and relative determinant.
pub fn bias_experiment(cfg: &BiasConfig) -> Result<Vec<BiasRow>> {
    cfg.rho_grid
        .iter()
        .enumerate()
        .map(|(k, &rho)| {
            let model = build_var(cfg.d, rho)?;
            let truth = &model.sigma_true;
            let sd_true: Vec<f64> = (0..cfg.d).map(|i| truth[(i, i)].sqrt()).collect();
            let log_det_truth = log_det_pd(truth).ok_or(Error::Singular)?;
            let batch: BatchConfig = match cfg.b_n {
                Some(b) => BatchConfig::with_batch_size(cfg.n, b)?,
                None => default_batch_size(cfg.n)?,
            };
            let per_rep = (0..cfg.reps)
                .into_par_iter()
                .map(|rep| {
                    let chain = simulate_var(&model, cfg.n, derive_seed(cfg.seed, &[k as u64, rep as u64]), 0)?;
                    let bm = batch_means_cov(&chain, &batch)?;
                    let corr = scale_correlation(&corr_from_cov(&bm)?.corr, &sd_true);
                    Ok([
                        mean_relative_error(&bm, truth),
                        mean_relative_error(&corr, truth),
                        relative_det(&bm, log_det_truth),
                        relative_det(&corr, log_det_truth),
                    ])
                })
                .collect::<Result<Vec<[f64; 4]>>>()?;
            let avg = |i: usize| per_rep.iter().map(|r| r[i]).sum::<f64>() / per_rep.len() as f64;
            Ok(BiasRow {
                rho,
                cov_rel_bias: avg(0),
                corr_rel_bias: avg(1),
                cov_rel_det: avg(2),
                corr_rel_det: avg(3),
            })
        })
        .collect()
}

/// Writes bias rows as CSV.
pub fn write_bias_csv<W: Write>(rows: &[BiasRow], mut out: W) -> Result<()> {
    writeln!(out, "rho,cov_rel_bias,corr_rel_bias,cov_rel_det,corr_rel_det")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.rho, r.cov_rel_bias, r.corr_rel_bias, r.cov_rel_det, r.corr_rel_det
        )?;
    }
    Ok(())
}
