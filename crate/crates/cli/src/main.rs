use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mcmc_se::batch::BatchRule;
use mcmc_se::cc::{estimate, CovEstimate, EstimateOptions, Method};
use mcmc_se::chain::{load_chain_path, MultiChain};
use mcmc_se::diagnostics::ess_pooled;
use mcmc_se::mise::MiseMode;
use mcmc_se::var::{bias_experiment, run_benchmark, write_bias_csv, BenchmarkConfig, BiasConfig};
use mcmc_se::{Error, Matrix};
use serde_json::{json, Value};

/// mISE beyond this chain length takes minutes per call.
const SLOW_MISE_N: usize = 500_000;

/// Seed used when `--seed` is not given.
const DEFAULT_SEED: u64 = 20_240_101;

const METHOD_HELP: &str = "Estimator tag: cc-ise, gcc-ise, stan-cc, mise, bm, sve, gbm";

#[derive(Parser)]
#[command(name = "mcmc-se", version, about = "Asymptotic covariance estimation for MCMC output")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the asymptotic covariance of one or more chains (CSV, one row per draw).
    Estimate(EstimateArgs),
    /// Replication study on the Hadamard VAR(1) model with known truth.
    Benchmark(BenchmarkArgs),
    /// Batch-means covariance versus correlation bias over a grid of rho.
    Bias(BiasArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Sequential,
    Fft,
}

impl From<ModeArg> for MiseMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Sequential => MiseMode::Sequential,
            ModeArg::Fft => MiseMode::Fft,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    /// floor(n^(1/3)).
    CubeRoot,
    /// ceil(c n^(1/3)) with c from autoregressive pilot fits.
    ArPilot,
}

impl From<RuleArg> for BatchRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::CubeRoot => BatchRule::CubeRoot,
            RuleArg::ArPilot => BatchRule::ArPilot,
        }
    }
}

#[derive(Args)]
struct Tuning {
    /// Batch size; overrides --batch-rule.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Batch size rule when --batch-size is absent.
    #[arg(long, value_enum, default_value = "cube-root")]
    batch_rule: RuleArg,
    /// Bartlett bandwidth for sve (default floor(n^(1/3))).
    #[arg(long)]
    bandwidth: Option<usize>,
    /// Lag source for mise.
    #[arg(long, value_enum, default_value = "sequential")]
    mise_mode: ModeArg,
    /// Permit mise on chains with n >= 500000.
    #[arg(long)]
    allow_slow: bool,
    /// Write zero for every timing field so reruns are byte-identical.
    #[arg(long)]
    no_timing: bool,
}

impl Tuning {
    fn options(&self) -> EstimateOptions {
        EstimateOptions {
            batch_size: self.batch_size,
            batch_rule: self.batch_rule.into(),
            bandwidth: self.bandwidth,
            mise_mode: self.mise_mode.into(),
        }
    }
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long = "method", visible_alias = "methods", required = true, value_delimiter = ',', value_parser = parse_method, help = METHOD_HELP)]
    methods: Vec<Method>,
    /// Chain file; repeat for parallel chains.
    #[arg(long = "input", required = true)]
    inputs: Vec<PathBuf>,
    /// Input files start with a header row.
    #[arg(long)]
    header: bool,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Output file (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long = "method", visible_alias = "methods", required = true, value_delimiter = ',', value_parser = parse_method, help = METHOD_HELP)]
    methods: Vec<Method>,
    #[arg(long, default_value_t = 12)]
    d: usize,
    #[arg(long, default_value_t = 1.01)]
    rho: f64,
    /// Comma-separated chain lengths.
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    /// Cap on mise replications.
    #[arg(long)]
    mise_reps: Option<usize>,
    /// Parallel chains per replication for gcc-ise, stan-cc and gbm.
    #[arg(long, default_value_t = 1)]
    chains: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Output directory for benchmark.csv and summary.json (CSV to stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Args)]
struct BiasArgs {
    #[arg(long, default_value_t = 12)]
    d: usize,
    /// Comma-separated rho grid; "inf" gives the independent case.
    #[arg(long, value_delimiter = ',', default_values_t = BiasConfig::DEFAULT_RHO_GRID)]
    rho: Vec<f64>,
    #[arg(long, default_value_t = BiasConfig::DEFAULT_N)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Output CSV file (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

enum Failure {
    Usage(String),
    Core(Error),
    Method(Method, Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Core(Error::Io(e))
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Core(e) | Failure::Method(_, e) => match e {
                e if e.is_numerical() || matches!(e, Error::Asymmetric { .. }) => 4,
                Error::InvalidInput(_)
                | Error::InsufficientChains { .. }
                | Error::Range { .. }
                | Error::UnsupportedOrder(_) => 2,
                _ => 3,
            },
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Usage(m) => m.clone(),
            Failure::Core(e) => e.to_string(),
            Failure::Method(m, e) => format!("{m}: {e}"),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn sink(out: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn row_major(m: &Matrix) -> Vec<f64> {
    (0..m.nrows())
        .flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)]))
        .collect()
}

fn estimate_json(est: &CovEstimate, mc: &MultiChain, timing: bool) -> CliResult<Value> {
    let mut diag = serde_json::to_value(&est.diagnostics).map_err(|e| Failure::Usage(e.to_string()))?;
    if !timing {
        if let Some(obj) = diag.as_object_mut() {
            obj.insert("wall_clock".into(), json!(0.0));
            if let Some(Value::Object(stages)) = obj.get_mut("stages") {
                stages.values_mut().for_each(|v| *v = json!(0.0));
            }
        }
    }
    // A singular estimate has no ESS; report null rather than failing the run.
    let (ess, ess_per_n) = match ess_pooled(mc, est) {
        Ok(e) => (json!(e.ess), json!(e.ess_per_n)),
        Err(_) => (Value::Null, Value::Null),
    };
    Ok(json!({
        "method": est.method,
        "dim": [est.sigma.nrows(), est.sigma.ncols()],
        "sigma": row_major(&est.sigma),
        "ess": ess,
        "ess_per_n": ess_per_n,
        "diagnostics": diag,
    }))
}

fn check_slow(methods: &[Method], n: usize, tuning: &Tuning) -> CliResult<()> {
    if methods.contains(&Method::Mise) && n >= SLOW_MISE_N && !tuning.allow_slow {
        return Err(Failure::Usage(format!(
            "mise on n = {n} is slow; pass --allow-slow to run it anyway"
        )));
    }
    Ok(())
}

fn run_estimate(args: &EstimateArgs) -> CliResult<()> {
    let chains = args
        .inputs
        .iter()
        .map(|p| {
            load_chain_path(p, args.header).map_err(|e| match e {
                Error::Io(io) => Failure::Core(Error::Io(io::Error::new(io.kind(), format!("{}: {io}", p.display())))),
                other => Failure::Core(other),
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let mc = MultiChain::new(chains)?;
    for &m in &args.methods {
        if !m.is_parallel() && mc.m() > 1 {
            return Err(Failure::Usage(format!("{m} takes exactly one --input, got {}", mc.m())));
        }
        // gcc-ise is well defined on one chain; the other parallel methods are not.
        if m.is_parallel() && m != Method::GccIse && mc.m() < 2 {
            return Err(Failure::Usage(format!("{m} needs at least 2 --input chains, got {}", mc.m())));
        }
    }
    check_slow(&args.methods, mc.n(), &args.tuning)?;
    let opts = args.tuning.options();
    let estimates = args
        .methods
        .iter()
        .map(|&m| estimate(m, &mc, &opts).map_err(|e| Failure::Method(m, e)))
        .collect::<CliResult<Vec<_>>>()?;

    let mut out = sink(args.out.as_deref())?;
    match args.format {
        Format::Json => {
            let results = estimates
                .iter()
                .map(|e| estimate_json(e, &mc, !args.tuning.no_timing))
                .collect::<CliResult<Vec<_>>>()?;
            let doc = json!({
                "chains": mc.m(),
                "n": mc.n(),
                "d": mc.d(),
                "results": results,
            });
            serde_json::to_writer_pretty(&mut out, &doc).map_err(|e| Failure::Core(Error::Io(e.into())))?;
            writeln!(out)?;
        }
        Format::Csv => {
            writeln!(out, "method,i,j,value")?;
            for e in &estimates {
                for i in 0..e.sigma.nrows() {
                    for j in 0..e.sigma.ncols() {
                        writeln!(out, "{},{i},{j},{}", e.method, e.sigma[(i, j)])?;
                    }
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn run_bench(args: &BenchmarkArgs) -> CliResult<()> {
    if let Some(&big) = args.n.iter().max() {
        check_slow(&args.methods, big, &args.tuning)?;
    }
    let mut cfg = BenchmarkConfig::new(args.d, args.rho, args.n.clone(), args.reps, args.methods.clone(), args.seed);
    cfg.chains = args.chains;
    cfg.options = args.tuning.options();
    if let Some(r) = args.mise_reps {
        cfg.rep_limits.insert(Method::Mise, r);
    }
    let report = run_benchmark(&cfg)?;
    let timing = !args.tuning.no_timing;
    match &args.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let mut csv = sink(Some(&dir.join("benchmark.csv")))?;
            report.write_csv(&mut csv, timing)?;
            csv.flush()?;
            let mut summary = report.summary_json();
            if !timing {
                zero_summary_timing(&mut summary);
            }
            let mut js = sink(Some(&dir.join("summary.json")))?;
            serde_json::to_writer_pretty(&mut js, &summary).map_err(|e| Failure::Core(Error::Io(e.into())))?;
            writeln!(js)?;
            js.flush()?;
        }
        None => {
            let mut out = sink(None)?;
            report.write_csv(&mut out, timing)?;
            out.flush()?;
        }
    }
    for f in &report.failures {
        eprintln!("warning: {} n={} rep={}: {}", f.method, f.n, f.rep, f.error);
    }
    Ok(())
}

fn zero_summary_timing(summary: &mut Value) {
    if let Some(Value::Array(rows)) = summary.get_mut("summary") {
        for row in rows {
            if let Some(Value::Object(stats)) = row.get_mut("wall_clock_s") {
                stats.values_mut().for_each(|v| *v = json!(0.0));
            }
        }
    }
}

fn run_bias(args: &BiasArgs) -> CliResult<()> {
    let rows = bias_experiment(&BiasConfig {
        d: args.d,
        rho_grid: args.rho.clone(),
        n: args.n,
        b_n: args.batch_size,
        reps: args.reps,
        seed: args.seed,
    })?;
    let mut out = sink(args.out.as_deref())?;
    write_bias_csv(&rows, &mut out)?;
    out.flush()?;
    Ok(())
}

fn configure_threads() -> CliResult<()> {
    if let Ok(v) = std::env::var("MCMC_SE_THREADS") {
        let threads: usize = v
            .parse()
            .map_err(|_| Failure::Usage(format!("MCMC_SE_THREADS must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Estimate(a) => run_estimate(a),
        Command::Benchmark(a) => run_bench(a),
        Command::Bias(a) => run_bias(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}
