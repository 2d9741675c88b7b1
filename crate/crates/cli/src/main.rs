//! Command-line driver: eigensystems to CSV, quantizers to JSON,
//! covariance reconstruction, pricing and variance benchmarks.
//!
//! Exit codes: 2 for validation and format problems, 3 for numerical
//! failures, 4 for I/O. With `--threads 1` (the default) every run with
//! the same arguments and seed produces byte-identical output files;
//! more threads keep the estimates identical but may reorder log lines.

use clap::{Parser, Subcommand, ValueEnum};
use gpquant::expansion::KlExpansion;
use gpquant::kernels::{CovarianceKernel, ProcessFamily};
use gpquant::pricing::{MarketParams, McRule, PayoffKind, PricingEngine};
use gpquant::quantizer::{
    blind_decomposition, build_functional_quantizer, lloyd_multivariate, load_quantizer,
    save_quantizer, DistortionTable, FunctionalQuantizer, StructureSpec, DEFAULT_GRADIENT_TOL,
};
use gpquant::strat::{
    build_stratification, conditional_path_sampler, reconstruct_process, AllocationRule,
};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "gpquant", version, about = "Karhunen-Loeve toolkit: eigensystems, functional quantizers, stratified pricing")]
struct Cli {
    /// Worker threads; 1 is the byte-reproducible mode.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenvalue table (three resolutions plus extrapolation) as CSV.
    Eigs(EigsArgs),
    /// Build a functional quantizer and save it as JSON.
    Quantize(QuantizeArgs),
    /// Estimate the covariance on a schedule from stratified paths.
    Reconstruct(ReconstructArgs),
    /// Price a payoff under the fractional Black-Scholes model.
    Price(PriceArgs),
    /// Run every allocation rule on one payoff and tabulate variances.
    BenchVariance(BenchArgs),
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum ProcessArg {
    Bm,
    Bridge,
    Ou,
    OuStat,
    Fbm,
}

#[derive(Clone, Copy, ValueEnum)]
enum StructureArg {
    Product,
    Optimal,
}

#[derive(Clone, Copy, ValueEnum)]
enum PayoffArg {
    Vanilla,
    UpInCall,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    Plain,
    Prop,
    Lip,
    Opt,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(clap::Args)]
struct EigsArgs {
    #[arg(long, value_enum)]
    process: ProcessArg,
    /// Horizon T.
    #[arg(long = "T", default_value_t = 1.0)]
    t_max: f64,
    /// Hurst exponent (fbm only).
    #[arg(long = "H")]
    hurst: Option<f64>,
    /// Mean-reversion rate (ou and ou-stat only; default 1).
    #[arg(long)]
    theta: Option<f64>,
    /// Diffusion coefficient (ou and ou-stat only; default 1).
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 5)]
    modes: usize,
    /// Trapezoidal panel counts, ascending: n1,n2,n3.
    #[arg(long, default_value = "25,50,100")]
    resolutions: String,
    /// Also dump each eigenfunction on a uniform grid of this many points.
    #[arg(long)]
    grid: Option<usize>,
    /// Output CSV (default eigs.csv in GPQUANT_OUT_DIR or the cwd).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct QuantizeArgs {
    #[arg(long, value_enum)]
    process: ProcessArg,
    #[arg(long = "T", default_value_t = 1.0)]
    t_max: f64,
    #[arg(long = "H")]
    hurst: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Codebook budget.
    #[arg(long = "N")]
    n: usize,
    #[arg(long, value_enum, default_value_t = StructureArg::Product)]
    structure: StructureArg,
    /// Explicit per-mode sizes (product only); skips the budget search.
    #[arg(long)]
    sizes: Option<String>,
    /// Lloyd sample-pool size (optimal only).
    #[arg(long, default_value_t = 200_000)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "64,128,256")]
    resolutions: String,
    /// Eigenfunction sample count stored in the file (and used by --dump-paths).
    #[arg(long, default_value_t = 201)]
    grid: usize,
    /// Also write the codebook paths chi_i(t) as CSV, one row per path.
    #[arg(long)]
    dump_paths: bool,
    /// Output JSON (default quantizer.json).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct ReconstructArgs {
    /// Quantizer JSON produced by `quantize`.
    #[arg(long)]
    quantizer: PathBuf,
    /// Comma-separated schedule t0,...,tn.
    #[arg(long)]
    schedule: String,
    #[arg(long, default_value_t = 100_000)]
    paths: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV (default cov.csv).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct MarketArgs {
    #[arg(long = "S", default_value_t = 100.0)]
    s0: f64,
    #[arg(long = "K", default_value_t = 100.0)]
    strike: f64,
    /// Barrier level (up-in-call only).
    #[arg(long = "B")]
    barrier: Option<f64>,
    #[arg(long = "r", default_value_t = 0.0)]
    rate: f64,
    /// Volatility.
    #[arg(long, default_value_t = 0.2)]
    sigma: f64,
    #[arg(long = "T", default_value_t = 1.0)]
    t_max: f64,
    #[arg(long = "H", default_value_t = 0.5)]
    hurst: f64,
    /// Fixing dates per path (schedule has fixings + 1 points).
    #[arg(long, default_value_t = 12)]
    fixings: usize,
    #[arg(long, default_value_t = 100_000)]
    paths: usize,
    /// Reuse a saved product quantizer instead of building one.
    #[arg(long)]
    quantizer: Option<PathBuf>,
    /// Per-mode strata sizes when building fresh.
    #[arg(long, default_value = "10,5,2")]
    strata: String,
    #[arg(long, default_value = "64,128,256")]
    resolutions: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(clap::Args)]
struct PriceArgs {
    #[arg(long, value_enum)]
    payoff: PayoffArg,
    #[command(flatten)]
    market: MarketArgs,
    #[arg(long, value_enum, default_value_t = RuleArg::Prop)]
    rule: RuleArg,
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
    /// Output file (default price.json or price.csv).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct BenchArgs {
    #[arg(long, value_enum)]
    payoff: PayoffArg,
    #[command(flatten)]
    market: MarketArgs,
    /// Output CSV (default bench.csv).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// CLI failure with its exit code: usage problems are 2, library errors
/// keep the documented 2/3/4 split.
enum Failure {
    Usage(String),
    Lib(gpquant::Error),
}

impl From<gpquant::Error> for Failure {
    fn from(e: gpquant::Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Lib(e) => match e {
                gpquant::Error::Numeric { .. } => 3,
                gpquant::Error::Io(_) => 4,
                _ => 2,
            },
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Usage(m) => m.clone(),
            Failure::Lib(e) => e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads == 0 {
        eprintln!("error: invalid parameter `threads`: need at least one");
        return ExitCode::from(2);
    }
    if let Err(e) =
        rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global()
    {
        eprintln!("error: thread pool: {e}");
        return ExitCode::from(3);
    }
    let result = match cli.command {
        Command::Eigs(args) => cmd_eigs(args),
        Command::Quantize(args) => cmd_quantize(args),
        Command::Reconstruct(args) => cmd_reconstruct(args),
        Command::Price(args) => cmd_price(args),
        Command::BenchVariance(args) => cmd_bench(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

/// 17 significant digits, '.' decimal, locale-independent.
fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_list<T: std::str::FromStr>(s: &str, name: &str) -> Result<Vec<T>, Failure> {
    s.split(',')
        .map(|p| p.trim().parse::<T>())
        .collect::<Result<Vec<T>, _>>()
        .map_err(|_| Failure::Usage(format!("invalid parameter `{name}`: cannot parse {s:?}")))
}

fn parse_triple(s: &str) -> Result<(usize, usize, usize), Failure> {
    let v: Vec<usize> = parse_list(s, "resolutions")?;
    if v.len() != 3 {
        return Err(Failure::Usage(format!(
            "invalid parameter `resolutions`: need exactly three values, got {}",
            v.len()
        )));
    }
    Ok((v[0], v[1], v[2]))
}

fn resolve_family(
    process: ProcessArg,
    hurst: Option<f64>,
    theta: Option<f64>,
    sigma: Option<f64>,
) -> Result<ProcessFamily, Failure> {
    let reject = |flag: &str, ok: &str| {
        Err(Failure::Usage(format!("invalid parameter `{flag}`: only applies to {ok}")))
    };
    match process {
        ProcessArg::Fbm => {
            if theta.is_some() {
                return reject("theta", "ou and ou-stat");
            }
            if sigma.is_some() {
                return reject("sigma", "ou and ou-stat");
            }
            let hurst = hurst.ok_or_else(|| {
                Failure::Usage("invalid parameter `H`: required for fbm".into())
            })?;
            Ok(ProcessFamily::FractionalBrownianMotion { hurst })
        }
        ProcessArg::Ou | ProcessArg::OuStat => {
            if hurst.is_some() {
                return reject("H", "fbm");
            }
            let theta = theta.unwrap_or(1.0);
            let sigma = sigma.unwrap_or(1.0);
            Ok(if process == ProcessArg::Ou {
                ProcessFamily::OrnsteinUhlenbeckZero { theta, sigma }
            } else {
                ProcessFamily::OrnsteinUhlenbeckStationary { theta, sigma }
            })
        }
        ProcessArg::Bm | ProcessArg::Bridge => {
            if hurst.is_some() {
                return reject("H", "fbm");
            }
            if theta.is_some() {
                return reject("theta", "ou and ou-stat");
            }
            if sigma.is_some() {
                return reject("sigma", "ou and ou-stat");
            }
            Ok(if process == ProcessArg::Bm {
                ProcessFamily::BrownianMotion
            } else {
                ProcessFamily::BrownianBridge
            })
        }
    }
}

/// Default output location: GPQUANT_OUT_DIR when set, else the cwd.
fn resolve_out(out: Option<PathBuf>, default_name: &str) -> PathBuf {
    match out {
        Some(p) => p,
        None => match std::env::var_os("GPQUANT_OUT_DIR") {
            Some(dir) => PathBuf::from(dir).join(default_name),
            None => PathBuf::from(default_name),
        },
    }
}

/// Same directory and stem as `path`, different suffix.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}{suffix}"))
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Lib(e.into()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_eigs(args: EigsArgs) -> Result<(), Failure> {
    let family = resolve_family(args.process, args.hurst, args.theta, args.sigma)?;
    let resolutions = parse_triple(&args.resolutions)?;
    let kernel = CovarianceKernel::new(family, args.t_max)?;
    let kl = KlExpansion::nystrom(kernel, args.modes, resolutions)?;
    let closed = match args.process {
        ProcessArg::Fbm => None,
        _ => Some(KlExpansion::closed_form(kernel, args.modes)?),
    };
    let systems = &kl.approximation().expect("nystrom carries its systems").systems;
    let mut csv = String::from("k,lambda_n1,lambda_n2,lambda_n3,lambda_rr");
    if closed.is_some() {
        csv.push_str(",lambda_closed,abs_err");
    }
    csv.push('\n');
    for mode in 0..args.modes {
        let rr = kl.eigenvalues()[mode];
        let _ = write!(
            csv,
            "{},{},{},{},{}",
            mode + 1,
            fmt(systems[0].eigenvalues[mode]),
            fmt(systems[1].eigenvalues[mode]),
            fmt(systems[2].eigenvalues[mode]),
            fmt(rr)
        );
        if let Some(c) = &closed {
            let exact = c.eigenvalues()[mode];
            let _ = write!(csv, ",{},{}", fmt(exact), fmt((rr - exact).abs()));
        }
        csv.push('\n');
    }
    let out = resolve_out(args.out, "eigs.csv");
    write_file(&out, &csv)?;
    if let Some(points) = args.grid {
        if points < 2 {
            return Err(Failure::Usage(
                "invalid parameter `grid`: need at least two points".into(),
            ));
        }
        let mut mcsv = String::from("k,t,e_k\n");
        for mode in 0..args.modes {
            for i in 0..points {
                let t = args.t_max * i as f64 / (points - 1) as f64;
                let value = kl.eigenfunction(mode, t)?;
                let _ = writeln!(mcsv, "{},{},{}", mode + 1, fmt(t), fmt(value));
            }
        }
        write_file(&sibling(&out, "_modes.csv"), &mcsv)?;
    }
    Ok(())
}

fn cmd_quantize(args: QuantizeArgs) -> Result<(), Failure> {
    let family = resolve_family(args.process, args.hurst, args.theta, args.sigma)?;
    let resolutions = parse_triple(&args.resolutions)?;
    if args.n == 0 {
        return Err(Failure::Usage(
            "invalid parameter `N`: need at least one codeword".into(),
        ));
    }
    let sizes: Option<Vec<usize>> =
        args.sizes.as_deref().map(|s| parse_list(s, "sizes")).transpose()?;
    if matches!(args.structure, StructureArg::Optimal) && sizes.is_some() {
        return Err(Failure::Usage(
            "invalid parameter `sizes`: only applies to the product structure".into(),
        ));
    }
    // Deepest useful truncation for a budget of N points is log2(N) modes;
    // one more gives the searches headroom.
    let modes = match &sizes {
        Some(s) => s.len(),
        None => args.n.ilog2() as usize + 1,
    };
    let kernel = CovarianceKernel::new(family, args.t_max)?;
    let kl = KlExpansion::nystrom(kernel, modes, resolutions)?;
    let spec = match args.structure {
        StructureArg::Product => {
            let sizes = match sizes {
                Some(s) => s,
                None => {
                    let table = DistortionTable::build(args.n, DEFAULT_GRADIENT_TOL)?;
                    blind_decomposition(args.n, kl.eigenvalues(), kl.trace(), &table)?.sizes
                }
            };
            StructureSpec::Product(sizes)
        }
        StructureArg::Optimal => {
            StructureSpec::Optimal(lloyd_multivariate(
                kl.eigenvalues(),
                args.n,
                args.budget,
                args.seed,
            )?)
        }
    };
    let fq = build_functional_quantizer(kl, spec)?;
    let out = resolve_out(args.out, "quantizer.json");
    save_quantizer(&fq, args.grid, &out)?;
    println!("wrote {}", out.display());
    println!(
        "{} codewords on {} modes{}",
        fq.codebook_len(),
        fq.truncation(),
        fq.criterion().map(|c| format!(", squared error {c:.6}")).unwrap_or_default()
    );
    if args.dump_paths {
        let grid: Vec<f64> = (0..args.grid)
            .map(|i| args.t_max * i as f64 / (args.grid - 1) as f64)
            .collect();
        let mut csv = String::from("i");
        for &t in &grid {
            let _ = write!(csv, ",{}", fmt(t));
        }
        csv.push('\n');
        for code in 0..fq.codebook_len() {
            let values = fq.path_on_grid(code, &grid)?;
            let _ = write!(csv, "{}", code + 1);
            for v in values {
                let _ = write!(csv, ",{}", fmt(v));
            }
            csv.push('\n');
        }
        write_file(&sibling(&out, "_paths.csv"), &csv)?;
    }
    Ok(())
}

fn cmd_reconstruct(args: ReconstructArgs) -> Result<(), Failure> {
    let fq = load_quantizer(&args.quantizer)?;
    let schedule: Vec<f64> = parse_list(&args.schedule, "schedule")?;
    let strat = build_stratification(&fq)?;
    let sampler = conditional_path_sampler(&fq.expansion, &schedule, fq.truncation())?;
    let kernel = *fq.expansion.kernel();
    let rec = reconstruct_process(&strat, &sampler, &kernel, args.paths, args.seed)?;
    let mut csv = String::from("i,j,theoretical,estimated,ci_lo,ci_hi\n");
    for i in 0..rec.dim() {
        for j in 0..rec.dim() {
            let (theo, est, lo, hi) = rec.entry(i, j);
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{}",
                i + 1,
                j + 1,
                fmt(theo),
                fmt(est),
                fmt(lo),
                fmt(hi)
            );
        }
    }
    write_file(&resolve_out(args.out, "cov.csv"), &csv)
}

fn build_engine(market: &MarketArgs) -> Result<PricingEngine, Failure> {
    match &market.quantizer {
        Some(path) => {
            let fq: FunctionalQuantizer = load_quantizer(path)?;
            Ok(PricingEngine::from_quantizer(fq, market.fixings)?)
        }
        None => {
            let strata: Vec<usize> = parse_list(&market.strata, "strata")?;
            let resolutions = parse_triple(&market.resolutions)?;
            Ok(PricingEngine::new(
                market.hurst,
                market.t_max,
                market.fixings,
                &strata,
                resolutions,
            )?)
        }
    }
}

fn market_params(market: &MarketArgs) -> MarketParams {
    MarketParams {
        s0: market.s0,
        strike: market.strike,
        barrier: market.barrier,
        rate: market.rate,
        sigma: market.sigma,
        t_max: market.t_max,
        hurst: market.hurst,
        fixings: market.fixings,
    }
}

fn payoff_kind(payoff: PayoffArg) -> PayoffKind {
    match payoff {
        PayoffArg::Vanilla => PayoffKind::VanillaCall,
        PayoffArg::UpInCall => PayoffKind::UpInCall,
    }
}

fn mc_rule(rule: RuleArg) -> (McRule, &'static str) {
    match rule {
        RuleArg::Plain => (McRule::Plain, "plain"),
        RuleArg::Prop => (McRule::Stratified(AllocationRule::Proportional), "prop"),
        RuleArg::Lip => (McRule::Stratified(AllocationRule::LipschitzOptimal), "lip"),
        RuleArg::Opt => (McRule::Stratified(AllocationRule::Optimal), "opt"),
    }
}

fn cmd_price(args: PriceArgs) -> Result<(), Failure> {
    let engine = build_engine(&args.market)?;
    let p = market_params(&args.market);
    let (rule, rule_name) = mc_rule(args.rule);
    let est =
        engine.price(&p, payoff_kind(args.payoff), args.market.paths, rule, args.market.seed)?;
    println!(
        "price {:.6}  ci [{:.6}, {:.6}]  rule {rule_name}  M {}",
        est.estimate, est.ci.0, est.ci.1, est.total_budget
    );
    match args.format {
        FormatArg::Json => {
            let per_stratum: Vec<serde_json::Value> = est
                .per_stratum
                .iter()
                .map(|s| {
                    serde_json::json!({
                        "budget": s.budget,
                        "mean": s.mean,
                        "variance": s.variance,
                    })
                })
                .collect();
            let value = serde_json::json!({
                "price": est.estimate,
                "variance": est.variance,
                "ci": [est.ci.0, est.ci.1],
                "rule": rule_name,
                "M": est.total_budget,
                "per_stratum": per_stratum,
            });
            let mut text = serde_json::to_string_pretty(&value)
                .map_err(|e| Failure::Usage(format!("serialize: {e}")))?;
            text.push('\n');
            write_file(&resolve_out(args.out, "price.json"), &text)
        }
        FormatArg::Csv => {
            let mut csv = String::from("price,variance,ci_lo,ci_hi,rule,M\n");
            let _ = writeln!(
                csv,
                "{},{},{},{},{rule_name},{}",
                fmt(est.estimate),
                fmt(est.variance),
                fmt(est.ci.0),
                fmt(est.ci.1),
                est.total_budget
            );
            write_file(&resolve_out(args.out, "price.csv"), &csv)
        }
    }
}

fn cmd_bench(args: BenchArgs) -> Result<(), Failure> {
    let engine = build_engine(&args.market)?;
    let p = market_params(&args.market);
    let kind = payoff_kind(args.payoff);
    let mut csv =
        String::from("rule,estimate,ci_lo,ci_hi,estimator_variance,per_sample_variance\n");
    for rule_arg in [RuleArg::Plain, RuleArg::Prop, RuleArg::Lip, RuleArg::Opt] {
        let (rule, name) = mc_rule(rule_arg);
        let est = engine.price(&p, kind, args.market.paths, rule, args.market.seed)?;
        println!(
            "{name:5}  estimate {:.6}  per-sample variance {:.6}",
            est.estimate,
            est.per_sample_variance()
        );
        let _ = writeln!(
            csv,
            "{name},{},{},{},{},{}",
            fmt(est.estimate),
            fmt(est.ci.0),
            fmt(est.ci.1),
            fmt(est.variance),
            fmt(est.per_sample_variance())
        );
    }
    write_file(&resolve_out(args.out, "bench.csv"), &csv)
}
