//! Command-line driver: sampling, oracle queries, estimators, zeros, rays and configured experiment runs.

use crate::analytic_oracle::{d_rho_bipotential, dilog, hciz_with, BiPotentialQuery, HcizMode};
use crate::boundary_zeros::{l1_convergence, number_variance, sample_section_with, zeros_with};
use crate::error::{Error, Result};
use crate::experiments::{derive_seed, generic_ray, run_experiment, Experiment, Outcome, Table};
use crate::geometry::{build_basis, ChartPoint, PointPair};
use crate::heat_sampler::{stream_rng, HeatParams, McmcConfig, SamplerKind};
use crate::matrix_metric::{write_polar_record, PolarJson};
use crate::roots::RootSolver;
use crate::statistics::{smooth_variance_check, two_point_covariance, Ensemble, Profile, SphereSet, TwoPointGrid, ZonalFunction};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Environment variable holding the number of worker threads.
pub const WORKERS_ENV: &str = "BERGHEAT_WORKERS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "bergheat", version, about = "Heat-kernel random Bergman metrics on the Riemann sphere")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw heat-measure samples in polar form
    Sample(SampleArgs),
    /// Evaluate the analytic oracle
    #[command(subcommand)]
    Oracle(OracleCommand),
    /// Monte Carlo estimators
    #[command(subcommand)]
    Estimate(EstimateCommand),
    /// Zeros of Gaussian random sections
    #[command(subcommand)]
    Zeros(ZerosCommand),
    /// Geodesic-ray degeneration
    #[command(subcommand)]
    Boundary(BoundaryCommand),
    /// Run the experiments listed in a JSON configuration
    Run(RunArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum SamplerChoice {
    Mcmc,
    Brownian,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum OutputFormat {
    /// length-prefixed little-endian records
    Binary,
    /// one JSON object per line
    Jsonl,
}

#[derive(Debug, Args)]
pub struct SamplerArgs {
    #[arg(long, value_enum, default_value = "mcmc")]
    pub sampler: SamplerChoice,
    /// walk length for the Brownian sampler
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, default_value_t = 4)]
    pub chains: usize,
}

impl SamplerArgs {
    fn kind(&self) -> SamplerKind {
        match self.sampler {
            SamplerChoice::Mcmc => SamplerKind::Mcmc(McmcConfig { chains: self.chains, ..McmcConfig::default() }),
            SamplerChoice::Brownian => SamplerKind::Brownian { steps: self.steps },
        }
    }
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// line bundle power; the matrices have size k + 1
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub t: f64,
    /// multiply t by k²(k + 1)
    #[arg(long)]
    pub mabuchi: bool,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[arg(long, value_enum, default_value = "jsonl")]
    pub format: OutputFormat,
    /// output file; standard output when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum OracleCommand {
    /// ∂ρI(t, ρ) and its t → ∞ limit
    DRho {
        #[arg(long)]
        t: f64,
        #[arg(long, value_delimiter = ',', required = true)]
        rho: Vec<f64>,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Li₂(x)
    Dilog {
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        x: Vec<f64>,
    },
    /// ∫ exp(μ tr(A U B U†)) dU by the determinant formula
    Hciz {
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        a: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        b: Vec<f64>,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        mu: f64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum EnsembleChoice {
    Zeros,
    Heat,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum FunctionChoice {
    Bump,
    Legendre,
    Compact,
}

#[derive(Debug, Subcommand)]
pub enum EstimateCommand {
    /// Covariances of φ_P at point pairs and their differences against the oracle
    TwoPoint {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        t: f64,
        /// CSV of `re1,im1,re2,im2` per line, ordered by decreasing Berezin value
        #[arg(long, conflicts_with = "rhos")]
        pairs: Option<PathBuf>,
        /// Berezin values for pairs built around the origin
        #[arg(long, value_delimiter = ',')]
        rhos: Option<Vec<f64>>,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        sampler: SamplerArgs,
        /// directory for `two_point.csv` and `summary.json`
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Variance of a smooth linear statistic against its large-k prediction
    Variance {
        #[arg(long)]
        k: usize,
        #[arg(long, value_enum, default_value = "zeros")]
        ensemble: EnsembleChoice,
        /// time for the heat ensemble
        #[arg(long, default_value_t = 1000.0)]
        t: f64,
        #[arg(long, value_enum, default_value = "bump")]
        f: FunctionChoice,
        /// bump steepness, Legendre degree, or compact width
        #[arg(long, default_value_t = 2.0)]
        parameter: f64,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        sampler: SamplerArgs,
    },
}

#[derive(Debug, Subcommand)]
pub enum ZerosCommand {
    /// Roots of sampled sections as CSV
    Sample {
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value = "companion")]
        solver: SolverChoice,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Variance of the number of zeros in a set
    NumberVariance {
        #[arg(long)]
        k: usize,
        /// `hemisphere`, `whole`, `disk:R` or `annulus:R1:R2`
        #[arg(long, default_value = "hemisphere")]
        set: String,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value = "aberth")]
        solver: SolverChoice,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum SolverChoice {
    Companion,
    Aberth,
}

impl From<SolverChoice> for RootSolver {
    fn from(s: SolverChoice) -> Self {
        match s {
            SolverChoice::Companion => RootSolver::Companion,
            SolverChoice::Aberth => RootSolver::Aberth,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum BoundaryCommand {
    /// L¹ distance to the limit potential along a ray
    Ray {
        #[arg(long)]
        k: usize,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
        times: Vec<f64>,
        /// eigenvalues of the direction (summing to zero); evenly spaced when absent
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        lambda: Option<Vec<f64>>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON configuration
    pub config: PathBuf,
    /// output directory; overrides `output_dir`
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// root seed; overrides `seed`
    #[arg(long)]
    pub seed: Option<u64>,
    /// run only the named experiment
    #[arg(long)]
    pub only: Option<String>,
}

/// An entry of the `experiments` list: a bare name or a name with parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExperimentEntry {
    Name(String),
    Full {
        name: String,
        #[serde(default)]
        params: Value,
        #[serde(default)]
        seed: Option<u64>,
    },
}

impl ExperimentEntry {
    fn name(&self) -> &str {
        match self {
            ExperimentEntry::Name(n) | ExperimentEntry::Full { name: n, .. } => n,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub experiments: Vec<ExperimentEntry>,
}

fn default_seed() -> u64 {
    1
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid configuration: {e}")))?;
        if config.experiments.is_empty() {
            return Err(Error::Config("configuration lists no experiments".into()));
        }
        for e in &config.experiments {
            Experiment::from_name(e.name())?;
        }
        Ok(config)
    }
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command_line: Vec<String>,
    pub version: String,
    pub root_seed: u64,
    pub seed_tree: Vec<Value>,
    pub parameters: Vec<Value>,
    pub wall_time_seconds: f64,
    pub host: Value,
    pub passed: bool,
}

fn host_info() -> Value {
    json!({
        "os": std::env::consts::OS,
        "arch": std::env::consts::ARCH,
        "workers": rayon::current_num_threads(),
        "hostname": std::env::var("HOSTNAME").ok(),
    })
}

fn write_outcome(dir: &Path, outcome: &Outcome) -> Result<()> {
    for table in &outcome.tables {
        std::fs::write(dir.join(format!("{}__{}.csv", outcome.experiment, table.name)), table.to_csv())?;
    }
    std::fs::write(dir.join(format!("{}.json", outcome.experiment)), serde_json::to_string_pretty(outcome)?)?;
    Ok(())
}

/// Runs a configuration; returns the outcomes and the manifest, writing files when a directory is given.
pub fn run_config(config: &RunConfig, out: Option<&Path>, command_line: Vec<String>) -> Result<(Vec<Outcome>, RunManifest)> {
    let start = Instant::now();
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
    }
    let mut outcomes = vec![];
    let mut seed_tree = vec![];
    let mut parameters = vec![];
    for (i, entry) in config.experiments.iter().enumerate() {
        let experiment = Experiment::from_name(entry.name())?;
        let (params, seed) = match entry {
            ExperimentEntry::Name(_) => (Value::Null, derive_seed(config.seed, i as u64)),
            ExperimentEntry::Full { params, seed, .. } => (params.clone(), seed.unwrap_or_else(|| derive_seed(config.seed, i as u64))),
        };
        let outcome = run_experiment(experiment, &params, seed)
            .map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("{}: {m}", experiment.name())),
                other => other,
            })?;
        if let Some(dir) = out {
            write_outcome(dir, &outcome)?;
        }
        seed_tree.push(json!({ "experiment": experiment.name(), "seed": seed }));
        parameters.push(json!({ "experiment": experiment.name(), "resolved": outcome.parameters }));
        outcomes.push(outcome);
    }
    let manifest = RunManifest {
        command_line,
        version: env!("CARGO_PKG_VERSION").into(),
        root_seed: config.seed,
        seed_tree,
        parameters,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        host: host_info(),
        passed: outcomes.iter().all(|o| o.passed),
    };
    if let Some(dir) = out {
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    }
    Ok((outcomes, manifest))
}

/// Configures the global worker pool from [`WORKERS_ENV`].
pub fn configure_workers() -> Result<()> {
    let Ok(value) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = value.trim().parse().map_err(|_| Error::Config(format!("{WORKERS_ENV} must be a positive integer, got '{value}'")))?;
    if n == 0 {
        return Err(Error::Config(format!("{WORKERS_ENV} must be positive")));
    }
    // a second initialization in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::InvalidInput(_) | Error::Config(_) | Error::Json(_) | Error::Io(_) | Error::OutOfChart(_) => EXIT_CONFIG,
        _ => EXIT_FAILED,
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::BufWriter::new(std::io::stdout().lock())),
    })
}

pub fn parse_set(text: &str) -> Result<SphereSet> {
    let parts: Vec<&str> = text.split(':').collect();
    let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Config(format!("bad number '{s}' in set '{text}'")));
    match parts.as_slice() {
        ["hemisphere"] => Ok(SphereSet::hemisphere()),
        ["whole"] => Ok(SphereSet::Whole),
        ["disk", r] => Ok(SphereSet::Disk { radius: num(r)? }),
        ["annulus", a, b] => Ok(SphereSet::Annulus { inner: num(a)?, outer: num(b)? }),
        _ => Err(Error::Config(format!("unknown set '{text}'"))),
    }
}

fn parse_pairs(path: &Path) -> Result<Vec<PointPair>> {
    let text = std::fs::read_to_string(path)?;
    let mut pairs = vec![];
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let values: std::result::Result<Vec<f64>, _> = line.split(',').map(|v| v.trim().parse::<f64>()).collect();
        match values {
            Ok(v) if v.len() == 4 => pairs.push(PointPair::new(ChartPoint::new(v[0], v[1]), ChartPoint::new(v[2], v[3]))),
            Err(_) if pairs.is_empty() => continue,
            _ => return Err(Error::Config(format!("bad pair line '{line}'"))),
        }
    }
    if pairs.is_empty() {
        return Err(Error::Config("pairs file holds no pairs".into()));
    }
    Ok(pairs)
}

fn run_sample(a: &SampleArgs) -> Result<i32> {
    let params = if a.mabuchi { HeatParams::mabuchi(a.k, a.t)? } else { HeatParams::for_power(a.k, a.t)? };
    let samples = crate::heat_sampler::sample_map(&params, &a.sampler.kind(), a.n, a.seed, |p| p)?;
    let mut out = output(a.out.as_deref())?;
    for s in &samples {
        match a.format {
            OutputFormat::Binary => write_polar_record(&mut out, s)?,
            OutputFormat::Jsonl => writeln!(out, "{}", serde_json::to_string(&PolarJson::from(s))?)?,
        }
    }
    out.flush()?;
    Ok(EXIT_OK)
}

fn run_oracle(c: &OracleCommand) -> Result<i32> {
    let mut out = std::io::stdout().lock();
    match c {
        OracleCommand::DRho { t, rho, tol } => {
            writeln!(out, "t,rho,d_rho_I,abs_error,limit")?;
            for &r in rho {
                let v = d_rho_bipotential(&BiPotentialQuery::new(*t, r, *tol)?)?;
                writeln!(out, "{t},{r},{},{},{}", v.value, v.abs_error_estimate, -(-r).ln_1p() / r)?;
            }
        }
        OracleCommand::Dilog { x } => {
            writeln!(out, "x,dilog")?;
            for &v in x {
                if !(v <= 1.0) {
                    return Err(Error::invalid(format!("dilog is real only for x <= 1, got {v}")));
                }
                writeln!(out, "{v},{}", dilog(v))?;
            }
        }
        OracleCommand::Hciz { a, b, mu } => {
            let v = hciz_with(a, b, *mu, HcizMode::Auto)?;
            writeln!(out, "{}", serde_json::to_string(&v)?)?;
        }
    }
    Ok(EXIT_OK)
}

fn run_estimate(c: &EstimateCommand) -> Result<i32> {
    match c {
        EstimateCommand::TwoPoint { k, t, pairs, rhos, n, seed, sampler, out } => {
            let basis = build_basis(*k)?;
            let grid = match (pairs, rhos) {
                (Some(path), _) => TwoPointGrid::new(&basis, parse_pairs(path)?)?,
                (None, Some(r)) => TwoPointGrid::from_rhos(&basis, r)?,
                (None, None) => TwoPointGrid::from_rhos(&basis, &[0.6, 0.3])?,
            };
            let report = two_point_covariance(&HeatParams::for_power(*k, *t)?, &basis, &grid, *n, *seed, &sampler.kind(), 1e-8)?;
            let mut table = Table::new("two_point", &["pair", "rho", "cov", "se"]);
            for j in 0..report.rho.len() {
                table.push(vec![j as f64, report.rho[j], report.covariance[j].estimate, report.covariance[j].std_error]);
            }
            let summary = serde_json::to_string_pretty(&report)?;
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(dir)?;
                    std::fs::write(dir.join("two_point.csv"), table.to_csv())?;
                    std::fs::write(dir.join("summary.json"), summary)?;
                }
                None => {
                    print!("{}", table.to_csv());
                    eprintln!("{summary}");
                }
            }
        }
        EstimateCommand::Variance { k, ensemble, t, f, parameter, n, seed, sampler } => {
            let profile = match f {
                FunctionChoice::Bump => Profile::ExpBump { a: *parameter },
                FunctionChoice::Legendre => Profile::Legendre { l: *parameter as usize },
                FunctionChoice::Compact => Profile::CompactBump { width: *parameter },
            };
            let f = ZonalFunction::new([0.0, 0.0, 1.0], profile)?;
            let ensemble = match ensemble {
                EnsembleChoice::Zeros => Ensemble::Zeros { solver: RootSolver::Aberth },
                EnsembleChoice::Heat => Ensemble::Heat { t: *t, sampler: sampler.kind() },
            };
            let r = smooth_variance_check(*k, &f, *n, *seed, &ensemble)?;
            let summary = json!({ "variance": r.variance, "predicted": r.predicted, "ratio": r.ratio, "laplacian_norm_sq": r.laplacian_norm_sq });
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
    }
    Ok(EXIT_OK)
}

fn run_zeros(c: &ZerosCommand) -> Result<i32> {
    match c {
        ZerosCommand::Sample { k, n, seed, solver, out } => {
            let basis = build_basis(*k)?;
            let mut w = output(out.as_deref())?;
            writeln!(w, "sample,re,im,at_infinity")?;
            for i in 0..*n {
                let section = sample_section_with(*k, &mut stream_rng(*seed, i as u64));
                for p in zeros_with(&section, &basis, (*solver).into())?.roots {
                    writeln!(w, "{i},{},{},{}", p.z.re, p.z.im, p.at_infinity)?;
                }
            }
            w.flush()?;
        }
        ZerosCommand::NumberVariance { k, set, n, seed, solver } => {
            let set = parse_set(set)?;
            let r = number_variance(*k, &set, *n, *seed, (*solver).into())?;
            println!("{}", serde_json::to_string_pretty(&r)?);
        }
    }
    Ok(EXIT_OK)
}

fn run_boundary(c: &BoundaryCommand) -> Result<i32> {
    let BoundaryCommand::Ray { k, times, lambda, seed } = c;
    let basis = build_basis(*k)?;
    let ray = generic_ray(*k, lambda.clone(), *seed)?;
    let d = l1_convergence(&ray, &basis, times)?;
    println!("s,l1_distance");
    for (s, v) in times.iter().zip(&d) {
        println!("{s},{v:e}");
    }
    Ok(EXIT_OK)
}

fn run_run(a: &RunArgs, command_line: Vec<String>) -> Result<i32> {
    let text = std::fs::read_to_string(&a.config).map_err(|e| Error::Config(format!("cannot read {}: {e}", a.config.display())))?;
    let mut config = RunConfig::parse(&text)?;
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    if let Some(only) = &a.only {
        config.experiments.retain(|e| e.name() == only);
        if config.experiments.is_empty() {
            return Err(Error::Config(format!("experiment '{only}' is not in the configuration")));
        }
    }
    let out = a.out.clone().or_else(|| config.output_dir.clone());
    let (outcomes, manifest) = run_config(&config, out.as_deref(), command_line)?;
    for o in &outcomes {
        println!("{}", o.summary_line());
    }
    eprintln!("wall time {:.1}s", manifest.wall_time_seconds);
    Ok(if manifest.passed { EXIT_OK } else { EXIT_FAILED })
}

/// Parses arguments, dispatches, and maps the result to an exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args: Vec<std::ffi::OsString> = args.into_iter().map(Into::into).collect();
    let command_line: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = configure_workers().and_then(|()| match &cli.command {
        Command::Sample(a) => run_sample(a),
        Command::Oracle(c) => run_oracle(c),
        Command::Estimate(c) => run_estimate(c),
        Command::Zeros(c) => run_zeros(c),
        Command::Boundary(c) => run_boundary(c),
        Command::Run(a) => run_run(a, command_line),
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}
