//! Command-line front end.
//!
//! Every subcommand first resolves its flags into a fully explicit config,
//! writes that config to `run.meta` in the output directory, then executes
//! it. `--from-meta` reads such a file back and executes the stored config, so
//! a replay produces the same bytes as the original run.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{
    self, gen_problem, mean_sem, run_benchmark, GridPoint, Init, MethodGrid, SyntheticSpec,
    DEFAULT_BACKGROUND,
};
use crate::imaging::{self, Boundary, GrayImage, ImagingProblem, RestoreSetup};
use crate::par;
use crate::shrink::{self, ExtDivParams};
use crate::solver::{solve, Method, DEFAULT_TOL};

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "EXTDIV_THREADS";

pub const META_FILE: &str = "run.meta";

#[derive(Debug, Parser)]
#[command(name = "extdiv", version, about = "Sparse Poisson recovery with external-division NoLips solvers")]
#[command(args_conflicts_with_subcommands = true, subcommand_required = false, arg_required_else_help = true)]
pub struct Cli {
    /// Re-run the configuration stored in a run.meta file.
    #[arg(long, value_name = "FILE")]
    pub from_meta: Option<PathBuf>,

    /// Output directory for --from-meta.
    #[arg(long, default_value = ".", requires = "from_meta")]
    pub out: PathBuf,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a scalar operator on a grid (curve.csv).
    OperatorCurve(CurveArgs),
    /// Record the convergence of one solve on a synthetic instance (trace.csv).
    Trace(TraceArgs),
    /// Grid-searched NMSE benchmark over synthetic trials (bench.csv).
    SynthBench(BenchArgs),
    /// Deblur a Poisson-corrupted image (restored.pgm).
    Restore(RestoreArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveOp {
    ExtDiv,
    BregmanProxBs,
    BregmanProxBurg,
    Soft,
    Firm,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[arg(long, value_enum)]
    pub op: CurveOp,
    #[arg(long, default_value_t = 2.0)]
    pub omega: f64,
    #[arg(long, default_value_t = 0.3)]
    pub eta1: f64,
    /// Sparsity center (ext-div, bregman-prox-bs).
    #[arg(long, default_value_t = 3.0)]
    pub a: f64,
    /// ℓ1 weight (bregman-prox-bs, bregman-prox-burg).
    #[arg(long, default_value_t = 0.3)]
    pub eta: f64,
    /// Threshold of soft shrinkage, upper threshold of firm shrinkage.
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Lower threshold of firm shrinkage.
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    /// Sample grid `lo:hi:count`, endpoints included.
    #[arg(long, default_value = "0.01:10:1000", allow_hyphen_values = true)]
    pub grid: String,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 100)]
    pub m: usize,
    #[arg(long, default_value_t = 150)]
    pub n: usize,
    /// Upper bound k of the nonzero magnitudes.
    #[arg(long, default_value_t = 50.0)]
    pub k_max: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Known background ε per observation; 0 gives the ε-free fidelity.
    #[arg(long, default_value_t = DEFAULT_BACKGROUND)]
    pub background: f64,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    #[command(flatten)]
    pub synth: SynthArgs,
    #[arg(long, default_value_t = 0.1)]
    pub rho: f64,
    #[arg(long, default_value = "proposed")]
    pub method: String,
    /// Which trial of the seed to draw.
    #[arg(long, default_value_t = 0)]
    pub trial: usize,
    /// Step size as a multiple of the fidelity's step bound.
    #[arg(long, default_value_t = 1.0)]
    pub lambda_factor: f64,
    /// ℓ1 weight of the ℓ1 methods.
    #[arg(long, default_value_t = 0.1)]
    pub eta: f64,
    #[arg(long, default_value_t = 2.0)]
    pub omega: f64,
    /// Defaults to 0.9·log(2 − 1/ω).
    #[arg(long)]
    pub eta1: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub a: f64,
    /// Defaults to the method's budget (10⁴, or 5×10⁶ for fkl).
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Defaults to 1, or max_iter/10⁴ for longer runs.
    #[arg(long)]
    pub trace_every: Option<usize>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridPreset {
    /// Small grids and a 10⁵ forward-KL budget.
    Desk,
    /// Full default grids and the 5×10⁶ forward-KL budget.
    Full,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub synth: SynthArgs,
    /// Comma-separated sparsity fractions.
    #[arg(long, default_value = "0.05,0.1,0.2")]
    pub rho_list: String,
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    /// Comma-separated methods, or `all`.
    #[arg(long, default_value = "all")]
    pub methods: String,
    #[arg(long, value_enum, default_value_t = GridPreset::Desk)]
    pub grid: GridPreset,
    /// Overrides the forward-KL iteration budget.
    #[arg(long)]
    pub fkl_max_iter: Option<usize>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BoundaryArg {
    Reflect,
    Zero,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["input", "phantom"])))]
pub struct RestoreArgs {
    /// Clean image (P5 PGM, maxval 255) to blur, corrupt and restore.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Use the built-in 64×64 neuron phantom.
    #[arg(long)]
    pub phantom: bool,
    /// A method name or `all`.
    #[arg(long, default_value = "all")]
    pub method: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long, value_enum, default_value_t = BoundaryArg::Reflect)]
    pub boundary: BoundaryArg,
    /// Constant background added to the blurred image before sampling.
    #[arg(long, default_value_t = 0.0)]
    pub background: f64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

/// Effective configuration of one run, as stored in `run.meta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum RunConfig {
    OperatorCurve(CurveConfig),
    Trace(TraceConfig),
    SynthBench(BenchConfig),
    Restore(RestoreConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveConfig {
    pub op: CurveOp,
    pub omega: f64,
    pub eta1: f64,
    pub a: f64,
    pub eta: f64,
    pub gamma: f64,
    pub tau: f64,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceConfig {
    pub spec: SyntheticSpec,
    pub trial: usize,
    pub method: Method,
    pub point: GridPoint,
    pub max_iter: usize,
    pub tol: f64,
    pub trace_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub m: usize,
    pub n: usize,
    pub rho_list: Vec<f64>,
    pub trials: usize,
    pub k_max: f64,
    pub seed: u64,
    pub background: f64,
    pub tol: f64,
    pub grid: GridPreset,
    pub grids: Vec<MethodGrid>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageSource {
    Phantom,
    /// Path as given on the command line.
    Input(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestoreConfig {
    pub source: ImageSource,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
    pub setup: RestoreSetup,
    pub grids: Vec<Vec<GridPoint>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    tool: String,
    version: String,
    #[serde(flatten)]
    config: RunConfig,
}

/// What a run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    /// Solves requested.
    pub solves: usize,
    /// Solves that returned an error.
    pub failed: usize,
    /// Files written, `run.meta` included.
    pub files: Vec<PathBuf>,
}

impl RunSummary {
    pub fn all_completed(&self) -> bool {
        self.failed == 0
    }
}

fn parse_grid(s: &str) -> Result<(f64, f64, usize)> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || Error::Param(format!("grid must be lo:hi:count, got `{s}`"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let count: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if !(lo.is_finite() && hi.is_finite()) || count == 0 || (count > 1 && !(hi > lo)) {
        return Err(Error::Param(format!("grid needs finite lo < hi and count >= 1, got `{s}`")));
    }
    Ok((lo, hi, count))
}

fn parse_list<T: FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    let out: Vec<T> = s
        .split(',')
        .map(|t| t.trim().parse::<T>().map_err(|_| Error::Param(format!("bad {what} `{t}` in `{s}`"))))
        .collect::<Result<_>>()?;
    if out.is_empty() {
        return Err(Error::Param(format!("empty {what} list")));
    }
    Ok(out)
}

fn parse_methods(s: &str) -> Result<Vec<Method>> {
    if s.trim() == "all" {
        return Ok(Method::ALL.to_vec());
    }
    let mut out: Vec<Method> = parse_list(s, "method")?;
    out.dedup();
    Ok(out)
}

impl CurveArgs {
    pub fn resolve(&self) -> Result<CurveConfig> {
        let (lo, hi, count) = parse_grid(&self.grid)?;
        Ok(CurveConfig {
            op: self.op,
            omega: self.omega,
            eta1: self.eta1,
            a: self.a,
            eta: self.eta,
            gamma: self.gamma,
            tau: self.tau,
            lo,
            hi,
            count,
        })
    }
}

impl SynthArgs {
    fn spec(&self, rho: f64, trials: usize) -> SyntheticSpec {
        SyntheticSpec {
            m: self.m,
            n: self.n,
            rho,
            k_max: self.k_max,
            seed: self.seed,
            trials,
            background: self.background,
        }
    }
}

impl TraceArgs {
    pub fn resolve(&self) -> Result<TraceConfig> {
        let method: Method = self.method.parse()?;
        let point = match method {
            Method::Proposed => {
                let eta1 = self
                    .eta1
                    .unwrap_or(0.9 * ExtDivParams::max_nonnegative_eta1(self.omega));
                GridPoint::ext_div(self.lambda_factor, self.omega, eta1, self.a)
            }
            Method::ProposedA0 => GridPoint::step(self.lambda_factor),
            Method::RklL1 | Method::FklL1 => GridPoint::l1(self.lambda_factor, self.eta),
        };
        let max_iter = self.max_iter.unwrap_or(method.default_max_iter());
        let trace_every = self.trace_every.unwrap_or((max_iter / 10_000).max(1));
        Ok(TraceConfig {
            spec: self.synth.spec(self.rho, self.trial + 1),
            trial: self.trial,
            method,
            point,
            max_iter,
            tol: self.synth.tol,
            trace_every,
        })
    }
}

impl BenchArgs {
    pub fn resolve(&self) -> Result<BenchConfig> {
        let rho_list: Vec<f64> = parse_list(&self.rho_list, "rho")?;
        let grids = parse_methods(&self.methods)?
            .into_iter()
            .map(|m| {
                let g = match self.grid {
                    GridPreset::Desk => MethodGrid::desk_for(m),
                    GridPreset::Full => MethodGrid::default_for(m),
                };
                match (m, self.fkl_max_iter) {
                    (Method::FklL1, Some(n)) => g.with_max_iter(n),
                    _ => g,
                }
            })
            .collect();
        Ok(BenchConfig {
            m: self.synth.m,
            n: self.synth.n,
            rho_list,
            trials: self.trials,
            k_max: self.synth.k_max,
            seed: self.synth.seed,
            background: self.synth.background,
            tol: self.synth.tol,
            grid: self.grid,
            grids,
        })
    }
}

impl RestoreArgs {
    pub fn resolve(&self) -> Result<RestoreConfig> {
        let source = match (&self.input, self.phantom) {
            (Some(p), false) => ImageSource::Input(p.clone()),
            (None, true) => ImageSource::Phantom,
            _ => return Err(Error::Param("give exactly one of --input and --phantom".into())),
        };
        let methods = parse_methods(&self.method)?;
        let boundary = match self.boundary {
            BoundaryArg::Reflect => Boundary::Reflect,
            BoundaryArg::Zero => Boundary::Zero,
        };
        Ok(RestoreConfig {
            source,
            grids: methods.iter().map(|&m| imaging::imaging_grid(m)).collect(),
            methods,
            seed: self.seed,
            max_iter: self.max_iter,
            tol: self.tol,
            setup: RestoreSetup { boundary, background: self.background, ..Default::default() },
        })
    }
}

impl Command {
    pub fn resolve(&self) -> Result<(RunConfig, &Path)> {
        Ok(match self {
            Command::OperatorCurve(a) => (RunConfig::OperatorCurve(a.resolve()?), &a.out),
            Command::Trace(a) => (RunConfig::Trace(a.resolve()?), &a.out),
            Command::SynthBench(a) => (RunConfig::SynthBench(a.resolve()?), &a.out),
            Command::Restore(a) => (RunConfig::Restore(a.resolve()?), &a.out),
        })
    }
}

/// Serialized `run.meta` contents for `config`.
pub fn meta_json(config: &RunConfig) -> Result<String> {
    let meta = Meta {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: config.clone(),
    };
    let mut s = serde_json::to_string_pretty(&meta).map_err(|e| Error::Format(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn read_meta(path: impl AsRef<Path>) -> Result<RunConfig> {
    let text = fs::read_to_string(path)?;
    let meta: Meta = serde_json::from_str(&text).map_err(|e| Error::Format(format!("run.meta: {e}")))?;
    Ok(meta.config)
}

fn write_file(dir: &Path, name: &str, bytes: &[u8], files: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, bytes)?;
    files.push(path);
    Ok(())
}

/// Writes `run.meta` into `out` and executes `config`.
pub fn execute(config: &RunConfig, out: &Path) -> Result<RunSummary> {
    fs::create_dir_all(out)?;
    let mut files = Vec::new();
    write_file(out, META_FILE, meta_json(config)?.as_bytes(), &mut files)?;
    let mut summary = match config {
        RunConfig::OperatorCurve(c) => run_curve(c, out)?,
        RunConfig::Trace(c) => run_trace(c, out)?,
        RunConfig::SynthBench(c) => run_bench(c, out)?,
        RunConfig::Restore(c) => run_restore(c, out)?,
    };
    files.append(&mut summary.files);
    summary.files = files;
    Ok(summary)
}

/// Samples of the chosen operator on the configured grid.
pub fn curve_points(c: &CurveConfig) -> Result<Vec<(f64, f64)>> {
    let xs: Vec<f64> = if c.count == 1 {
        vec![c.lo]
    } else {
        (0..c.count)
            .map(|i| c.lo + (c.hi - c.lo) * i as f64 / (c.count - 1) as f64)
            .collect()
    };
    let ys = match c.op {
        CurveOp::ExtDiv => shrink::ext_div_closed_form(&xs, &ExtDivParams::new(c.omega, c.eta1, c.a)?)?,
        CurveOp::BregmanProxBs => shrink::bregman_prox_shifted_l1_bs(&xs, c.eta, c.a)?,
        CurveOp::BregmanProxBurg => shrink::bregman_prox_l1_burg(&xs, c.eta)?,
        CurveOp::Soft => shrink::soft_vec(&xs, c.gamma)?,
        CurveOp::Firm => xs.iter().map(|&x| shrink::firm(x, c.tau, c.gamma)).collect::<Result<_>>()?,
    };
    Ok(xs.into_iter().zip(ys).collect())
}

fn run_curve(c: &CurveConfig, out: &Path) -> Result<RunSummary> {
    let pts = curve_points(c)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["x", "y"]).map_err(harness::csv_err)?;
    for (x, y) in &pts {
        w.serialize((x, y)).map_err(harness::csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    let mut files = Vec::new();
    write_file(out, "curve.csv", &bytes, &mut files)?;
    println!("{:?}: {} samples on [{}, {}]", c.op, pts.len(), c.lo, c.hi);
    Ok(RunSummary { solves: 0, failed: 0, files })
}

fn run_trace(c: &TraceConfig, out: &Path) -> Result<RunSummary> {
    if c.trial >= c.spec.trials {
        return Err(Error::Param(format!("trial {} not below trials {}", c.trial, c.spec.trials)));
    }
    let problem = gen_problem(&c.spec, c.trial)?;
    let cfg = c
        .point
        .config(c.method, &problem.model, Init::Ones, c.max_iter, c.tol)?
        .with_trace_every(c.trace_every);
    let mut files = Vec::new();
    let solved = solve(&cfg, &problem.model, Some(&problem.truth));
    let (failed, bytes) = match &solved {
        Ok(o) => {
            let mut buf = Vec::new();
            harness::write_trace_csv(&mut buf, &o.trace)?;
            println!(
                "{}: {} iterations, converged={}, nmse={:.6}",
                c.method,
                o.iterations,
                o.converged,
                o.nmse.unwrap_or(f64::NAN)
            );
            (0, buf)
        }
        Err(e) => {
            eprintln!("{}: solve failed: {e}", c.method);
            let mut buf = Vec::new();
            harness::write_trace_csv(&mut buf, &[])?;
            (1, buf)
        }
    };
    write_file(out, "trace.csv", &bytes, &mut files)?;
    Ok(RunSummary { solves: 1, failed, files })
}

fn run_bench(c: &BenchConfig, out: &Path) -> Result<RunSummary> {
    let mut results = Vec::new();
    for &rho in &c.rho_list {
        let spec = SyntheticSpec {
            m: c.m,
            n: c.n,
            rho,
            k_max: c.k_max,
            seed: c.seed,
            trials: c.trials,
            background: c.background,
        };
        let grids: Vec<MethodGrid> = c.grids.iter().map(|g| g.clone().with_tol(c.tol)).collect();
        let mut rows = run_benchmark(&spec, &grids)?;
        for g in &c.grids {
            let nmse: Vec<f64> = rows.iter().filter(|r| r.method == g.method).map(|r| r.nmse).collect();
            let (mean, sem) = mean_sem(&nmse);
            println!("rho={rho} {:<12} nmse {mean:.6} ± {sem:.6}", g.method.tag());
        }
        results.append(&mut rows);
    }
    let mut buf = Vec::new();
    harness::write_bench_csv(&mut buf, &results)?;
    let mut files = Vec::new();
    write_file(out, "bench.csv", &buf, &mut files)?;
    let solves = c.rho_list.len() * c.trials * c.grids.iter().map(|g| g.points.len()).sum::<usize>();
    let failed = results.iter().map(|r| r.failed_points).sum();
    Ok(RunSummary { solves, failed, files })
}

fn load_source(source: &ImageSource) -> Result<GrayImage> {
    match source {
        ImageSource::Phantom => Ok(imaging::neuron_phantom()),
        ImageSource::Input(p) => imaging::load_pgm(p),
    }
}

fn run_restore(c: &RestoreConfig, out: &Path) -> Result<RunSummary> {
    if c.methods.is_empty() || c.grids.len() != c.methods.len() {
        return Err(Error::Param("one grid per method is required".into()));
    }
    let truth = load_source(&c.source)?;
    let problem = ImagingProblem::new(&truth, c.setup, c.seed)?;
    let mut files = Vec::new();
    write_file(out, "observed.pgm", &imaging::encode_pgm(&problem.observed), &mut files)?;

    let mut table = csv::Writer::from_writer(Vec::new());
    table
        .write_record(["method", "psnr_db", "lambda", "omega", "eta1", "a", "eta", "iters", "converged"])
        .map_err(harness::csv_err)?;
    let mut sidecar = String::new();
    sidecar.push_str(&format!("seed {}\n", c.seed));
    sidecar.push_str(&format!("observed_psnr_db {:.4}\n", problem.observed_psnr()?));
    let (mut solves, mut failed) = (0, 0);
    // restored.pgm holds the proposed method's output, or the first method's.
    let primary = if c.methods.contains(&Method::Proposed) { Method::Proposed } else { c.methods[0] };
    for (&method, grid) in c.methods.iter().zip(&c.grids) {
        solves += grid.len();
        let r = match problem.best_of(method, grid, c.max_iter, c.tol) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("{method}: every grid point failed: {e}");
                failed += grid.len();
                continue;
            }
        };
        failed += r.failed_points;
        let p = &r.point;
        let (omega, eta1, a) = match p.ext_div {
            Some((w, e, a)) => (Some(w), Some(e), Some(a)),
            None => (None, None, None),
        };
        let eta = matches!(method, Method::RklL1 | Method::FklL1).then_some(p.l1_weight);
        table
            .serialize((
                method.tag(),
                r.report.psnr,
                r.report.lambda,
                omega,
                eta1,
                a,
                eta,
                r.report.iterations,
                r.report.converged,
            ))
            .map_err(harness::csv_err)?;
        sidecar.push_str(&format!(
            "method {} psnr_db {:.4} lambda {} omega {} eta1 {} a {} eta {} iters {} converged {}\n",
            method.tag(),
            r.report.psnr,
            r.report.lambda,
            fmt_opt(omega),
            fmt_opt(eta1),
            fmt_opt(a),
            fmt_opt(eta),
            r.report.iterations,
            r.report.converged
        ));
        println!("{:<12} {:>8.3} dB", method.tag(), r.report.psnr);
        let bytes = imaging::encode_pgm(&r.image);
        if c.methods.len() > 1 {
            write_file(out, &format!("restored_{}.pgm", method.tag()), &bytes, &mut files)?;
        }
        if method == primary {
            write_file(out, "restored.pgm", &bytes, &mut files)?;
        }
    }
    let bytes = table.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_file(out, "comparison.csv", &bytes, &mut files)?;
    write_file(out, "restore.txt", sidecar.as_bytes(), &mut files)?;
    Ok(RunSummary { solves, failed, files })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |t| t.to_string())
}

/// Applies `EXTDIV_THREADS` if set.
pub fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::Param(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
        if n == 0 {
            return Err(Error::Param(format!("{THREADS_ENV} must be positive")));
        }
        par::init_threads(n);
    }
    Ok(())
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<RunSummary> {
    match (&cli.from_meta, &cli.command) {
        (Some(meta), None) => execute(&read_meta(meta)?, &cli.out),
        (None, Some(cmd)) => {
            let (config, out) = cmd.resolve()?;
            execute(&config, out)
        }
        _ => Err(Error::Param("give a subcommand or --from-meta".into())),
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return 2;
    }
    match run(&cli) {
        Ok(s) if s.all_completed() => 0,
        Ok(s) => {
            eprintln!("{} of {} solves failed", s.failed, s.solves);
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            let _ = std::io::stderr().flush();
            1
        }
    }
}
