//! Synthetic Poisson sparse-recovery experiments.
//!
//! A trial draws a sensing matrix with IID entries in `{0, 1/m}`, a sparse
//! nonnegative ground truth, and counts `b ~ Poisson(Ax + 1_m)`. Every method
//! is then run over its hyperparameter grid and the grid point with the lowest
//! final NMSE is reported.
//!
//! Randomness is split by counter: trial `t`, stream `s` always draws from
//! `derive_seed(seed, t, s)`, so adding trials never changes earlier ones.

use std::io::Write;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linop::{DenseMatrix, LinearOperator};
use crate::losses::PoissonModel;
use crate::par;
use crate::shrink::ExtDivParams;
use crate::solver::{solve, Method, SolverConfig, DEFAULT_TOL};

pub use crate::metrics::nmse;

const STREAM_MATRIX: u64 = 0;
const STREAM_TRUTH: u64 = 1;
const STREAM_NOISE: u64 = 2;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Sub-seed for `(trial, stream)` under a base seed.
pub fn derive_seed(seed: u64, trial: u64, stream: u64) -> u64 {
    mix(mix(mix(seed) ^ trial) ^ stream)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Sensing matrix and the number of all-zero columns that had to be redrawn.
pub fn gen_sensing_matrix_counted(m: usize, n: usize, seed: u64) -> Result<(DenseMatrix, usize)> {
    if m == 0 || n == 0 {
        return Err(Error::Param(format!("matrix dimensions must be positive, got {m}x{n}")));
    }
    let mut rng = rng_from_seed(seed);
    let v = 1.0 / m as f64;
    let mut data = vec![0.0; m * n];
    let mut resampled = 0;
    for j in 0..n {
        loop {
            let mut any = false;
            for i in 0..m {
                let on = rng.random_bool(0.5);
                data[i * n + j] = if on { v } else { 0.0 };
                any |= on;
            }
            if any {
                break;
            }
            resampled += 1;
        }
    }
    Ok((DenseMatrix::new(m, n, data)?, resampled))
}

/// `m × n` matrix with IID entries equal to `0` or `1/m` with probability ½.
/// All-zero columns are redrawn.
pub fn gen_sensing_matrix(m: usize, n: usize, seed: u64) -> Result<DenseMatrix> {
    gen_sensing_matrix_counted(m, n, seed).map(|(a, _)| a)
}

/// Number of nonzeros for sparsity fraction `rho`.
pub fn support_size(n: usize, rho: f64) -> Result<usize> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::Param(format!("rho must lie in (0, 1], got {rho}")));
    }
    let s = (rho * n as f64).round() as usize;
    if s == 0 {
        return Err(Error::Param(format!("round(rho n) = 0 for rho = {rho}, n = {n}")));
    }
    Ok(s.min(n))
}

/// Sparse vector with `round(rho n)` entries on a uniform random support, each
/// uniform on `(0, k_max]`.
pub fn gen_ground_truth(n: usize, rho: f64, k_max: f64, seed: u64) -> Result<Vec<f64>> {
    let s = support_size(n, rho)?;
    if !(k_max > 0.0 && k_max.is_finite()) {
        return Err(Error::Param(format!("k_max must be > 0, got {k_max}")));
    }
    let mut rng = rng_from_seed(seed);
    let mut x = vec![0.0; n];
    for j in index::sample(&mut rng, n, s) {
        // 1 − U with U ∈ [0, 1) keeps the value strictly positive
        x[j] = k_max * (1.0 - rng.random::<f64>());
    }
    Ok(x)
}

/// Independent Poisson draws with the given means.
pub fn sample_poisson(mean: &[f64], seed: u64) -> Result<Vec<f64>> {
    let mut rng = rng_from_seed(seed);
    sample_poisson_with(mean, &mut rng)
}

pub fn sample_poisson_with<R: Rng + ?Sized>(mean: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    mean.iter()
        .enumerate()
        .map(|(i, &mu)| {
            if mu == 0.0 {
                Ok(0.0)
            } else {
                Poisson::new(mu)
                    .map(|d| d.sample(rng))
                    .map_err(|e| Error::Domain(format!("mean[{i}] = {mu}: {e}")))
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub m: usize,
    pub n: usize,
    pub rho: f64,
    pub k_max: f64,
    pub seed: u64,
    pub trials: usize,
    /// Known background ε added to every expected count (and modelled).
    #[serde(default = "default_background")]
    pub background: f64,
}

/// ε = 1 per observation.
pub const DEFAULT_BACKGROUND: f64 = 1.0;

fn default_background() -> f64 {
    DEFAULT_BACKGROUND
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::Param("m and n must be positive".into()));
        }
        if self.trials == 0 {
            return Err(Error::Param("trials must be positive".into()));
        }
        support_size(self.n, self.rho)?;
        if !(self.k_max > 0.0 && self.k_max.is_finite()) {
            return Err(Error::Param(format!("k_max must be > 0, got {}", self.k_max)));
        }
        if !(self.background >= 0.0 && self.background.is_finite()) {
            return Err(Error::Param(format!("background must be >= 0, got {}", self.background)));
        }
        Ok(())
    }
}

/// One synthetic instance.
#[derive(Debug, Clone)]
pub struct Problem {
    pub model: PoissonModel<DenseMatrix>,
    pub truth: Vec<f64>,
    pub resampled_columns: usize,
}

/// Draws the data of trial `trial` under `spec.seed`.
pub fn gen_problem(spec: &SyntheticSpec, trial: usize) -> Result<Problem> {
    spec.validate()?;
    let t = trial as u64;
    let (a, resampled_columns) =
        gen_sensing_matrix_counted(spec.m, spec.n, derive_seed(spec.seed, t, STREAM_MATRIX))?;
    let truth = gen_ground_truth(
        spec.n,
        spec.rho,
        spec.k_max,
        derive_seed(spec.seed, t, STREAM_TRUTH),
    )?;
    let background = vec![spec.background; spec.m];
    let mut mean = a.apply(&truth)?;
    mean.iter_mut().zip(&background).for_each(|(y, e)| *y += e);
    let b = sample_poisson(&mean, derive_seed(spec.seed, t, STREAM_NOISE))?;
    let model = PoissonModel::new(a, b, background)?;
    Ok(Problem { model, truth, resampled_columns })
}

/// Starting point of every solve in a benchmark.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// `1_n`.
    #[default]
    Ones,
    /// Constant vector `c 1_n` whose predicted counts above background match
    /// the observed ones in total: `c = Σ (b − ε)₊ / Σᵢⱼ Aᵢⱼ`.
    CountMatched,
    /// The observation itself, floored at half a count; needs a square
    /// operator (as in deblurring).
    Observed,
}

/// Floor applied to observed counts by [`Init::Observed`].
pub const OBSERVED_FLOOR: f64 = 0.5;

impl Init {
    pub fn x0<A: LinearOperator>(self, model: &PoissonModel<A>) -> Result<Vec<f64>> {
        let n = model.cols();
        Ok(match self {
            Init::Ones => vec![1.0; n],
            Init::Observed => {
                if model.rows() != n {
                    return Err(Error::Param(format!(
                        "observed start needs a square operator, got {}x{n}",
                        model.rows()
                    )));
                }
                model.observations().iter().map(|&b| b.max(OBSERVED_FLOOR)).collect()
            }
            Init::CountMatched => {
                let excess: f64 = model
                    .observations()
                    .iter()
                    .zip(model.background())
                    .map(|(b, e)| (b - e).max(0.0))
                    .sum();
                let mass: f64 = model.op().column_sums().iter().sum();
                let c = excess / mass;
                vec![if c > 0.0 && c.is_finite() { c } else { 1.0 }; n]
            }
        })
    }
}

/// A single hyperparameter setting. The step size is stored as a multiple of
/// the instance's step bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub lambda_factor: f64,
    pub l1_weight: f64,
    /// `(omega, eta1, a)` for the proposed method.
    pub ext_div: Option<(f64, f64, f64)>,
}

impl GridPoint {
    pub fn step(lambda_factor: f64) -> Self {
        Self { lambda_factor, l1_weight: 0.0, ext_div: None }
    }

    pub fn l1(lambda_factor: f64, eta: f64) -> Self {
        Self { lambda_factor, l1_weight: eta, ext_div: None }
    }

    pub fn ext_div(lambda_factor: f64, omega: f64, eta1: f64, a: f64) -> Self {
        Self { lambda_factor, l1_weight: 0.0, ext_div: Some((omega, eta1, a)) }
    }

    /// Concrete solver settings on a given instance.
    pub fn config<A: LinearOperator>(
        &self,
        method: Method,
        model: &PoissonModel<A>,
        init: Init,
        max_iter: usize,
        tol: f64,
    ) -> Result<SolverConfig> {
        let bound = model.step_bound(method.fidelity())?;
        let mut cfg = SolverConfig::new(method, self.lambda_factor * bound)
            .with_l1_weight(self.l1_weight)
            .with_max_iter(max_iter)
            .with_tol(tol)
            .with_trace_every(max_iter)
            .with_x0(init.x0(model)?);
        if self.lambda_factor > 1.0 {
            cfg = cfg.allowing_large_step();
        }
        if let Some((w, e, a)) = self.ext_div {
            cfg = cfg.with_ext_div(ExtDivParams::new(w, e, a)?);
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodGrid {
    pub method: Method,
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub init: Init,
    pub points: Vec<GridPoint>,
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    (0..count)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64))
        .collect()
}

/// Default step multipliers.
pub const LAMBDA_FACTORS: [f64; 5] = [0.1, 0.3, 0.5, 0.9, 1.0];

/// Default sparsity centers for the proposed method.
pub const CENTERS: [f64; 5] = [0.01, 0.05, 0.1, 0.5, 1.0];

/// Sparsity centers of the desk grid.
pub const DESK_CENTERS: [f64; 4] = [0.01, 0.1, 1.0, 5.0];

/// Forward-KL iteration budget of the desk grid.
pub const DESK_FKL_BUDGET: usize = 100_000;

/// Default ω values for the proposed method.
pub const OMEGAS: [f64; 4] = [1.5, 2.0, 4.0, 8.0];

/// η₁ values as fractions of `log(2 − 1/ω)`, the largest η₁ for which the
/// operator keeps iterates nonnegative.
pub const ETA1_FRACTIONS: [f64; 3] = [0.5, 0.7, 0.9];

impl MethodGrid {
    /// Full default grid for `method` with its default iteration budget.
    pub fn default_for(method: Method) -> Self {
        let etas = log_space(1e-3, 1e1, 9);
        let points = match method {
            Method::FklL1 | Method::RklL1 => LAMBDA_FACTORS
                .iter()
                .flat_map(|&l| etas.iter().map(move |&e| GridPoint::l1(l, e)))
                .collect(),
            Method::Proposed => {
                let mut pts = Vec::new();
                for &l in &LAMBDA_FACTORS {
                    for &w in &OMEGAS {
                        for &f in &ETA1_FRACTIONS {
                            for &a in &CENTERS {
                                let e = f * ExtDivParams::max_nonnegative_eta1(w);
                                pts.push(GridPoint::ext_div(l, w, e, a));
                            }
                        }
                    }
                }
                pts
            }
            Method::ProposedA0 => LAMBDA_FACTORS.iter().map(|&l| GridPoint::step(l)).collect(),
        };
        Self { method, max_iter: method.default_max_iter(), tol: DEFAULT_TOL, init: Init::Ones, points }
    }

    /// Small grid used by the desk-scale replica: the largest admissible
    /// step, the full η range for the ℓ1 methods, and eight operator
    /// settings. Forward KL gets one point and a 10⁵ budget, since each of its
    /// solves costs as much as fifty of the others.
    pub fn desk_for(method: Method) -> Self {
        let (points, max_iter) = match method {
            Method::RklL1 => (log_space(1e-3, 1e1, 9).into_iter().map(|e| GridPoint::l1(1.0, e)).collect(), 10_000),
            Method::FklL1 => (vec![GridPoint::l1(1.0, 1e-3)], DESK_FKL_BUDGET),
            Method::ProposedA0 => (vec![GridPoint::step(1.0)], 10_000),
            Method::Proposed => {
                let mut pts = Vec::new();
                for w in [2.0, 8.0] {
                    let e = 0.9 * ExtDivParams::max_nonnegative_eta1(w);
                    pts.extend(DESK_CENTERS.iter().map(|&a| GridPoint::ext_div(1.0, w, e, a)));
                }
                (pts, 10_000)
            }
        };
        Self { method, max_iter, tol: DEFAULT_TOL, init: Init::Ones, points }
    }

    pub fn with_max_iter(mut self, n: usize) -> Self {
        self.max_iter = n;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }
}

/// Outcome of one `(trial, method, grid point)` solve.
#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    pub trial: usize,
    pub method: Method,
    pub grid_index: usize,
    pub lambda: f64,
    /// `None` when the solve failed; such points never win.
    pub nmse: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub method: Method,
    pub rho: f64,
    pub m: usize,
    pub n: usize,
    pub grid_index: usize,
    pub lambda: f64,
    pub omega: Option<f64>,
    pub eta1: Option<f64>,
    pub a: Option<f64>,
    pub eta: Option<f64>,
    /// `+∞` if every grid point failed.
    pub nmse: f64,
    pub iterations: usize,
    pub converged: bool,
    pub failed_points: usize,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub results: Vec<TrialResult>,
    pub outcomes: Vec<GridOutcome>,
    pub resampled_columns: usize,
}

/// Runs every grid point of every method on every trial and keeps the best
/// point per `(trial, method)`. Output is sorted by trial, then method order as
/// given.
pub fn run_benchmark_detailed(spec: &SyntheticSpec, grids: &[MethodGrid]) -> Result<BenchReport> {
    spec.validate()?;
    if grids.is_empty() || grids.iter().any(|g| g.points.is_empty()) {
        return Err(Error::Param("every method needs a non-empty grid".into()));
    }
    let problems = par::map_indexed(spec.trials, |t| gen_problem(spec, t))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let mut tasks = Vec::new();
    for t in 0..spec.trials {
        for (g, grid) in grids.iter().enumerate() {
            for p in 0..grid.points.len() {
                tasks.push((t, g, p));
            }
        }
    }
    let outcomes: Vec<GridOutcome> = par::map(&tasks, |&(t, g, p)| {
        let grid = &grids[g];
        let problem = &problems[t];
        let point = &grid.points[p];
        let run = point
            .config(grid.method, &problem.model, grid.init, grid.max_iter, grid.tol)
            .and_then(|cfg| {
                let lambda = cfg.lambda;
                solve(&cfg, &problem.model, Some(&problem.truth)).map(|o| (lambda, o))
            });
        match run {
            Ok((lambda, out)) => GridOutcome {
                trial: t,
                method: grid.method,
                grid_index: p,
                lambda,
                nmse: out.nmse.filter(|e| e.is_finite()),
                iterations: out.iterations,
                converged: out.converged,
            },
            Err(_) => GridOutcome {
                trial: t,
                method: grid.method,
                grid_index: p,
                lambda: f64::NAN,
                nmse: None,
                iterations: 0,
                converged: false,
            },
        }
    });

    let mut results = Vec::with_capacity(spec.trials * grids.len());
    let mut cursor = 0;
    for t in 0..spec.trials {
        for grid in grids {
            let chunk = &outcomes[cursor..cursor + grid.points.len()];
            cursor += grid.points.len();
            let failed_points = chunk.iter().filter(|o| o.nmse.is_none()).count();
            let best = chunk
                .iter()
                .filter(|o| o.nmse.is_some())
                .min_by(|a, b| a.nmse.partial_cmp(&b.nmse).unwrap().then(a.grid_index.cmp(&b.grid_index)));
            let result = match best {
                Some(o) => {
                    let pt = grid.points[o.grid_index];
                    let is_l1 = matches!(grid.method, Method::FklL1 | Method::RklL1);
                    TrialResult {
                        trial: t,
                        method: grid.method,
                        rho: spec.rho,
                        m: spec.m,
                        n: spec.n,
                        grid_index: o.grid_index,
                        lambda: o.lambda,
                        omega: pt.ext_div.map(|p| p.0),
                        eta1: pt.ext_div.map(|p| p.1),
                        a: match grid.method {
                            Method::ProposedA0 => Some(0.0),
                            _ => pt.ext_div.map(|p| p.2),
                        },
                        eta: is_l1.then_some(pt.l1_weight),
                        nmse: o.nmse.unwrap(),
                        iterations: o.iterations,
                        converged: o.converged,
                        failed_points,
                    }
                }
                None => TrialResult {
                    trial: t,
                    method: grid.method,
                    rho: spec.rho,
                    m: spec.m,
                    n: spec.n,
                    grid_index: 0,
                    lambda: f64::NAN,
                    omega: None,
                    eta1: None,
                    a: None,
                    eta: None,
                    nmse: f64::INFINITY,
                    iterations: 0,
                    converged: false,
                    failed_points,
                },
            };
            results.push(result);
        }
    }
    let resampled_columns = problems.iter().map(|p| p.resampled_columns).sum();
    Ok(BenchReport { results, outcomes, resampled_columns })
}

pub fn run_benchmark(spec: &SyntheticSpec, grids: &[MethodGrid]) -> Result<Vec<TrialResult>> {
    run_benchmark_detailed(spec, grids).map(|r| r.results)
}

/// Mean and standard error of the mean.
pub fn mean_sem(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Serialize)]
struct BenchRow<'a> {
    trial: usize,
    method: &'a str,
    rho: f64,
    m: usize,
    n: usize,
    lambda: f64,
    omega: Option<f64>,
    eta1: Option<f64>,
    a: Option<f64>,
    eta: Option<f64>,
    nmse: f64,
    iters: usize,
    converged: bool,
}

/// Writes `bench.csv` rows (header included).
pub fn write_bench_csv<W: Write>(out: W, results: &[TrialResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in results {
        w.serialize(BenchRow {
            trial: r.trial,
            method: r.method.tag(),
            rho: r.rho,
            m: r.m,
            n: r.n,
            lambda: r.lambda,
            omega: r.omega,
            eta1: r.eta1,
            a: r.a,
            eta: r.eta,
            nmse: r.nmse,
            iters: r.iterations,
            converged: r.converged,
        })
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TraceRow {
    iter: usize,
    delta_norm: f64,
    fidelity: f64,
    nmse: Option<f64>,
}

/// Writes `trace.csv` rows (header included).
pub fn write_trace_csv<W: Write>(out: W, trace: &[crate::solver::IterateTrace]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for t in trace {
        w.serialize(TraceRow {
            iter: t.iteration,
            delta_norm: t.delta_norm,
            fidelity: t.fidelity,
            nmse: t.nmse,
        })
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}
