//! NoLips iteration with a pluggable backward step.
//!
//! Each iteration is
//!
//! ```text
//! z      = ∇h*(∇h(x_k) − λ∇f(x_k))      (mirror step)
//! x_k+1  = B(z)                        (backward step)
//! ```
//!
//! where the entropy `h`, the fidelity `f` and the backward step `B` are fixed
//! by the [`Method`]:
//!
//! | method        | h     | f          | B                                 |
//! |---------------|-------|------------|-----------------------------------|
//! | `FklL1`       | Burg  | forward KL | Burg prox of λη‖·‖₁               |
//! | `RklL1`       | BS    | reverse KL | BS prox of λη‖·‖₁ (z e^{−λη})     |
//! | `Proposed`    | BS    | reverse KL | external-division operator T      |
//! | `ProposedA0`  | BS    | reverse KL | T with a = 0, i.e. the identity   |
//!
//! A run stops at the first `k` with `‖x_k+1 − x_k‖₂ ≤ tol`, or after
//! `max_iter` iterations.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::entropy::LegendreKind;
use crate::error::{check_len, Error, Result};
use crate::linop::LinearOperator;
use crate::losses::{FidelityKind, PoissonModel};
use crate::metrics::{nmse_unchecked, sq_dist};
use crate::shrink::{bregman_prox_l1_burg_scalar, ext_div_scalar, ExtDivParams};

/// Maximum number of λ halvings after a Burg dual-domain violation.
pub const MAX_HALVINGS: usize = 30;

/// Default stopping threshold on `‖x_k+1 − x_k‖₂`.
pub const DEFAULT_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "fkl")]
    FklL1,
    #[serde(rename = "rkl")]
    RklL1,
    #[serde(rename = "proposed")]
    Proposed,
    #[serde(rename = "proposed_a0")]
    ProposedA0,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::FklL1,
        Method::RklL1,
        Method::Proposed,
        Method::ProposedA0,
    ];

    pub fn entropy(self) -> LegendreKind {
        self.fidelity().paired_entropy()
    }

    pub fn fidelity(self) -> FidelityKind {
        match self {
            Method::FklL1 => FidelityKind::ForwardKL,
            _ => FidelityKind::ReverseKL,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Method::FklL1 => "fkl",
            Method::RklL1 => "rkl",
            Method::Proposed => "proposed",
            Method::ProposedA0 => "proposed_a0",
        }
    }

    /// Iteration budget: 5×10⁶ for forward KL, 10⁴ otherwise.
    pub fn default_max_iter(self) -> usize {
        match self {
            Method::FklL1 => 5_000_000,
            _ => 10_000,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fkl" | "fkl_l1" | "f-kl" => Ok(Method::FklL1),
            "rkl" | "rkl_l1" | "r-kl" => Ok(Method::RklL1),
            "proposed" => Ok(Method::Proposed),
            "proposed_a0" | "proposed-a0" | "a0" => Ok(Method::ProposedA0),
            other => Err(Error::Param(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: Method,
    /// Step size λ.
    pub lambda: f64,
    pub max_iter: usize,
    pub tol: f64,
    /// ℓ1 weight η for the ℓ1 methods.
    pub l1_weight: f64,
    /// Operator parameters; required by `Proposed`, ignored otherwise.
    pub ext_div: Option<ExtDivParams>,
    /// Starting point; `None` means `1_n`.
    pub x0: Option<Vec<f64>>,
    /// Record every `trace_every`-th iteration (plus the last one).
    pub trace_every: usize,
    /// Permit λ above the fidelity's step bound.
    pub allow_large_step: bool,
}

impl SolverConfig {
    pub fn new(method: Method, lambda: f64) -> Self {
        Self {
            method,
            lambda,
            max_iter: method.default_max_iter(),
            tol: DEFAULT_TOL,
            l1_weight: 0.0,
            ext_div: None,
            x0: None,
            trace_every: 1,
            allow_large_step: false,
        }
    }

    pub fn with_l1_weight(mut self, eta: f64) -> Self {
        self.l1_weight = eta;
        self
    }

    pub fn with_ext_div(mut self, p: ExtDivParams) -> Self {
        self.ext_div = Some(p);
        self
    }

    pub fn with_max_iter(mut self, n: usize) -> Self {
        self.max_iter = n;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_trace_every(mut self, n: usize) -> Self {
        self.trace_every = n;
        self
    }

    pub fn with_x0(mut self, x0: Vec<f64>) -> Self {
        self.x0 = Some(x0);
        self
    }

    pub fn allowing_large_step(mut self) -> Self {
        self.allow_large_step = true;
        self
    }

    pub fn validate<A: LinearOperator>(&self, model: &PoissonModel<A>) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Param(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if self.max_iter == 0 {
            return Err(Error::Param("max_iter must be positive".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Param(format!("tol must be > 0, got {}", self.tol)));
        }
        if !(self.l1_weight >= 0.0 && self.l1_weight.is_finite()) {
            return Err(Error::Param(format!("l1 weight must be >= 0, got {}", self.l1_weight)));
        }
        if self.trace_every == 0 {
            return Err(Error::Param("trace_every must be positive".into()));
        }
        if self.method == Method::Proposed {
            let p = self
                .ext_div
                .ok_or_else(|| Error::Param("the proposed method needs operator parameters".into()))?;
            if !p.preserves_nonnegativity() {
                return Err(Error::Param(format!(
                    "operator slope on [0, a/kappa) is {} < 0 (needs eta1 <= log(2 - 1/omega) = {}); \
                     iterates would leave the nonnegative orthant",
                    p.first_slope(),
                    ExtDivParams::max_nonnegative_eta1(p.omega())
                )));
            }
        }
        if let Some(x0) = &self.x0 {
            check_len(model.cols(), x0.len())?;
            self.method.entropy().check_interior("x0", x0)?;
        }
        if !self.allow_large_step {
            let bound = model.step_bound(self.method.fidelity())?;
            if self.lambda > bound * (1.0 + 1e-12) {
                return Err(Error::Param(format!(
                    "lambda = {} exceeds the step bound {bound}",
                    self.lambda
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateTrace {
    /// Iteration index k.
    pub iteration: usize,
    /// `‖x_k+1 − x_k‖₂`.
    pub delta_norm: f64,
    /// `f(x_k)`.
    pub fidelity: f64,
    /// NMSE of `x_k` when a ground truth was supplied.
    pub nmse: Option<f64>,
    #[serde(skip)]
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestIterate {
    pub iteration: usize,
    pub nmse: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SolveOutput {
    /// Final iterate.
    pub x: Vec<f64>,
    pub trace: Vec<IterateTrace>,
    /// Number of iterations performed.
    pub iterations: usize,
    /// Whether the stopping rule fired before the budget ran out.
    pub converged: bool,
    /// Step size in force at the end (after any halvings).
    pub lambda: f64,
    pub halvings: usize,
    /// NMSE of the final iterate, when a ground truth was supplied.
    pub nmse: Option<f64>,
    /// Lowest-NMSE iterate seen, when a ground truth was supplied.
    pub best: Option<BestIterate>,
}

/// One mirror step `∇h*(∇h(x) − λ g)`.
pub fn mirror_step(x: &[f64], lambda: f64, kind: LegendreKind, grad_f: &[f64]) -> Result<Vec<f64>> {
    check_len(x.len(), grad_f.len())?;
    kind.check_interior("x", x)?;
    let mut out = vec![0.0; x.len()];
    mirror_step_into(x, lambda, kind, grad_f, &mut out)?;
    Ok(out)
}

/// Boltzmann–Shannon steps are computed as `x e^{−λg}`, which also keeps
/// exact zeros at zero.
fn mirror_step_into(
    x: &[f64],
    lambda: f64,
    kind: LegendreKind,
    g: &[f64],
    out: &mut [f64],
) -> Result<()> {
    match kind {
        LegendreKind::BoltzmannShannon => {
            for ((o, &xi), &gi) in out.iter_mut().zip(x).zip(g) {
                *o = xi * (-lambda * gi).exp();
            }
        }
        LegendreKind::Burg => {
            for (i, ((o, &xi), &gi)) in out.iter_mut().zip(x).zip(g).enumerate() {
                // ∇h(x) − λg = −(1 + λxg)/x must stay negative
                let d = 1.0 + lambda * xi * gi;
                if !(d > 0.0) {
                    return Err(Error::Step(format!(
                        "dual point of coordinate {i} left int dom h* (lambda = {lambda})"
                    )));
                }
                *o = xi / d;
            }
        }
        LegendreKind::HalvedSquaredEuclidean => {
            for ((o, &xi), &gi) in out.iter_mut().zip(x).zip(g) {
                *o = xi - lambda * gi;
            }
        }
    }
    Ok(())
}

fn backward_in_place(config: &SolverConfig, lambda: f64, z: &mut [f64]) {
    match config.method {
        Method::FklL1 => {
            let s = lambda * config.l1_weight;
            z.iter_mut().for_each(|t| *t = bregman_prox_l1_burg_scalar(*t, s));
        }
        Method::RklL1 => {
            let s = (-lambda * config.l1_weight).exp();
            z.iter_mut().for_each(|t| *t *= s);
        }
        Method::Proposed => {
            let p = config.ext_div.expect("validated");
            z.iter_mut().for_each(|t| *t = ext_div_scalar(*t, &p));
        }
        Method::ProposedA0 => {}
    }
}

/// Backward step of `config.method` at step size `config.lambda`.
pub fn backward_step(point: &[f64], config: &SolverConfig) -> Result<Vec<f64>> {
    config.method.entropy().check_interior("point", point)?;
    if config.method == Method::Proposed && config.ext_div.is_none() {
        return Err(Error::Param("the proposed method needs operator parameters".into()));
    }
    let mut z = point.to_vec();
    backward_in_place(config, config.lambda, &mut z);
    Ok(z)
}

/// Runs the configured method on `model` from `config.x0` (or `1_n`).
pub fn solve<A: LinearOperator>(
    config: &SolverConfig,
    model: &PoissonModel<A>,
    ground_truth: Option<&[f64]>,
) -> Result<SolveOutput> {
    config.validate(model)?;
    let (m, n) = (model.rows(), model.cols());
    let truth_norm = match ground_truth {
        Some(t) => {
            check_len(n, t.len())?;
            let norm = t.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm > 0.0) {
                return Err(Error::Param("ground truth is identically zero".into()));
            }
            Some((t, norm))
        }
        None => None,
    };
    let kind = config.method.entropy();
    let fid = config.method.fidelity();
    let start = Instant::now();

    let mut x = config.x0.clone().unwrap_or_else(|| vec![1.0; n]);
    let mut next = vec![0.0; n];
    let mut y = vec![0.0; m];
    let mut grad = vec![0.0; n];
    let mut lambda = config.lambda;
    let mut halvings = 0;
    let mut trace = Vec::new();
    let mut best: Option<BestIterate> = None;
    let mut converged = false;
    let mut iterations = 0;

    for k in 0..config.max_iter {
        model.forward_into(&x, &mut y);
        let record = k % config.trace_every == 0 || k + 1 == config.max_iter;
        let fidelity = record.then(|| model.value_at(fid, &y));
        model.residual_in_place(fid, &mut y);
        model.op().adjoint_into(&y, &mut grad);

        loop {
            match mirror_step_into(&x, lambda, kind, &grad, &mut next) {
                Ok(()) => break,
                Err(Error::Step(msg)) => {
                    if halvings == MAX_HALVINGS {
                        return Err(Error::Step(format!(
                            "{msg}; giving up after {MAX_HALVINGS} halvings"
                        )));
                    }
                    lambda *= 0.5;
                    halvings += 1;
                }
                Err(e) => return Err(e),
            }
        }
        backward_in_place(config, lambda, &mut next);
        // Coordinates decaying geometrically would otherwise crawl through
        // subnormals, which are two orders of magnitude slower to multiply.
        next.iter_mut()
            .filter(|t| t.abs() < f64::MIN_POSITIVE)
            .for_each(|t| *t = 0.0);
        if let Some(i) = next.iter().position(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::Domain(format!(
                "iterate {} has invalid coordinate {i} = {}",
                k + 1,
                next[i]
            )));
        }

        let delta = sq_dist(&next, &x).sqrt();
        let current_nmse = truth_norm.map(|(t, norm)| nmse_unchecked(&x, t, norm));
        if let (Some(e), Some(_)) = (current_nmse, truth_norm) {
            if best.as_ref().is_none_or(|b| e < b.nmse) {
                best = Some(BestIterate { iteration: k, nmse: e, x: x.clone() });
            }
        }
        converged = delta <= config.tol;
        iterations = k + 1;
        if record || converged {
            let fidelity = fidelity.unwrap_or_else(|| {
                model.forward_into(&x, &mut y);
                model.value_at(fid, &y)
            });
            trace.push(IterateTrace {
                iteration: k,
                delta_norm: delta,
                fidelity,
                nmse: current_nmse,
                elapsed: start.elapsed(),
            });
        }
        std::mem::swap(&mut x, &mut next);
        if converged {
            break;
        }
    }

    let final_nmse = truth_norm.map(|(t, norm)| nmse_unchecked(&x, t, norm));
    if let Some(e) = final_nmse {
        if best.as_ref().is_none_or(|b| e < b.nmse) {
            best = Some(BestIterate { iteration: iterations, nmse: e, x: x.clone() });
        }
    }
    Ok(SolveOutput {
        x,
        trace,
        iterations,
        converged,
        lambda,
        halvings,
        nmse: final_nmse,
        best,
    })
}
