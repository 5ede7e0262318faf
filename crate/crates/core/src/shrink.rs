//! Backward-step operators.
//!
//! Scalar shrinkage (`soft`, `firm`, `shifted_soft`), the Bregman proximity
//! operators of (shifted) ℓ1 under the Boltzmann–Shannon and Burg entropies,
//! and the external division of two Boltzmann–Shannon proximity operators
//!
//! ```text
//! T = ω·Prox^h_{η₁‖· − a1‖₁} − (ω − 1)·Prox^h_{η₂‖· − a1‖₁},   η₂ = log κ,
//! κ = (ω − 1)/(ω e^{−η₁} − 1)
//! ```
//!
//! in three forms: the five-branch closed form (production path), the
//! mirror-map composition, and the dual-space correction `S`. All operators are
//! coordinate-separable.

use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::entropy::LegendreKind;
use crate::error::{check_finite, Error, Result};

const BS: LegendreKind = LegendreKind::BoltzmannShannon;

/// `sgn(x) max(|x| − γ, 0)`.
#[inline]
pub fn soft(x: f64, gamma: f64) -> f64 {
    debug_assert!(gamma >= 0.0);
    let m = x.abs() - gamma;
    if m > 0.0 {
        m.copysign(x)
    } else {
        0.0
    }
}

fn check_firm(tau: f64, gamma: f64) -> Result<()> {
    if !(tau > 0.0 && gamma > tau && gamma.is_finite()) {
        return Err(Error::Param(format!(
            "firm shrinkage needs gamma > tau > 0, got tau = {tau}, gamma = {gamma}"
        )));
    }
    Ok(())
}

// Firm shrinkage and its external-division form are evaluated in exact
// rational arithmetic and rounded once. Each result is then the correctly
// rounded value of its formula, so the two agree bit for bit wherever the
// formulas agree over the reals. Neither is on a hot path.

fn exact(v: f64) -> BigRational {
    BigRational::from_float(v).expect("finite input")
}

fn soft_exact(x: &BigRational, gamma: &BigRational) -> BigRational {
    let m = x.abs() - gamma;
    if !m.is_positive() {
        BigRational::zero()
    } else if x.is_negative() {
        -m
    } else {
        m
    }
}

fn round(v: &BigRational) -> f64 {
    v.to_f64().expect("rational rounds to f64")
}

/// Firm shrinkage: identity for |x| ≥ γ, zero for |x| < τ, and
/// `sgn(x) γ(|x| − τ)/(γ − τ)` in between, correctly rounded.
/// Non-finite inputs are returned unchanged.
pub fn firm(x: f64, tau: f64, gamma: f64) -> Result<f64> {
    check_firm(tau, gamma)?;
    let ax = x.abs();
    if !x.is_finite() || ax >= gamma {
        return Ok(x);
    }
    // |x| = τ also lands here so the zero is never signed.
    if ax <= tau {
        return Ok(0.0);
    }
    let (t, g) = (exact(tau), exact(gamma));
    let m = &g * (exact(ax) - &t) / (&g - &t);
    Ok(round(&m).copysign(x))
}

/// Firm shrinkage written as the external division of two soft-shrinkage
/// operators, `γ/(γ−τ)·soft_τ − τ/(γ−τ)·soft_γ`, correctly rounded.
/// Non-finite inputs are returned unchanged.
pub fn external_division_euclidean(x: f64, tau: f64, gamma: f64) -> Result<f64> {
    check_firm(tau, gamma)?;
    if !x.is_finite() {
        return Ok(x);
    }
    let (x, t, g) = (exact(x), exact(tau), exact(gamma));
    let d = &g - &t;
    let w = &g / &d;
    let v = &t / &d;
    Ok(round(&(w * soft_exact(&x, &t) - v * soft_exact(&x, &g))))
}

/// Proximity operator of `eta·|· − center|`.
#[inline]
pub fn shifted_soft(u: f64, eta: f64, center: f64) -> f64 {
    center + soft(u - center, eta)
}

fn check_positive_input(x: &[f64]) -> Result<()> {
    BS.check_interior("x", x)
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::Param(format!("eta must be finite and >= 0, got {eta}")));
    }
    Ok(())
}

/// Boltzmann–Shannon proximity operator of `eta‖· − a1‖₁` on one coordinate.
#[inline]
pub fn bregman_prox_shifted_l1_bs_scalar(x: f64, eta: f64, a: f64) -> f64 {
    if x > a * eta.exp() {
        x * (-eta).exp()
    } else if x < a * (-eta).exp() {
        x * eta.exp()
    } else {
        a
    }
}

/// Boltzmann–Shannon proximity operator of `eta‖· − a1‖₁`.
///
/// Multiplies by `e^{−η}` above `a e^{η}`, by `e^{η}` below `a e^{−η}`, and
/// snaps to `a` in between.
pub fn bregman_prox_shifted_l1_bs(x: &[f64], eta: f64, a: f64) -> Result<Vec<f64>> {
    check_positive_input(x)?;
    check_eta(eta)?;
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::Param(format!("sparsity center must be > 0, got {a}")));
    }
    Ok(x.iter()
        .map(|&t| bregman_prox_shifted_l1_bs_scalar(t, eta, a))
        .collect())
}

/// Boltzmann–Shannon proximity operator of `eta‖·‖₁`: a multiplicative shrink.
pub fn bregman_prox_l1_bs(x: &[f64], eta: f64) -> Result<Vec<f64>> {
    check_positive_input(x)?;
    check_eta(eta)?;
    let s = (-eta).exp();
    Ok(x.iter().map(|&t| t * s).collect())
}

/// Burg proximity operator of `eta‖·‖₁` on one coordinate.
#[inline]
pub fn bregman_prox_l1_burg_scalar(x: f64, eta: f64) -> f64 {
    x / (1.0 + eta * x)
}

/// Burg proximity operator of `eta‖·‖₁`, `xᵢ/(1 + η xᵢ)`.
pub fn bregman_prox_l1_burg(x: &[f64], eta: f64) -> Result<Vec<f64>> {
    check_positive_input(x)?;
    check_eta(eta)?;
    Ok(x.iter()
        .map(|&t| bregman_prox_l1_burg_scalar(t, eta))
        .collect())
}

/// Validated parameters of the external-division operator.
///
/// Construct with [`ExtDivParams::new`]; derived fields are always consistent
/// with `(omega, eta1, a)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtDivParams {
    omega: f64,
    eta1: f64,
    a: f64,
    kappa: f64,
    eta2: f64,
    exp_eta1: f64,
}

impl ExtDivParams {
    /// Checks `omega > 1`, `0 < eta1 < log omega`, `a >= 0` and derives κ, η₂.
    pub fn new(omega: f64, eta1: f64, a: f64) -> Result<Self> {
        if !(omega > 1.0 && omega.is_finite()) {
            return Err(Error::Param(format!("omega must exceed 1, got {omega}")));
        }
        if !(eta1 > 0.0) {
            return Err(Error::Param(format!("eta1 must be > 0, got {eta1}")));
        }
        if !(eta1 < omega.ln()) {
            return Err(Error::Param(format!(
                "eta1 must be < log(omega) = {}, got {eta1}",
                omega.ln()
            )));
        }
        if !(a >= 0.0 && a.is_finite()) {
            return Err(Error::Param(format!("a must be finite and >= 0, got {a}")));
        }
        let denom = omega * (-eta1).exp() - 1.0;
        if !(denom > 0.0) {
            return Err(Error::Param(format!(
                "omega e^(-eta1) - 1 = {denom} is not positive"
            )));
        }
        let kappa = (omega - 1.0) / denom;
        let exp_eta1 = eta1.exp();
        if !(kappa.is_finite() && kappa >= exp_eta1) {
            return Err(Error::Param(format!(
                "kappa = {kappa} must be finite and >= e^eta1 = {exp_eta1}"
            )));
        }
        Ok(Self {
            omega,
            eta1,
            a,
            kappa,
            eta2: kappa.ln(),
            exp_eta1,
        })
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn eta1(&self) -> f64 {
        self.eta1
    }

    pub fn eta2(&self) -> f64 {
        self.eta2
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// `log a + 1`, the image of `a` under the mirror map; `None` when `a = 0`.
    pub fn a_tilde(&self) -> Option<f64> {
        (self.a > 0.0).then(|| self.a.ln() + 1.0)
    }

    /// The same `(omega, eta1)` with a different sparsity center.
    pub fn with_a(&self, a: f64) -> Result<Self> {
        Self::new(self.omega, self.eta1, a)
    }

    /// Breakpoints `[a/κ, a e^{−η₁}, a e^{η₁}, aκ]` in increasing order.
    pub fn breakpoints(&self) -> [f64; 4] {
        let a = self.a;
        [a / self.kappa, a / self.exp_eta1, a * self.exp_eta1, a * self.kappa]
    }

    /// Slopes of the five branches, left to right.
    pub fn slopes(&self) -> [f64; 5] {
        let w = self.omega;
        [
            w * self.exp_eta1 - (w - 1.0) * self.kappa,
            w * self.exp_eta1,
            0.0,
            w / self.exp_eta1,
            1.0,
        ]
    }

    /// Slope of the branch on `[0, a/κ)`. It is negative when
    /// `e^{η₁} > 2 − 1/ω`, in which case `T` maps small positive inputs to
    /// negative outputs.
    pub fn first_slope(&self) -> f64 {
        self.slopes()[0]
    }

    /// Whether `T` maps the nonnegative orthant into itself.
    pub fn preserves_nonnegativity(&self) -> bool {
        self.first_slope() >= 0.0
    }

    /// Largest η₁ for which the first slope is nonnegative, `log(2 − 1/ω)`.
    pub fn max_nonnegative_eta1(omega: f64) -> f64 {
        (2.0 - 1.0 / omega).ln()
    }
}

/// Alias kept for callers that think of this as a free function.
pub fn validate_ext_div_params(omega: f64, eta1: f64, a: f64) -> Result<ExtDivParams> {
    ExtDivParams::new(omega, eta1, a)
}

/// Five-branch closed form of `T` on one coordinate. Boundaries follow the
/// printed half-open intervals; `a = 0` is the identity.
#[inline]
pub fn ext_div_scalar(x: f64, p: &ExtDivParams) -> f64 {
    let a = p.a;
    if a == 0.0 {
        return x;
    }
    let w = p.omega;
    let [b1, b2, b3, b4] = p.breakpoints();
    if x < b1 {
        (w * p.exp_eta1 - (w - 1.0) * p.kappa) * x
    } else if x < b2 {
        w * p.exp_eta1 * x - (w - 1.0) * a
    } else if x <= b3 {
        a
    } else if x <= b4 {
        w / p.exp_eta1 * x - (w - 1.0) * a
    } else {
        x
    }
}

/// Closed form of the external-division operator applied coordinate-wise.
pub fn ext_div_closed_form(x: &[f64], p: &ExtDivParams) -> Result<Vec<f64>> {
    BS.check_domain("x", x)?;
    Ok(x.iter().map(|&t| ext_div_scalar(t, p)).collect())
}

fn require_center(p: &ExtDivParams) -> Result<f64> {
    p.a_tilde()
        .ok_or_else(|| Error::Param("this form needs a > 0 (log a is undefined)".into()))
}

/// `∇h* ∘ Prox_{η|· − ã|} ∘ ∇h` on one coordinate.
fn mirrored_shifted_soft(x: f64, eta: f64, a_tilde: f64) -> f64 {
    BS.grad_conj_scalar(shifted_soft(BS.grad_scalar(x), eta, a_tilde))
}

/// `T` as the primal-space affine combination of two dual-space shifted soft
/// shrinkages, each wrapped by the mirror maps.
pub fn ext_div_composed(x: &[f64], p: &ExtDivParams) -> Result<Vec<f64>> {
    check_positive_input(x)?;
    let at = require_center(p)?;
    let w = p.omega;
    Ok(x.iter()
        .map(|&t| {
            w * mirrored_shifted_soft(t, p.eta1, at) - (w - 1.0) * mirrored_shifted_soft(t, p.eta2, at)
        })
        .collect())
}

/// Dual-space correction `S(u) = S₁(u) + log[ω(1 − exp(S₂(u) − S₁(u)))]`.
///
/// Defined for `u ≥ ∇h(a e^{−η₁}) = ã − η₁`; inputs below that point, or
/// where the log argument is not positive, are rejected.
pub fn dual_correction(u: f64, p: &ExtDivParams) -> Result<f64> {
    let at = require_center(p)?;
    if !u.is_finite() {
        return Err(Error::Domain(format!("u = {u} is not finite")));
    }
    let floor = at - p.eta1;
    if u < floor - 1e-12 * floor.abs().max(1.0) {
        return Err(Error::Domain(format!(
            "u = {u} is below the validity threshold log(a e^-eta1) + 1 = {floor}"
        )));
    }
    let w = p.omega;
    let s1 = shifted_soft(u, p.eta1, at);
    let s2 = shifted_soft(u, p.eta2, at) + ((w - 1.0) / w).ln();
    let arg = w * (1.0 - (s2 - s1).exp());
    if !(arg > 0.0) {
        return Err(Error::Domain(format!(
            "log argument {arg} is not positive at u = {u}"
        )));
    }
    Ok(s1 + arg.ln())
}

/// `∇h* ∘ S ∘ ∇h` applied coordinate-wise.
pub fn ext_div_dual(x: &[f64], p: &ExtDivParams) -> Result<Vec<f64>> {
    check_positive_input(x)?;
    x.iter()
        .map(|&t| dual_correction(BS.grad_scalar(t), p).map(|s| BS.grad_conj_scalar(s)))
        .collect()
}

/// Vector soft shrinkage; rejects non-finite input.
pub fn soft_vec(x: &[f64], gamma: f64) -> Result<Vec<f64>> {
    check_finite("x", x)?;
    if !(gamma > 0.0) {
        return Err(Error::Param(format!("gamma must be > 0, got {gamma}")));
    }
    Ok(x.iter().map(|&t| soft(t, gamma)).collect())
}
