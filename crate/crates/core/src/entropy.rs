//! Legendre entropies, their mirror maps and Bregman divergences.
//!
//! | kind                     | h(x)              | ∇h(x)       | ∇h*(u)       |
//! |--------------------------|-------------------|-------------|--------------|
//! | `BoltzmannShannon`       | Σ xᵢ log xᵢ       | log xᵢ + 1  | exp(uᵢ − 1)  |
//! | `Burg`                   | −Σ log xᵢ         | −1/xᵢ       | −1/uᵢ        |
//! | `HalvedSquaredEuclidean` | ½‖x‖²             | x           | u            |
//!
//! `BoltzmannShannon` uses the convention 0 log 0 = 0, so its divergence accepts
//! zeros in the first argument.

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LegendreKind {
    BoltzmannShannon,
    Burg,
    HalvedSquaredEuclidean,
}

/// t log t with 0 log 0 = 0.
#[inline]
pub fn xlogx(t: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else {
        t * t.ln()
    }
}

impl LegendreKind {
    /// Whether `x` lies in the interior of dom h.
    #[inline]
    pub fn in_interior(self, x: f64) -> bool {
        match self {
            LegendreKind::BoltzmannShannon | LegendreKind::Burg => x > 0.0 && x.is_finite(),
            LegendreKind::HalvedSquaredEuclidean => x.is_finite(),
        }
    }

    /// Whether `x` lies in dom h (closure included where h is finite there).
    #[inline]
    pub fn in_domain(self, x: f64) -> bool {
        match self {
            LegendreKind::BoltzmannShannon => x >= 0.0 && x.is_finite(),
            _ => self.in_interior(x),
        }
    }

    /// Whether `u` lies in the interior of dom h*.
    #[inline]
    pub fn in_dual_interior(self, u: f64) -> bool {
        match self {
            LegendreKind::Burg => u < 0.0 && u.is_finite(),
            _ => u.is_finite(),
        }
    }

    /// h evaluated on a single coordinate.
    pub fn value_scalar(self, x: f64) -> f64 {
        match self {
            LegendreKind::BoltzmannShannon => xlogx(x),
            LegendreKind::Burg => -x.ln(),
            LegendreKind::HalvedSquaredEuclidean => 0.5 * x * x,
        }
    }

    /// Mirror map on one coordinate, no domain check.
    #[inline]
    pub fn grad_scalar(self, x: f64) -> f64 {
        match self {
            LegendreKind::BoltzmannShannon => x.ln() + 1.0,
            LegendreKind::Burg => -1.0 / x,
            LegendreKind::HalvedSquaredEuclidean => x,
        }
    }

    /// Inverse mirror map on one coordinate, no domain check.
    #[inline]
    pub fn grad_conj_scalar(self, u: f64) -> f64 {
        match self {
            LegendreKind::BoltzmannShannon => (u - 1.0).exp(),
            LegendreKind::Burg => -1.0 / u,
            LegendreKind::HalvedSquaredEuclidean => u,
        }
    }

    /// D_h(ξ, x) on one coordinate, no domain check. Rounding residue below
    /// zero is flushed to zero.
    #[inline]
    pub fn bregman_scalar(self, xi: f64, x: f64) -> f64 {
        if xi == x {
            return 0.0;
        }
        let d = match self {
            LegendreKind::BoltzmannShannon => {
                if xi == 0.0 {
                    x
                } else {
                    xi * (xi / x).ln() - xi + x
                }
            }
            LegendreKind::Burg => {
                let r = xi / x;
                r - r.ln() - 1.0
            }
            LegendreKind::HalvedSquaredEuclidean => 0.5 * (xi - x) * (xi - x),
        };
        d.max(0.0)
    }

    pub fn value(self, x: &[f64]) -> Result<f64> {
        self.check_domain("x", x)?;
        Ok(x.iter().map(|&t| self.value_scalar(t)).sum())
    }

    pub fn grad(self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_interior("x", x)?;
        Ok(x.iter().map(|&t| self.grad_scalar(t)).collect())
    }

    pub fn grad_conj(self, u: &[f64]) -> Result<Vec<f64>> {
        check_finite("u", u)?;
        if let Some(i) = u.iter().position(|&t| !self.in_dual_interior(t)) {
            return Err(Error::Domain(format!(
                "u[{i}] = {} is outside int dom h* for {self:?}",
                u[i]
            )));
        }
        Ok(u.iter().map(|&t| self.grad_conj_scalar(t)).collect())
    }

    pub fn bregman_div(self, xi: &[f64], x: &[f64]) -> Result<f64> {
        check_len(x.len(), xi.len())?;
        self.check_domain("xi", xi)?;
        self.check_interior("x", x)?;
        Ok(xi
            .iter()
            .zip(x)
            .map(|(&s, &t)| self.bregman_scalar(s, t))
            .sum())
    }

    pub(crate) fn check_interior(self, name: &str, x: &[f64]) -> Result<()> {
        check_nonempty(name, x)?;
        check_finite(name, x)?;
        match x.iter().position(|&t| !self.in_interior(t)) {
            Some(i) => Err(Error::Domain(format!(
                "{name}[{i}] = {} is outside int dom h for {self:?}",
                x[i]
            ))),
            None => Ok(()),
        }
    }

    pub(crate) fn check_domain(self, name: &str, x: &[f64]) -> Result<()> {
        check_nonempty(name, x)?;
        check_finite(name, x)?;
        match x.iter().position(|&t| !self.in_domain(t)) {
            Some(i) => Err(Error::Domain(format!(
                "{name}[{i}] = {} is outside dom h for {self:?}",
                x[i]
            ))),
            None => Ok(()),
        }
    }
}

fn check_nonempty(name: &str, x: &[f64]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::Domain(format!("{name} is empty")));
    }
    Ok(())
}
