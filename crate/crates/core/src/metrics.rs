//! Reconstruction quality metrics.

use crate::error::{check_len, Error, Result};

/// `‖estimate − truth‖₂ / ‖truth‖₂`.
pub fn nmse(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    check_len(truth.len(), estimate.len())?;
    let norm = truth.iter().map(|t| t * t).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(Error::Param("NMSE is undefined for a zero ground truth".into()));
    }
    Ok(nmse_unchecked(estimate, truth, norm))
}

#[inline]
pub(crate) fn nmse_unchecked(estimate: &[f64], truth: &[f64], truth_norm: f64) -> f64 {
    sq_dist(estimate, truth).sqrt() / truth_norm
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// Peak signal-to-noise ratio in decibels, `10 log₁₀(L² n / ‖x̂ − x‖²)`.
///
/// Returns `f64::INFINITY` when the estimate equals the truth.
pub fn psnr(estimate: &[f64], truth: &[f64], peak: f64) -> Result<f64> {
    check_len(truth.len(), estimate.len())?;
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(Error::Param(format!("peak must be > 0, got {peak}")));
    }
    if truth.is_empty() {
        return Err(Error::Param("PSNR of an empty signal".into()));
    }
    let err = sq_dist(estimate, truth);
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak * truth.len() as f64 / err).log10())
}
