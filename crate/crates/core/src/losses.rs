//! Poisson data-fidelity terms.
//!
//! With `y = Ax + ε` and φ the Boltzmann–Shannon entropy:
//!
//! * `ForwardKL`: `f(x) = D_φ(b, y)`, gradient `Aᵀ(1 − b ⊘ y)`
//! * `ReverseKL`: `f(x) = D_φ(y, b)`, gradient `Aᵀ log(y ⊘ b)`
//!
//! Every argument of a logarithm is offset by [`LOG_FLOOR`]. The offset is
//! applied to `y` and `b` alike, so both terms stay exact Bregman divergences
//! and vanish at `y = b`.

use serde::{Deserialize, Serialize};

use crate::entropy::LegendreKind;
use crate::error::{check_finite, check_len, Error, Result};
use crate::linop::LinearOperator;

pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FidelityKind {
    ForwardKL,
    ReverseKL,
}

impl FidelityKind {
    /// Entropy under which `L h − f` is convex for this fidelity.
    pub fn paired_entropy(self) -> LegendreKind {
        match self {
            FidelityKind::ForwardKL => LegendreKind::Burg,
            FidelityKind::ReverseKL => LegendreKind::BoltzmannShannon,
        }
    }
}

/// Sensing operator, observed counts and background.
#[derive(Debug, Clone)]
pub struct PoissonModel<A> {
    op: A,
    b: Vec<f64>,
    background: Vec<f64>,
    background_in_fidelity: bool,
    log_b: Vec<f64>,
}

impl<A: LinearOperator> PoissonModel<A> {
    pub fn new(op: A, b: Vec<f64>, background: Vec<f64>) -> Result<Self> {
        let m = op.rows();
        check_len(m, b.len())?;
        check_len(m, background.len())?;
        check_finite("b", &b)?;
        check_finite("background", &background)?;
        if let Some(i) = b.iter().position(|&t| t < 0.0) {
            return Err(Error::Domain(format!("b[{i}] = {} is negative", b[i])));
        }
        if let Some(i) = background.iter().position(|&t| t < 0.0) {
            return Err(Error::Domain(format!(
                "background[{i}] = {} is negative",
                background[i]
            )));
        }
        let min = op.min_entry();
        if !(min >= 0.0) {
            return Err(Error::Domain(format!("operator has a negative entry ({min})")));
        }
        let sums = op.column_sums();
        if let Some(j) = sums.iter().position(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::Param(format!(
                "column {j} of the operator is zero or non-finite (sum {})",
                sums[j]
            )));
        }
        let log_b = b.iter().map(|&t| (t + LOG_FLOOR).ln()).collect();
        Ok(Self {
            op,
            b,
            background,
            background_in_fidelity: true,
            log_b,
        })
    }

    /// Drops ε from the forward model used inside the fidelity (`y = Ax`).
    pub fn without_background_in_fidelity(mut self) -> Self {
        self.background_in_fidelity = false;
        self
    }

    pub fn background_in_fidelity(&self) -> bool {
        self.background_in_fidelity
    }

    pub fn op(&self) -> &A {
        &self.op
    }

    pub fn observations(&self) -> &[f64] {
        &self.b
    }

    pub fn background(&self) -> &[f64] {
        &self.background
    }

    pub fn rows(&self) -> usize {
        self.op.rows()
    }

    pub fn cols(&self) -> usize {
        self.op.cols()
    }

    /// `y = Ax (+ ε)`, without any floor.
    pub(crate) fn forward_into(&self, x: &[f64], y: &mut [f64]) {
        self.op.apply_into(x, y);
        if self.background_in_fidelity {
            for (t, e) in y.iter_mut().zip(&self.background) {
                *t += e;
            }
        }
    }

    /// Fidelity at a precomputed `y`.
    pub(crate) fn value_at(&self, kind: FidelityKind, y: &[f64]) -> f64 {
        let bs = LegendreKind::BoltzmannShannon;
        y.iter()
            .zip(&self.b)
            .map(|(&yi, &bi)| {
                let (yf, bf) = (yi + LOG_FLOOR, bi + LOG_FLOOR);
                match kind {
                    FidelityKind::ForwardKL => bs.bregman_scalar(bf, yf),
                    FidelityKind::ReverseKL => bs.bregman_scalar(yf, bf),
                }
            })
            .sum()
    }

    /// Overwrites `y` with the dual residual whose adjoint is the gradient.
    pub(crate) fn residual_in_place(&self, kind: FidelityKind, y: &mut [f64]) {
        match kind {
            FidelityKind::ForwardKL => {
                for (t, &bi) in y.iter_mut().zip(&self.b) {
                    *t = 1.0 - (bi + LOG_FLOOR) / (*t + LOG_FLOOR);
                }
            }
            FidelityKind::ReverseKL => {
                for (t, &lb) in y.iter_mut().zip(&self.log_b) {
                    *t = (*t + LOG_FLOOR).ln() - lb;
                }
            }
        }
    }

    fn check_x(&self, x: &[f64]) -> Result<()> {
        check_len(self.cols(), x.len())?;
        LegendreKind::Burg.check_interior("x", x)
    }

    pub fn fidelity_value(&self, kind: FidelityKind, x: &[f64]) -> Result<f64> {
        self.check_x(x)?;
        let mut y = vec![0.0; self.rows()];
        self.forward_into(x, &mut y);
        Ok(self.value_at(kind, &y))
    }

    pub fn fidelity_grad(&self, kind: FidelityKind, x: &[f64]) -> Result<Vec<f64>> {
        self.check_x(x)?;
        let mut y = vec![0.0; self.rows()];
        self.forward_into(x, &mut y);
        self.residual_in_place(kind, &mut y);
        let mut g = vec![0.0; self.cols()];
        self.op.adjoint_into(&y, &mut g);
        Ok(g)
    }

    /// Largest step for which `h/λ − f` is convex under the paired entropy:
    /// `1/‖b‖₁` for `ForwardKL`, `1/max_j Σᵢ Aᵢⱼ` for `ReverseKL`.
    pub fn step_bound(&self, kind: FidelityKind) -> Result<f64> {
        match kind {
            FidelityKind::ForwardKL => {
                let total: f64 = self.b.iter().sum();
                if total <= 0.0 {
                    return Err(Error::Param(
                        "observation is identically zero; the forward-KL step bound is undefined"
                            .into(),
                    ));
                }
                Ok(1.0 / total)
            }
            FidelityKind::ReverseKL => {
                let lmax = self
                    .op
                    .column_sums()
                    .into_iter()
                    .fold(0.0f64, f64::max);
                Ok(1.0 / lmax)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linop::DenseMatrix;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::E;

    fn scalar_model(b: f64) -> PoissonModel<DenseMatrix> {
        PoissonModel::new(DenseMatrix::identity(1), vec![b], vec![0.0]).unwrap()
    }

    #[test]
    fn value_examples() {
        let m = scalar_model(1.0);
        let v = m.fidelity_value(FidelityKind::ReverseKL, &[E]).unwrap();
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-10);
        let bs = LegendreKind::BoltzmannShannon;
        assert_abs_diff_eq!(v, bs.bregman_div(&[E], &[1.0]).unwrap(), epsilon = 1e-10);
        let v = m.fidelity_value(FidelityKind::ForwardKL, &[E]).unwrap();
        assert_abs_diff_eq!(v, E - 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(v, bs.bregman_div(&[1.0], &[E]).unwrap(), epsilon = 1e-10);
    }

    #[test]
    fn zero_at_consistent_data() {
        let a = DenseMatrix::new(2, 2, vec![1.0, 0.5, 0.0, 2.0]).unwrap();
        let x = [1.5, 0.75];
        let eps = [1.0, 1.0];
        let mut b = a.apply(&x).unwrap();
        b.iter_mut().zip(&eps).for_each(|(t, e)| *t += e);
        let m = PoissonModel::new(a, b, eps.to_vec()).unwrap();
        for kind in [FidelityKind::ForwardKL, FidelityKind::ReverseKL] {
            assert_eq!(m.fidelity_value(kind, &x).unwrap(), 0.0);
            let g = m.fidelity_grad(kind, &x).unwrap();
            assert!(g.iter().all(|t| t.abs() < 1e-15), "{g:?}");
        }
    }

    #[test]
    fn grad_examples() {
        let m = scalar_model(1.0);
        let g = m.fidelity_grad(FidelityKind::ReverseKL, &[E]).unwrap()[0];
        assert_abs_diff_eq!(g, 1.0, epsilon = 1e-10);
        let g = m.fidelity_grad(FidelityKind::ForwardKL, &[E]).unwrap()[0];
        assert_abs_diff_eq!(g, 1.0 - 1.0 / E, epsilon = 1e-10);
        // central differences at h = 1e-6
        for kind in [FidelityKind::ForwardKL, FidelityKind::ReverseKL] {
            let h = 1e-6;
            let fd = (m.fidelity_value(kind, &[E + h]).unwrap()
                - m.fidelity_value(kind, &[E - h]).unwrap())
                / (2.0 * h);
            let g = m.fidelity_grad(kind, &[E]).unwrap()[0];
            assert_abs_diff_eq!(fd, g, epsilon = 1e-8);
        }
    }

    #[test]
    fn step_bounds() {
        let m = PoissonModel::new(DenseMatrix::identity(2), vec![2.0, 3.0], vec![1.0; 2]).unwrap();
        assert_abs_diff_eq!(m.step_bound(FidelityKind::ForwardKL).unwrap(), 0.2);
        assert_eq!(m.step_bound(FidelityKind::ReverseKL).unwrap(), 1.0);
        let z = PoissonModel::new(DenseMatrix::identity(2), vec![0.0; 2], vec![1.0; 2]).unwrap();
        assert!(matches!(z.step_bound(FidelityKind::ForwardKL), Err(Error::Param(_))));
    }

    #[test]
    fn model_validation() {
        let a = DenseMatrix::new(2, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        assert!(matches!(
            PoissonModel::new(a, vec![1.0; 2], vec![0.0; 2]),
            Err(Error::Param(_))
        ));
        let a = DenseMatrix::new(1, 1, vec![-1.0]).unwrap();
        assert!(PoissonModel::new(a, vec![1.0], vec![0.0]).is_err());
        assert!(PoissonModel::new(DenseMatrix::identity(1), vec![-1.0], vec![0.0]).is_err());
        assert!(PoissonModel::new(DenseMatrix::identity(1), vec![1.0], vec![0.0, 1.0]).is_err());
        let m = scalar_model(1.0);
        assert!(matches!(
            m.fidelity_value(FidelityKind::ReverseKL, &[0.0]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn background_switch() {
        let m = PoissonModel::new(DenseMatrix::identity(1), vec![2.0], vec![1.0]).unwrap();
        assert!(m.fidelity_value(FidelityKind::ReverseKL, &[1.0]).unwrap() < 1e-15);
        let m = m.without_background_in_fidelity();
        assert!(m.fidelity_value(FidelityKind::ReverseKL, &[1.0]).unwrap() > 0.1);
        assert!(m.fidelity_value(FidelityKind::ReverseKL, &[2.0]).unwrap() < 1e-15);
    }
}
