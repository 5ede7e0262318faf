//! Independent numerical oracles shared by the integration tests.
//!
//! Nothing here calls into the library: divergences, proximity operators and
//! derivatives are recomputed from their definitions by plain numerics.

#![allow(dead_code)]

/// `ξ log(ξ/z) − ξ + z`.
pub fn kl_div(xi: f64, z: f64) -> f64 {
    if xi == 0.0 {
        return z;
    }
    xi * (xi / z).ln() - xi + z
}

/// `ξ/z − log(ξ/z) − 1`.
pub fn itakura_saito(xi: f64, z: f64) -> f64 {
    xi / z - (xi / z).ln() - 1.0
}

/// Smallest `t` in `[lo, hi]` with `g(t) >= 0`, for nondecreasing `g`.
/// Runs until the bracket stops shrinking.
pub fn bisect_increasing(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    assert!(g(lo) < 0.0 && g(hi) >= 0.0, "bracket [{lo}, {hi}] does not straddle the root");
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return hi;
        }
        if g(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
}

/// Minimizer of a unimodal `f` on `[lo, hi]` by golden-section search.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - r * (hi - lo);
    let mut d = lo + r * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - r * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + r * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Minimizer over `ξ > 0` of a convex `φ` given its right derivative,
/// searched as `ξ = e^t` on `t ∈ [t_lo, t_hi]`.
pub fn argmin_positive(right_deriv: impl Fn(f64) -> f64, t_lo: f64, t_hi: f64) -> f64 {
    bisect_increasing(|t| right_deriv(t.exp()), t_lo, t_hi).exp()
}

/// `argmin_ξ η|ξ − a| + KL(ξ, z)`.
pub fn prox_shifted_l1_kl(z: f64, eta: f64, a: f64) -> f64 {
    let d = |xi: f64| eta * if xi >= a { 1.0 } else { -1.0 } + (xi / z).ln();
    argmin_positive(d, z.ln() - eta - 2.0, z.ln() + eta + 2.0)
}

/// `argmin_ξ η ξ + KL(ξ, z)` over `ξ > 0`.
pub fn prox_l1_kl(z: f64, eta: f64) -> f64 {
    let d = |xi: f64| eta + (xi / z).ln();
    argmin_positive(d, z.ln() - eta - 2.0, z.ln() + 2.0)
}

/// `argmin_ξ η ξ + IS(ξ, z)` over `ξ > 0`.
pub fn prox_l1_is(z: f64, eta: f64) -> f64 {
    let d = |xi: f64| eta + 1.0 / z - 1.0 / xi;
    argmin_positive(d, z.ln() - (1.0 + eta * z).ln() - 2.0, z.ln() + 2.0)
}

/// Golden-section minimization of `φ(e^t)` on the given log-bracket.
pub fn golden_positive(phi: impl Fn(f64) -> f64, t_lo: f64, t_hi: f64) -> f64 {
    golden_section(|t| phi(t.exp()), t_lo, t_hi, 200).exp()
}

/// Central-difference gradient with per-coordinate step `h·max(1, |xⱼ|)`.
pub fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|j| {
            let step = h * x[j].abs().max(1.0);
            p[j] = x[j] + step;
            let up = f(&p);
            p[j] = x[j] - step;
            let down = f(&p);
            p[j] = x[j];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// `A x` for a row-major `rows × cols` matrix.
pub fn matvec(a: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    (0..rows)
        .map(|i| (0..cols).map(|j| a[i * cols + j] * x[j]).sum())
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

/// Sample mean and unbiased variance.
pub fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}
