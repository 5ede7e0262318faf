mod common;

use common::*;
use extdiv::shrink::{
    bregman_prox_l1_bs, bregman_prox_l1_burg, bregman_prox_shifted_l1_bs, ext_div_closed_form,
    ext_div_composed, ext_div_dual, ext_div_scalar, external_division_euclidean, firm, soft,
};
use extdiv::{Error, ExtDivParams};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

/// Parameters with `ω ∈ (1, 20]`, `η₁ ∈ (0, log ω)` and `a ∈ [0.01, 100]`.
fn random_params(rng: &mut ChaCha8Rng) -> ExtDivParams {
    loop {
        let omega = 1.0 + log_uniform(rng, 0.05, 19.0);
        let eta1 = omega.ln() * rng.random_range(0.02..0.98);
        let a = log_uniform(rng, 0.01, 100.0);
        if let Ok(p) = ExtDivParams::new(omega, eta1, a) {
            return p;
        }
    }
}

#[test]
fn shifted_bs_prox_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let z = log_uniform(&mut rng, 1e-3, 1e3);
        let eta = rng.random_range(0.01..3.0);
        let a = log_uniform(&mut rng, 1e-2, 1e2);
        let got = bregman_prox_shifted_l1_bs(&[z], eta, a).unwrap()[0];
        let want = prox_shifted_l1_kl(z, eta, a);
        assert!((got - want).abs() <= 1e-7, "z={z} eta={eta} a={a}: {got} vs {want}");
        let phi = |xi: f64| eta * (xi - a).abs() + kl_div(xi, z);
        let golden = golden_positive(phi, z.ln() - eta - 2.0, z.ln() + eta + 2.0);
        assert!((got - golden).abs() <= 1e-6 * got.max(1.0));
    }
}

#[test]
fn burg_prox_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let z = log_uniform(&mut rng, 1e-3, 1e3);
        let eta = log_uniform(&mut rng, 1e-3, 10.0);
        let got = bregman_prox_l1_burg(&[z], eta).unwrap()[0];
        let want = prox_l1_is(z, eta);
        assert!((got - want).abs() <= 1e-7, "z={z} eta={eta}: {got} vs {want}");
    }
}

#[test]
fn multiplicative_shrink_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let z = log_uniform(&mut rng, 1e-3, 1e3);
        let eta = log_uniform(&mut rng, 1e-3, 10.0);
        let got = bregman_prox_l1_bs(&[z], eta).unwrap()[0];
        assert!((got - prox_l1_kl(z, eta)).abs() <= 1e-7);
    }
}

#[test]
fn ext_div_is_external_division_of_numeric_proxes() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..500 {
        let p = random_params(&mut rng);
        let x = p.a() * log_uniform(&mut rng, 1e-2, 10.0);
        let want = p.omega() * prox_shifted_l1_kl(x, p.eta1(), p.a())
            - (p.omega() - 1.0) * prox_shifted_l1_kl(x, p.eta2(), p.a());
        let got = ext_div_scalar(x, &p);
        assert!(
            (got - want).abs() <= 1e-7 * x.max(1.0) * p.omega(),
            "{p:?} x={x}: {got} vs {want}"
        );
    }
}

#[test]
fn three_forms_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst_composed, mut worst_dual, mut dual_checked) = (0.0f64, 0.0f64, 0);
    for _ in 0..10_000 {
        let p = random_params(&mut rng);
        let x = p.a() * log_uniform(&mut rng, 1e-3, 1e3).min(p.kappa() * 50.0);
        let closed = ext_div_closed_form(&[x], &p).unwrap()[0];
        let composed = ext_div_composed(&[x], &p).unwrap()[0];
        worst_composed = worst_composed.max((closed - composed).abs());
        if x >= p.a() * (-p.eta1()).exp() {
            let dual = ext_div_dual(&[x], &p).unwrap()[0];
            worst_dual = worst_dual.max((closed - dual).abs());
            dual_checked += 1;
        }
    }
    assert!(worst_composed <= 1e-9, "composed: {worst_composed}");
    assert!(worst_dual <= 1e-9, "dual: {worst_dual}");
    assert!(dual_checked > 1000);
}

#[test]
fn dual_form_rejects_points_below_its_region() {
    let p = ExtDivParams::new(2.0, 0.3, 3.0).unwrap();
    let below = 3.0 * (-0.3f64).exp() * 0.9;
    assert!(matches!(ext_div_dual(&[below], &p), Err(Error::Domain(_))));
    assert!(ext_div_dual(&[3.0], &p).is_ok());
}

#[test]
fn piecewise_structure() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..200 {
        let p = random_params(&mut rng);
        let [b1, b2, b3, b4] = p.breakpoints();
        for t in [1.0 + 1e-12, 1.5, 10.0, 1e6] {
            let x = b4 * t;
            if x > b4 {
                assert_eq!(ext_div_scalar(x, &p), x);
            }
        }
        for i in 0..=100 {
            let x = (b2 + (b3 - b2) * i as f64 / 100.0).min(b3);
            assert_eq!(ext_div_scalar(x, &p), p.a());
        }
        let scale = p.a().max(1.0);
        for b in [b1, b2, b3, b4] {
            let at = ext_div_scalar(b, &p);
            let left = ext_div_scalar(b.next_down(), &p);
            let right = ext_div_scalar(b.next_up(), &p);
            assert!((at - left).abs() <= 1e-12 * scale, "{p:?} at {b}");
            assert!((at - right).abs() <= 1e-12 * scale, "{p:?} at {b}");
        }
    }
}

#[test]
fn monotone_where_iterates_stay_nonnegative() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let omega = 1.0 + log_uniform(&mut rng, 0.05, 19.0);
        let eta1 = rng.random_range(0.05..1.0) * ExtDivParams::max_nonnegative_eta1(omega);
        let p = ExtDivParams::new(omega, eta1, log_uniform(&mut rng, 0.01, 100.0)).unwrap();
        assert!(p.preserves_nonnegativity());
        let hi = p.breakpoints()[3] * 1.5;
        let xs: Vec<f64> = (0..10_000).map(|i| hi * i as f64 / 9_999.0).collect();
        let ys = ext_div_closed_form(&xs, &p).unwrap();
        assert!(ys.windows(2).all(|w| w[0] <= w[1]), "{p:?}");
        assert!(ys.iter().all(|&y| y >= 0.0));
    }
}

#[test]
fn steep_eta1_sends_small_inputs_negative() {
    // Past log(2 − 1/ω) the first branch has negative slope.
    let p = ExtDivParams::new(2.0, 0.6, 1.0).unwrap();
    assert!(!p.preserves_nonnegativity());
    let x = 0.5 * p.breakpoints()[0];
    assert!(ext_div_scalar(x, &p) < 0.0);
}

#[test]
fn zero_center_is_identity() {
    let p = ExtDivParams::new(3.0, 0.5, 0.0).unwrap();
    for x in [0.0, 1e-300, 0.3, 7.0, 1e12] {
        assert_eq!(ext_div_scalar(x, &p), x);
    }
}

#[test]
fn firm_equals_external_division_on_dense_grid() {
    let mut mismatches = 0;
    for ti in 1..=20 {
        let tau = 0.1 * ti as f64;
        for gi in 1..=20 {
            let gamma = tau + 0.15 * gi as f64;
            for xi in 0..=800 {
                let x = -6.0 + 0.015 * xi as f64;
                let f = firm(x, tau, gamma).unwrap();
                let e = external_division_euclidean(x, tau, gamma).unwrap();
                if f.to_bits() != e.to_bits() {
                    mismatches += 1;
                }
            }
        }
    }
    assert_eq!(mismatches, 0);
}

#[test]
fn soft_is_euclidean_prox() {
    for &(x, g) in &[(2.5, 1.0), (-0.3, 0.5), (4.0, 4.0), (-7.0, 2.0)] {
        let phi = |u: f64| g * u.abs() + 0.5 * (u - x) * (u - x);
        let u = golden_section(phi, -10.0, 10.0, 200);
        assert!((soft(x, g) - u).abs() < 1e-7);
    }
}

proptest! {
    #[test]
    fn firm_matches_external_division(x in -1e3f64..1e3, tau in 1e-3f64..10.0, gap in 1e-3f64..10.0) {
        let gamma = tau + gap;
        prop_assert_eq!(
            firm(x, tau, gamma).unwrap().to_bits(),
            external_division_euclidean(x, tau, gamma).unwrap().to_bits()
        );
    }

    #[test]
    fn ext_div_monotone_pairs(
        omega in 1.01f64..30.0,
        frac in 0.01f64..1.0,
        a in 1e-3f64..1e3,
        x in 0.0f64..1e4,
        y in 0.0f64..1e4,
    ) {
        let p = ExtDivParams::new(omega, frac * ExtDivParams::max_nonnegative_eta1(omega), a).unwrap();
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        let (tl, th) = (ext_div_scalar(lo, &p), ext_div_scalar(hi, &p));
        prop_assert!(tl <= th);
        prop_assert!(tl >= 0.0);
    }

    #[test]
    fn ext_div_fixes_center_and_large_inputs(
        omega in 1.01f64..30.0,
        frac in 0.01f64..0.999,
        a in 1e-3f64..1e3,
        t in 1.0f64..1e3,
    ) {
        let p = ExtDivParams::new(omega, frac * omega.ln(), a).unwrap();
        prop_assert_eq!(ext_div_scalar(a, &p), a);
        let x = p.kappa() * a * t * (1.0 + 1e-12);
        prop_assert_eq!(ext_div_scalar(x, &p), x);
    }

    #[test]
    fn prox_outputs_stay_in_domain(z in 1e-6f64..1e6, eta in 0.0f64..5.0, a in 1e-3f64..1e3) {
        prop_assert!(bregman_prox_shifted_l1_bs(&[z], eta, a).unwrap()[0] > 0.0);
        let burg = bregman_prox_l1_burg(&[z], eta).unwrap()[0];
        prop_assert!(burg > 0.0 && burg <= z);
        let bs = bregman_prox_l1_bs(&[z], eta).unwrap()[0];
        prop_assert!(bs > 0.0 && bs <= z);
    }
}
