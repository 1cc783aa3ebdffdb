mod common;

use std::f64::consts::SQRT_2;

use common::{bisect, erf_series, phi_oracle};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;
use smpc::chance::{
    cantelli_bound, cantelli_complement, cantelli_factor, cantelli_gamma, chebyshev_bound, chebyshev_complement, erf,
    erf_inv, erfc, gaussian_factor, gaussian_gamma, normal_cdf, normal_pdf, two_sided_probability, RiskParameter,
};
use smpc::model::seeded_rng;

fn risk(p: f64) -> RiskParameter {
    RiskParameter::new(p).unwrap()
}

#[test]
fn erf_matches_series_near_origin() {
    for i in 0..=400 {
        let x = -2.0 + 0.01 * i as f64;
        let oracle = erf_series(x, 30);
        assert!((erf(x) - oracle).abs() <= 1e-13, "x = {x}: {} vs {oracle}", erf(x));
    }
}

#[test]
fn erf_matches_libm() {
    for i in 0..=1200 {
        let x = -6.0 + 0.01 * i as f64;
        assert!((erf(x) - libm::erf(x)).abs() <= 1e-14, "x = {x}");
        if x > 0.0 {
            let rel = (erfc(x) - libm::erfc(x)).abs() / libm::erfc(x);
            assert!(rel <= 1e-11, "erfc at {x}: relative error {rel}");
        }
    }
}

#[test]
fn erf_known_values() {
    assert!((erf(1.0) - 0.842_700_792_949_714_9).abs() < 1e-15);
    assert_eq!(erf(0.0), 0.0);
    assert!((erf(0.5) - 0.520_499_877_813_046_5).abs() < 1e-15);
}

#[test]
fn erf_inv_matches_bisection() {
    let oracle = bisect(|x| erf_series(x, 40), 0.6, 0.0, 2.0);
    assert!((erf_inv(0.6).unwrap() - oracle).abs() < 1e-12);
    assert!((erf_inv(0.6).unwrap() - 0.595_116_081_449_995).abs() < 1e-12);
    for y in [-0.99, -0.5, 0.1, 0.3, 0.9, 0.999, 0.999_999] {
        let oracle = bisect(libm::erf, y, -6.0, 6.0);
        assert!((erf_inv(y).unwrap() - oracle).abs() < 1e-10, "y = {y}");
    }
}

#[test]
fn erf_round_trip_on_thousand_points() {
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let y = -0.999 + 1.998 * i as f64 / 999.0;
        worst = worst.max((erf(erf_inv(y).unwrap()) - y).abs());
    }
    assert!(worst <= 1e-10, "worst round-trip error {worst}");
    for i in 0..1000 {
        let x = -4.0 + 8.0 * i as f64 / 999.0;
        let back = erf_inv(erf(x)).unwrap();
        assert!((back - x).abs() <= 1e-8 * (1.0 + x.abs()) || x.abs() > 3.5, "x = {x} -> {back}");
    }
}

#[test]
fn erf_inv_domain() {
    assert!(erf_inv(1.0).is_err());
    assert!(erf_inv(-1.0).is_err());
    assert!(erf_inv(f64::NAN).is_err());
    assert_eq!(erf_inv(0.0).unwrap(), 0.0);
}

#[test]
fn normal_cdf_midpoint_and_oracle() {
    for (mu, sigma) in [(0.0, 1.0), (2.8, 0.3), (-5.0, 10.0)] {
        assert!((normal_cdf(mu, mu, sigma).unwrap() - 0.5).abs() <= 1e-15);
        for i in -40..=40 {
            let x = mu + sigma * 0.1 * i as f64;
            let oracle = phi_oracle((x - mu) / sigma);
            assert!((normal_cdf(x, mu, sigma).unwrap() - oracle).abs() < 1e-14);
        }
    }
    assert!(normal_cdf(0.0, 0.0, 0.0).is_err());
}

#[test]
fn two_sided_identity() {
    for sigma in [0.2, 1.0, 3.0] {
        for i in 1..=50 {
            let x = 0.1 * i as f64;
            let lhs = two_sided_probability(x, sigma).unwrap();
            let via_cdf = normal_cdf(x, 0.0, sigma).unwrap() - normal_cdf(-x, 0.0, sigma).unwrap();
            assert!((lhs - erf(x / (sigma * SQRT_2))).abs() <= 1e-12);
            assert!((lhs - via_cdf).abs() <= 1e-12);
        }
    }
}

#[test]
fn density_integrates_to_cdf() {
    // Simpson's rule from μ − 10σ; a density without the square would fail this.
    let (mu, sigma) = (1.0, 0.5);
    let (lo, hi, n) = (mu - 10.0 * sigma, mu + 0.7, 20_000);
    let h = (hi - lo) / n as f64;
    let mut sum = normal_pdf(lo, mu, sigma).unwrap() + normal_pdf(hi, mu, sigma).unwrap();
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * normal_pdf(lo + h * i as f64, mu, sigma).unwrap();
    }
    let integral = sum * h / 3.0;
    assert!((integral - normal_cdf(hi, mu, sigma).unwrap()).abs() < 1e-10);
    assert!((normal_pdf(mu, mu, sigma).unwrap() - 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt())).abs() < 1e-15);
}

#[test]
fn gaussian_factor_is_the_normal_quantile() {
    for p in [0.5, 0.6, 0.8, 0.9, 0.95, 0.99, 0.999] {
        let oracle = bisect(phi_oracle, p, -10.0, 10.0);
        assert!((gaussian_factor(risk(p)).unwrap() - oracle).abs() < 1e-10, "p = {p}");
    }
    assert!((gaussian_factor(risk(0.8)).unwrap() - 0.841_621_233_572_914_2).abs() < 1e-10);
    assert!(gaussian_factor(risk(0.4)).is_err());
    assert!(RiskParameter::new(1.0).is_err());
}

#[test]
fn reference_first_margin() {
    // γ_1 = √(2·0.08)·erf⁻¹(0.6) with Σᵉ_1 = Σ_w.
    let g = DVector::from_vec(vec![1.0, 0.0]);
    let sigma = DMatrix::from_diagonal_element(2, 2, 0.08);
    let gamma = gaussian_gamma(&g, &sigma, risk(0.8)).unwrap();
    let oracle = 0.08f64.sqrt() * bisect(phi_oracle, 0.8, 0.0, 5.0);
    assert!((gamma - oracle).abs() < 1e-10);
    assert!((gamma - 0.238_046).abs() < 1e-6);
}

#[test]
fn empirical_quantile_of_gaussian_margin() {
    let mut rng = seeded_rng(7);
    let samples: Vec<f64> = (0..1_000_000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let n = samples.len() as f64;
    for p in [0.6, 0.8, 0.9, 0.95] {
        let gamma = gaussian_factor(risk(p)).unwrap();
        let freq = samples.iter().filter(|x| **x <= gamma).count() as f64 / n;
        let se = (p * (1.0 - p) / n).sqrt();
        assert!((freq - p).abs() <= 4.0 * se, "p = {p}: empirical {freq}");
    }
}

#[test]
fn cantelli_margin_holds_for_uniform_and_gaussian() {
    let mut rng = seeded_rng(11);
    let n = 1_000_000;
    let half = 3f64.sqrt();
    let uniform: Vec<f64> = (0..n).map(|_| half * (2.0 * rng.random::<f64>() - 1.0)).collect();
    let gauss: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    for samples in [&uniform, &gauss] {
        for p in [0.3, 0.5, 0.8, 0.9, 0.95] {
            let gamma = cantelli_gamma(1.0, risk(p)).unwrap();
            let freq = samples.iter().filter(|x| **x <= gamma).count() as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!(freq >= p - 3.0 * se, "p = {p}: empirical {freq}");
        }
    }
}

#[test]
fn tail_bounds_hold_empirically() {
    let mut rng = seeded_rng(5);
    let n = 1_000_000;
    let half = 3f64.sqrt();
    let uniform: Vec<f64> = (0..n).map(|_| half * (2.0 * rng.random::<f64>() - 1.0)).collect();
    let gauss: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    for samples in [&uniform, &gauss] {
        for c in [0.25, 0.5, 1.0, 1.5, 2.0, 3.0] {
            let one_sided = samples.iter().filter(|x| **x >= c).count() as f64 / n as f64;
            let two_sided = samples.iter().filter(|x| x.abs() >= c).count() as f64 / n as f64;
            let se1 = (one_sided * (1.0 - one_sided) / n as f64).sqrt();
            let se2 = (two_sided * (1.0 - two_sided) / n as f64).sqrt();
            assert!(one_sided <= cantelli_bound(c, 1.0).unwrap() + 3.0 * se1, "cantelli at c = {c}");
            assert!(two_sided <= chebyshev_bound(c, 1.0, 0.0).unwrap() + 3.0 * se2, "chebyshev at c = {c}");
            assert!(1.0 - one_sided >= cantelli_complement(c, 1.0).unwrap() - 3.0 * se1);
            assert!(1.0 - two_sided >= chebyshev_complement(c, 1.0).unwrap() - 3.0 * se2);
        }
    }
}

#[test]
fn bound_hand_values() {
    assert_eq!(chebyshev_bound(0.5, 1.0, 0.0).unwrap(), 1.0);
    assert_eq!(chebyshev_bound(2.0, 1.0, 3.0).unwrap(), 0.25);
    assert_eq!(cantelli_bound(2.0, 1.0).unwrap(), 0.2);
    assert!((cantelli_complement(2.0, 1.0).unwrap() - 0.8).abs() < 1e-15);
    assert!(cantelli_bound(0.0, 1.0).is_err());
    assert!(cantelli_bound(1.0, -1.0).is_err());
}

#[test]
fn hundred_point_dominance_grid() {
    for i in 0..100 {
        let p = 0.5 + 0.49 * i as f64 / 99.0;
        let g = gaussian_factor(risk(p)).unwrap();
        let c = cantelli_factor(risk(p));
        assert!(c > g, "p = {p}: cantelli {c} gaussian {g}");
    }
}

proptest! {
    #[test]
    fn erf_is_odd_and_bounded(x in -8.0f64..8.0) {
        prop_assert_eq!(erf(-x), -erf(x));
        prop_assert!(erf(x).abs() <= 1.0);
    }

    #[test]
    fn erf_inv_round_trip(y in -0.9999f64..0.9999) {
        let x = erf_inv(y).unwrap();
        prop_assert!((erf(x) - y).abs() <= 1e-12);
    }

    #[test]
    fn factors_increase_with_p(p in 0.5f64..0.998, dp in 1e-6f64..1e-3) {
        prop_assert!(gaussian_factor(risk(p + dp)).unwrap() > gaussian_factor(risk(p)).unwrap());
        prop_assert!(cantelli_factor(risk(p + dp)) > cantelli_factor(risk(p)));
    }

    #[test]
    fn cantelli_dominates_gaussian(p in 0.5f64..0.9999, sigma in 1e-3f64..10.0) {
        let g = DVector::from_vec(vec![1.0]);
        let cov = DMatrix::from_element(1, 1, sigma * sigma);
        let gauss = gaussian_gamma(&g, &cov, risk(p)).unwrap();
        let cantelli = cantelli_gamma(sigma, risk(p)).unwrap();
        prop_assert!(cantelli >= gauss);
    }

    #[test]
    fn gaussian_margin_scales_with_sigma(p in 0.5f64..0.999, sigma in 1e-3f64..10.0, scale in 0.1f64..10.0) {
        let g = DVector::from_vec(vec![1.0]);
        let gamma = |s: f64| gaussian_gamma(&g, &DMatrix::from_element(1, 1, s * s), risk(p)).unwrap();
        let (a, b) = (gamma(sigma) * scale, gamma(sigma * scale));
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
    }

    #[test]
    fn gaussian_margin_achieves_p(p in 0.5f64..0.999, sigma in 0.01f64..5.0) {
        let g = DVector::from_vec(vec![1.0]);
        let gamma = gaussian_gamma(&g, &DMatrix::from_element(1, 1, sigma * sigma), risk(p)).unwrap();
        prop_assert!((phi_oracle(gamma / sigma) - p).abs() < 1e-12);
    }
}
