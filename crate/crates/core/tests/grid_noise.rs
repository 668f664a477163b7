mod common;

use std::f64::consts::PI;

use anderson_core::{
    convolve, dft_forward, dft_inverse, geodesic_dist, inner_l2, mollify, norm_lp, regenerate,
    sample_white_noise, GridField, NoiseSpec, TorusGrid, TORUS_MEASURE,
};
use common::{convolve_direct, rel_err_vec, uniform_field};
use num_complex::Complex64;
use proptest::prelude::*;

#[test]
fn measure_and_spacing() {
    for n in [2, 8, 30, 64] {
        let g = TorusGrid::new(n).unwrap();
        assert!((g.n() as f64 * g.h() - 2.0 * PI).abs() <= 4.0 * f64::EPSILON * 2.0 * PI);
        let total = g.cell_measure() * g.len() as f64;
        assert!((total - TORUS_MEASURE).abs() <= 1e-12 * TORUS_MEASURE);
    }
}

#[test]
fn quadrature_examples() {
    let g = TorusGrid::new(16).unwrap();
    let one = GridField::constant(&g, 1.0);
    let c = GridField::from_fn(&g, |x, _| x.cos());
    let s = GridField::from_fn(&g, |x, _| x.sin());
    assert!((inner_l2(&one, &one).unwrap() - 4.0 * PI * PI).abs() < 1e-12);
    assert!(inner_l2(&c, &s).unwrap().abs() < 1e-12);
    assert!((inner_l2(&c, &c).unwrap() - 2.0 * PI * PI).abs() < 1e-12);
    assert!((norm_lp(&one, 2.0).unwrap() - 2.0 * PI).abs() < 1e-12);
    assert_eq!(norm_lp(&GridField::constant(&g, -3.0), f64::INFINITY).unwrap(), 3.0);
    // ∫cos⁴ = 4π²·3/8; the trapezoid rule is exact for this degree on 16 points.
    let expected = (4.0 * PI * PI * 3.0 / 8.0).powf(0.25);
    assert!((norm_lp(&c, 4.0).unwrap() - expected).abs() < 1e-12);
    assert!(norm_lp(&c, 0.5).is_err());
}

#[test]
fn shape_errors() {
    let a = GridField::zeros(&TorusGrid::new(8).unwrap());
    let b = GridField::zeros(&TorusGrid::new(10).unwrap());
    assert!(inner_l2(&a, &b).is_err());
    assert!(convolve(&a, &b).is_err());
    assert!(GridField::new(&TorusGrid::new(8).unwrap(), vec![0.0; 63]).is_err());
    assert!(GridField::new(&TorusGrid::new(4).unwrap(), vec![f64::NAN; 16]).is_err());
}

#[test]
fn dft_matches_direct_sum() {
    let g = TorusGrid::new(8).unwrap();
    let u = uniform_field(&g, 3, 1.0);
    let u_hat = dft_forward(&u);
    let n = g.n();
    for k in g.wavenumbers() {
        let mut s = Complex64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                let (x, y) = g.point(i, j);
                s += u.at(i, j) * Complex64::from_polar(1.0, -(k.0 as f64 * x + k.1 as f64 * y));
            }
        }
        s /= (n * n) as f64;
        assert!((u_hat.coeff(k) - s).norm() < 1e-13, "k = {k:?}");
    }
    assert!(u_hat.hermitian_defect() <= 1e-12);
}

#[test]
fn dirac_pairs_to_point_value() {
    let g = TorusGrid::new(12).unwrap();
    let u = uniform_field(&g, 9, 2.0);
    let d = GridField::dirac(&g, (3, 7));
    assert!((inner_l2(&d, &u).unwrap() - u.at(3, 7)).abs() < 1e-14);
}

#[test]
fn convolution_matches_double_sum() {
    for n in [8, 12] {
        let g = TorusGrid::new(n).unwrap();
        let u = uniform_field(&g, 1, 1.0);
        let w = uniform_field(&g, 2, 1.0);
        let fast = convolve(&u, &w).unwrap();
        assert!(rel_err_vec(fast.values(), &convolve_direct(&u, &w)) < 1e-12);
    }
}

#[test]
fn geodesic_examples() {
    let g = TorusGrid::new(16).unwrap();
    let h = g.h();
    assert_eq!(geodesic_dist(&g, (0, 0), (0, 0)), 0.0);
    assert!((geodesic_dist(&g, (0, 0), (15, 0)) - h).abs() < 1e-14);
    assert!((geodesic_dist(&g, (0, 0), (8, 8)) - PI * 2f64.sqrt()).abs() < 1e-12);
}

#[test]
fn noise_is_reproducible() {
    let g = TorusGrid::new(16).unwrap();
    let a = sample_white_noise(&g, 11);
    let b = sample_white_noise(&g, 11);
    let c = sample_white_noise(&g, 12);
    assert_eq!(a.field.values(), b.field.values());
    assert_ne!(a.field.values(), c.field.values());
    let spec = NoiseSpec { seed: 11, cutoff: Some(3) };
    let m1 = regenerate(&g, spec).unwrap();
    let m2 = mollify(&a, 3).unwrap();
    assert_eq!(m1.field.values(), m2.field.values());
    assert_eq!(m1.cutoff, Some(3));
}

#[test]
fn noise_entries_have_variance_h_minus_two() {
    let g = TorusGrid::new(64).unwrap();
    let xi = sample_white_noise(&g, 5);
    let nn = g.len() as f64;
    let mean = xi.field.values().iter().sum::<f64>() / nn;
    let var = xi.field.values().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nn - 1.0);
    let expected = 1.0 / (g.h() * g.h());
    // Relative standard error of a sample variance is √(2/N) ≈ 0.022.
    assert!((var / expected - 1.0).abs() < 5.0 * (2.0 / nn).sqrt());
    assert!(mean.abs() < 5.0 * expected.sqrt() / nn.sqrt());
}

#[test]
fn noise_pairing_moments() {
    let g = TorusGrid::new(16).unwrap();
    let one = GridField::constant(&g, 1.0);
    let c = GridField::from_fn(&g, |x, _| x.cos());
    let seeds = 10_000u64;
    let (mut s1, mut sc) = (Vec::new(), Vec::new());
    for seed in 0..seeds {
        let xi = sample_white_noise(&g, seed).field;
        s1.push(inner_l2(&xi, &one).unwrap());
        sc.push(inner_l2(&xi, &c).unwrap());
    }
    let mean1 = s1.iter().sum::<f64>() / seeds as f64;
    assert!(mean1.abs() <= 3.0 * 2.0 * PI / 100.0, "mean {mean1}");
    let var_c = sc.iter().map(|v| v * v).sum::<f64>() / seeds as f64;
    assert!((var_c / (2.0 * PI * PI) - 1.0).abs() < 0.1, "variance {var_c}");
}

#[test]
fn mollify_removes_high_modes() {
    let g = TorusGrid::new(16).unwrap();
    let xi = sample_white_noise(&g, 2);
    let m = mollify(&xi, 3).unwrap();
    let hat = dft_forward(&m.field);
    let raw = dft_forward(&xi.field);
    for k in g.wavenumbers() {
        let inf = k.0.abs().max(k.1.abs());
        if inf > 3 {
            assert!(hat.coeff(k).norm() < 1e-13);
        } else {
            assert!((hat.coeff(k) - raw.coeff(k)).norm() < 1e-12);
        }
    }
    assert_eq!(mollify(&xi, 8).unwrap().field.values(), xi.field.values());
    assert!(mollify(&xi, 9).is_err());
}

fn field_strategy(n: usize) -> impl Strategy<Value = GridField> {
    prop::collection::vec(-10.0f64..10.0, n * n)
        .prop_map(move |v| GridField::new(&TorusGrid::new(n).unwrap(), v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dft_round_trip(u in field_strategy(8)) {
        let back = dft_inverse(&dft_forward(&u));
        let err = u.values().iter().zip(back.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-12 * (1.0 + norm_lp(&u, f64::INFINITY).unwrap()));
        prop_assert!(dft_forward(&u).hermitian_defect() <= 1e-12);
    }

    #[test]
    fn parseval(u in field_strategy(8)) {
        let hat = dft_forward(&u);
        let spectral: f64 = hat.coefficients().iter().map(|c| c.norm_sqr()).sum::<f64>() * TORUS_MEASURE;
        let direct = inner_l2(&u, &u).unwrap();
        prop_assert!((spectral - direct).abs() <= 1e-12 * (1.0 + direct));
    }

    #[test]
    fn inner_product_symmetric_and_positive(u in field_strategy(6), v in field_strategy(6)) {
        let uv = inner_l2(&u, &v).unwrap();
        let vu = inner_l2(&v, &u).unwrap();
        prop_assert!((uv - vu).abs() <= 1e-12 * (1.0 + uv.abs()));
        prop_assert!(inner_l2(&u, &u).unwrap() >= 0.0);
    }

    #[test]
    fn lp_norm_homogeneous(u in field_strategy(6), s in -5.0f64..5.0, p in 1.0f64..8.0) {
        let a = norm_lp(&u.scale(s), p).unwrap();
        let b = s.abs() * norm_lp(&u, p).unwrap();
        prop_assert!((a - b).abs() <= 1e-11 * (1.0 + b));
    }

    #[test]
    fn convolution_commutes(u in field_strategy(6), w in field_strategy(6)) {
        let a = convolve(&u, &w).unwrap();
        let b = convolve(&w, &u).unwrap();
        prop_assert!(rel_err_vec(a.values(), b.values()) < 1e-12 || norm_lp(&b, 2.0).unwrap() < 1e-12);
    }

    #[test]
    fn geodesic_is_a_metric(
        a in (0usize..10, 0usize..10),
        b in (0usize..10, 0usize..10),
        c in (0usize..10, 0usize..10),
    ) {
        let g = TorusGrid::new(10).unwrap();
        let dab = geodesic_dist(&g, a, b);
        prop_assert_eq!(dab, geodesic_dist(&g, b, a));
        prop_assert!(dab <= geodesic_dist(&g, a, c) + geodesic_dist(&g, c, b) + 1e-12);
        prop_assert!(dab <= PI * 2f64.sqrt() + 1e-12);
    }
}
