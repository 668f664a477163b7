mod common;

use std::f64::consts::PI;

use anderson_core::{
    compute_shift, eigendecompose, form_bound_constant, gap_delta, inner_l2, kato_modulus_heat,
    kato_modulus_log, norm_lp, resolvent_sup_norm, sample_white_noise, AndersonOperator, GridField,
    NoiseSample, Potential, TorusGrid,
};
use common::*;
use proptest::prelude::*;

fn noisy_op(n: usize, seed: u64) -> AndersonOperator {
    let g = TorusGrid::new(n).unwrap();
    AndersonOperator::new(sample_white_noise(&g, seed)).unwrap()
}

fn flat_op(n: usize) -> AndersonOperator {
    let g = TorusGrid::new(n).unwrap();
    AndersonOperator::new(NoiseSample::zero(&g)).unwrap()
}

/// Dense `-H_c = -Δ + c - ξ`.
fn dense_neg_hc(op: &AndersonOperator) -> Dense {
    let diag: Vec<f64> = op.xi().field.values().iter().map(|x| op.c() - x).collect();
    schrodinger(op.grid().n(), &diag)
}

#[test]
fn shift_matches_dense_top_eigenvalue() {
    let op = noisy_op(8, 4);
    let neg_xi: Vec<f64> = op.xi().field.values().iter().map(|x| -x).collect();
    let (vals, _) = jacobi_eigen(&schrodinger(8, &neg_xi));
    let lambda_max = -vals[0];
    let (c, lm) = compute_shift(op.xi()).unwrap();
    assert!(rel_err(lm, lambda_max) < 1e-9);
    assert!((c - (lambda_max.max(0.0) + 1.0)).abs() < 1e-9);
    assert!(c > lm);
}

#[test]
fn apply_matches_dense() {
    let op = noisy_op(8, 1);
    let g = op.grid().clone();
    let u = uniform_field(&g, 2, 1.0);
    let dense = dense_neg_hc(&op);
    let got = op.apply_neg_hc(&u).unwrap();
    assert!(rel_err_vec(got.values(), &dense.matvec(u.values())) < 1e-10);
    // H = c - (-H_c)
    let h = op.apply_h(&u).unwrap();
    let expect: Vec<f64> = dense
        .matvec(u.values())
        .iter()
        .zip(u.values())
        .map(|(a, x)| op.c() * x - a)
        .collect();
    assert!(rel_err_vec(h.values(), &expect) < 1e-10);
}

#[test]
fn flat_examples() {
    let op = flat_op(16);
    let g = op.grid().clone();
    assert_eq!(op.c(), 1.0);
    let c = GridField::from_fn(&g, |x, _| x.cos());
    let hc = op.apply_h(&c).unwrap();
    assert!(rel_err_vec(hc.values(), c.scale(-1.0).values()) < 1e-12);
    assert_eq!(norm_lp(&op.apply_h(&GridField::zeros(&g)).unwrap(), 2.0).unwrap(), 0.0);
    let one = GridField::constant(&g, 1.0);
    let e = op.heat_apply(1.0, &one).unwrap();
    assert!(rel_err_vec(e.values(), one.scale((-1.0f64).exp()).values()) < 1e-12);
    let green = op.green_function((3, 5)).unwrap();
    assert!((inner_l2(&green, &one).unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn resolvent_and_green_match_dense() {
    let op = noisy_op(8, 7);
    let g = op.grid().clone();
    let rhs = uniform_field(&g, 8, 1.0);
    let mut dense = dense_neg_hc(&op);
    let want = solve(&dense, rhs.values());
    let got = op.resolvent_solve(0.0, &rhs).unwrap();
    assert!(rel_err_vec(got.values(), &want) < 1e-8);

    dense.add_diag(&vec![2.5; g.len()]);
    let want = solve(&dense, rhs.values());
    let got = op.resolvent_solve(2.5, &rhs).unwrap();
    assert!(rel_err_vec(got.values(), &want) < 1e-8);
    assert!(op.resolvent_solve(-1.0, &rhs).is_err());
    assert_eq!(op.resolvent_solve(1.0, &GridField::zeros(&g)).unwrap().values(), GridField::zeros(&g).values());

    let dense = dense_neg_hc(&op);
    let x0 = (2, 5);
    let dirac = GridField::dirac(&g, x0);
    let want = solve(&dense, dirac.values());
    let got = op.green_function(x0).unwrap();
    assert!(rel_err_vec(got.values(), &want) < 1e-8);
    assert!(op.green_function((8, 0)).is_err());
}

#[test]
fn green_is_symmetric() {
    let op = noisy_op(16, 3);
    let g = op.grid();
    let pts = [(0, 0), (3, 11), (8, 8), (15, 2)];
    let cols: Vec<GridField> = pts.iter().map(|&p| op.green_function(p).unwrap()).collect();
    let sup = cols.iter().map(|c| norm_lp(c, f64::INFINITY).unwrap()).fold(0.0, f64::max);
    for (i, &x) in pts.iter().enumerate() {
        for (j, &y) in pts.iter().enumerate() {
            let gxy = cols[j].values()[g.index(x.0, x.1)];
            let gyx = cols[i].values()[g.index(y.0, y.1)];
            assert!((gxy - gyx).abs() <= 1e-8 * sup);
        }
    }
}

#[test]
fn flat_green_has_log_singularity() {
    // G + (1/2π) ln d should be nearly constant over 4h ≤ d ≤ 0.5.
    let op = flat_op(64);
    let g = op.grid();
    let col = op.green_function((0, 0)).unwrap();
    let h = g.h();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for idx in 0..g.len() {
        let d = g.geodesic_dist((0, 0), g.node(idx));
        if d >= 4.0 * h - 1e-12 && d <= 0.5 {
            let v = col.values()[idx] + d.ln() / (2.0 * PI);
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    assert!(hi - lo < 0.05, "spread {}", hi - lo);
}

#[test]
fn heat_matches_dense_exponential() {
    let op = noisy_op(8, 5);
    let g = op.grid().clone();
    let (vals, vecs) = jacobi_eigen(&dense_neg_hc(&op));
    let u = uniform_field(&g, 6, 1.0);
    for t in [0.05, 0.3, 1.0] {
        let mut want = vec![0.0; g.len()];
        for (mu, v) in vals.iter().zip(&vecs) {
            let coef: f64 = v.iter().zip(u.values()).map(|(a, b)| a * b).sum::<f64>() * (-t * mu).exp();
            want.iter_mut().zip(v).for_each(|(w, vi)| *w += coef * vi);
        }
        let got = op.heat_apply(t, &u).unwrap();
        assert!(rel_err_vec(got.values(), &want) < 1e-10, "t = {t}");
    }
    assert!(op.heat_apply(0.0, &u).is_err());
}

#[test]
fn flat_heat_matches_theta_kernel() {
    // n = 32 takes the dense path, n = 50 the Krylov path.
    for n in [32, 50] {
        let op = flat_op(n);
        let g = op.grid().clone();
        for t in [0.1, 0.5] {
            let col = op.heat_apply(t, &GridField::dirac(&g, (0, 0))).unwrap();
            let peak = theta_heat_kernel(t, 1.0, 0.0, 0.0);
            for idx in 0..g.len() {
                let (x, y) = g.point(g.node(idx).0, g.node(idx).1);
                let want = theta_heat_kernel(t, 1.0, x, y);
                assert!(
                    (col.values()[idx] - want).abs() <= 1e-8 * peak,
                    "n = {n}, t = {t}, node {idx}"
                );
            }
        }
    }
}

#[test]
fn heat_semigroup_and_continuity() {
    let op = noisy_op(16, 2);
    let g = op.grid().clone();
    let u = smooth_field(&g, 4, 3, 1.0);
    let a = op.heat_apply(0.5, &u).unwrap();
    let b = op.heat_apply(0.2, &op.heat_apply(0.3, &u).unwrap()).unwrap();
    assert!(rel_err_vec(a.values(), b.values()) < 1e-8);
    let tiny = op.heat_apply(1e-8, &u).unwrap();
    assert!(rel_err_vec(tiny.values(), u.values()) < 1e-6);
}

#[test]
fn flat_heat_diagnostics() {
    let op = flat_op(32);
    let r = op.heat_kernel_diagnostics(&[0.05, 0.1, 0.5]).unwrap();
    assert!(r.epsilon >= 1.0 - 1e-6, "epsilon {}", r.epsilon);
    assert!(r.min_kernel > 0.0);
    assert_eq!(r.nonpositive_count, 0);
    let r = op.heat_kernel_diagnostics(&[0.1]).unwrap();
    // The flat-torus kernel decays like exp(-d²/4t).
    assert!(r.a2 >= 0.2 && r.a2 <= 5.0, "a2 {}", r.a2);
    assert!(op.heat_kernel_diagnostics(&[1.5]).is_err());
}

#[test]
fn noisy_heat_kernel_positive_at_64() {
    let op = noisy_op(64, 1);
    let r = op.heat_kernel_diagnostics(&[0.05, 0.1, 0.5]).unwrap();
    assert!(r.min_kernel > 0.0, "min kernel {}", r.min_kernel);
    let (lo, hi) = (r.green_ratio_low.unwrap(), r.green_ratio_high.unwrap());
    assert!(lo > 0.0 && hi / lo <= 50.0, "ratios {lo} {hi}");
}

#[test]
fn energy_norm_dominates_l2() {
    let op = noisy_op(16, 9);
    let g = op.grid().clone();
    for seed in 0..100 {
        let u = uniform_field(&g, 100 + seed, 1.0);
        let e = op.energy_norm(&u).unwrap().powi(2);
        assert!(e >= inner_l2(&u, &u).unwrap() * (1.0 - 1e-12));
    }
}

fn seeded_potential(g: &TorusGrid) -> Potential {
    // Smooth field shifted down so that a few eigenvalues are negative.
    let f = smooth_field(g, 77, 2, 2.0).map(|v| v - 1.5);
    Potential::new(f, f64::INFINITY).unwrap()
}

#[test]
fn eigendecompose_matches_dense() {
    let op = noisy_op(8, 11);
    let g = op.grid().clone();
    let a = seeded_potential(&g);
    let mut dense = dense_neg_hc(&op);
    dense.add_diag(a.field().values());
    let (vals, vecs) = jacobi_eigen(&dense);
    let s = eigendecompose(&op, &a, 6).unwrap();
    let h = g.h();
    for i in 0..6 {
        assert!(rel_err(s.eigenvalues[i], vals[i]) < 1e-8, "μ_{i}: {} vs {}", s.eigenvalues[i], vals[i]);
        // Eigenfields are L²-normalized, the oracle vectors Euclidean-normalized.
        let e: Vec<f64> = s.eigenfields[i].values().iter().map(|x| x * h).collect();
        let dotp: f64 = e.iter().zip(&vecs[i]).map(|(a, b)| a * b).sum();
        let aligned: Vec<f64> = vecs[i].iter().map(|x| x * dotp.signum()).collect();
        assert!(rel_err_vec(&e, &aligned) < 1e-8, "e_{i}");
    }
    let m = vals.iter().rposition(|&v| v <= 0.0).map_or(-1, |i| i as i64);
    assert_eq!(s.m, m);
    assert!(s.m >= 0, "test potential should produce negative eigenvalues");

    let exclude: Vec<Vec<f64>> = vecs[..(m + 1) as usize].to_vec();
    let want = min_generalized_on_complement(&dense, &dense_neg_hc(&op), &exclude);
    assert!(rel_err(s.delta, want) < 1e-8, "δ {} vs {}", s.delta, want);
    assert!(rel_err(gap_delta(&op, &a, &s).unwrap(), want) < 1e-8);
}

#[test]
fn spectrum_invariants() {
    let op = noisy_op(16, 13);
    let g = op.grid().clone();
    let a = Potential::builtin(&g, "spike").unwrap();
    let s = eigendecompose(&op, &a, 8).unwrap();
    for i in 0..8 {
        for j in 0..8 {
            let ip = inner_l2(&s.eigenfields[i], &s.eigenfields[j]).unwrap();
            assert!((ip - if i == j { 1.0 } else { 0.0 }).abs() <= 1e-8);
        }
        let au = op.apply_neg_hc(&s.eigenfields[i]).unwrap().add(&s.eigenfields[i].mul(a.field()));
        let rq = inner_l2(&s.eigenfields[i], &au).unwrap();
        assert!((rq - s.eigenvalues[i]).abs() <= 1e-7 * (1.0 + s.eigenvalues[i].abs()));
        if i > 0 {
            assert!(s.eigenvalues[i] >= s.eigenvalues[i - 1]);
        }
    }
    // Min-max: random Rayleigh quotients never undercut μ₀.
    for seed in 0..200 {
        let u = uniform_field(&g, 1000 + seed, 1.0);
        let au = op.apply_neg_hc(&u).unwrap().add(&u.mul(a.field()));
        let rq = inner_l2(&u, &au).unwrap() / inner_l2(&u, &u).unwrap();
        assert!(rq >= s.eigenvalues[0] - 1e-8);
    }
}

#[test]
fn flat_spectrum_examples() {
    let op = flat_op(16);
    let g = op.grid().clone();
    let s = eigendecompose(&op, &Potential::constant(&g, 0.0), 6).unwrap();
    for (mu, want) in s.eigenvalues.iter().zip([1.0, 2.0, 2.0, 2.0, 2.0, 3.0]) {
        assert!((mu - want).abs() <= 1e-10, "{:?}", s.eigenvalues);
    }
    assert_eq!(s.m, -1);
    assert!((s.delta - 1.0).abs() < 1e-10);

    // Constant shift by -3: -2, -1 (×4), 0 (×4), then 2.
    let s = eigendecompose(&op, &Potential::constant(&g, -3.0), 12).unwrap();
    assert!((s.eigenvalues[0] + 2.0).abs() < 1e-10);
    assert_eq!(s.m, 8);
    assert!((s.eigenvalues[9] - 2.0).abs() < 1e-10);

    let s = eigendecompose(&op, &Potential::constant(&g, 0.5), 3).unwrap();
    assert!(s.delta >= 1.0 - 1e-12);
}

#[test]
fn degenerate_eigenfields_are_reproducible() {
    let op = flat_op(16);
    let g = op.grid().clone();
    let a = Potential::constant(&g, 0.0);
    let s1 = eigendecompose(&op, &a, 6).unwrap();
    let s2 = eigendecompose(&op, &a, 6).unwrap();
    for (x, y) in s1.eigenfields.iter().zip(&s2.eigenfields) {
        assert_eq!(x.values(), y.values());
        // Largest-magnitude entry is positive.
        let big = x.values().iter().copied().fold(0.0_f64, |m, v| if v.abs() > m.abs() { v } else { m });
        assert!(big > 0.0);
    }
}

#[test]
fn eigendecompose_argument_errors() {
    let op = flat_op(8);
    let g = op.grid().clone();
    assert!(eigendecompose(&op, &Potential::constant(&g, 0.0), 0).is_err());
    assert!(eigendecompose(&op, &Potential::constant(&g, 0.0), 65).is_err());
    let other = Potential::constant(&TorusGrid::new(10).unwrap(), 0.0);
    assert!(eigendecompose(&op, &other, 3).is_err());
    assert!(Potential::new(GridField::zeros(&g), 1.0).is_err());
    assert!(Potential::builtin(&g, "nope").is_err());
    assert!(Potential::builtin(&g, "const").is_err());
}

#[test]
fn kato_log_examples() {
    let g = TorusGrid::new(256).unwrap();
    let r = 0.1;
    let v = kato_modulus_log(&Potential::constant(&g, 1.0), r).unwrap();
    let analytic = PI * r * r * (0.5 - r.ln());
    assert!(rel_err(v, analytic) < 0.1, "{v} vs {analytic}");
    assert_eq!(kato_modulus_log(&Potential::constant(&g, 0.0), r).unwrap(), 0.0);
    assert!(kato_modulus_log(&Potential::constant(&g, 1.0), g.h() * 0.5).is_err());
    assert!(kato_modulus_log(&Potential::constant(&g, 1.0), 1.5).is_err());
}

#[test]
fn kato_log_matches_direct_sum() {
    let g = TorusGrid::new(16).unwrap();
    let a = Potential::new(uniform_field(&g, 3, 2.0), 2.0).unwrap();
    let r = 0.9;
    let h = g.h();
    let mut want = 0.0_f64;
    for x in 0..g.len() {
        let mut s = 0.0;
        for y in 0..g.len() {
            let d = g.geodesic_dist(g.node(x), g.node(y));
            let k = if x == y { (0.5 * h).ln().abs() } else if d < r { d.ln().abs() } else { 0.0 };
            s += k * a.field().values()[y].abs();
        }
        want = want.max(s * g.cell_measure());
    }
    assert!(rel_err(kato_modulus_log(&a, r).unwrap(), want) < 1e-10);
}

#[test]
fn kato_heat_flat_constant() {
    let op = flat_op(16);
    let g = op.grid().clone();
    for t in [1.0, 0.5, 0.1] {
        let v = kato_modulus_heat(&op, &Potential::constant(&g, 1.0), t).unwrap();
        let exact = 1.0 - (-t).exp();
        assert!(rel_err(v, exact) < 1e-2, "T = {t}: {v} vs {exact}");
    }
    assert_eq!(kato_modulus_heat(&op, &Potential::constant(&g, 0.0), 0.5).unwrap(), 0.0);
    assert!(kato_modulus_heat(&op, &Potential::constant(&g, 1.0), 2.0).is_err());
}

#[test]
fn kato_heat_decreases_for_l2_potential() {
    let op = noisy_op(16, 6);
    let g = op.grid().clone();
    let a = Potential::new(uniform_field(&g, 12, 3.0), 2.0).unwrap();
    let mut prev = f64::INFINITY;
    for k in 0..7 {
        let t = 0.5f64.powi(k);
        let v = kato_modulus_heat(&op, &a, t).unwrap();
        assert!(v < prev);
        prev = v;
    }
}

#[test]
fn resolvent_sup_norm_examples() {
    let op = flat_op(16);
    let g = op.grid().clone();
    for lambda in [0.0, 1.0, 10.0, 100.0, 1000.0] {
        let v = resolvent_sup_norm(&op, &Potential::constant(&g, 1.0), lambda).unwrap();
        assert!((v - 1.0 / (1.0 + lambda)).abs() < 1e-10);
    }
    assert_eq!(resolvent_sup_norm(&op, &Potential::constant(&g, 0.0), 1.0).unwrap(), 0.0);

    let op = noisy_op(8, 3);
    let g = op.grid().clone();
    let a = Potential::new(uniform_field(&g, 5, 1.0), 2.0).unwrap();
    let mut dense = dense_neg_hc(&op);
    dense.add_diag(&vec![10.0; g.len()]);
    let abs_a: Vec<f64> = a.field().values().iter().map(|v| v.abs()).collect();
    let want = solve(&dense, &abs_a).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    assert!(rel_err(resolvent_sup_norm(&op, &a, 10.0).unwrap(), want) < 1e-8);
}

#[test]
fn form_bound_matches_dense() {
    let op = noisy_op(8, 21);
    let g = op.grid().clone();
    let a = Potential::new(uniform_field(&g, 22, 6.0), 2.0).unwrap();
    for eta in [0.1, 0.5, 2.0] {
        let mut m = dense_neg_hc(&op);
        m.data.iter_mut().for_each(|x| *x *= -eta);
        let abs_a: Vec<f64> = a.field().values().iter().map(|v| v.abs()).collect();
        m.add_diag(&abs_a);
        let (vals, _) = jacobi_eigen(&m);
        let want = vals[vals.len() - 1].max(0.0);
        let got = form_bound_constant(&op, &a, eta).unwrap();
        assert!((got - want).abs() <= 1e-8 * (1.0 + want), "η = {eta}: {got} vs {want}");
    }

    let flat = flat_op(16);
    let g = flat.grid().clone();
    let one = Potential::constant(&g, 1.0);
    assert!((form_bound_constant(&flat, &one, 0.5).unwrap() - 0.5).abs() < 1e-10);
    assert_eq!(form_bound_constant(&flat, &one, 1.0).unwrap(), 0.0);
    assert!(form_bound_constant(&flat, &one, 0.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn apply_h_is_symmetric(seed in 0u64..1000, s1 in 0u64..1000, s2 in 0u64..1000) {
        let op = noisy_op(8, seed);
        let g = op.grid().clone();
        let u = uniform_field(&g, s1, 1.0);
        let v = uniform_field(&g, s2 + 5000, 1.0);
        let a = inner_l2(&op.apply_h(&u).unwrap(), &v).unwrap();
        let b = inner_l2(&u, &op.apply_h(&v).unwrap()).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
    }

    #[test]
    fn resolvent_inverts(seed in 0u64..1000, lambda in 0.0f64..50.0) {
        let op = noisy_op(8, seed);
        let g = op.grid().clone();
        let rhs = uniform_field(&g, seed + 1, 1.0);
        let x = op.resolvent_solve(lambda, &rhs).unwrap();
        let back = op.apply_neg_hc(&x).unwrap().axpy(lambda, &x);
        prop_assert!(rel_err_vec(back.values(), rhs.values()) < 1e-8);
    }

    #[test]
    fn form_bound_monotone_and_valid(seed in 0u64..200) {
        let op = noisy_op(8, seed);
        let g = op.grid().clone();
        let a = Potential::new(uniform_field(&g, seed + 3, 4.0), 2.0).unwrap();
        let m1 = form_bound_constant(&op, &a, 0.25).unwrap();
        let m2 = form_bound_constant(&op, &a, 0.5).unwrap();
        prop_assert!(m2 <= m1 + 1e-9);
        let u = uniform_field(&g, seed + 7, 1.0);
        let lhs = inner_l2(&u, &u.mul(&a.field().abs())).unwrap();
        let rhs = 0.25 * op.energy_norm(&u).unwrap().powi(2) + m1 * inner_l2(&u, &u).unwrap();
        prop_assert!(lhs <= rhs + 1e-8);
    }

    #[test]
    fn kato_log_monotone_in_radius(seed in 0u64..200, r in 0.45f64..0.95) {
        let g = TorusGrid::new(32).unwrap();
        let a = Potential::new(uniform_field(&g, seed, 1.0), 2.0).unwrap();
        let small = kato_modulus_log(&a, r / 2.0).unwrap();
        prop_assert!(small <= kato_modulus_log(&a, r).unwrap() + 1e-14);
    }
}
