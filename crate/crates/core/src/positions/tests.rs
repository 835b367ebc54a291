use super::*;
use crate::gaussian::Symmetrization;
use approx::assert_relative_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn sample(seed: u64, count: usize, dim: usize, sym: Symmetrization) -> GaussianSample {
    GaussianSample::with_options(seed, 0, count, dim, sym).unwrap()
}

fn gaussian_matrix(r: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| r.sample(StandardNormal))
}

fn random_spd(r: &mut ChaCha8Rng, n: usize, spread: f64) -> PositionMap {
    let s = gaussian_matrix(r, n) * spread;
    PositionMap::from_symmetric_log(&traceless_matrix(&s)).unwrap()
}

fn random_traceless(r: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let s = traceless_matrix(&gaussian_matrix(r, n));
    &s / s.norm()
}

fn off_diagonal(m: &DMatrix<f64>) -> f64 {
    let mut out: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j {
                out = out.max(m[(i, j)].abs());
            }
        }
    }
    out
}

fn second_moments(s: &GaussianSample) -> Vec<f64> {
    let x = s.vectors();
    (0..s.dim())
        .map(|i| x.row(i).iter().map(|v| v * v).sum::<f64>() / s.count() as f64)
        .collect()
}

#[test]
fn ball_is_already_in_position() {
    let s = sample(1, 3000, 6, Symmetrization::CyclicShifts);
    let res = solve_ell_position(&ConvexBody::euclidean_ball(6), &s, &EllPositionOptions::default()).unwrap();
    assert!(res.residual <= 1e-8);
    assert!((res.map.matrix() - DMatrix::identity(6, 6)).amax() < 1e-10);
}

#[test]
fn diagonal_ellipsoid_matches_am_gm() {
    // Σ v_i a_i² m_i is minimal under Π a_i = 1 at a_i ∝ (v_i m_i)^{-1/2},
    // so P = A⁻¹ has entries ∝ (v_i m_i)^{1/2}.
    let mut r = rng(2);
    for (seed, v) in [
        (3u64, vec![4.0, 1.0]),
        (4, (0..5).map(|_| r.sample::<f64, _>(StandardNormal).exp()).collect::<Vec<_>>()),
    ] {
        let n = v.len();
        let s = sample(seed, 20_000, n, Symmetrization::None);
        let k = ConvexBody::diagonal_ellipsoid(&v).unwrap();
        let res = solve_ell_position(&k, &s, &EllPositionOptions::default()).unwrap();
        assert!(res.converged);
        let m = second_moments(&s);
        let raw: Vec<f64> = (0..n).map(|i| (v[i] * m[i]).sqrt()).collect();
        let gm = linalg::geometric_mean(&raw);
        let got = res.map.diagonal_entries().unwrap();
        for i in 0..n {
            assert!((got[i].ln() - (raw[i] / gm).ln()).abs() < 1e-8, "{got:?} vs {raw:?}");
        }
        // P(K) is then a ball up to the SAA moments.
        let pk = ConvexBody::linear_image(&res.map, &k).unwrap();
        assert!(pk.out_radius() / pk.in_radius() < 1.05);
    }
}

#[test]
fn two_dimensional_example_normalization() {
    let s = sample(5, 4000, 2, Symmetrization::CyclicShifts);
    let res = solve_ell_position(&ConvexBody::diagonal_ellipsoid(&[4.0, 1.0]).unwrap(), &s, &EllPositionOptions::default()).unwrap();
    let d = res.map.diagonal_entries().unwrap();
    assert_relative_eq!(d[0], 2f64.sqrt(), max_relative = 1e-9);
    assert_relative_eq!(d[1], 1.0 / 2f64.sqrt(), max_relative = 1e-9);
}

#[test]
fn cross_polytope_is_in_position_at_identity() {
    let s = sample(6, 4000, 4, Symmetrization::CyclicShifts);
    let k = ConvexBody::cross_polytope(4);
    let res = solve_ell_position(&k, &s, &EllPositionOptions::default()).unwrap();
    assert!(res.residual <= 1e-6);
    assert!((res.map.matrix() - DMatrix::identity(4, 4)).amax() < 1e-8);
    let mut r = rng(7);
    let base = ell2_at(&k, &res.map, &s).unwrap();
    for _ in 0..20 {
        let d: Vec<f64> = (0..4).map(|_| r.sample(StandardNormal)).collect();
        let d = traceless(&DVector::from_vec(d));
        let p = PositionMap::from_log_diagonal((d.normalize() * 1e-2).as_slice()).unwrap();
        assert!(base <= ell2_at(&k, &p, &s).unwrap());
    }
}

#[test]
fn local_optimality_under_full_perturbations() {
    let mut r = rng(8);
    let n = 4;
    let s = sample(9, 8000, n, Symmetrization::SignFlips);
    for k in [
        ConvexBody::cross_polytope(n),
        ConvexBody::cube(n),
        ConvexBody::weighted_lp(3.0, &[1.0, 2.0, 0.5, 4.0]).unwrap(),
        ConvexBody::diagonal_ellipsoid(&[1.0, 9.0, 0.3, 2.0]).unwrap(),
        ConvexBody::weighted_lp(1.0, &[1.0, 2.0, 3.0, 4.0]).unwrap(),
    ] {
        let res = solve_ell_position(&k, &s, &EllPositionOptions::default()).unwrap();
        assert!(res.objective <= res.objective_start);
        let a_half = linalg::sym_sqrt(res.map.inverse());
        for _ in 0..20 {
            let e = linalg::sym_exp(&(random_traceless(&mut r, n) * 1e-2));
            let a = &a_half * e * &a_half;
            let p = PositionMap::new(linalg::inverse(&a).unwrap()).unwrap();
            assert!(res.objective <= ell2_at(&k, &p, &s).unwrap() * (1.0 + 1e-12), "{}", k.describe());
        }
    }
}

#[test]
fn unrestricted_solver_commutes_with_sign_flips() {
    let mut r = rng(10);
    let n = 4;
    let s = sample(11, 4000, n, Symmetrization::SignFlips);
    let opts = |start| EllPositionOptions {
        tol: 1e-10,
        max_iter: 5000,
        structure: Structure::Full,
        start,
        ..Default::default()
    };
    for k in [
        ConvexBody::diagonal_ellipsoid(&[1.0, 9.0, 0.3, 2.0]).unwrap(),
        ConvexBody::weighted_lp(3.0, &[1.0, 2.0, 0.5, 4.0]).unwrap(),
        ConvexBody::weighted_lp(1.5, &[2.0, 1.0, 1.0, 0.5]).unwrap(),
    ] {
        let res = solve_ell_position(&k, &s, &opts(Some(random_spd(&mut r, n, 0.3)))).unwrap();
        let t = res.map.matrix();
        assert!(off_diagonal(t) <= 1e-6 * t.norm(), "{} {}", k.describe(), off_diagonal(t));
        let diag = solve_ell_position(&k, &s, &EllPositionOptions::default()).unwrap();
        assert_relative_eq!(res.objective, diag.objective, max_relative = 1e-9);
    }
    let k = ConvexBody::cross_polytope(n);
    let res = solve_ell_position(&k, &s, &opts(None)).unwrap();
    let t = res.map.matrix();
    assert!(off_diagonal(t) <= 1e-6 * t.norm());
}

#[test]
fn general_ellipsoid_reaches_determinant_bound() {
    // mean xᵀAᵀQAx = tr(AᵀQA Σ) ≥ n det(QΣ)^{1/n} when det A = 1.
    let mut r = rng(12);
    let n = 4;
    let b = gaussian_matrix(&mut r, n);
    let q = &b * b.transpose() + DMatrix::identity(n, n) * 0.5;
    let k = ConvexBody::ellipsoid(q.clone()).unwrap();
    let s = sample(13, 5000, n, Symmetrization::None);
    let x = s.vectors();
    let cov = x * x.transpose() / s.count() as f64;
    let bound = n as f64 * (q * cov).determinant().powf(1.0 / n as f64);
    let opts = EllPositionOptions {
        tol: 1e-7,
        max_iter: 5000,
        ..Default::default()
    };
    let res = solve_ell_position(&k, &s, &opts).unwrap();
    assert!(res.converged);
    assert_eq!(res.structure, Structure::Full);
    assert_relative_eq!(res.objective.powi(2), bound, max_relative = 1e-9);
    assert!(res.map.is_det_normalized());
    assert!(linalg::sym_eigenvalues(res.map.matrix())[0] > 0.0);
}

#[test]
fn orthogonal_images_share_the_optimum() {
    let mut r = rng(14);
    let n = 4;
    let u = linalg::orthonormalize(&gaussian_matrix(&mut r, n)).unwrap();
    let k = ConvexBody::weighted_lp(3.0, &[1.0, 2.0, 0.5, 4.0]).unwrap();
    let uk = ConvexBody::linear_image(&PositionMap::new(u).unwrap(), &k).unwrap();
    let s = sample(15, 20_000, n, Symmetrization::None);
    let a = solve_ell_position(&k, &s, &EllPositionOptions::default()).unwrap();
    let opts = EllPositionOptions {
        max_iter: 2000,
        ..Default::default()
    };
    let b = solve_ell_position(&uk, &s, &opts).unwrap();
    let se = gaussian::ell(&ConvexBody::linear_image(&a.map, &k).unwrap(), 2, &s).unwrap().se;
    assert!((a.objective - b.objective).abs() <= 3.0 * se, "{} {} {se}", a.objective, b.objective);
}

#[test]
fn generic_diagonal_path_matches_newton() {
    // An H-polytope description of the cube bypasses the closed form.
    let n = 3;
    let s = sample(16, 6000, n, Symmetrization::None);
    let w = [1.0, 3.0, 0.5];
    let k = ConvexBody::weighted_lp(1.0, &w).unwrap();
    let rows = DMatrix::from_fn(1 << n, n, |r, c| if (r >> c) & 1 == 1 { -w[c] } else { w[c] });
    let h = ConvexBody::polytope_h(rows).unwrap();
    let newton = solve_ell_position(&k, &s, &EllPositionOptions::default()).unwrap();
    let opts = EllPositionOptions {
        structure: Structure::Diagonal,
        tol: 1e-8,
        max_iter: 2000,
        ..Default::default()
    };
    let generic = solve_ell_position(&h, &s, &opts).unwrap();
    assert_relative_eq!(newton.objective, generic.objective, max_relative = 1e-8);
    let (dn, dg) = (newton.map.diagonal_entries().unwrap(), generic.map.diagonal_entries().unwrap());
    for i in 0..n {
        assert!((dn[i] - dg[i]).abs() < 1e-4);
    }
}

#[test]
fn objective_never_exceeds_start() {
    let mut r = rng(17);
    let n = 3;
    let s = sample(18, 2000, n, Symmetrization::None);
    let k = ConvexBody::polytope_v(DMatrix::from_fn(6, n, |_, _| r.sample(StandardNormal))).unwrap();
    let start = random_spd(&mut r, n, 0.5);
    let res = solve_ell_position(
        &k,
        &s,
        &EllPositionOptions {
            start: Some(start.clone()),
            max_iter: 50,
            ..Default::default()
        },
    )
    .unwrap();
    assert_relative_eq!(res.objective_start, ell2_at(&k, &start, &s).unwrap(), max_relative = 1e-12);
    assert!(res.objective <= res.objective_start);
    assert_relative_eq!(res.objective, ell2_at(&k, &res.map, &s).unwrap(), max_relative = 1e-9);
}

#[test]
fn product_of_ball_is_squared_mean_norm() {
    let n = 8;
    let s = sample(19, 10_000, n, Symmetrization::None);
    let p = ell_product(&ConvexBody::euclidean_ball(n), &s).unwrap();
    assert_eq!(p.ell, p.ell_star);
    assert!(p.value <= n as f64);
    assert!((p.value.sqrt() - gaussian::expected_gaussian_norm(n)).abs() < 3.0 * p.se);
}

#[test]
fn product_is_scale_invariant() {
    let s = sample(20, 5000, 5, Symmetrization::None);
    let k = ConvexBody::weighted_lp(1.5, &[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
    let a = ell_product(&k, &s).unwrap();
    let b = ell_product(&k.scaled(2.5).unwrap(), &s).unwrap();
    assert_relative_eq!(a.value, b.value, max_relative = 1e-12);
}

#[test]
fn solved_position_lowers_the_product() {
    let mut r = rng(21);
    let n = 16;
    let s = sample(22, 20_000, n, Symmetrization::None);
    let k = ConvexBody::cross_polytope(n);
    let res = solve_ell_position(
        &k,
        &s,
        &EllPositionOptions {
            compute_product: true,
            ..Default::default()
        },
    )
    .unwrap();
    let solved = res.product.unwrap();
    let normalized = solved.value / (n as f64 * (1.0 + n as f64).ln());
    assert!(normalized > 0.0 && normalized < 10.0);
    let other = random_spd(&mut r, n, 0.3);
    let random = ell_product(&ConvexBody::linear_image(&other, &k).unwrap(), &s).unwrap();
    assert!(solved.value <= random.value);
}

#[test]
fn balance_scale_examples() {
    let n = 4;
    let s = sample(23, 20_000, n, Symmetrization::None);
    assert_relative_eq!(balance_scale(&ConvexBody::euclidean_ball(n), 0.5, &s).unwrap(), 1.0, epsilon = 1e-12);
    let k = ConvexBody::weighted_lp(1.0, &[1.0, 2.0, 3.0, 4.0]).unwrap();
    let a0 = balance_scale(&k, 0.0, &s).unwrap();
    let l = gaussian::ell(&k, 1, &s).unwrap().value;
    let ls = gaussian::ell_star(&k, 1, &s).unwrap().value;
    assert_relative_eq!(a0, (l / ls).sqrt(), max_relative = 1e-12);
    for theta in [0.0, 0.5] {
        let a = balance_scale(&k, theta, &s).unwrap();
        let kt = interpolate(&InterpolationPair::new(k.scaled(a).unwrap(), ConvexBody::euclidean_ball(n), theta).unwrap()).unwrap();
        let el = gaussian::ell(&kt, 1, &s).unwrap();
        let es = gaussian::ell_star(&kt, 1, &s).unwrap();
        assert!((el.value - es.value).abs() <= 3.0 * el.se.hypot(es.se));
        assert_relative_eq!(el.value, es.value, max_relative = 1e-10);
    }
}

#[test]
fn balance_scale_needs_a_tractable_body() {
    let s = sample(24, 100, 2, Symmetrization::None);
    let h = ConvexBody::polytope_h(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0])).unwrap();
    assert!(matches!(balance_scale(&h, 0.5, &s), Err(GeomError::NotTractable(_))));
    assert!(balance_scale(&h, 0.0, &s).is_ok());
    assert!(balance_scale(&h, 1.0, &s).is_err());
}
