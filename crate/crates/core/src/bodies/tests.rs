use super::*;
use approx::assert_relative_eq;
use rand::Rng;
use rand_distr::StandardNormal;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian_vec(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.sample(StandardNormal)).collect()
}

fn random_matrix(r: &mut ChaCha8Rng, m: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, n, |_, _| r.sample(StandardNormal))
}

fn ell(diag: &[f64]) -> ConvexBody {
    ConvexBody::diagonal_ellipsoid(diag).unwrap()
}

#[test]
fn gauge_examples() {
    let b1 = ConvexBody::cross_polytope(2);
    assert_eq!(b1.gauge(&[1.0, 1.0]).unwrap(), 2.0);
    assert_relative_eq!(ell(&[0.25, 1.0]).gauge(&[2.0, 0.0]).unwrap(), 1.0, epsilon = 1e-15);
    let b3 = ConvexBody::lp_ball(2, 3.0).unwrap();
    assert_relative_eq!(b3.gauge(&[1.0, 1.0]).unwrap(), 2f64.powf(1.0 / 3.0), epsilon = 1e-14);
    assert_eq!(b1.gauge(&[0.0, 0.0]).unwrap(), 0.0);
}

#[test]
fn support_examples() {
    let b1 = ConvexBody::cross_polytope(2);
    assert_eq!(b1.support(&[1.0, 1.0]).unwrap(), 1.0);
    assert_relative_eq!(ell(&[0.25, 1.0]).support(&[1.0, 0.0]).unwrap(), 2.0, epsilon = 1e-14);
    let b2 = ConvexBody::euclidean_ball(5);
    let mut r = rng(3);
    for _ in 0..20 {
        let y = crate::sphere::random_unit(&mut r, 5);
        assert_relative_eq!(b2.support(y.as_slice()).unwrap(), 1.0, epsilon = 1e-14);
    }
}

#[test]
fn input_errors() {
    let b = ConvexBody::cube(3);
    assert_eq!(
        b.gauge(&[1.0, 2.0]),
        Err(GeomError::DimensionMismatch { expected: 3, got: 2 })
    );
    assert_eq!(b.gauge(&[1.0, f64::NAN, 0.0]), Err(GeomError::NonFinite));
    assert!(matches!(
        ConvexBody::polytope_h(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0])),
        Err(GeomError::Degenerate(_))
    ));
    assert!(matches!(
        ConvexBody::diagonal_ellipsoid(&[1.0, 0.0]),
        Err(GeomError::Degenerate(_))
    ));
    assert!(ConvexBody::weighted_lp(0.5, &[1.0]).is_err());
}

#[test]
fn polar_closed_forms() {
    let mut r = rng(11);
    let cube = ConvexBody::cube(4);
    let p = ConvexBody::cross_polytope(4).polar().unwrap();
    for _ in 0..1000 {
        let x = gaussian_vec(&mut r, 4);
        assert_relative_eq!(p.gauge(&x).unwrap(), cube.gauge(&x).unwrap(), max_relative = 1e-12);
    }
    let e = ell(&[0.25, 1.0]).polar().unwrap();
    let Family::Ellipsoid { matrix } = e.family() else { panic!() };
    assert_relative_eq!(matrix[(0, 0)], 4.0, epsilon = 1e-14);
    assert_relative_eq!(matrix[(1, 1)], 1.0, epsilon = 1e-14);
}

#[test]
fn weighted_lp_polar_weights() {
    // polar of (p, v) is (p*, v^{-p*/p}).
    let (p, v) = (3.0, [1.0, 2.0, 5.0]);
    let q = 1.5;
    let expected: Vec<f64> = v.iter().map(|w: &f64| w.powf(-q / p)).collect();
    let polar = ConvexBody::weighted_lp(p, &v).unwrap().polar().unwrap();
    let Family::WeightedLp { p: pq, weights } = polar.family() else { panic!() };
    assert_relative_eq!(*pq, q, epsilon = 1e-14);
    for (a, b) in weights.iter().zip(&expected) {
        assert_relative_eq!(a, b, max_relative = 1e-12);
    }
}

#[test]
fn polar_involution_random_h_polytope() {
    let mut r = rng(5);
    let k = ConvexBody::polytope_h(random_matrix(&mut r, 10, 3)).unwrap();
    let kk = k.polar().unwrap().polar().unwrap();
    let wrapped = k.polar_wrapped().unwrap().polar_wrapped().unwrap();
    for _ in 0..1000 {
        let x = gaussian_vec(&mut r, 3);
        let g = k.gauge(&x).unwrap();
        assert_relative_eq!(kk.gauge(&x).unwrap(), g, max_relative = 1e-9);
        assert_relative_eq!(wrapped.gauge(&x).unwrap(), g, max_relative = 1e-9);
    }
}

#[test]
fn support_equals_polar_gauge_all_families() {
    let mut r = rng(8);
    let bodies = vec![
        ConvexBody::cross_polytope(4),
        ConvexBody::cube(4),
        ConvexBody::weighted_lp(1.5, &[1.0, 2.0, 0.5, 3.0]).unwrap(),
        ConvexBody::weighted_lp(3.0, &[1.0, 2.0, 0.5, 3.0]).unwrap(),
        ConvexBody::weighted_lp(f64::INFINITY, &[1.0, 2.0, 0.5, 3.0]).unwrap(),
        ell(&[1.0, 4.0, 0.25, 9.0]),
        ConvexBody::polytope_h(random_matrix(&mut r, 9, 4)).unwrap(),
        ConvexBody::polytope_v(random_matrix(&mut r, 9, 4)).unwrap(),
    ];
    for k in &bodies {
        let polar = k.polar().unwrap();
        for _ in 0..1000 {
            let y = gaussian_vec(&mut r, 4);
            let h = k.support(&y).unwrap();
            assert_relative_eq!(polar.gauge(&y).unwrap(), h, max_relative = 1e-9);
        }
    }
}

#[test]
fn support_point_attains_support() {
    let mut r = rng(9);
    let k = ConvexBody::polytope_v(random_matrix(&mut r, 7, 3)).unwrap();
    for _ in 0..50 {
        let y = gaussian_vec(&mut r, 3);
        let (h, x) = k.support_point(&y).unwrap();
        assert_relative_eq!(x.dot(&DVector::from_column_slice(&y)), h, max_relative = 1e-9);
        assert!(k.gauge(x.as_slice()).unwrap() <= 1.0 + 1e-9);
    }
}

#[test]
fn linear_image_examples() {
    let b2 = ConvexBody::euclidean_ball(2);
    let t = PositionMap::diagonal(&[2.0, 0.5]).unwrap();
    assert_relative_eq!(
        ConvexBody::linear_image(&t, &b2).unwrap().gauge(&[2.0, 0.0]).unwrap(),
        1.0,
        epsilon = 1e-15
    );
    let id = ConvexBody::linear_image(&PositionMap::identity(2), &b2).unwrap();
    assert_eq!(id.gauge(&[0.3, -0.4]).unwrap(), b2.gauge(&[0.3, -0.4]).unwrap());
}

#[test]
fn linear_image_duality_identity() {
    let mut r = rng(21);
    let k = ConvexBody::cross_polytope(3);
    let t = PositionMap::new(random_matrix(&mut r, 3, 3)).unwrap();
    let lhs = ConvexBody::linear_image(&t, &k).unwrap().polar().unwrap();
    let rhs = ConvexBody::linear_image(&t.adjoint_inverse_map(), &k.polar().unwrap()).unwrap();
    let generic = ConvexBody::linear_image(&t, &k).unwrap().polar_wrapped().unwrap();
    for _ in 0..1000 {
        let y = gaussian_vec(&mut r, 3);
        let a = lhs.gauge(&y).unwrap();
        assert_relative_eq!(a, rhs.gauge(&y).unwrap(), max_relative = 1e-9);
        assert_relative_eq!(a, generic.gauge(&y).unwrap(), max_relative = 1e-9);
    }
}

#[test]
fn radii_closed_forms() {
    let c = ConvexBody::cube(2).radii();
    assert!(c.exact);
    assert_relative_eq!(c.inner, 1.0, epsilon = 1e-14);
    assert_relative_eq!(c.outer, 2f64.sqrt(), epsilon = 1e-14);
    let o = ConvexBody::cross_polytope(4).radii();
    assert_relative_eq!(o.inner, 0.5, epsilon = 1e-14);
    assert_relative_eq!(o.outer, 1.0, epsilon = 1e-14);
    let e = ell(&[0.25, 1.0, 4.0]).radii();
    assert_relative_eq!(e.inner, 0.5, epsilon = 1e-14);
    assert_relative_eq!(e.outer, 2.0, epsilon = 1e-14);
}

#[test]
fn radii_of_v_polytope_are_vertex_norms() {
    let mut r = rng(4);
    let v = random_matrix(&mut r, 6, 3);
    let k = ConvexBody::polytope_v(v.clone()).unwrap();
    let max_vertex = v.row_iter().map(|row| row.norm()).fold(0.0, f64::max);
    assert_relative_eq!(k.out_radius(), max_vertex, max_relative = 1e-9);
    let h = ConvexBody::polytope_h(v).unwrap();
    assert_relative_eq!(h.in_radius(), 1.0 / max_vertex, max_relative = 1e-12);
}

#[test]
fn norm_axioms_on_samples() {
    let mut r = rng(31);
    let bodies = vec![
        ConvexBody::cross_polytope(3),
        ConvexBody::weighted_lp(1.5, &[1.0, 2.0, 3.0]).unwrap(),
        ConvexBody::weighted_lp(3.0, &[1.0, 2.0, 3.0]).unwrap(),
        ConvexBody::cube(3),
        ell(&[1.0, 4.0, 0.25]),
        ConvexBody::polytope_h(random_matrix(&mut r, 6, 3)).unwrap(),
        ConvexBody::polytope_v(random_matrix(&mut r, 6, 3)).unwrap(),
        ConvexBody::cross_polytope(2).complexify().unwrap(),
    ];
    for k in &bodies {
        let n = k.dim();
        let (inner, outer) = (k.in_radius(), k.out_radius());
        for _ in 0..100 {
            let x = gaussian_vec(&mut r, n);
            let y = gaussian_vec(&mut r, n);
            let gx = k.gauge(&x).unwrap();
            let neg: Vec<f64> = x.iter().map(|v| -v).collect();
            assert_eq!(k.gauge(&neg).unwrap(), gx, "{}", k.describe());
            let lam = 3.7;
            let scaled: Vec<f64> = x.iter().map(|v| lam * v).collect();
            assert_relative_eq!(k.gauge(&scaled).unwrap(), lam * gx, max_relative = 1e-9);
            let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
            assert!(k.gauge(&sum).unwrap() <= gx + k.gauge(&y).unwrap() + 1e-9 * (1.0 + gx));
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(gx >= norm / outer * (1.0 - 1e-9) && gx <= norm / inner * (1.0 + 1e-9));
        }
    }
}

#[test]
fn symmetry_flags() {
    assert!(ConvexBody::cross_polytope(3).symmetries().permutations);
    assert!(ConvexBody::weighted_lp(3.0, &[1.0, 2.0]).unwrap().symmetries().sign_flips);
    assert!(!ConvexBody::weighted_lp(3.0, &[1.0, 2.0]).unwrap().symmetries().permutations);
    let b1v = ConvexBody::polytope_v(DMatrix::identity(3, 3)).unwrap();
    assert!(b1v.symmetries().sign_flips);
    let skew = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
    assert!(!ConvexBody::polytope_h(skew).unwrap().symmetries().sign_flips);
    assert!(ConvexBody::cube(2).complexify().unwrap().symmetries().circled);
}

#[test]
fn complexify_examples() {
    let b2 = ConvexBody::euclidean_ball(2).complexify().unwrap();
    assert_relative_eq!(b2.gauge(&[1.0, 0.0, 0.0, 1.0]).unwrap(), 1.0, epsilon = 1e-12);
    let seg = ConvexBody::cube(1).complexify().unwrap();
    assert_relative_eq!(seg.gauge(&[3.0, -4.0]).unwrap(), 5.0, epsilon = 1e-12);
    let b1 = ConvexBody::cross_polytope(2).complexify().unwrap();
    assert_relative_eq!(b1.gauge(&[1.0, 0.0, 0.0, 1.0]).unwrap(), 2f64.sqrt(), epsilon = 1e-12);
}

#[test]
fn complexified_ball_is_top_singular_value() {
    let mut r = rng(17);
    let k = ConvexBody::euclidean_ball(3).complexify().unwrap();
    for _ in 0..100 {
        let xy = gaussian_vec(&mut r, 6);
        let frame = DMatrix::from_column_slice(3, 2, &xy);
        let sigma = frame.singular_values().max();
        assert_relative_eq!(k.gauge(&xy).unwrap(), sigma, max_relative = 1e-10);
    }
}

#[test]
fn complexified_body_is_circled() {
    let mut r = rng(19);
    let k = ConvexBody::weighted_lp(1.5, &[1.0, 2.0, 0.5]).unwrap().complexify().unwrap();
    for _ in 0..50 {
        let xy = gaussian_vec(&mut r, 6);
        let phi: f64 = r.random_range(0.0..std::f64::consts::TAU);
        let (s, c) = phi.sin_cos();
        let mut rot = vec![0.0; 6];
        for i in 0..3 {
            rot[i] = c * xy[i] - s * xy[3 + i];
            rot[3 + i] = s * xy[i] + c * xy[3 + i];
        }
        assert_relative_eq!(k.gauge(&rot).unwrap(), k.gauge(&xy).unwrap(), max_relative = 1e-9);
    }
}

#[test]
fn complexified_real_section_and_projection_recover_body() {
    let mut r = rng(23);
    let base = ConvexBody::polytope_h(random_matrix(&mut r, 5, 3)).unwrap();
    let kc = base.complexify().unwrap();
    let mut c = DMatrix::zeros(6, 3);
    c.view_mut((3, 0), (3, 3)).fill_with_identity();
    let mut fiber = kc.gauge_fiber_solver(&c).unwrap();
    for _ in 0..50 {
        let x = gaussian_vec(&mut r, 3);
        let mut x0 = x.clone();
        x0.extend([0.0; 3]);
        let g = base.gauge(&x).unwrap();
        assert_relative_eq!(kc.gauge(&x0).unwrap(), g, max_relative = 1e-12);
        let (v, _) = fiber.solve(&DVector::from_column_slice(&x0)).unwrap();
        assert_relative_eq!(v, g, max_relative = 1e-7);
    }
}

#[test]
fn generic_fiber_matches_exact_projection() {
    // Complexified segment is a disk; fiber min over the imaginary axis is |x|.
    let kc = ConvexBody::cube(1).complexify().unwrap();
    let c = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]) / 2f64.sqrt();
    let mut fiber = kc.gauge_fiber_solver(&c).unwrap();
    let (v, _) = fiber.solve(&DVector::from_column_slice(&[1.0, 0.0])).unwrap();
    assert_relative_eq!(v, 0.5f64.sqrt(), max_relative = 1e-7);
}

#[test]
fn relative_out_radius_examples() {
    let b1 = ConvexBody::cross_polytope(2);
    let b2 = ConvexBody::euclidean_ball(2);
    assert_relative_eq!(b1.relative_out_radius(&b1).unwrap(), 1.0, epsilon = 1e-12);
    assert_relative_eq!(b1.relative_out_radius(&b2).unwrap(), 1.0, epsilon = 1e-12);
    assert_relative_eq!(b2.relative_out_radius(&b1).unwrap(), 2f64.sqrt(), epsilon = 1e-9);
    let e1 = ell(&[0.25, 1.0]);
    let e2 = ell(&[1.0, 9.0]);
    // max (x1² + 9x2²)/(x1²/4 + x2²) = max(4, 9)
    assert_relative_eq!(e1.relative_out_radius(&e2).unwrap(), 3.0, epsilon = 1e-12);
}

#[test]
fn weighted_lp_form_recognized() {
    let (p, s) = ell(&[4.0, 1.0]).weighted_lp_form().unwrap();
    assert_eq!(p, 2.0);
    assert_relative_eq!(s[0], 2.0);
    let (p, s) = ConvexBody::weighted_lp(3.0, &[8.0, 1.0]).unwrap().weighted_lp_form().unwrap();
    assert_eq!(p, 3.0);
    assert_relative_eq!(s[0], 2.0, epsilon = 1e-14);
    assert!(ConvexBody::polytope_v(DMatrix::identity(2, 2)).unwrap().weighted_lp_form().is_none());
}
