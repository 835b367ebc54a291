//! Property suites over the standard bodies. Each suite produces one record
//! whose quantities are the worst residuals found.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::Config;
use super::experiments::derive_seed;
use super::record::{ExperimentRecord, Quantity};
use super::zoo::{random_h_polytope, zoo_spec, ZOO};
use super::HarnessError;
use crate::bodies::ConvexBody;
use crate::gaussian::{ell, ell_star, GaussianSample, Symmetrization};
use crate::interpolation::{
    basis_vector_gauges, interpolate, phi, property_suite, theta_of_alpha, InterpolationPair, ScalarMapValues,
};
use crate::map::PositionMap;
use crate::positions::{solve_ell_position, EllPositionOptions, Structure};
use crate::random::substream;
use crate::sphere::{random_unit, AscentOptions};
use crate::subspaces::{haar_flag, haar_grassmannian, perp_identity_check, SectionBody, Subspace};
use crate::Result;

pub const SUITES: &[&str] = &[
    "scalar_maps",
    "subspaces",
    "polar_involution",
    "duality",
    "interpolation",
    "perp_identity",
    "sign_commutant",
    "radius_ell_bounds",
    "complexification",
    "monotonicity",
    "section_projection",
    "distances",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropsParams {
    /// Suites to run; all when absent.
    pub suites: Option<Vec<String>>,
    pub dim: usize,
    pub polytope_dims: Vec<usize>,
    pub directions: usize,
    pub triples: usize,
    pub samples: usize,
    pub tol: f64,
    /// Feed the duality suite a polar with unreciprocated weights.
    pub corrupt_polar: bool,
}

impl Default for PropsParams {
    fn default() -> Self {
        Self {
            suites: None,
            dim: 5,
            polytope_dims: vec![3, 6, 8],
            directions: 1000,
            triples: 50,
            samples: 20_000,
            tol: 1e-6,
            corrupt_polar: false,
        }
    }
}

struct Ctx<'a> {
    p: &'a PropsParams,
    seed: u64,
}

impl Ctx<'_> {
    fn rng(&self, tag: u64) -> ChaCha8Rng {
        substream(derive_seed(self.seed, 100), tag)
    }

    fn bodies(&self) -> Result<Vec<(String, ConvexBody)>> {
        let mut out = Vec::new();
        for name in ZOO {
            out.push((format!("{name}_{}", self.p.dim), zoo_spec(name, self.p.dim).expect("zoo").build()?));
        }
        for &n in &self.p.polytope_dims {
            out.push((format!("hpoly_{n}"), random_h_polytope(n, derive_seed(self.seed, 200 + n as u64)).build()?));
        }
        Ok(out)
    }
}

fn gaussian(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn worst(r: &mut ExperimentRecord, name: &str, value: f64, tol: f64) -> bool {
    r.push(Quantity::tolerance(name, value, tol));
    value <= tol
}

fn scalar_maps(r: &mut ExperimentRecord) -> Result<bool> {
    let mut err: f64 = 0.0;
    for alpha in [0.51, 0.6, 0.75, 1.0, 2.0, 10.0] {
        let m = ScalarMapValues::from_alpha(alpha)?;
        err = err.max((m.exponent() - 2.0 * alpha).abs() / alpha);
    }
    let phi_err = (phi(1.0)? - 1.0).abs().max((phi(0.5)? - (1.0 + 2f64.sqrt())).abs());
    let decreasing = (1..100).all(|i| phi(i as f64 / 100.0).unwrap() > phi((i + 1) as f64 / 100.0).unwrap());
    let rejects = theta_of_alpha(0.5).is_err() && theta_of_alpha(0.3).is_err();
    let mut ok = worst(r, "exponent_identity", err, 1e-12);
    ok &= worst(r, "phi_values", phi_err, 1e-12);
    r.push(Quantity::exact("phi_decreasing", f64::from(u8::from(decreasing))));
    Ok(ok && decreasing && rejects)
}

fn subspaces(ctx: &Ctx, r: &mut ExperimentRecord) -> Result<bool> {
    let mut rng = ctx.rng(2);
    let (mut ortho, mut idem, mut flag_err): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut dims_ok = true;
    for _ in 0..200 {
        let n = rng.random_range(2..=8);
        let m = rng.random_range(1..=n);
        let s = haar_grassmannian(&mut rng, n, m)?;
        let b = s.basis();
        ortho = ortho.max((b.transpose() * b - DMatrix::identity(m, m)).abs().max());
        let p = s.projector();
        idem = idem.max((&p * &p - &p).abs().max()).max((&p - p.transpose()).abs().max());
        let k = rng.random_range(1..=n / 2).max(1);
        let flag = haar_flag(&mut rng, n, k)?;
        let e2 = flag.e2()?;
        dims_ok &= e2.dim() == n - k + 1 && flag.f.dim() == n - k + 1 && flag.e.dim() == n - 2 * k + 2;
        let meet = flag.f.intersection(&e2);
        dims_ok &= meet.dim() == flag.e.dim();
        flag_err = flag_err
            .max(flag.f.containment_residual(&flag.e))
            .max(meet.containment_residual(&flag.e))
            .max(flag.e.containment_residual(&meet))
            .max(flag.f.containment_residual(&e2.orthogonal_complement()));
    }
    let mut ok = worst(r, "basis_orthonormality", ortho, 1e-12);
    ok &= worst(r, "projector_idempotence", idem, 1e-10);
    ok &= worst(r, "flag_containment", flag_err, 1e-10);
    r.push(Quantity::exact("flag_dimensions", f64::from(u8::from(dims_ok))));
    Ok(ok && dims_ok)
}

fn polar_involution(ctx: &Ctx, r: &mut ExperimentRecord) -> Result<bool> {
    let mut rng = ctx.rng(3);
    let mut err: f64 = 0.0;
    for (_, k) in ctx.bodies()? {
        let pp = k.polar()?.polar()?;
        let kp = k.polar()?;
        for _ in 0..ctx.p.directions {
            let x = gaussian(&mut rng, k.dim());
            let g = k.gauge(&x)?;
            err = err.max(rel(pp.gauge(&x)?, g)).max(rel(kp.support(&x)?, g));
        }
    }
    Ok(worst(r, "polar_polar_gauge", err, ctx.p.tol))
}

/// Polar with the exponent conjugated but the weights left as they were.
fn corrupted_polar(k: &ConvexBody) -> Result<Option<ConvexBody>> {
    let Some((p, scales)) = k.weighted_lp_form() else { return Ok(None) };
    if scales.iter().all(|s| (s - scales[0]).abs() < 1e-12) {
        return Ok(None);
    }
    let q = if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    };
    Ok(Some(ConvexBody::weighted_lp_from_scales(q, &scales)?))
}

fn duality_residual(k: &ConvexBody, polar: &ConvexBody, directions: usize, rng: &mut impl Rng) -> Result<f64> {
    let mut err: f64 = 0.0;
    for _ in 0..directions {
        let y = gaussian(rng, k.dim());
        let h = k.support(&y)?;
        err = err.max(rel(polar.gauge(&y)?, h));
    }
    Ok(err)
}

fn duality(ctx: &Ctx, r: &mut ExperimentRecord) -> Result<bool> {
    let mut rng = ctx.rng(4);
    let (mut err, mut attain, mut holder): (f64, f64, f64) = (0.0, 0.0, f64::NEG_INFINITY);
    let mut control = f64::INFINITY;
    let mut controls = 0;
    for (_, k) in ctx.bodies()? {
        let n = k.dim();
        let polar = match (ctx.p.corrupt_polar, corrupted_polar(&k)?) {
            (true, Some(bad)) => bad,
            _ => k.polar()?,
        };
        err = err.max(duality_residual(&k, &polar, ctx.p.directions, &mut rng)?);
        for _ in 0..ctx.p.directions / 10 {
            let y = gaussian(&mut rng, n);
            let (h, x) = k.support_point(&y)?;
            let dot: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
            attain = attain.max((k.gauge(x.as_slice())? - 1.0).abs()).max(rel(dot, h));
            let z = gaussian(&mut rng, n);
            let zy: f64 = z.iter().zip(&y).map(|(a, b)| a * b).sum();
            holder = holder.max((zy - k.gauge(&z)? * h) / (1.0 + zy.abs()));
        }
        if let Some(bad) = corrupted_polar(&k)? {
            controls += 1;
            control = control.min(duality_residual(&k, &bad, ctx.p.directions / 10, &mut rng)?);
        }
    }
    let mut ok = worst(r, "support_equals_polar_gauge", err, ctx.p.tol);
    ok &= worst(r, "support_point_attains", attain, ctx.p.tol);
    ok &= worst(r, "holder_excess", holder, ctx.p.tol);
    r.push(Quantity::exact("negative_control_min_residual", control));
    r.push(Quantity::exact("negative_controls", controls as f64));
    Ok(ok && controls > 0 && control > ctx.p.tol)
}

fn interpolation(ctx: &Ctx, r: &mut ExperimentRecord) -> Result<bool> {
    let mut rng = ctx.rng(5);
    let n = ctx.p.dim;
    let z = |name: &str| zoo_spec(name, n).expect("zoo").build();
    let pairs = [("l1", "l2"), ("wl1", "l2"), ("linf", "wl3"), ("wl1.5", "wl3"), ("ell4", "ell100"), ("wl1", "ell4")];
    let mut ok = true;
    let (mut ident, mut excess, mut basis, mut sign): (f64, f64, f64, f64) = (0.0, f64::NEG_INFINITY, 0.0, 0.0);
    for (a, b) in pairs {
        for theta in [0.25, 0.5, 0.75] {
            let pair = InterpolationPair::new(z(a)?, z(b)?, theta)?;
            let rep = property_suite(&pair, ctx.p.directions / 4, &mut rng)?;
            ident = ident.max(rep.polar).max(rep.linear).max(rep.scaling).max(rep.endpoints);
            excess = excess.max(rep.inequality_excess);
            ok &= rep.passed();
            for (g, s) in basis_vector_gauges(&pair)? {
                basis = basis.max(rel(g, s));
            }
            let kt = interpolate(&pair)?;
            for _ in 0..20 {
                let x = gaussian(&mut rng, n);
                let flipped: Vec<f64> = x.iter().map(|v| if rng.random::<bool>() { -v } else { *v }).collect();
                sign = sign.max(rel(kt.gauge(&x)?, kt.gauge(&flipped)?));
            }
        }
    }
    let half = interpolate(&InterpolationPair::new(z("l1")?, z("l2")?, 0.5)?)?;
    let p_err = half.weighted_lp_form().map_or(f64::INFINITY, |(p, _)| (p - 4.0 / 3.0).abs());
    ok &= worst(r, "identities", ident, 1e-9);
    ok &= worst(r, "geometric_mean_excess", excess, 1e-9);
    ok &= worst(r, "basis_vector_equality", basis, 1e-9);
    ok &= worst(r, "sign_flip_invariance", sign, 1e-12);
    ok &= worst(r, "l1_l2_half_exponent", p_err, 1e-12);
    Ok(ok)
}

fn perp_identity(ctx: &Ctx, r: &mut ExperimentRecord) -> Result<bool> {
    let mut rng = ctx.rng(6);
    let mut err: f64 = 0.0;
    for t in 0..ctx.p.triples {
        let n = rng.random_range(4..=7);
        let a = match t % 4 {
            0 => ConvexBody::diagonal_ellipsoid(&(0..n).map(|_| rng.random_range(0.2..5.0)).collect::<Vec<_>>())?,
            1 => ConvexBody::weighted_lp(1.5, &(0..n).map(|_| rng.random_range(0.5..2.0)).collect::<Vec<_>>())?,
            2 => ConvexBody::cross_polytope(n),
            _ => random_h_polytope(n, rng.random()).build()?,
        };
        let k = rng.random_range(1..=n / 2);
        let flag = haar_flag(&mut rng, n, k)?;
        let e2 = flag.e2()?;
        err = err.max(perp_identity_check(&a, &flag.f, &e2, ctx.p.directions / 20, &mut rng)?);
    }
    let violated = {
        let e1 = Subspace::coordinate(4, &[0, 1])?;
        let e2 = Subspace::coordinate(4, &[0, 1])?;
        perp_identity_check(&ConvexBody::euclidean_ball(4), &e1, &e2, 1, &mut rng).is_err()
    };
    r.push(Quantity::exact("hypothesis_violation_detected", f64::from(u8::from(violated))));
    Ok(worst(r, "max_residual", err, 1e-6) && violated)
}

fn off_diagonal(t: &DMatrix<f64>) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..t.nrows() {
        for j in 0..t.ncols() {
            if i != j {
                m = m.max(t[(i, j)].abs());
            }
        }
    }
    m
}

fn sign_commutant(ctx: &Ctx, r: &mut ExperimentRecord) -> Result<bool> {
    let mut rng = ctx.rng(7);
    let n = 4;
    let sample = GaussianSample::with_options(derive_seed(ctx.seed, 7), 0, 4000, n, Symmetrization::SignFlips)?;
    let bodies = [
        ConvexBody::diagonal_ellipsoid(&[1.0, 9.0, 0.3, 2.0])?,
        ConvexBody::weighted_lp(3.0, &[1.0, 2.0, 0.5, 4.0])?,
        ConvexBody::weighted_lp(1.5, &[2.0, 1.0, 1.0, 0.5])?,
    ];
    let mut err: f64 = 0.0;
    for k in &bodies {
        let mut s = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        s = (&s + s.transpose()) * 0.15;
        let opts = EllPositionOptions {
            tol: 1e-10,
            max_iter: 5000,
            structure: Structure::Full,
            start: Some(PositionMap::from_symmetric_log(&s)?),
            compute_product: false,
        };
        let res = solve_ell_position(k, &sample, &opts)?;
        let t = res.map.matrix();
        err = err.max(off_diagonal(t) / t.norm());
    }
    Ok(worst(r, "relative_off_diagonal", err, 1e-6))
}

fn radius_ell_bounds(ctx: &Ctx, r: &mut ExperimentRecord) -> Result<bool> {
    let c = (std::f64::consts::PI / 2.0).sqrt();
    let mut excess = f64::NEG_INFINITY;
    for (i, (_, k)) in ctx.bodies()?.into_iter().enumerate() {
        let sample = GaussianSample::new(derive_seed(ctx.seed, 300 + i as u64), ctx.p.samples, k.dim());
        let l = ell(&k, 1, &sample)?;
        let ls = ell_star(&k, 1, &sample)?;
        excess = excess
            .max(1.0 / k.in_radius() - c * (l.value + 3.0 * l.se))
            .max(k.out_radius() - c * (ls.value + 3.0 * ls.se));
    }
    Ok(worst(r, "max_excess", excess, 0.0))
}

fn complexification(ctx: &Ctx, r: &mut ExperimentRecord) -> Result<bool> {
    let mut rng = ctx.rng(9);
    let n = 3;
    let mut bases: Vec<ConvexBody> = ZOO.iter().map(|z| zoo_spec(z, n).expect("zoo").build()).collect::<Result<_>>()?;
    bases.push(random_h_polytope(n, derive_seed(ctx.seed, 9)).build()?);
    let (mut sec, mut proj): (f64, f64) = (0.0, 0.0);
    for base in &bases {
        let kc = base.complexify()?;
        let mut c = DMatrix::zeros(2 * n, n);
        c.view_mut((n, 0), (n, n)).fill_with_identity();
        let mut fiber = kc.gauge_fiber_solver(&c)?;
        for _ in 0..ctx.p.directions / 20 {
            let x = gaussian(&mut rng, n);
            let mut x0 = x.clone();
            x0.extend(std::iter::repeat_n(0.0, n));
            let g = base.gauge(&x)?;
            sec = sec.max(rel(kc.gauge(&x0)?, g));
            let (v, _) = fiber.solve(&DVector::from_column_slice(&x0))?;
            proj = proj.max(rel(v, g));
        }
    }
    let mut ok = worst(r, "real_section", sec, 1e-9);
    ok &= worst(r, "real_projection", proj, ctx.p.tol);
    Ok(ok)
}

fn monotonicity(ctx: &Ctx, r: &mut ExperimentRecord) -> Result<bool> {
    let n = ctx.p.dim;
    let z = |name: &str| zoo_spec(name, n).expect("zoo").build();
    let pairs = [
        (z("l1")?, z("l2")?),
        (z("l2")?, z("linf")?),
        (z("ell100")?.scaled(0.5)?, z("ell100")?),
        (ConvexBody::weighted_lp(1.5, &vec![2.0; n])?, z("l2")?),
    ];
    let sample = GaussianSample::new(derive_seed(ctx.seed, 10), ctx.p.samples, n);
    let mut excess = f64::NEG_INFINITY;
    for (inner, outer) in &pairs {
        let a = ell(inner, 1, &sample)?;
        let b = ell(outer, 1, &sample)?;
        excess = excess.max((b.value - a.value) / a.value);
    }
    Ok(worst(r, "relative_excess", excess, 0.0))
}

fn section_projection(ctx: &Ctx, r: &mut ExperimentRecord) -> Result<bool> {
    let mut rng = ctx.rng(11);
    let n = ctx.p.dim + 1;
    let m = n / 2;
    let count = ctx.p.samples / 4;
    let mut excess = f64::NEG_INFINITY;
    for (i, name) in ZOO.iter().enumerate() {
        let k = zoo_spec(name, n).expect("zoo").build()?;
        let e = haar_grassmannian(&mut rng, n, m)?;
        let sec = SectionBody::section(&k, &e)?;
        let proj = SectionBody::projection(&k, &e)?;
        let full = GaussianSample::new(derive_seed(ctx.seed, 400 + i as u64), count, n);
        let sub = GaussianSample::new(derive_seed(ctx.seed, 500 + i as u64), count, m);
        let l = ell(&k, 1, &full)?;
        let ls = ell_star(&k, 1, &full)?;
        let gs: Vec<f64> = sub.map(|g| sec.gauge(g))?;
        let hs: Vec<f64> = sub.map(|g| proj.support(g))?;
        let (lg, sg) = sub.mean_se(&gs);
        let (lh, sh) = sub.mean_se(&hs);
        excess = excess
            .max(lg - l.value - 3.0 * (sg * sg + l.se * l.se).sqrt())
            .max(lh - ls.value - 3.0 * (sh * sh + ls.se * ls.se).sqrt());
    }
    Ok(worst(r, "max_excess_over_3se", excess, 0.0))
}

fn distances(ctx: &Ctx, r: &mut ExperimentRecord) -> Result<bool> {
    let mut rng = ctx.rng(12);
    let opts = AscentOptions::default();
    let ball = SectionBody::section(&ConvexBody::euclidean_ball(4), &haar_grassmannian(&mut rng, 4, 2)?)?;
    let square = SectionBody::section(&ConvexBody::cube(2), &Subspace::full(2))?;
    let ball_err = (ball.geometric_distance_to_ball(&opts, &mut rng)? - 1.0).abs();
    let square_err = (square.geometric_distance_to_ball(&opts, &mut rng)? - 2f64.sqrt()).abs();
    let mut below: f64 = 0.0;
    let mut eig: f64 = 0.0;
    for _ in 0..20 {
        let n = 6;
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..5.0)).collect();
        let k = ConvexBody::diagonal_ellipsoid(&v)?;
        let f = haar_grassmannian(&mut rng, n, 3)?;
        let s = SectionBody::section(&k, &f)?;
        let b = f.basis();
        let q = b.transpose() * DMatrix::from_diagonal(&DVector::from_column_slice(&v)) * b;
        let lmin = crate::linalg::sym_eigenvalues(&q).into_iter().fold(f64::INFINITY, f64::min);
        eig = eig.max(rel(s.out_radius(&opts, &mut rng)?.value, lmin.powf(-0.5)));
        let d = s.geometric_distance_to_ball(&opts, &mut rng)?;
        below = below.max(1.0 - d);
        let u = random_unit(&mut rng, 3);
        let _ = s.gauge(u.as_slice())?;
    }
    let mut ok = worst(r, "ball_distance", ball_err, 1e-9);
    ok &= worst(r, "square_distance", square_err, 1e-6);
    ok &= worst(r, "ellipsoid_out_radius", eig, 1e-10);
    ok &= worst(r, "distance_below_one", below, 0.0);
    Ok(ok)
}

/// Runs the selected suites; one record per suite.
pub fn run_props(cfg: &Config, seed: u64) -> std::result::Result<Vec<ExperimentRecord>, HarnessError> {
    let p: PropsParams = cfg.parameters()?;
    let selected: Vec<String> = match &p.suites {
        Some(s) => s.clone(),
        None => SUITES.iter().map(|s| s.to_string()).collect(),
    };
    if let Some(bad) = selected.iter().find(|s| !SUITES.contains(&s.as_str())) {
        return Err(HarnessError::Config(format!("unknown suite {bad:?}")));
    }
    let ctx = Ctx { p: &p, seed };
    let mut out = Vec::new();
    for name in &selected {
        let mut r = ExperimentRecord::new("props", seed)
            .param("suite", name)
            .param("dim", p.dim)
            .param("directions", p.directions)
            .param("tol", p.tol);
        if name == "duality" {
            r = r.param("corrupt_polar", p.corrupt_polar);
        }
        if name == "perp_identity" {
            r = r.param("triples", p.triples);
        }
        let outcome = match name.as_str() {
            "scalar_maps" => scalar_maps(&mut r),
            "subspaces" => subspaces(&ctx, &mut r),
            "polar_involution" => polar_involution(&ctx, &mut r),
            "duality" => duality(&ctx, &mut r),
            "interpolation" => interpolation(&ctx, &mut r),
            "perp_identity" => perp_identity(&ctx, &mut r),
            "sign_commutant" => sign_commutant(&ctx, &mut r),
            "radius_ell_bounds" => radius_ell_bounds(&ctx, &mut r),
            "complexification" => complexification(&ctx, &mut r),
            "monotonicity" => monotonicity(&ctx, &mut r),
            "section_projection" => section_projection(&ctx, &mut r),
            "distances" => distances(&ctx, &mut r),
            _ => unreachable!("validated above"),
        };
        match outcome {
            Ok(passed) => r.passed = passed,
            Err(e) => {
                r.passed = false;
                r.artifact("error", e.to_string());
            }
        }
        out.push(r);
    }
    Ok(out)
}
