//! Complex interpolation of weighted ℓ_p balls, the geometric-mean
//! surrogate, and the scalar maps `θ(α)` and `Φ(θ)`.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bodies::{ConvexBody, Family};
use crate::error::{GeomError, Result};
use crate::map::PositionMap;

/// `θ = 1 − 1/(2α)` for `α > 1/2`.
pub fn theta_of_alpha(alpha: f64) -> Result<f64> {
    if !(alpha.is_finite() && alpha > 0.5) {
        return Err(GeomError::InvalidParameter(format!("α = {alpha} must exceed 1/2")));
    }
    Ok(1.0 - 1.0 / (2.0 * alpha))
}

/// `Φ(θ) = 1 / tan(πθ/4)` for `θ ∈ (0, 1]`.
pub fn phi(theta: f64) -> Result<f64> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(GeomError::InvalidParameter(format!("θ = {theta} must lie in (0, 1]")));
    }
    Ok(1.0 / (std::f64::consts::FRAC_PI_4 * theta).tan())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarMapValues {
    pub alpha: f64,
    pub theta: f64,
    pub phi: f64,
}

impl ScalarMapValues {
    pub fn from_alpha(alpha: f64) -> Result<Self> {
        let theta = theta_of_alpha(alpha)?;
        Ok(Self {
            alpha,
            theta,
            phi: phi(theta)?,
        })
    }

    /// `1/(1−θ)`, equal to `2α`.
    pub fn exponent(&self) -> f64 {
        1.0 / (1.0 - self.theta)
    }
}

#[derive(Debug, Clone)]
pub struct InterpolationPair {
    pub k0: ConvexBody,
    pub k1: ConvexBody,
    pub theta: f64,
}

impl InterpolationPair {
    pub fn new(k0: ConvexBody, k1: ConvexBody, theta: f64) -> Result<Self> {
        if k0.dim() != k1.dim() {
            return Err(GeomError::DimensionMismatch {
                expected: k0.dim(),
                got: k1.dim(),
            });
        }
        if !(0.0..=1.0).contains(&theta) {
            return Err(GeomError::InvalidParameter(format!("θ = {theta} must lie in [0, 1]")));
        }
        Ok(Self { k0, k1, theta })
    }

    /// Both endpoints are weighted ℓ_p balls (or diagonal ellipsoids) in
    /// the standard basis.
    pub fn is_tractable(&self) -> bool {
        self.k0.weighted_lp_form().is_some() && self.k1.weighted_lp_form().is_some()
    }
}

fn inv(p: f64) -> f64 {
    if p.is_infinite() {
        0.0
    } else {
        1.0 / p
    }
}

/// Closed-form interpolant `[K0, K1]_θ` of two weighted ℓ_p balls:
/// `1/p = (1−θ)/p0 + θ/p1` and scales `w = w0^{1−θ} w1^θ`.
pub fn interpolate(pair: &InterpolationPair) -> Result<ConvexBody> {
    let theta = pair.theta;
    if theta == 0.0 {
        return Ok(pair.k0.clone());
    }
    if theta == 1.0 {
        return Ok(pair.k1.clone());
    }
    let (Some((p0, w0)), Some((p1, w1))) = (pair.k0.weighted_lp_form(), pair.k1.weighted_lp_form()) else {
        return Err(GeomError::NotTractable(
            "interpolation needs two weighted ℓp balls in a common basis; use the surrogate".into(),
        ));
    };
    let ip = (1.0 - theta) * inv(p0) + theta * inv(p1);
    let p = if ip == 0.0 { f64::INFINITY } else { 1.0 / ip };
    let w: Vec<f64> = w0
        .iter()
        .zip(&w1)
        .map(|(a, b)| a.powf(1.0 - theta) * b.powf(theta))
        .collect();
    let both_ellipsoids = matches!(pair.k0.family(), Family::Ellipsoid { .. })
        && matches!(pair.k1.family(), Family::Ellipsoid { .. });
    if both_ellipsoids {
        let v: Vec<f64> = w.iter().map(|s| s * s).collect();
        ConvexBody::diagonal_ellipsoid(&v)
    } else {
        ConvexBody::weighted_lp_from_scales(p, &w)
    }
}

/// `{x : ‖x‖_0^{1−θ} ‖x‖_1^θ ≤ 1}`. Not convex in general; always contained
/// in the true interpolant.
#[derive(Debug, Clone)]
pub struct SurrogateBody {
    pair: InterpolationPair,
}

impl SurrogateBody {
    pub fn gauge(&self, x: &[f64]) -> Result<f64> {
        let t = self.pair.theta;
        let g0 = self.pair.k0.gauge(x)?;
        let g1 = self.pair.k1.gauge(x)?;
        Ok(g0.powf(1.0 - t) * g1.powf(t))
    }

    pub fn dim(&self) -> usize {
        self.pair.k0.dim()
    }

    /// Always set: the surrogate is not the interpolant.
    pub fn caveat(&self) -> &'static str {
        "geometric-mean surrogate: inner bound of the interpolant, not necessarily convex"
    }
}

pub fn surrogate(pair: &InterpolationPair) -> SurrogateBody {
    SurrogateBody { pair: pair.clone() }
}

/// Residuals of the interpolation identities, each a maximum relative gauge
/// discrepancy over sampled points.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InterpolationReport {
    pub theta: f64,
    pub polar: f64,
    pub linear: f64,
    pub scaling: f64,
    /// Largest `‖x‖_θ − ‖x‖_0^{1−θ}‖x‖_1^θ` relative to `‖x‖_θ` (≤ 0 when
    /// the inequality holds).
    pub inequality_excess: f64,
    pub endpoints: f64,
    pub tolerance: f64,
}

impl InterpolationReport {
    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !(self.polar <= self.tolerance) {
            out.push("interpolation commutes with polarity");
        }
        if !(self.linear <= self.tolerance) {
            out.push("interpolation commutes with diagonal maps");
        }
        if !(self.scaling <= self.tolerance) {
            out.push("interpolation of scaled bodies");
        }
        if !(self.inequality_excess <= self.tolerance) {
            out.push("interpolated gauge bounded by geometric mean");
        }
        if !(self.endpoints <= self.tolerance) {
            out.push("interpolation endpoints");
        }
        out
    }

    pub fn passed(&self) -> bool {
        self.failures().is_empty()
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Checks the polarity, diagonal-map and scaling identities and the
/// geometric-mean inequality on `samples` Gaussian points.
pub fn property_suite<R: Rng + ?Sized>(
    pair: &InterpolationPair,
    samples: usize,
    rng: &mut R,
) -> Result<InterpolationReport> {
    let n = pair.k0.dim();
    let theta = pair.theta;
    let kt = interpolate(pair)?;
    let polar_pair = InterpolationPair::new(pair.k0.polar()?, pair.k1.polar()?, theta)?;
    let polar_lhs = kt.polar()?;
    let polar_rhs = interpolate(&polar_pair)?;
    let diag: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal).exp()).collect();
    let t = PositionMap::diagonal(&diag)?;
    let lin_lhs = ConvexBody::linear_image(&t, &kt)?;
    let lin_rhs = interpolate(&InterpolationPair::new(
        ConvexBody::linear_image(&t, &pair.k0)?,
        ConvexBody::linear_image(&t, &pair.k1)?,
        theta,
    )?)?;
    let (a, b) = (3.0, 0.7);
    let scaled = interpolate(&InterpolationPair::new(pair.k0.scaled(a)?, pair.k1.scaled(b)?, theta)?)?;
    let factor = a.powf(1.0 - theta) * b.powf(theta);
    let sur = surrogate(pair);
    let e0 = interpolate(&InterpolationPair::new(pair.k0.clone(), pair.k1.clone(), 0.0)?)?;
    let e1 = interpolate(&InterpolationPair::new(pair.k0.clone(), pair.k1.clone(), 1.0)?)?;
    let mut report = InterpolationReport {
        theta,
        polar: 0.0,
        linear: 0.0,
        scaling: 0.0,
        inequality_excess: f64::NEG_INFINITY,
        endpoints: 0.0,
        tolerance: 1e-9,
    };
    for _ in 0..samples {
        let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        report.polar = report.polar.max(rel(polar_lhs.gauge(&x)?, polar_rhs.gauge(&x)?));
        report.linear = report.linear.max(rel(lin_lhs.gauge(&x)?, lin_rhs.gauge(&x)?));
        // [aK0, bK1]_θ = a^{1−θ} b^θ [K0, K1]_θ, so its gauge is the
        // interpolant gauge divided by the factor.
        let g = kt.gauge(&x)?;
        report.scaling = report.scaling.max(rel(scaled.gauge(&x)?, g / factor));
        report.inequality_excess = report.inequality_excess.max((g - sur.gauge(&x)?) / g);
        report.endpoints = report
            .endpoints
            .max(rel(e0.gauge(&x)?, pair.k0.gauge(&x)?))
            .max(rel(e1.gauge(&x)?, pair.k1.gauge(&x)?));
    }
    Ok(report)
}

/// Gauges of the interpolant and of the surrogate at the standard basis
/// vectors (they coincide for weighted ℓ_p pairs).
pub fn basis_vector_gauges(pair: &InterpolationPair) -> Result<Vec<(f64, f64)>> {
    let kt = interpolate(pair)?;
    let sur = surrogate(pair);
    let n = kt.dim();
    (0..n)
        .map(|i| {
            let e = DVector::from_fn(n, |j, _| if i == j { 1.0 } else { 0.0 });
            Ok((kt.gauge(e.as_slice())?, sur.gauge(e.as_slice())?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::AscentOptions;
    use crate::subspaces::{haar_grassmannian, SectionBody};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn scalar_maps() {
        assert_eq!(theta_of_alpha(1.0).unwrap(), 0.5);
        assert_relative_eq!(phi(1.0).unwrap(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(phi(0.5).unwrap(), 1.0 + 2f64.sqrt(), epsilon = 1e-12);
        assert!(theta_of_alpha(0.5).is_err());
        assert!(phi(0.0).is_err());
        let mut last = f64::INFINITY;
        for i in 1..=100 {
            let v = phi(i as f64 / 100.0).unwrap();
            assert!(v < last);
            last = v;
        }
        for alpha in [0.51, 0.75, 1.0, 3.0, 40.0] {
            let s = ScalarMapValues::from_alpha(alpha).unwrap();
            assert!(s.theta > 0.0 && s.theta < 1.0);
            assert_relative_eq!(s.exponent(), 2.0 * alpha, max_relative = 1e-12);
        }
    }

    #[test]
    fn endpoints_reproduce_inputs() {
        let mut r = rng(1);
        let k0 = ConvexBody::weighted_lp(1.0, &[1.0, 2.0, 3.0]).unwrap();
        let k1 = ConvexBody::weighted_lp(3.0, &[0.5, 1.0, 4.0]).unwrap();
        for (theta, k) in [(0.0, &k0), (1.0, &k1)] {
            let kt = interpolate(&InterpolationPair::new(k0.clone(), k1.clone(), theta).unwrap()).unwrap();
            for _ in 0..1000 {
                let x: Vec<f64> = (0..3).map(|_| r.sample(StandardNormal)).collect();
                assert_eq!(kt.gauge(&x).unwrap(), k.gauge(&x).unwrap());
            }
        }
    }

    #[test]
    fn cross_polytope_and_ball_give_four_thirds() {
        let pair = InterpolationPair::new(ConvexBody::cross_polytope(4), ConvexBody::euclidean_ball(4), 0.5).unwrap();
        let kt = interpolate(&pair).unwrap();
        let Family::WeightedLp { p, weights } = kt.family() else { panic!() };
        assert_relative_eq!(*p, 4.0 / 3.0, epsilon = 1e-14);
        assert!(weights.iter().all(|w| (w - 1.0).abs() < 1e-14));
    }

    #[test]
    fn diagonal_ellipsoids_interpolate_geometrically() {
        let pair = InterpolationPair::new(
            ConvexBody::diagonal_ellipsoid(&[1.0, 4.0]).unwrap(),
            ConvexBody::diagonal_ellipsoid(&[4.0, 1.0]).unwrap(),
            0.5,
        )
        .unwrap();
        let kt = interpolate(&pair).unwrap();
        let Family::Ellipsoid { matrix } = kt.family() else { panic!() };
        assert_relative_eq!(matrix[(0, 0)], 2.0, epsilon = 1e-14);
        assert_relative_eq!(matrix[(1, 1)], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn weight_rule_in_weight_convention() {
        // v = v0^{p(1−θ)/p0} v1^{pθ/p1}
        let (p0, p1, theta) = (1.0, 3.0, 0.25);
        let v0 = [2.0, 0.5];
        let v1 = [3.0, 7.0];
        let pair = InterpolationPair::new(
            ConvexBody::weighted_lp(p0, &v0).unwrap(),
            ConvexBody::weighted_lp(p1, &v1).unwrap(),
            theta,
        )
        .unwrap();
        let kt = interpolate(&pair).unwrap();
        let Family::WeightedLp { p, weights } = kt.family() else { panic!() };
        let pe = 1.0 / ((1.0 - theta) / p0 + theta / p1);
        assert_relative_eq!(*p, pe, epsilon = 1e-14);
        for i in 0..2 {
            let expected = v0[i].powf(pe * (1.0 - theta) / p0) * v1[i].powf(pe * theta / p1);
            assert_relative_eq!(weights[i], expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn non_tractable_pairs_are_rejected() {
        let h = ConvexBody::polytope_h(nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0])).unwrap();
        let pair = InterpolationPair::new(h, ConvexBody::euclidean_ball(2), 0.5).unwrap();
        assert!(!pair.is_tractable());
        assert!(matches!(interpolate(&pair), Err(GeomError::NotTractable(_))));
        let s = surrogate(&pair);
        assert!(s.gauge(&[1.0, 1.0]).unwrap() > 0.0);
    }

    #[test]
    fn surrogate_of_equal_pair_is_the_body() {
        let k = ConvexBody::weighted_lp(1.5, &[1.0, 2.0]).unwrap();
        let s = surrogate(&InterpolationPair::new(k.clone(), k.clone(), 0.3).unwrap());
        assert_relative_eq!(s.gauge(&[0.3, -1.2]).unwrap(), k.gauge(&[0.3, -1.2]).unwrap(), max_relative = 1e-14);
    }

    #[test]
    fn property_suite_passes_on_zoo_pairs() {
        let mut r = rng(2);
        let n = 5;
        let zoo = vec![
            ConvexBody::cross_polytope(n),
            ConvexBody::euclidean_ball(n),
            ConvexBody::cube(n),
            ConvexBody::weighted_lp(1.5, &[1.0, 2.0, 3.0, 0.5, 1.0]).unwrap(),
            ConvexBody::weighted_lp(3.0, &[2.0, 1.0, 0.3, 0.5, 4.0]).unwrap(),
            ConvexBody::diagonal_ellipsoid(&[1.0, 4.0, 9.0, 0.25, 2.0]).unwrap(),
        ];
        for k0 in &zoo {
            for k1 in &zoo {
                for theta in [0.25, 0.5, 0.8] {
                    let pair = InterpolationPair::new(k0.clone(), k1.clone(), theta).unwrap();
                    let rep = property_suite(&pair, 200, &mut r).unwrap();
                    assert!(rep.passed(), "{} {} {rep:?}", k0.describe(), k1.describe());
                    for (a, b) in basis_vector_gauges(&pair).unwrap() {
                        assert_relative_eq!(a, b, max_relative = 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn polar_of_l1_l2_interpolant_is_linf_l2_interpolant() {
        let n = 3;
        let theta = 0.4;
        let pair = InterpolationPair::new(ConvexBody::cross_polytope(n), ConvexBody::euclidean_ball(n), theta).unwrap();
        let Family::WeightedLp { p, .. } = interpolate(&pair).unwrap().polar().unwrap().family().clone() else {
            panic!()
        };
        let dual = InterpolationPair::new(ConvexBody::cube(n), ConvexBody::euclidean_ball(n), theta).unwrap();
        let Family::WeightedLp { p: q, .. } = interpolate(&dual).unwrap().family().clone() else { panic!() };
        assert_relative_eq!(p, q, max_relative = 1e-12);
    }

    #[test]
    fn scaling_identity_example() {
        let k = ConvexBody::weighted_lp(1.5, &[1.0, 2.0]).unwrap();
        let b = ConvexBody::euclidean_ball(2);
        let base = interpolate(&InterpolationPair::new(k.clone(), b.clone(), 0.5).unwrap()).unwrap();
        let scaled = interpolate(&InterpolationPair::new(k.scaled(3.0).unwrap(), b, 0.5).unwrap()).unwrap();
        let x = [0.4, -0.9];
        assert_relative_eq!(base.gauge(&x).unwrap() / scaled.gauge(&x).unwrap(), 3f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn diagonal_map_identity_example() {
        let t = PositionMap::diagonal(&[2.0, 0.5]).unwrap();
        let k0 = ConvexBody::cross_polytope(2);
        let k1 = ConvexBody::weighted_lp(3.0, &[1.0, 5.0]).unwrap();
        let lhs = ConvexBody::linear_image(&t, &interpolate(&InterpolationPair::new(k0.clone(), k1.clone(), 0.3).unwrap()).unwrap()).unwrap();
        let rhs = interpolate(
            &InterpolationPair::new(
                ConvexBody::linear_image(&t, &k0).unwrap(),
                ConvexBody::linear_image(&t, &k1).unwrap(),
                0.3,
            )
            .unwrap(),
        )
        .unwrap();
        for x in [[1.0, 0.0], [0.3, 2.0], [-1.0, 0.7]] {
            assert_relative_eq!(lhs.gauge(&x).unwrap(), rhs.gauge(&x).unwrap(), max_relative = 1e-9);
        }
    }

    #[test]
    fn interpolants_of_unconditional_bodies_are_unconditional() {
        let pair = InterpolationPair::new(
            ConvexBody::weighted_lp(1.0, &[1.0, 3.0, 2.0]).unwrap(),
            ConvexBody::diagonal_ellipsoid(&[0.5, 2.0, 1.0]).unwrap(),
            0.6,
        )
        .unwrap();
        let kt = interpolate(&pair).unwrap();
        assert!(kt.symmetries().sign_flips);
        let x = [0.3, -1.1, 0.8];
        for mask in 0..8u32 {
            let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| if mask >> i & 1 == 1 { -v } else { *v }).collect();
            assert_eq!(kt.gauge(&y).unwrap(), kt.gauge(&x).unwrap());
        }
    }

    #[test]
    fn section_radius_lower_bound() {
        // R([L, B]_θ ∩ E) ≥ R(L ∩ E)^{1−θ}
        let mut r = rng(3);
        let n = 5;
        let opts = AscentOptions::default();
        let bodies = vec![
            ConvexBody::diagonal_ellipsoid(&[0.1, 0.5, 1.0, 4.0, 9.0]).unwrap(),
            ConvexBody::cross_polytope(n).scaled(2.0).unwrap(),
            ConvexBody::weighted_lp(3.0, &[0.2, 1.0, 1.0, 3.0, 0.7]).unwrap(),
        ];
        for l in &bodies {
            for theta in [0.3, 0.7] {
                let kt = interpolate(&InterpolationPair::new(l.clone(), ConvexBody::euclidean_ball(n), theta).unwrap()).unwrap();
                for _ in 0..5 {
                    let e = haar_grassmannian(&mut r, n, 3).unwrap();
                    let lhs = SectionBody::section(&kt, &e).unwrap().out_radius(&opts, &mut r).unwrap().value;
                    let rhs = SectionBody::section(l, &e).unwrap().out_radius(&opts, &mut r).unwrap().value;
                    assert!(lhs >= rhs.powf(1.0 - theta) * (1.0 - 1e-9), "{lhs} < {rhs}^(1-θ)");
                }
            }
        }
    }
}
