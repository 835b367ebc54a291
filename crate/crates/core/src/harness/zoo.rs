//! The standard test bodies, by name and dimension.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::bodies::BodySpec;
use crate::random::substream;

pub const ZOO: &[&str] = &["l1", "l2", "linf", "wl1", "wl1.5", "wl3", "ell4", "ell100"];

/// Weights spread geometrically over `[lo, hi]`.
fn spread(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    if n == 1 {
        return vec![(lo * hi).sqrt()];
    }
    (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect()
}

/// Zoo body `name` in dimension `n`.
pub fn zoo_spec(name: &str, n: usize) -> Option<BodySpec> {
    Some(match name {
        "l1" => BodySpec::lp_ball(n, 1.0),
        "l2" => BodySpec::lp_ball(n, 2.0),
        "linf" => BodySpec::lp_ball(n, f64::INFINITY),
        "wl1" => BodySpec::weighted_lp(1.0, spread(n, 0.5, 2.0)),
        "wl1.5" => BodySpec::weighted_lp(1.5, spread(n, 0.5, 2.0)),
        "wl3" => BodySpec::weighted_lp(3.0, spread(n, 0.5, 2.0)),
        "ell4" => BodySpec::diagonal_ellipsoid(spread(n, 1.0, 4.0)),
        "ell100" => BodySpec::diagonal_ellipsoid(spread(n, 1.0, 100.0)),
        _ => return None,
    })
}

/// Random symmetric polytope with `2n` facets `|⟨a_i, x⟩| ≤ 1`.
pub fn random_h_polytope(n: usize, seed: u64) -> BodySpec {
    let mut rng = substream(seed, 0x5eed_0001);
    let rows = (0..n)
        .map(|_| (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    BodySpec::PolytopeH { rows }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zoo_builds_in_every_dimension() {
        for n in [1, 2, 5, 16] {
            for name in ZOO {
                let k = zoo_spec(name, n).unwrap().build().unwrap();
                assert_eq!(k.dim(), n);
                assert!(k.symmetries().sign_flips);
            }
        }
        assert!(zoo_spec("nope", 3).is_none());
        assert_eq!(random_h_polytope(4, 1), random_h_polytope(4, 1));
        assert!(random_h_polytope(4, 1).build().is_ok());
    }

    #[test]
    fn ellipsoid_condition_numbers() {
        let BodySpec::Ellipsoid { diagonal: Some(v), .. } = zoo_spec("ell100", 7).unwrap() else { panic!() };
        let (lo, hi) = v.iter().fold((f64::INFINITY, 0.0f64), |(a, b), x| (a.min(*x), b.max(*x)));
        assert!((hi / lo - 100.0).abs() < 1e-9);
    }
}
