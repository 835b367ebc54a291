//! Gaussian functionals `ℓ_p(K)`, `ℓ_p^*(K)` and `M^*(K)` on fixed samples.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bodies::ConvexBody;
use crate::error::{GeomError, Result};
use crate::random::substream;

/// How the base Gaussian draws are augmented.
///
/// `CyclicShifts` adds all cyclic coordinate shifts of each draw, which
/// makes the empirical second moments of all coordinates equal and the
/// sample invariant under cyclic permutations. `SignFlips` adds the full
/// sign orbit (dimension ≤ 12). Every vector is still standard Gaussian;
/// uncertainties are computed over orbits, which are independent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symmetrization {
    #[default]
    None,
    CyclicShifts,
    SignFlips,
}

const MAX_SIGN_ORBIT_DIM: usize = 12;

#[derive(Debug, Clone)]
pub struct GaussianSample {
    seed: u64,
    stream: u64,
    symmetrization: Symmetrization,
    block: usize,
    vectors: DMatrix<f64>,
}

impl GaussianSample {
    /// `count` independent standard Gaussian vectors in R^dim.
    pub fn new(seed: u64, count: usize, dim: usize) -> Self {
        Self::with_options(seed, 0, count, dim, Symmetrization::None).expect("plain samples always build")
    }

    /// At least `count` vectors; symmetrized samples round up to whole
    /// orbits.
    pub fn with_options(
        seed: u64,
        stream: u64,
        count: usize,
        dim: usize,
        symmetrization: Symmetrization,
    ) -> Result<Self> {
        if dim == 0 || count == 0 {
            return Err(GeomError::InvalidParameter("sample needs positive count and dimension".into()));
        }
        let block = match symmetrization {
            Symmetrization::None => 1,
            Symmetrization::CyclicShifts => dim,
            Symmetrization::SignFlips => {
                if dim > MAX_SIGN_ORBIT_DIM {
                    return Err(GeomError::InvalidParameter(format!(
                        "sign orbits need dimension ≤ {MAX_SIGN_ORBIT_DIM}"
                    )));
                }
                1 << dim
            }
        };
        let bases = count.div_ceil(block);
        let mut rng = substream(seed, stream);
        let mut vectors = DMatrix::zeros(dim, bases * block);
        for b in 0..bases {
            let g: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            for o in 0..block {
                let col = b * block + o;
                for i in 0..dim {
                    vectors[(i, col)] = match symmetrization {
                        Symmetrization::None => g[i],
                        Symmetrization::CyclicShifts => g[(i + o) % dim],
                        Symmetrization::SignFlips => {
                            if (o >> i) & 1 == 1 {
                                -g[i]
                            } else {
                                g[i]
                            }
                        }
                    };
                }
            }
        }
        Ok(Self {
            seed,
            stream,
            symmetrization,
            block,
            vectors,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn symmetrization(&self) -> Symmetrization {
        self.symmetrization
    }

    pub fn count(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn block_size(&self) -> usize {
        self.block
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn vector(&self, j: usize) -> DVector<f64> {
        self.vectors.column(j).into_owned()
    }

    /// Applies `f` to every vector in parallel; results are in sample
    /// order regardless of the thread count.
    pub fn map<T, F>(&self, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&[f64]) -> Result<T> + Sync,
    {
        (0..self.count())
            .into_par_iter()
            .map(|j| f(self.vectors.column(j).as_slice()))
            .collect()
    }

    /// Mean of `values` (one per vector) and its standard error over
    /// independent orbits.
    pub fn mean_se(&self, values: &[f64]) -> (f64, f64) {
        block_mean_se(values, self.block)
    }

    fn check(&self, k: &ConvexBody) -> Result<()> {
        if k.dim() != self.dim() {
            return Err(GeomError::DimensionMismatch {
                expected: k.dim(),
                got: self.dim(),
            });
        }
        Ok(())
    }
}

/// Mean and standard error `sd(block means)/√blocks`, summed in index
/// order.
pub fn block_mean_se(values: &[f64], block: usize) -> (f64, f64) {
    let blocks = values.len() / block;
    let means: Vec<f64> = values.chunks(block).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    let mean = means.iter().sum::<f64>() / blocks as f64;
    if blocks < 2 {
        return (mean, f64::NAN);
    }
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (blocks - 1) as f64;
    (mean, (var / blocks as f64).sqrt())
}

/// A Monte Carlo estimate of a Gaussian functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllEstimate {
    pub value: f64,
    pub se: f64,
    pub count: usize,
    pub p: u32,
}

fn check_p(p: u32) -> Result<()> {
    if p == 1 || p == 2 {
        Ok(())
    } else {
        Err(GeomError::InvalidParameter(format!("p must be 1 or 2, got {p}")))
    }
}

/// `(E f^p)^{1/p}` from per-vector values, SE by the delta method for p = 2.
pub fn estimate_from_values(values: &[f64], p: u32, block: usize) -> Result<EllEstimate> {
    check_p(p)?;
    let count = values.len();
    if p == 1 {
        let (m, se) = block_mean_se(values, block);
        return Ok(EllEstimate { value: m, se, count, p });
    }
    let sq: Vec<f64> = values.iter().map(|v| v * v).collect();
    let (m2, se2) = block_mean_se(&sq, block);
    let value = m2.sqrt();
    Ok(EllEstimate {
        value,
        se: se2 / (2.0 * value),
        count,
        p,
    })
}

/// `ℓ_p(K) = (E‖G‖_K^p)^{1/p}`.
pub fn ell(k: &ConvexBody, p: u32, sample: &GaussianSample) -> Result<EllEstimate> {
    check_p(p)?;
    sample.check(k)?;
    let values = sample.map(|g| k.gauge(g))?;
    estimate_from_values(&values, p, sample.block)
}

/// `ℓ_p^*(K) = ℓ_p(K°) = (E h_K(G)^p)^{1/p}`.
pub fn ell_star(k: &ConvexBody, p: u32, sample: &GaussianSample) -> Result<EllEstimate> {
    check_p(p)?;
    sample.check(k)?;
    let values = sample.map(|g| k.support(g))?;
    estimate_from_values(&values, p, sample.block)
}

/// `M^*(K) = E h_K(θ)` for θ uniform on the sphere, from normalized
/// Gaussian vectors.
pub fn mstar(k: &ConvexBody, sample: &GaussianSample) -> Result<EllEstimate> {
    sample.check(k)?;
    let values = sample.map(|g| {
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(k.support(g)? / norm)
    })?;
    estimate_from_values(&values, 1, sample.block)
}

/// `E|G_n| = √2 Γ((n+1)/2) / Γ(n/2)`.
pub fn expected_gaussian_norm(n: usize) -> f64 {
    let n = n as f64;
    (2f64.ln() / 2.0 + ln_gamma((n + 1.0) / 2.0) - ln_gamma(n / 2.0)).exp()
}

fn ln_gamma(x: f64) -> f64 {
    // Lanczos approximation (g = 7, n = 9), accurate to ~1e-15 for x > 0.5.
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Functional {
    Ell(u32),
    EllStar(u32),
    MStar,
}

/// Two bodies evaluated on one sample, with the standard error of their
/// difference computed both paired and as if the samples were independent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrnPair {
    pub a: EllEstimate,
    pub b: EllEstimate,
    pub difference: f64,
    pub se_paired: f64,
    pub se_independent: f64,
}

pub fn crn_pair(
    body_a: &ConvexBody,
    body_b: &ConvexBody,
    functional: Functional,
    sample: &GaussianSample,
) -> Result<CrnPair> {
    sample.check(body_a)?;
    sample.check(body_b)?;
    let values = |k: &ConvexBody| -> Result<Vec<f64>> {
        match functional {
            Functional::Ell(_) => sample.map(|g| k.gauge(g)),
            Functional::EllStar(_) => sample.map(|g| k.support(g)),
            Functional::MStar => sample.map(|g| {
                let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                Ok(k.support(g)? / norm)
            }),
        }
    };
    let p = match functional {
        Functional::Ell(p) | Functional::EllStar(p) => p,
        Functional::MStar => 1,
    };
    let va = values(body_a)?;
    let vb = values(body_b)?;
    let a = estimate_from_values(&va, p, sample.block)?;
    let b = estimate_from_values(&vb, p, sample.block)?;
    // Per-vector linearization of (E f^p)^{1/p}: f for p = 1, f²/(2ℓ) for p = 2.
    let lin = |v: &[f64], e: &EllEstimate| -> Vec<f64> {
        if p == 1 {
            v.to_vec()
        } else {
            v.iter().map(|x| x * x / (2.0 * e.value)).collect()
        }
    };
    let diffs: Vec<f64> = lin(&va, &a).iter().zip(lin(&vb, &b)).map(|(x, y)| x - y).collect();
    let (_, se_paired) = block_mean_se(&diffs, sample.block);
    Ok(CrnPair {
        a,
        b,
        difference: a.value - b.value,
        se_paired,
        se_independent: (a.se * a.se + b.se * b.se).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sample_is_reproducible_and_centered() {
        let s = GaussianSample::new(7, 10_000, 5);
        assert_eq!(s.vectors(), GaussianSample::new(7, 10_000, 5).vectors());
        let bound = 5.0 / (s.count() as f64).sqrt();
        for i in 0..5 {
            let mean = s.vectors().row(i).sum() / s.count() as f64;
            assert!(mean.abs() <= bound);
        }
    }

    #[test]
    fn cyclic_shifts_equalize_second_moments() {
        let s = GaussianSample::with_options(3, 0, 1000, 6, Symmetrization::CyclicShifts).unwrap();
        assert_eq!(s.count(), 1002);
        let m: Vec<f64> = (0..6).map(|i| s.vectors().row(i).map(|v| v * v).sum()).collect();
        for v in &m {
            assert_relative_eq!(*v, m[0], max_relative = 1e-13);
        }
    }

    #[test]
    fn sign_orbits_are_complete() {
        let s = GaussianSample::with_options(3, 0, 10, 3, Symmetrization::SignFlips).unwrap();
        assert_eq!(s.count(), 16);
        let total: f64 = s.vectors().column_sum().iter().map(|v| v.abs()).sum();
        assert!(total < 1e-12);
        assert!(GaussianSample::with_options(3, 0, 10, 13, Symmetrization::SignFlips).is_err());
    }

    #[test]
    fn ell2_of_ball_is_root_n() {
        let n = 16;
        let s = GaussianSample::new(11, 10_000, n);
        let e = ell(&ConvexBody::euclidean_ball(n), 2, &s).unwrap();
        assert!((e.value - 4.0).abs() <= 3.0 * e.se, "{e:?}");
    }

    #[test]
    fn ell2_is_inverse_homogeneous_under_crn() {
        let s = GaussianSample::new(12, 2000, 4);
        let k = ConvexBody::euclidean_ball(4);
        let a = ell(&k, 2, &s).unwrap().value;
        let b = ell(&k.scaled(2.0).unwrap(), 2, &s).unwrap().value;
        assert_relative_eq!(a / b, 2.0, max_relative = 1e-12);
    }

    #[test]
    fn ell_of_square_is_max_of_half_normals() {
        let s = GaussianSample::new(13, 100_000, 2);
        let e = ell(&ConvexBody::cube(2), 1, &s).unwrap();
        let exact = 2.0 / std::f64::consts::PI.sqrt();
        assert!((e.value - exact).abs() <= 3.0 * e.se, "{e:?} vs {exact}");
    }

    #[test]
    fn mstar_examples() {
        let s = GaussianSample::new(14, 50_000, 2);
        let ball = mstar(&ConvexBody::euclidean_ball(2), &s).unwrap();
        assert_relative_eq!(ball.value, 1.0, max_relative = 1e-12);
        let b1 = mstar(&ConvexBody::cross_polytope(2), &s).unwrap();
        let exact = 2.0 * 2f64.sqrt() / std::f64::consts::PI;
        assert!((b1.value - exact).abs() <= 3.0 * b1.se, "{b1:?} vs {exact}");
    }

    #[test]
    fn ell_star_factorizes_through_mstar() {
        // For a Gaussian G, |G| and G/|G| are independent, so
        // ℓ*(K) = E|G|·M*(K).
        let n = 16;
        let s = GaussianSample::new(15, 20_000, n);
        let k = ConvexBody::cross_polytope(n);
        let ls = ell_star(&k, 1, &s).unwrap();
        let ms = mstar(&k, &s).unwrap();
        let predicted = expected_gaussian_norm(n) * ms.value;
        let se = (ls.se.powi(2) + (expected_gaussian_norm(n) * ms.se).powi(2)).sqrt();
        assert!((ls.value - predicted).abs() <= 3.0 * se);
    }

    #[test]
    fn gaussian_norm_expectation() {
        assert_relative_eq!(expected_gaussian_norm(1), (2.0 / std::f64::consts::PI).sqrt(), epsilon = 1e-13);
        assert_relative_eq!(expected_gaussian_norm(2), (std::f64::consts::PI / 2.0).sqrt(), epsilon = 1e-13);
        assert_relative_eq!(expected_gaussian_norm(3), 2.0 * (2.0 / std::f64::consts::PI).sqrt(), epsilon = 1e-13);
    }

    #[test]
    fn crn_pair_examples() {
        let s = GaussianSample::new(16, 10_000, 8);
        let k = ConvexBody::cross_polytope(8);
        let same = crn_pair(&k, &k, Functional::Ell(2), &s).unwrap();
        assert_eq!(same.difference, 0.0);
        let b = ConvexBody::euclidean_ball(8);
        let pair = crn_pair(&b, &b.scaled(2.0).unwrap(), Functional::Ell(2), &s).unwrap();
        assert_relative_eq!(pair.a.value / pair.b.value, 2.0, max_relative = 1e-12);
        let near = ConvexBody::lp_ball(8, 1.1).unwrap();
        let d = crn_pair(&k, &near, Functional::Ell(2), &s).unwrap();
        assert!(d.se_paired < d.se_independent, "{d:?}");
    }

    #[test]
    fn parallel_map_is_order_stable() {
        let s = GaussianSample::new(17, 3000, 5);
        let k = ConvexBody::lp_ball(5, 1.5).unwrap();
        let a = ell(&k, 2, &s).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| ell(&k, 2, &s)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = GaussianSample::new(1, 10, 3);
        assert!(ell(&ConvexBody::cube(2), 1, &s).is_err());
        assert!(ell(&ConvexBody::cube(3), 3, &s).is_err());
    }
}
