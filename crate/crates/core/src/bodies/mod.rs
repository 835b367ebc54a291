//! Origin-symmetric convex bodies as gauge/support oracles.
//!
//! A body is stored with the family it was built from (for reporting and
//! serialization) and a resolved oracle: for every family except the
//! complexification, a pair of [`Norm`]s for the gauge `‖·‖_K` and the support
//! function `h_K = ‖·‖_{K°}`.

mod complexify;
mod norm;
pub mod spec;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, GeomError, Result};
use crate::linalg;
use crate::map::PositionMap;
use crate::sphere::{maximize_on_sphere, AscentOptions};

pub use complexify::COMPLEX_GRID;
pub use norm::{FiberSolver, Norm};
pub use spec::BodySpec;

#[derive(Debug, Clone)]
pub enum Family {
    Ellipsoid { matrix: DMatrix<f64> },
    WeightedLp { p: f64, weights: Vec<f64> },
    PolytopeH { rows: DMatrix<f64> },
    PolytopeV { vertices: DMatrix<f64> },
    LinearImage { map: PositionMap, base: Arc<ConvexBody> },
    Polar { base: Arc<ConvexBody> },
    Complexified { base: Arc<ConvexBody> },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Symmetries {
    pub sign_flips: bool,
    pub permutations: bool,
    pub circled: bool,
}

/// In-radius `r(K)` and out-radius `R(K)`: `r|x| ≤ ... ` i.e.
/// `|x|/R ≤ ‖x‖_K ≤ |x|/r`. `exact` is false when either value is a
/// multistart estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Radii {
    pub inner: f64,
    pub outer: f64,
    pub exact: bool,
}

#[derive(Debug, Clone)]
enum Oracle {
    Norms { gauge: Norm, support: Norm },
    Complexified { base: Arc<ConvexBody> },
}

#[derive(Debug, Clone)]
pub struct ConvexBody {
    dim: usize,
    family: Family,
    symmetries: Symmetries,
    oracle: Oracle,
    radii: Radii,
}

const RADIUS_SEED: u64 = 0x5e_ed0f_ba11;

impl ConvexBody {
    fn from_norms(family: Family, symmetries: Symmetries, gauge: Norm, support: Norm) -> Result<Self> {
        let dim = gauge.dim();
        let radii = norm_radii(&gauge, &support)?;
        Ok(Self {
            dim,
            family,
            symmetries,
            oracle: Oracle::Norms { gauge, support },
            radii,
        })
    }

    /// `{x : xᵀ A x ≤ 1}` for symmetric positive definite `A`.
    pub fn ellipsoid(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(GeomError::InvalidParameter("ellipsoid matrix must be square".into()));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(GeomError::NonFinite);
        }
        if (&matrix - matrix.transpose()).amax() > 1e-12 * matrix.amax().max(1.0) {
            return Err(GeomError::InvalidParameter("ellipsoid matrix must be symmetric".into()));
        }
        let eig = linalg::sym_eigenvalues(&matrix);
        if eig[0] <= 1e-14 * eig[eig.len() - 1].abs().max(1e-300) {
            return Err(GeomError::Degenerate("ellipsoid matrix is not positive definite".into()));
        }
        let diagonal = linalg::is_diagonal(&matrix);
        let symmetries = Symmetries {
            sign_flips: diagonal,
            permutations: diagonal && matrix.diagonal().iter().all(|&v| v == matrix[(0, 0)]),
            circled: false,
        };
        let gauge = Norm::Quadratic(matrix.clone());
        let support = gauge.dual()?;
        Self::from_norms(Family::Ellipsoid { matrix }, symmetries, gauge, support)
    }

    /// `{x : Σ v_i x_i² ≤ 1}`.
    pub fn diagonal_ellipsoid(v: &[f64]) -> Result<Self> {
        Self::ellipsoid(DMatrix::from_diagonal(&DVector::from_column_slice(v)))
    }

    /// Unit ball of `(Σ v_i |x_i|^p)^{1/p}` for `p ∈ [1, ∞)`, and of
    /// `max_i v_i |x_i|` for `p = ∞`.
    pub fn weighted_lp(p: f64, weights: &[f64]) -> Result<Self> {
        if p.is_nan() || p < 1.0 {
            return Err(GeomError::InvalidParameter(format!("exponent p = {p} must lie in [1, ∞]")));
        }
        if weights.is_empty() {
            return Err(GeomError::InvalidParameter("weights must be non-empty".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(GeomError::InvalidParameter("weights must be positive and finite".into()));
        }
        let scales = if p.is_infinite() {
            DVector::from_column_slice(weights)
        } else {
            DVector::from_iterator(weights.len(), weights.iter().map(|w| w.powf(1.0 / p)))
        };
        Self::weighted_lp_scales(p, scales, weights.to_vec())
    }

    fn weighted_lp_scales(p: f64, scales: DVector<f64>, weights: Vec<f64>) -> Result<Self> {
        let symmetries = Symmetries {
            sign_flips: true,
            permutations: scales.iter().all(|&s| s == scales[0]),
            circled: false,
        };
        let gauge = Norm::Lp {
            p,
            scales,
            map: None,
        };
        let support = gauge.dual()?;
        Self::from_norms(Family::WeightedLp { p, weights }, symmetries, gauge, support)
    }

    /// Weighted ℓ_p ball given by its coordinate scales: `‖w ∘ x‖_p ≤ 1`.
    pub fn weighted_lp_from_scales(p: f64, scales: &[f64]) -> Result<Self> {
        let weights: Vec<f64> = if p.is_infinite() {
            scales.to_vec()
        } else {
            scales.iter().map(|s| s.powf(p)).collect()
        };
        Self::weighted_lp(p, &weights)
    }

    pub fn lp_ball(n: usize, p: f64) -> Result<Self> {
        Self::weighted_lp(p, &vec![1.0; n])
    }

    pub fn euclidean_ball(n: usize) -> Self {
        Self::lp_ball(n, 2.0).expect("valid parameters")
    }

    pub fn cross_polytope(n: usize) -> Self {
        Self::lp_ball(n, 1.0).expect("valid parameters")
    }

    pub fn cube(n: usize) -> Self {
        Self::lp_ball(n, f64::INFINITY).expect("valid parameters")
    }

    /// `{x : |⟨a_i, x⟩| ≤ 1 ∀i}` for the rows `a_i`.
    pub fn polytope_h(rows: DMatrix<f64>) -> Result<Self> {
        check_full_rank(&rows, "facet normals")?;
        let symmetries = Symmetries {
            sign_flips: closed_under_sign_flips(&rows),
            ..Default::default()
        };
        let gauge = Norm::MaxAbs(rows.clone());
        let support = gauge.dual()?;
        Self::from_norms(Family::PolytopeH { rows }, symmetries, gauge, support)
    }

    /// Symmetric convex hull of the rows `±v_j`.
    pub fn polytope_v(vertices: DMatrix<f64>) -> Result<Self> {
        check_full_rank(&vertices, "vertices")?;
        let symmetries = Symmetries {
            sign_flips: closed_under_sign_flips(&vertices),
            ..Default::default()
        };
        let gauge = Norm::Atomic(vertices.clone());
        let support = gauge.dual()?;
        Self::from_norms(Family::PolytopeV { vertices }, symmetries, gauge, support)
    }

    /// `T(K)`: gauge `x ↦ ‖T^{-1}x‖_K`, support `y ↦ h_K(Tᵀy)`.
    pub fn linear_image(t: &PositionMap, base: &ConvexBody) -> Result<Self> {
        if t.dim() != base.dim {
            return Err(GeomError::DimensionMismatch {
                expected: base.dim,
                got: t.dim(),
            });
        }
        let (gauge, support) = match &base.oracle {
            Oracle::Norms { gauge, support } => (
                gauge.compose(t.inverse())?,
                support.compose(&t.matrix().transpose())?,
            ),
            Oracle::Complexified { .. } => {
                return Err(GeomError::Unsupported("linear images of complexified bodies".into()))
            }
        };
        let diag = t.diagonal_entries();
        let symmetries = Symmetries {
            sign_flips: base.symmetries.sign_flips && diag.is_some(),
            permutations: base.symmetries.permutations
                && diag.as_ref().is_some_and(|d| d.iter().all(|&v| v == d[0])),
            circled: false,
        };
        let family = Family::LinearImage {
            map: t.clone(),
            base: Arc::new(base.clone()),
        };
        Self::from_norms(family, symmetries, gauge, support)
    }

    /// `a·K`.
    pub fn scaled(&self, a: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(GeomError::InvalidParameter(format!("scale {a} must be positive")));
        }
        Self::linear_image(&PositionMap::scalar(self.dim, a)?, self)
    }

    /// Polar body, as a closed-form family whenever one exists.
    pub fn polar(&self) -> Result<Self> {
        match &self.family {
            Family::Ellipsoid { matrix } => Self::ellipsoid(linalg::inverse(matrix)?),
            Family::WeightedLp { p, .. } => {
                let Oracle::Norms {
                    support: Norm::Lp { p: q, scales, .. },
                    ..
                } = &self.oracle
                else {
                    unreachable!("weighted ℓp bodies resolve to ℓp norms")
                };
                debug_assert_eq!(*q, norm::conjugate_exponent(*p));
                let weights: Vec<f64> = if q.is_infinite() {
                    scales.iter().copied().collect()
                } else {
                    scales.iter().map(|s| s.powf(*q)).collect()
                };
                Self::weighted_lp_scales(*q, scales.clone(), weights)
            }
            Family::PolytopeH { rows } => Self::polytope_v(rows.clone()),
            Family::PolytopeV { vertices } => Self::polytope_h(vertices.clone()),
            Family::LinearImage { map, base } => {
                Self::linear_image(&map.adjoint_inverse_map(), &base.polar()?)
            }
            Family::Polar { base } => Ok((**base).clone()),
            Family::Complexified { .. } => Err(GeomError::Unsupported(
                "polar of a complexified body".into(),
            )),
        }
    }

    /// Polar body through the generic wrapper (gauge and support swapped)
    /// rather than the closed-form family swap.
    pub fn polar_wrapped(&self) -> Result<Self> {
        match &self.oracle {
            Oracle::Norms { gauge, support } => Ok(Self {
                dim: self.dim,
                family: Family::Polar {
                    base: Arc::new(self.clone()),
                },
                symmetries: self.symmetries,
                oracle: Oracle::Norms {
                    gauge: support.clone(),
                    support: gauge.clone(),
                },
                radii: Radii {
                    inner: 1.0 / self.radii.outer,
                    outer: 1.0 / self.radii.inner,
                    exact: self.radii.exact,
                },
            }),
            Oracle::Complexified { .. } => Err(GeomError::Unsupported(
                "polar of a complexified body".into(),
            )),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn symmetries(&self) -> Symmetries {
        self.symmetries
    }

    pub fn radii(&self) -> Radii {
        self.radii
    }

    pub fn in_radius(&self) -> f64 {
        self.radii.inner
    }

    pub fn out_radius(&self) -> f64 {
        self.radii.outer
    }

    /// True when gauge and support are evaluated without inner iteration.
    pub fn is_exact_family(&self) -> bool {
        match &self.oracle {
            Oracle::Norms { gauge, support } => gauge.is_closed_form() && support.is_closed_form(),
            Oracle::Complexified { .. } => false,
        }
    }

    pub fn gauge_norm(&self) -> Option<&Norm> {
        match &self.oracle {
            Oracle::Norms { gauge, .. } => Some(gauge),
            Oracle::Complexified { .. } => None,
        }
    }

    pub fn support_norm(&self) -> Option<&Norm> {
        match &self.oracle {
            Oracle::Norms { support, .. } => Some(support),
            Oracle::Complexified { .. } => None,
        }
    }

    /// `(p, scales)` when the gauge is `‖w ∘ x‖_p` in the standard basis;
    /// diagonal ellipsoids are the `p = 2` case.
    pub fn weighted_lp_form(&self) -> Option<(f64, Vec<f64>)> {
        match self.gauge_norm()? {
            Norm::Lp {
                p,
                scales,
                map: None,
            } => Some((*p, scales.iter().copied().collect())),
            Norm::Quadratic(a) if linalg::is_diagonal(a) => {
                Some((2.0, a.diagonal().iter().map(|v| v.sqrt()).collect()))
            }
            _ => None,
        }
    }

    pub fn gauge(&self, x: &[f64]) -> Result<f64> {
        Ok(self.gauge_subgrad(x)?.0)
    }

    /// Gauge value and an element of its subdifferential.
    pub fn gauge_subgrad(&self, x: &[f64]) -> Result<(f64, DVector<f64>)> {
        check_dim(self.dim, x)?;
        let (xv, flip) = canonical_sign(x);
        let (v, g) = match &self.oracle {
            Oracle::Norms { gauge, .. } => gauge.eval_subgrad(&xv)?,
            Oracle::Complexified { base } => complexify::gauge_subgrad(base, &xv)?,
        };
        Ok((v, if flip { -g } else { g }))
    }

    pub fn support(&self, y: &[f64]) -> Result<f64> {
        Ok(self.support_point(y)?.0)
    }

    /// `h_K(y)` together with a maximizer `x ∈ K` of `⟨x, y⟩`.
    pub fn support_point(&self, y: &[f64]) -> Result<(f64, DVector<f64>)> {
        check_dim(self.dim, y)?;
        let (yv, flip) = canonical_sign(y);
        match &self.oracle {
            Oracle::Norms { support, .. } => {
                let (v, x) = support.eval_subgrad(&yv)?;
                Ok((v, if flip { -x } else { x }))
            }
            Oracle::Complexified { .. } => Err(GeomError::Unsupported(
                "support function of a complexified body".into(),
            )),
        }
    }

    /// The complexification `K^ℂ ⊂ ℂ^n ≅ R^{2n}` with
    /// `‖x + iy‖ = max_θ ‖cos θ x + sin θ y‖_K`.
    pub fn complexify(&self) -> Result<Self> {
        if matches!(self.oracle, Oracle::Complexified { .. }) {
            return Err(GeomError::Unsupported("iterated complexification".into()));
        }
        let base = Arc::new(self.clone());
        let dim = 2 * self.dim;
        let radii = complexify::radii(&base)?;
        Ok(Self {
            dim,
            family: Family::Complexified { base: base.clone() },
            symmetries: Symmetries {
                circled: true,
                ..Default::default()
            },
            oracle: Oracle::Complexified { base },
            radii,
        })
    }

    /// Inner solver for `min_{z ∈ span C} ‖x0 + z‖_K`.
    pub fn gauge_fiber_solver(&self, c: &DMatrix<f64>) -> Result<FiberMin> {
        match &self.oracle {
            Oracle::Norms { gauge, .. } => Ok(FiberMin::Norm(FiberSolver::new(gauge, c)?)),
            Oracle::Complexified { base } => Ok(FiberMin::Generic(complexify::GenericFiber::new(
                base.clone(),
                c.clone(),
                self.radii.outer,
            ))),
        }
    }

    /// Inner solver for `min_{z ∈ span C} h_K(x0 + z)`.
    pub fn support_fiber_solver(&self, c: &DMatrix<f64>) -> Result<FiberMin> {
        match &self.oracle {
            Oracle::Norms { support, .. } => Ok(FiberMin::Norm(FiberSolver::new(support, c)?)),
            Oracle::Complexified { .. } => Err(GeomError::Unsupported(
                "support function of a complexified body".into(),
            )),
        }
    }

    /// `R_L(K) = max_x ‖x‖_L / ‖x‖_K`, the least `R` with `K ⊆ R·L`, for
    /// `K = self`. Exact for pairs of ellipsoids; otherwise a multistart
    /// lower bound from the iteration `x ← argmax_{z∈K} ⟨∂‖x‖_L, z⟩`.
    pub fn relative_out_radius(&self, l: &ConvexBody) -> Result<f64> {
        if l.dim != self.dim {
            return Err(GeomError::DimensionMismatch {
                expected: self.dim,
                got: l.dim,
            });
        }
        if let (Family::Ellipsoid { matrix: ak }, Family::Ellipsoid { matrix: al }) = (&self.family, &l.family) {
            let w = linalg::sym_sqrt(&linalg::inverse(ak)?);
            let eig = linalg::sym_eigenvalues(&(&w * al * &w));
            return Ok(eig[eig.len() - 1].max(0.0).sqrt());
        }
        let opts = AscentOptions::default();
        let mut rng = ChaCha8Rng::seed_from_u64(RADIUS_SEED);
        let mut scored = Vec::with_capacity(opts.probes);
        for _ in 0..opts.probes {
            let u = crate::sphere::random_unit(&mut rng, self.dim);
            let ratio = l.gauge(u.as_slice())? / self.gauge(u.as_slice())?;
            scored.push((ratio, u));
        }
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut best = scored[0].0;
        if self.support_norm().is_none() {
            return Ok(best);
        }
        for (_, u) in scored.into_iter().take(opts.starts) {
            let (_, mut xi) = l.gauge_subgrad(u.as_slice())?;
            let mut value = 0.0;
            for _ in 0..opts.max_steps {
                let (_, x) = self.support_point(xi.as_slice())?;
                let (v, g) = l.gauge_subgrad(x.as_slice())?;
                if v <= value * (1.0 + opts.rel_tol) {
                    break;
                }
                value = v;
                xi = g;
            }
            best = best.max(value);
        }
        Ok(best)
    }

    /// Short human-readable family tag.
    pub fn describe(&self) -> String {
        match &self.family {
            Family::Ellipsoid { .. } => format!("ellipsoid(n={})", self.dim),
            Family::WeightedLp { p, .. } => format!("weighted_lp(p={p}, n={})", self.dim),
            Family::PolytopeH { rows } => format!("polytope_h({} facets, n={})", 2 * rows.nrows(), self.dim),
            Family::PolytopeV { vertices } => {
                format!("polytope_v({} vertices, n={})", 2 * vertices.nrows(), self.dim)
            }
            Family::LinearImage { base, .. } => format!("linear_image({})", base.describe()),
            Family::Polar { base } => format!("polar({})", base.describe()),
            Family::Complexified { base } => format!("complexify({})", base.describe()),
        }
    }
}

/// Inner fiber minimization, either through a [`Norm`] or through the
/// generic cutting-plane solver used for complexified bodies.
#[derive(Debug, Clone)]
pub enum FiberMin {
    Norm(FiberSolver),
    Generic(complexify::GenericFiber),
}

impl FiberMin {
    pub fn solve(&mut self, x0: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        match self {
            FiberMin::Norm(s) => s.solve(x0),
            FiberMin::Generic(s) => s.solve(x0),
        }
    }
}

// Oracles are evaluated at the representative of {x, -x} whose first
// nonzero entry is positive, so evenness holds bit-for-bit.
fn canonical_sign(x: &[f64]) -> (DVector<f64>, bool) {
    let flip = x.iter().find(|v| **v != 0.0).is_some_and(|v| *v < 0.0);
    let v = DVector::from_column_slice(x);
    if flip {
        (-v, true)
    } else {
        (v, false)
    }
}

fn check_full_rank(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(GeomError::NonFinite);
    }
    let n = m.ncols();
    if m.nrows() < n {
        return Err(GeomError::Degenerate(format!("{what} do not span the space")));
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.amax();
    let rank = sv.iter().filter(|&&s| s > 1e-10 * smax).count();
    if rank < n {
        return Err(GeomError::Degenerate(format!("{what} do not span the space")));
    }
    Ok(())
}

fn closed_under_sign_flips(rows: &DMatrix<f64>) -> bool {
    let (m, n) = rows.shape();
    (0..n).all(|i| {
        (0..m).all(|r| {
            let mut flipped = rows.row(r).into_owned();
            flipped[i] = -flipped[i];
            (0..m).any(|s| {
                let row = rows.row(s);
                (row - &flipped).amax() < 1e-12 || (row + &flipped).amax() < 1e-12
            })
        })
    })
}

/// Exact `max_{|u|=1} N(u)` when a closed form exists.
fn sphere_max_closed_form(norm: &Norm) -> Option<f64> {
    match norm {
        Norm::Quadratic(a) => {
            let eig = linalg::sym_eigenvalues(a);
            Some(eig[eig.len() - 1].sqrt())
        }
        Norm::Lp {
            p,
            scales,
            map: None,
        } => {
            let p = *p;
            if p >= 2.0 {
                Some(scales.amax())
            } else {
                // Hölder: max ‖w∘u‖_p over |u| = 1 is ‖w‖_q, 1/q = 1/p - 1/2.
                let q = 2.0 * p / (2.0 - p);
                Some(scales.iter().map(|w| w.powf(q)).sum::<f64>().powf(1.0 / q))
            }
        }
        Norm::MaxAbs(r) => Some(r.row_iter().map(|row| row.norm()).fold(0.0, f64::max)),
        _ => None,
    }
}

fn sphere_max(norm: &Norm) -> Result<(f64, bool)> {
    if let Some(v) = sphere_max_closed_form(norm) {
        return Ok((v, true));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(RADIUS_SEED);
    let opts = AscentOptions::with_budget(64, 0);
    let res = maximize_on_sphere(norm.dim(), &mut rng, &opts, None, |u| norm.eval_subgrad(u))?;
    Ok((res.value, false))
}

fn norm_radii(gauge: &Norm, support: &Norm) -> Result<Radii> {
    let (gmax, e1) = sphere_max(gauge)?;
    let (hmax, e2) = sphere_max(support)?;
    if !(gmax.is_finite() && gmax > 0.0 && hmax.is_finite() && hmax > 0.0) {
        return Err(GeomError::Degenerate("radius computation failed".into()));
    }
    Ok(Radii {
        inner: 1.0 / gmax,
        outer: hmax,
        exact: e1 && e2,
    })
}

#[cfg(test)]
mod tests;
