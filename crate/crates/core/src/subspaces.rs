//! Haar-random subspaces and flags, sections, projections and their radii.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::bodies::{ConvexBody, FiberMin, Norm};
use crate::error::{GeomError, Result};
use crate::linalg;
use crate::sphere::{maximize_on_sphere, AscentOptions};

/// An `m`-dimensional subspace of R^n given by an orthonormal basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    basis: DMatrix<f64>,
}

const ORTHO_TOL: f64 = 1e-10;

impl Subspace {
    /// Span of the columns of `m` (must have full column rank).
    pub fn span(m: &DMatrix<f64>) -> Result<Self> {
        Ok(Self {
            basis: linalg::orthonormalize(m)?,
        })
    }

    /// Wraps a basis that is already orthonormal.
    pub fn from_orthonormal(basis: DMatrix<f64>) -> Result<Self> {
        let m = basis.ncols();
        let gram = basis.transpose() * &basis;
        if (gram - DMatrix::identity(m, m)).amax() > ORTHO_TOL {
            return Err(GeomError::InvalidParameter("basis is not orthonormal".into()));
        }
        Ok(Self { basis })
    }

    pub fn full(n: usize) -> Self {
        Self {
            basis: DMatrix::identity(n, n),
        }
    }

    pub fn zero(n: usize) -> Self {
        Self {
            basis: DMatrix::zeros(n, 0),
        }
    }

    /// Span of the listed standard basis vectors.
    pub fn coordinate(n: usize, axes: &[usize]) -> Result<Self> {
        let mut b = DMatrix::zeros(n, axes.len());
        for (j, &i) in axes.iter().enumerate() {
            if i >= n {
                return Err(GeomError::InvalidParameter(format!("axis {i} out of range")));
            }
            b[(i, j)] = 1.0;
        }
        Self::span(&b)
    }

    pub fn ambient(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.basis * (self.basis.transpose() * x)
    }

    pub fn orthogonal_complement(&self) -> Self {
        if self.dim() == 0 {
            return Self::full(self.ambient());
        }
        Self {
            basis: linalg::complement(&self.basis).expect("orthonormal basis completes"),
        }
    }

    pub fn intersection(&self, other: &Subspace) -> Self {
        Self {
            basis: linalg::intersection(&self.basis, &other.basis, 1e-7),
        }
    }

    /// `self + other`.
    pub fn sum(&self, other: &Subspace) -> Result<Self> {
        let joined = DMatrix::from_columns(
            &self
                .basis
                .column_iter()
                .chain(other.basis.column_iter())
                .map(|c| c.into_owned())
                .collect::<Vec<_>>(),
        );
        let basis = linalg::range_basis(&joined, None, 1e-6);
        if basis.ncols() == 0 {
            return Ok(Self::zero(self.ambient()));
        }
        Self::span(&basis)
    }

    /// Orthogonal complement of `inner` inside `self`.
    pub fn relative_complement(&self, inner: &Subspace) -> Result<Self> {
        let n = self.ambient();
        let m = self.dim() - inner.dim().min(self.dim());
        if m == 0 {
            return Ok(Self::zero(n));
        }
        let resid = &self.basis - &inner.basis * (inner.basis.transpose() * &self.basis);
        Self::span(&linalg::range_basis(&resid, Some(m), 0.0))
    }

    /// `max` over basis columns of `other` of the distance to `self`.
    pub fn containment_residual(&self, other: &Subspace) -> f64 {
        if other.dim() == 0 {
            return 0.0;
        }
        linalg::containment_residual(&other.basis, &self.basis)
    }

    pub fn contains(&self, other: &Subspace, tol: f64) -> bool {
        self.containment_residual(other) <= tol
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.basis.row_iter().map(|r| r.iter().copied().collect()).collect()
    }
}

impl Serialize for Subspace {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Subspace {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        let m = crate::map::matrix_from_rows(&rows).map_err(serde::de::Error::custom)?;
        Subspace::from_orthonormal(m).map_err(serde::de::Error::custom)
    }
}

fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, n: usize, m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, m, |_, _| rng.sample(StandardNormal))
}

fn haar_frame<R: Rng + ?Sized>(rng: &mut R, n: usize, m: usize) -> DMatrix<f64> {
    loop {
        if let Ok(q) = linalg::orthonormalize(&gaussian_matrix(rng, n, m)) {
            return q;
        }
    }
}

/// Haar-random `m`-dimensional subspace of R^n.
pub fn haar_grassmannian<R: Rng + ?Sized>(rng: &mut R, n: usize, m: usize) -> Result<Subspace> {
    if m == 0 || m > n {
        return Err(GeomError::InvalidParameter(format!("need 1 ≤ m ≤ n, got m={m}, n={n}")));
    }
    if m == n {
        return Ok(Subspace::full(n));
    }
    Ok(Subspace {
        basis: haar_frame(rng, n, m),
    })
}

/// Nested pair `E ⊆ F` with `dim F = n-k+1`, `dim E = n-2k+2`, together
/// with `F^⊥` and `F ∩ E^⊥`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flag {
    pub k: usize,
    pub f: Subspace,
    pub e: Subspace,
    pub f_perp: Subspace,
    pub f_minus_e: Subspace,
}

impl Flag {
    pub fn ambient(&self) -> usize {
        self.f.ambient()
    }

    /// `E_2 = F^⊥ + E`.
    pub fn e2(&self) -> Result<Subspace> {
        self.f_perp.sum(&self.e)
    }
}

/// Haar-random flag from the first columns of a Haar orthonormal frame.
pub fn haar_flag<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> Result<Flag> {
    if k == 0 || (k > 1 && 2 * k > n) {
        return Err(GeomError::InvalidParameter(format!("need 1 ≤ k ≤ n/2, got k={k}, n={n}")));
    }
    let dim_f = n - k + 1;
    let dim_e = n - 2 * k + 2;
    let q = if k == 1 {
        DMatrix::identity(n, n)
    } else {
        haar_frame(rng, n, n)
    };
    let take = |start: usize, len: usize| Subspace {
        basis: q.columns(start, len).into_owned(),
    };
    Ok(Flag {
        k,
        f: take(0, dim_f),
        e: take(0, dim_e),
        f_perp: take(dim_f, n - dim_f),
        f_minus_e: take(dim_e, dim_f - dim_e),
    })
}

/// How a [`SectionBody`] was obtained from its parent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SliceMode {
    /// `K ∩ F`
    Section,
    /// `P_F K`
    Projection,
    /// `(P_F K) ∩ E`
    QuotientOfSection,
    /// `P_E (K ∩ F)`
    SectionOfQuotient,
    /// Generic fiber description.
    Custom,
}

/// A body living in a subspace (the carrier), described in carrier
/// coordinates through fiber minimizations over the parent oracles:
///
/// `‖u‖ = min_{z ∈ Z_g} ‖Bu + z‖_K`,  `h(v) = min_{z ∈ Z_h} h_K(Bv + z)`.
#[derive(Debug, Clone)]
pub struct SectionBody {
    parent: Arc<ConvexBody>,
    carrier: Subspace,
    mode: SliceMode,
    gauge_fiber: Subspace,
    support_fiber: Subspace,
    quadratic: Option<DMatrix<f64>>,
}

/// A radius value: exact when computed from a closed form, otherwise the
/// best value found by multistart ascent (a lower bound for the out-radius
/// and an upper bound for the in-radius).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadiusEstimate {
    pub value: f64,
    pub exact: bool,
    pub argmax: Vec<f64>,
}

impl SectionBody {
    pub fn slice(
        parent: &ConvexBody,
        carrier: Subspace,
        gauge_fiber: Subspace,
        support_fiber: Subspace,
        mode: SliceMode,
    ) -> Result<Self> {
        let n = parent.dim();
        for s in [&carrier, &gauge_fiber, &support_fiber] {
            if s.ambient() != n {
                return Err(GeomError::DimensionMismatch {
                    expected: n,
                    got: s.ambient(),
                });
            }
        }
        if carrier.dim() == 0 {
            return Err(GeomError::InvalidParameter("carrier must be nonzero".into()));
        }
        let quadratic = match parent.gauge_norm() {
            Some(Norm::Quadratic(a)) => Some(schur_form(a, carrier.basis(), gauge_fiber.basis())?),
            Some(Norm::Lp { p, scales, map }) if *p == 2.0 => {
                let w = DMatrix::from_diagonal(&scales.map(|s| s * s));
                let a = match map {
                    Some(m) => m.transpose() * w * m,
                    None => w,
                };
                Some(schur_form(&a, carrier.basis(), gauge_fiber.basis())?)
            }
            _ => None,
        };
        Ok(Self {
            parent: Arc::new(parent.clone()),
            carrier,
            mode,
            gauge_fiber,
            support_fiber,
            quadratic,
        })
    }

    pub fn section(k: &ConvexBody, f: &Subspace) -> Result<Self> {
        let n = k.dim();
        Self::slice(k, f.clone(), Subspace::zero(n), f.orthogonal_complement(), SliceMode::Section)
    }

    pub fn projection(k: &ConvexBody, f: &Subspace) -> Result<Self> {
        let n = k.dim();
        Self::slice(k, f.clone(), f.orthogonal_complement(), Subspace::zero(n), SliceMode::Projection)
    }

    /// `(P_F K) ∩ E` for a flag.
    pub fn quotient_of_section(k: &ConvexBody, flag: &Flag) -> Result<Self> {
        Self::slice(
            k,
            flag.e.clone(),
            flag.f_perp.clone(),
            flag.f_minus_e.clone(),
            SliceMode::QuotientOfSection,
        )
    }

    /// `P_E (K ∩ F)` for a flag.
    pub fn section_of_quotient(k: &ConvexBody, flag: &Flag) -> Result<Self> {
        Self::slice(
            k,
            flag.e.clone(),
            flag.f_minus_e.clone(),
            flag.f_perp.clone(),
            SliceMode::SectionOfQuotient,
        )
    }

    pub fn parent(&self) -> &ConvexBody {
        &self.parent
    }

    pub fn carrier(&self) -> &Subspace {
        &self.carrier
    }

    pub fn mode(&self) -> SliceMode {
        self.mode
    }

    pub fn dim(&self) -> usize {
        self.carrier.dim()
    }

    /// Quadratic form of the gauge in carrier coordinates, when the parent
    /// is an ellipsoid.
    pub fn quadratic_form(&self) -> Option<&DMatrix<f64>> {
        self.quadratic.as_ref()
    }

    /// Forgets the closed form so that every evaluation goes through the
    /// fiber solvers.
    pub fn without_closed_form(mut self) -> Self {
        self.quadratic = None;
        self
    }

    pub fn gauge_oracle(&self) -> Result<SliceOracle> {
        SliceOracle::new(self.carrier.basis().clone(), self.parent.gauge_fiber_solver(self.gauge_fiber.basis())?)
    }

    pub fn support_oracle(&self) -> Result<SliceOracle> {
        SliceOracle::new(
            self.carrier.basis().clone(),
            self.parent.support_fiber_solver(self.support_fiber.basis())?,
        )
    }

    pub fn gauge(&self, u: &[f64]) -> Result<f64> {
        Ok(self.gauge_oracle()?.eval(&self.check(u)?)?.0)
    }

    pub fn support(&self, v: &[f64]) -> Result<f64> {
        Ok(self.support_oracle()?.eval(&self.check(v)?)?.0)
    }

    fn check(&self, u: &[f64]) -> Result<DVector<f64>> {
        crate::error::check_dim(self.dim(), u)?;
        Ok(DVector::from_column_slice(u))
    }

    pub fn out_radius(&self, opts: &AscentOptions, rng: &mut impl Rng) -> Result<RadiusEstimate> {
        if let Some(q) = &self.quadratic {
            let eig = q.clone().symmetric_eigen();
            let (i, lmin) = argmin(eig.eigenvalues.as_slice());
            return Ok(RadiusEstimate {
                value: 1.0 / lmin.sqrt(),
                exact: true,
                argmax: eig.eigenvectors.column(i).iter().copied().collect(),
            });
        }
        let m = self.dim();
        let mut gauge = self.gauge_oracle()?;
        if self.parent.support_norm().is_none() {
            // Without a support oracle only probing 1/‖u‖ is available.
            let res = maximize_on_sphere(m, rng, &AscentOptions { starts: 0, ..*opts }, None, |u| {
                let (g, _) = gauge.eval(u)?;
                Ok((1.0 / g, DVector::zeros(m)))
            })?;
            return Ok(estimate(res.value, res.argmax, false));
        }
        let mut support = self.support_oracle()?;
        let mut probe = |u: &DVector<f64>| gauge.eval(u).map(|(g, _)| 1.0 / g);
        let res = maximize_on_sphere(m, rng, opts, Some(&mut probe), |u| support.eval(u))?;
        Ok(estimate(res.value, res.argmax, false))
    }

    pub fn in_radius(&self, opts: &AscentOptions, rng: &mut impl Rng) -> Result<RadiusEstimate> {
        if let Some(q) = &self.quadratic {
            let eig = q.clone().symmetric_eigen();
            let (i, lmax) = argmax(eig.eigenvalues.as_slice());
            return Ok(RadiusEstimate {
                value: 1.0 / lmax.sqrt(),
                exact: true,
                argmax: eig.eigenvectors.column(i).iter().copied().collect(),
            });
        }
        let m = self.dim();
        let mut gauge = self.gauge_oracle()?;
        let res = if self.parent.support_norm().is_some() {
            let mut support = self.support_oracle()?;
            let mut probe = |u: &DVector<f64>| support.eval(u).map(|(h, _)| 1.0 / h);
            maximize_on_sphere(m, rng, opts, Some(&mut probe), |u| gauge.eval(u))?
        } else {
            maximize_on_sphere(m, rng, opts, None, |u| gauge.eval(u))?
        };
        Ok(estimate(1.0 / res.value, res.argmax, false))
    }

    /// `d_G(S, B_2) = R(S) / r(S)`.
    pub fn geometric_distance_to_ball(&self, opts: &AscentOptions, rng: &mut impl Rng) -> Result<f64> {
        let outer = self.out_radius(opts, rng)?.value;
        let inner = self.in_radius(opts, rng)?.value;
        Ok((outer / inner).max(1.0))
    }
}

fn estimate(value: f64, argmax: DVector<f64>, exact: bool) -> RadiusEstimate {
    RadiusEstimate {
        value,
        exact,
        argmax: argmax.iter().copied().collect(),
    }
}

fn argmin(v: &[f64]) -> (usize, f64) {
    v.iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, x)| if x < acc.1 { (i, x) } else { acc })
}

fn argmax(v: &[f64]) -> (usize, f64) {
    v.iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, x)| if x > acc.1 { (i, x) } else { acc })
}

/// `min_w (Bu + Zw)ᵀ A (Bu + Zw) = uᵀ Q u` with
/// `Q = BᵀAB − BᵀAZ (ZᵀAZ)^{-1} ZᵀAB`.
fn schur_form(a: &DMatrix<f64>, b: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let bab = b.transpose() * a * b;
    if z.ncols() == 0 {
        return Ok(bab);
    }
    let az = a * z;
    let zaz = z.transpose() * &az;
    let chol = zaz
        .cholesky()
        .ok_or_else(|| GeomError::Degenerate("fiber Gram matrix not positive definite".into()))?;
    let baz = b.transpose() * &az;
    let q = bab - &baz * chol.solve(&baz.transpose());
    Ok((&q + q.transpose()) * 0.5)
}

/// Stateful evaluator of a slice gauge or support function in carrier
/// coordinates; keeps inner solver warm starts between calls.
pub struct SliceOracle {
    basis: DMatrix<f64>,
    solver: FiberMin,
}

impl SliceOracle {
    fn new(basis: DMatrix<f64>, solver: FiberMin) -> Result<Self> {
        Ok(Self { basis, solver })
    }

    /// Value and carrier-coordinate subgradient.
    pub fn eval(&mut self, u: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let x0 = &self.basis * u;
        let (v, y) = self.solver.solve(&x0)?;
        Ok((v, self.basis.transpose() * y))
    }
}

/// Residual of `P_{E1∩E2}(A ∩ E1) = (P_{E2} A) ∩ E1`, valid when
/// `E1 ⊇ E2^⊥`: the largest gauge discrepancy over `directions` random unit
/// vectors of `E1 ∩ E2`.
pub fn perp_identity_check<R: Rng + ?Sized>(
    a: &ConvexBody,
    e1: &Subspace,
    e2: &Subspace,
    directions: usize,
    rng: &mut R,
) -> Result<f64> {
    let e2_perp = e2.orthogonal_complement();
    let resid = e1.containment_residual(&e2_perp);
    if resid > 1e-8 {
        return Err(GeomError::HypothesisViolated(format!(
            "E1 does not contain the orthogonal complement of E2 (residual {resid:.3e})"
        )));
    }
    let e = e1.intersection(e2);
    if e.dim() == 0 {
        return Ok(0.0);
    }
    let inner = e1.relative_complement(&e)?;
    let n = a.dim();
    let lhs = SectionBody::slice(a, e.clone(), inner, Subspace::zero(n), SliceMode::Custom)?;
    let rhs = SectionBody::slice(a, e.clone(), e2_perp, Subspace::zero(n), SliceMode::Custom)?;
    let mut gl = lhs.gauge_oracle()?;
    let mut gr = rhs.gauge_oracle()?;
    let mut worst: f64 = 0.0;
    for _ in 0..directions {
        let u = crate::sphere::random_unit(rng, e.dim());
        let (l, _) = gl.eval(&u)?;
        let (r, _) = gr.eval(&u)?;
        worst = worst.max((l - r).abs());
    }
    Ok(worst)
}
