//! Norm primitives behind the body oracles.
//!
//! Every non-complexified body resolves to a pair of these (gauge and
//! support). The set is closed under duality and under composition with
//! invertible linear maps, so polars and linear images never need wrapper
//! indirection at evaluation time.

use nalgebra::{DMatrix, DVector};

use crate::error::{GeomError, Result};
use crate::linalg;
use crate::lp::Simplex;

#[derive(Debug, Clone, PartialEq)]
pub enum Norm {
    /// `sqrt(xᵀ A x)` with `A` symmetric positive definite.
    Quadratic(DMatrix<f64>),
    /// `‖w ∘ (M x)‖_p`; `map = None` means `M = Id`.
    Lp {
        p: f64,
        scales: DVector<f64>,
        map: Option<DMatrix<f64>>,
    },
    /// `max_j |⟨r_j, x⟩|` over the rows `r_j`.
    MaxAbs(DMatrix<f64>),
    /// `min { Σ|λ_j| : Σ λ_j v_j = x }` over the rows `v_j` (the gauge of
    /// the symmetric convex hull of the rows).
    Atomic(DMatrix<f64>),
}

pub(crate) fn conjugate_exponent(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

impl Norm {
    pub fn dim(&self) -> usize {
        match self {
            Norm::Quadratic(a) => a.nrows(),
            Norm::Lp { scales, map, .. } => map.as_ref().map_or(scales.len(), |m| m.ncols()),
            Norm::MaxAbs(r) => r.ncols(),
            Norm::Atomic(v) => v.ncols(),
        }
    }

    /// True when evaluation needs no inner optimization.
    pub fn is_closed_form(&self) -> bool {
        !matches!(self, Norm::Atomic(_))
    }

    pub fn dual(&self) -> Result<Norm> {
        Ok(match self {
            Norm::Quadratic(a) => Norm::Quadratic(linalg::inverse(a)?),
            Norm::Lp { p, scales, map } => Norm::Lp {
                p: conjugate_exponent(*p),
                scales: scales.map(|w| 1.0 / w),
                map: match map {
                    Some(m) => Some(linalg::inverse(m)?.transpose()),
                    None => None,
                },
            },
            Norm::MaxAbs(r) => Norm::Atomic(r.clone()),
            Norm::Atomic(v) => Norm::MaxAbs(v.clone()),
        })
    }

    /// The norm `x ↦ self(T x)`.
    pub fn compose(&self, t: &DMatrix<f64>) -> Result<Norm> {
        Ok(match self {
            Norm::Quadratic(a) => {
                let m = t.transpose() * a * t;
                Norm::Quadratic((&m + m.transpose()) * 0.5)
            }
            Norm::Lp { p, scales, map } => match map {
                None if linalg::is_diagonal(t) => Norm::Lp {
                    p: *p,
                    scales: scales.component_mul(&t.diagonal().abs()),
                    map: None,
                },
                None => Norm::Lp {
                    p: *p,
                    scales: scales.clone(),
                    map: Some(t.clone()),
                },
                Some(m) => Norm::Lp {
                    p: *p,
                    scales: scales.clone(),
                    map: Some(m * t),
                },
            },
            Norm::MaxAbs(r) => Norm::MaxAbs(r * t),
            Norm::Atomic(v) => Norm::Atomic(v * linalg::inverse(t)?.transpose()),
        })
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(match self {
            Norm::Quadratic(a) => x.dot(&(a * x)).max(0.0).sqrt(),
            Norm::Lp { p, scales, map } => match map {
                None => lp_value(*p, scales, x.as_slice()),
                Some(m) => lp_value(*p, scales, (m * x).as_slice()),
            },
            Norm::MaxAbs(r) => (r * x).amax(),
            Norm::Atomic(_) => self.eval_subgrad(x)?.0,
        })
    }

    /// Value together with one element of the subdifferential.
    pub fn eval_subgrad(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        match self {
            Norm::Quadratic(a) => {
                let ax = a * x;
                let v = x.dot(&ax).max(0.0).sqrt();
                if v == 0.0 {
                    return Ok((0.0, DVector::zeros(x.len())));
                }
                Ok((v, ax / v))
            }
            Norm::Lp { p, scales, map } => match map {
                None => Ok(lp_value_grad(*p, scales, x)),
                Some(m) => {
                    let (v, g) = lp_value_grad(*p, scales, &(m * x));
                    Ok((v, m.transpose() * g))
                }
            },
            Norm::MaxAbs(r) => {
                let rx = r * x;
                let j = rx.iamax();
                let v = rx[j].abs();
                let s = if rx[j] >= 0.0 { 1.0 } else { -1.0 };
                Ok((v, r.row(j).transpose() * s))
            }
            Norm::Atomic(_) => {
                let mut solver = FiberSolver::new(self, &DMatrix::zeros(x.len(), 0))?;
                solver.solve(x)
            }
        }
    }
}

fn lp_value(p: f64, w: &DVector<f64>, x: &[f64]) -> f64 {
    if p.is_infinite() {
        x.iter().zip(w.iter()).fold(0.0, |m, (xi, wi)| m.max((xi * wi).abs()))
    } else if p == 1.0 {
        x.iter().zip(w.iter()).map(|(xi, wi)| (xi * wi).abs()).sum()
    } else if p == 2.0 {
        x.iter()
            .zip(w.iter())
            .map(|(xi, wi)| (xi * wi) * (xi * wi))
            .sum::<f64>()
            .sqrt()
    } else {
        // Rescale by the largest entry to avoid under/overflow.
        let m = x.iter().zip(w.iter()).fold(0.0f64, |m, (xi, wi)| m.max((xi * wi).abs()));
        if m == 0.0 {
            return 0.0;
        }
        let s: f64 = x
            .iter()
            .zip(w.iter())
            .map(|(xi, wi)| ((xi * wi).abs() / m).powf(p))
            .sum();
        m * s.powf(1.0 / p)
    }
}

fn lp_value_grad(p: f64, w: &DVector<f64>, x: &DVector<f64>) -> (f64, DVector<f64>) {
    let n = x.len();
    let v = lp_value(p, w, x.as_slice());
    let mut g = DVector::zeros(n);
    if v == 0.0 {
        return (0.0, g);
    }
    if p.is_infinite() {
        let (j, _) = x
            .iter()
            .zip(w.iter())
            .map(|(xi, wi)| (xi * wi).abs())
            .enumerate()
            .fold((0, -1.0), |best, (i, a)| if a > best.1 { (i, a) } else { best });
        g[j] = w[j] * x[j].signum();
    } else if p == 1.0 {
        for i in 0..n {
            if x[i] != 0.0 {
                g[i] = w[i] * x[i].signum();
            }
        }
    } else {
        for i in 0..n {
            let a = (w[i] * x[i]).abs() / v;
            if a > 0.0 {
                g[i] = w[i] * a.powf(p - 1.0) * x[i].signum();
            }
        }
    }
    (v, g)
}

/// Minimizes `N(x0 + C ζ)` over ζ for a fixed norm `N` and fiber basis `C`.
///
/// The constraints of the polyhedral cases do not depend on `x0`, so the
/// simplex basis is reused across calls. Returns the minimum and a dual
/// certificate `y ∈ ∂N(x0 + Cζ*)` with `Cᵀy = 0`.
#[derive(Debug, Clone)]
pub struct FiberSolver {
    kind: FiberKind,
}

#[derive(Debug, Clone)]
enum FiberKind {
    Direct(Norm),
    Quadratic {
        a: DMatrix<f64>,
        c: DMatrix<f64>,
        gram: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    },
    SmoothLp {
        p: f64,
        scales: DVector<f64>,
        map: Option<DMatrix<f64>>,
        c: DMatrix<f64>,
        warm: DVector<f64>,
    },
    /// Dual LP over y = x-space certificate with box or polytope
    /// constraints; `lift` maps LP variables to the certificate.
    Polyhedral {
        simplex: Simplex,
        objective: DMatrix<f64>,
        lift: DMatrix<f64>,
        pre: Option<DMatrix<f64>>,
    },
}

impl FiberSolver {
    pub fn new(norm: &Norm, c: &DMatrix<f64>) -> Result<Self> {
        let n = norm.dim();
        if c.nrows() != n {
            return Err(GeomError::DimensionMismatch {
                expected: n,
                got: c.nrows(),
            });
        }
        let d = c.ncols();
        let kind = match norm {
            _ if d == 0 && norm.is_closed_form() => FiberKind::Direct(norm.clone()),
            Norm::Atomic(v) => {
                // max ⟨y, x0⟩  s.t.  V y - s = 0, Cᵀ y = 0, y free, |s| ≤ 1.
                let m = v.nrows();
                let rows = m + d;
                let mut a = DMatrix::zeros(rows, n + m);
                a.view_mut((0, 0), (m, n)).copy_from(v);
                for j in 0..m {
                    a[(j, n + j)] = -1.0;
                }
                a.view_mut((m, 0), (d, n)).copy_from(&c.transpose());
                let mut lo = vec![f64::NEG_INFINITY; n];
                let mut hi = vec![f64::INFINITY; n];
                lo.extend(std::iter::repeat_n(-1.0, m));
                hi.extend(std::iter::repeat_n(1.0, m));
                let simplex = Simplex::new(a, vec![0.0; rows], lo, hi)?;
                let mut sel = DMatrix::zeros(n, n + m);
                sel.view_mut((0, 0), (n, n)).fill_with_identity();
                FiberKind::Polyhedral {
                    simplex,
                    objective: sel.transpose(),
                    lift: sel,
                    pre: None,
                }
            }
            Norm::MaxAbs(r) => {
                // Certificate y = Rᵀ μ with ‖μ‖_1 ≤ 1 and (RC)ᵀ μ = 0.
                Self::l1_ball_dual(r, c)?
            }
            Norm::Quadratic(a) => {
                let gram = (c.transpose() * a * c).cholesky().ok_or_else(|| {
                    GeomError::Degenerate("fiber Gram matrix not positive definite".into())
                })?;
                FiberKind::Quadratic {
                    a: a.clone(),
                    c: c.clone(),
                    gram,
                }
            }
            Norm::Lp { p, scales, map } if *p == 1.0 => {
                // max ⟨y, M x0⟩ s.t. (MC)ᵀ y = 0, |y_i| ≤ w_i; certificate Mᵀ y.
                let mc = map.as_ref().map_or_else(|| c.clone(), |m| m * c);
                let lo: Vec<f64> = scales.iter().map(|w| -w).collect();
                let hi: Vec<f64> = scales.iter().copied().collect();
                let simplex = Simplex::new(mc.transpose(), vec![0.0; d], lo, hi)?;
                let lift = map
                    .as_ref()
                    .map_or_else(|| DMatrix::identity(n, n), |m| m.transpose());
                FiberKind::Polyhedral {
                    simplex,
                    objective: DMatrix::identity(n, n),
                    lift,
                    pre: map.clone(),
                }
            }
            Norm::Lp { p, scales, map } if p.is_infinite() => {
                let rows = DMatrix::from_diagonal(scales);
                let r = match map {
                    Some(m) => rows * m,
                    None => rows,
                };
                Self::l1_ball_dual(&r, c)?
            }
            Norm::Lp { p, scales, map } => FiberKind::SmoothLp {
                p: *p,
                scales: scales.clone(),
                map: map.clone(),
                c: c.clone(),
                warm: DVector::zeros(d),
            },
        };
        Ok(Self { kind })
    }

    // max ⟨Rᵀμ, x0⟩ s.t. (RC)ᵀ μ = 0, ‖μ‖_1 ≤ 1, split μ = μ⁺ - μ⁻.
    fn l1_ball_dual(r: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<FiberKind> {
        let (m, n) = r.shape();
        let d = c.ncols();
        let rc = r * c;
        let mut a = DMatrix::zeros(d + 1, 2 * m + 1);
        for j in 0..m {
            for i in 0..d {
                a[(i, j)] = rc[(j, i)];
                a[(i, m + j)] = -rc[(j, i)];
            }
            a[(d, j)] = 1.0;
            a[(d, m + j)] = 1.0;
        }
        a[(d, 2 * m)] = 1.0;
        let mut b = vec![0.0; d + 1];
        b[d] = 1.0;
        let simplex = Simplex::new(a, b, vec![0.0; 2 * m + 1], vec![f64::INFINITY; 2 * m + 1])?;
        // lift: y = Rᵀ (μ⁺ - μ⁻)
        let mut lift = DMatrix::zeros(n, 2 * m + 1);
        for j in 0..m {
            for i in 0..n {
                lift[(i, j)] = r[(j, i)];
                lift[(i, m + j)] = -r[(j, i)];
            }
        }
        Ok(FiberKind::Polyhedral {
            simplex,
            objective: lift.transpose(),
            lift,
            pre: None,
        })
    }

    pub fn solve(&mut self, x0: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        match &mut self.kind {
            FiberKind::Direct(norm) => norm.eval_subgrad(x0),
            FiberKind::Quadratic { a, c, gram } => {
                let rhs = -(c.transpose() * (&*a * x0));
                let zeta = gram.solve(&rhs);
                let z = x0 + &*c * zeta;
                let az = &*a * &z;
                let v = z.dot(&az).max(0.0).sqrt();
                if v == 0.0 {
                    return Ok((0.0, DVector::zeros(x0.len())));
                }
                Ok((v, az / v))
            }
            FiberKind::SmoothLp {
                p,
                scales,
                map,
                c,
                warm,
            } => {
                let (x, cc) = match map {
                    Some(m) => (&*m * x0, &*m * &*c),
                    None => (x0.clone(), c.clone()),
                };
                let (v, g, zeta) = smooth_lp_fiber(*p, scales, &x, &cc, warm)?;
                *warm = zeta;
                let cert = match map {
                    Some(m) => m.transpose() * g,
                    None => g,
                };
                Ok((v, cert))
            }
            FiberKind::Polyhedral {
                simplex,
                objective,
                lift,
                pre,
            } => {
                let cvec = match pre {
                    Some(m) => &*objective * (&*m * x0),
                    None => &*objective * x0,
                };
                let v = simplex.maximize(cvec.as_slice())?;
                let sol = DVector::from_column_slice(simplex.solution());
                Ok((v.max(0.0), &*lift * sol))
            }
        }
    }
}

/// Fiber minimum of a weighted ℓ_p norm, 1 < p < ∞. For p < 2 the dual
/// problem (exponent above 2) is solved instead.
fn smooth_lp_fiber(
    p: f64,
    w: &DVector<f64>,
    x: &DVector<f64>,
    c: &DMatrix<f64>,
    warm: &DVector<f64>,
) -> Result<(f64, DVector<f64>, DVector<f64>)> {
    if p >= 2.0 || c.ncols() == 0 {
        return smooth_lp_fiber_primal(p, w, x, c, warm);
    }
    if 2 * c.ncols() <= x.len() {
        if let Ok(out) = smooth_lp_fiber_primal(p, w, x, c, warm) {
            return Ok(out);
        }
    }
    let Ok(b) = linalg::complement(c) else {
        return smooth_lp_fiber_primal(p, w, x, c, warm);
    };
    let n = x.len();
    if b.ncols() == 0 {
        return Ok((0.0, DVector::zeros(n), DVector::zeros(0)));
    }
    // min ‖W(x + Cζ)‖_p = max{⟨x, y⟩ : ‖W⁻¹y‖_q ≤ 1, y ∈ span B}
    //                   = 1 / min{‖W⁻¹Bu‖_q : ⟨Bᵀx, u⟩ = 1}
    let bx = b.transpose() * x;
    let nb = bx.norm_squared();
    if nb <= 1e-28 * x.norm_squared().max(1e-300) {
        return Ok((0.0, DVector::zeros(n), DVector::zeros(0)));
    }
    let u0 = &bx / nb;
    let d = linalg::complement(&DMatrix::from_column_slice(bx.len(), 1, bx.as_slice()))?;
    let q = p / (p - 1.0);
    let winv = w.map(|v| 1.0 / v);
    let x2 = &b * &u0;
    let c2 = &b * &d;
    let (m, _, eta) = smooth_lp_fiber_primal(q, &winv, &x2, &c2, &DVector::zeros(0))?;
    if !(m > 0.0) {
        return Err(GeomError::SolverNonConvergence { residual: m });
    }
    let y = (&x2 + &c2 * eta) / m;
    Ok((1.0 / m, y, DVector::zeros(0)))
}

/// Damped Newton on `Σ |w_i z_i|^p`, `z = x + C ζ`, for 1 < p < ∞.
fn smooth_lp_fiber_primal(
    p: f64,
    w: &DVector<f64>,
    x: &DVector<f64>,
    c: &DMatrix<f64>,
    warm: &DVector<f64>,
) -> Result<(f64, DVector<f64>, DVector<f64>)> {
    let d = c.ncols();
    let n = x.len();
    let phi = |z: &DVector<f64>| -> f64 {
        z.iter()
            .zip(w.iter())
            .map(|(zi, wi)| (zi * wi).abs().powf(p))
            .sum()
    };
    let scale = lp_value(p, w, x.as_slice()).max(1e-300);
    // Work with x / scale so that φ is O(1).
    let xs = x / scale;
    let mut zeta = if warm.len() == d { warm / scale } else { DVector::zeros(d) };
    let mut z = &xs + c * &zeta;
    let mut f = phi(&z);
    let z0 = xs.clone();
    if phi(&z0) < f {
        zeta = DVector::zeros(d);
        z = z0;
        f = phi(&z);
    }
    let mut converged = false;
    for _ in 0..200 {
        let amax = z.iter().zip(w.iter()).fold(0.0f64, |m, (zi, wi)| m.max((zi * wi).abs()));
        let floor = 1e-12 * amax.max(1e-300);
        let mut gz = DVector::zeros(n);
        let mut hz = DVector::zeros(n);
        for i in 0..n {
            let a = (w[i] * z[i]).abs().max(floor);
            gz[i] = p * w[i] * (w[i] * z[i]).abs().powf(p - 1.0) * z[i].signum();
            hz[i] = p * (p - 1.0) * w[i] * w[i] * a.powf(p - 2.0);
        }
        let g = c.transpose() * &gz;
        let mut hc = c.clone();
        for (i, mut row) in hc.row_iter_mut().enumerate() {
            row *= hz[i];
        }
        let h = c.transpose() * hc;
        let hscale = h.diagonal().amax().max(1e-300);
        let mut lambda = 1e-14 * hscale;
        let dir = loop {
            let mut hh = h.clone();
            for i in 0..d {
                hh[(i, i)] += lambda;
            }
            if let Some(ch) = hh.cholesky() {
                break ch.solve(&(-&g));
            }
            lambda *= 100.0;
            if lambda > 1e6 * hscale {
                break -&g;
            }
        };
        let slope = g.dot(&dir);
        if -slope <= 1e-20 * f.max(1e-300) || g.amax() <= 1e-15 {
            converged = true;
            break;
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand_zeta = &zeta + &dir * t;
            let cand_z = &xs + c * &cand_zeta;
            let fc = phi(&cand_z);
            if fc <= f + 1e-4 * t * slope {
                let rel = (f - fc) / f.max(1e-300);
                zeta = cand_zeta;
                z = cand_z;
                f = fc;
                accepted = true;
                if rel < 1e-15 {
                    converged = true;
                }
                break;
            }
            t *= 0.5;
        }
        if !accepted || converged {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(GeomError::SolverNonConvergence { residual: f });
    }
    let (v, g) = lp_value_grad(p, w, &z);
    let resid = (c.transpose() * &g).amax() / (1.0 + c.amax() * g.amax());
    if resid > 1e-6 {
        return Err(GeomError::SolverNonConvergence { residual: resid });
    }
    Ok((v * scale, g, zeta * scale))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    #[test]
    fn duality_pairs() {
        let n = Norm::Lp {
            p: 3.0,
            scales: dv(&[1.0, 2.0]),
            map: None,
        };
        let d = n.dual().unwrap();
        match d {
            Norm::Lp { p, scales, .. } => {
                assert!((p - 1.5).abs() < 1e-15);
                assert!((scales[1] - 0.5).abs() < 1e-15);
            }
            _ => panic!(),
        }
    }

    #[test]
    fn atomic_equals_l1() {
        let atomic = Norm::Atomic(DMatrix::identity(3, 3));
        let l1 = Norm::Lp {
            p: 1.0,
            scales: dv(&[1.0; 3]),
            map: None,
        };
        let x = dv(&[0.3, -1.2, 0.5]);
        assert!((atomic.eval(&x).unwrap() - l1.eval(&x).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn fiber_min_matches_across_methods() {
        // ℓ∞ distance to a line, via the MaxAbs LP and the Lp(∞) route.
        let c = DMatrix::from_column_slice(3, 1, &[1.0, 1.0, 0.0]) / 2f64.sqrt();
        let x0 = dv(&[1.0, -1.0, 0.5]);
        let a = Norm::MaxAbs(DMatrix::identity(3, 3));
        let b = Norm::Lp {
            p: f64::INFINITY,
            scales: dv(&[1.0; 3]),
            map: None,
        };
        let (va, ya) = FiberSolver::new(&a, &c).unwrap().solve(&x0).unwrap();
        let (vb, _) = FiberSolver::new(&b, &c).unwrap().solve(&x0).unwrap();
        assert!((va - 1.0).abs() < 1e-12, "{va}");
        assert!((vb - 1.0).abs() < 1e-12);
        assert!((c.transpose() * &ya).amax() < 1e-12);
    }

    #[test]
    fn smooth_fiber_matches_quadratic() {
        let c = DMatrix::from_column_slice(3, 1, &[0.0, 0.6, 0.8]);
        let x0 = dv(&[1.0, 2.0, -1.0]);
        let w = dv(&[1.0, 2.0, 0.5]);
        let lp = Norm::Lp {
            p: 2.0,
            scales: w.clone(),
            map: None,
        };
        let q = Norm::Quadratic(DMatrix::from_diagonal(&w.map(|v| v * v)));
        // p = 2 is handled by Newton; compare with the normal equations.
        let (v1, _) = FiberSolver::new(&lp, &c).unwrap().solve(&x0).unwrap();
        let (v2, _) = FiberSolver::new(&q, &c).unwrap().solve(&x0).unwrap();
        assert!((v1 - v2).abs() < 1e-10, "{v1} {v2}");
    }
}
