//! The ℓ-position on a fixed Gaussian sample.
//!
//! For a body `K` the solver returns an SPD map `P` with `det P = 1` such
//! that `P(K)` minimizes the sample average of `‖G‖²_{P(K)} = ‖P⁻¹G‖²_K`.
//! Internally it works with `A = P⁻¹`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bodies::ConvexBody;
use crate::error::{GeomError, Result};
use crate::gaussian::{self, block_mean_se, GaussianSample};
use crate::interpolation::{interpolate, InterpolationPair};
use crate::linalg;
use crate::map::PositionMap;

const CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    /// Diagonal for bodies invariant under coordinate sign flips, full
    /// otherwise.
    #[default]
    Auto,
    Diagonal,
    Full,
}

#[derive(Debug, Clone)]
pub struct EllPositionOptions {
    /// Relative gradient norm at which the solver stops.
    pub tol: f64,
    pub max_iter: usize,
    pub structure: Structure,
    /// Initial position map (SPD); the identity when absent.
    pub start: Option<PositionMap>,
    pub compute_product: bool,
}

impl Default for EllPositionOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 500,
            structure: Structure::Auto,
            start: None,
            compute_product: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProductEstimate {
    pub value: f64,
    pub se: f64,
    pub ell: f64,
    pub ell_star: f64,
}

#[derive(Debug, Clone)]
pub struct EllPositionResult {
    /// `P` with `P(K)` in ℓ-position.
    pub map: PositionMap,
    /// `ℓ₂(P(K))` on the sample.
    pub objective: f64,
    pub objective_start: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub structure: Structure,
    pub product: Option<ProductEstimate>,
}

/// Mean of `f(x_j)²`-type sums over sample columns, reduced in fixed order.
fn chunked<T, F, R>(count: usize, zero: T, f: F, reduce: R) -> Result<T>
where
    T: Send + Sync + Clone,
    F: Fn(usize, &mut T) -> Result<()> + Sync,
    R: Fn(&mut T, &T),
{
    let chunks: Vec<Result<T>> = (0..count.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = zero.clone();
            for j in c * CHUNK..((c + 1) * CHUNK).min(count) {
                f(j, &mut acc)?;
            }
            Ok(acc)
        })
        .collect();
    let mut total = zero;
    for c in chunks {
        reduce(&mut total, &c?);
    }
    Ok(total)
}

fn traceless(v: &DVector<f64>) -> DVector<f64> {
    let m = v.mean();
    v.map(|x| x - m)
}

fn traceless_matrix(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let t = sym.trace() / n as f64;
    sym - DMatrix::identity(n, n) * t
}

/// Sample mean of `‖A x_j‖²_K` for diagonal `A = diag(exp(s))` and its
/// gradient in `s`.
fn diag_objective(k: &ConvexBody, sample: &GaussianSample, s: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
    let n = k.dim();
    let a = s.map(f64::exp);
    let xs = sample.vectors();
    let (sum, grad) = chunked(
        sample.count(),
        (0.0, DVector::zeros(n)),
        |j, acc: &mut (f64, DVector<f64>)| {
            let y = xs.column(j).component_mul(&a);
            let (g, xi) = k.gauge_subgrad(y.as_slice())?;
            acc.0 += g * g;
            for i in 0..n {
                acc.1[i] += 2.0 * g * xi[i] * y[i];
            }
            Ok(())
        },
        |t, c| {
            t.0 += c.0;
            t.1 += &c.1;
        },
    )?;
    let m = sample.count() as f64;
    Ok((sum / m, grad / m))
}

/// Sample mean of `‖A x_j‖²_K` and `G = mean 2 g ξ xᵀ`.
fn full_objective(k: &ConvexBody, sample: &GaussianSample, a: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
    let n = k.dim();
    let xs = sample.vectors();
    let (sum, g) = chunked(
        sample.count(),
        (0.0, DMatrix::zeros(n, n)),
        |j, acc: &mut (f64, DMatrix<f64>)| {
            let x = xs.column(j);
            let y = a * x;
            let (g, xi) = k.gauge_subgrad(y.as_slice())?;
            acc.0 += g * g;
            acc.1.ger(2.0 * g, &xi, &x, 1.0);
            Ok(())
        },
        |t, c| {
            t.0 += c.0;
            t.1 += &c.1;
        },
    )?;
    let m = sample.count() as f64;
    Ok((sum / m, g / m))
}

/// Diagonal weighted ℓ_q data: `log(u_i |x_ji|)`, row-major.
struct LpData {
    q: f64,
    n: usize,
    logs: Vec<f64>,
}

impl LpData {
    fn new(q: f64, scales: &[f64], sample: &GaussianSample) -> Self {
        let n = scales.len();
        let xs = sample.vectors();
        let mut logs = Vec::with_capacity(n * sample.count());
        for j in 0..sample.count() {
            for i in 0..n {
                logs.push((scales[i] * xs[(i, j)].abs()).ln());
            }
        }
        Self { q, n, logs }
    }

    fn count(&self) -> usize {
        self.logs.len() / self.n
    }

    /// `f(s) = mean (Σ_i (u_i e^{s_i}|x_ji|)^q)^{2/q}` with gradient and,
    /// optionally, Hessian.
    fn eval(&self, s: &DVector<f64>, hessian: bool) -> (f64, DVector<f64>, DMatrix<f64>) {
        let n = self.n;
        let q = self.q;
        let hn = if hessian { n } else { 0 };
        let zero = (0.0, DVector::zeros(n), DMatrix::zeros(hn, hn));
        let parts: Vec<_> = self
            .logs
            .par_chunks(n * CHUNK)
            .map(|rows| {
                let mut acc = zero.clone();
                let mut pi = vec![0.0; n];
                for row in rows.chunks(n) {
                    let mut mx = f64::NEG_INFINITY;
                    for i in 0..n {
                        pi[i] = q * (row[i] + s[i]);
                        mx = mx.max(pi[i]);
                    }
                    if mx == f64::NEG_INFINITY {
                        continue;
                    }
                    let mut tot = 0.0;
                    for v in pi.iter_mut() {
                        *v = (*v - mx).exp();
                        tot += *v;
                    }
                    for v in pi.iter_mut() {
                        *v /= tot;
                    }
                    let h = ((2.0 / q) * (mx + tot.ln())).exp();
                    acc.0 += h;
                    for i in 0..n {
                        acc.1[i] += 2.0 * h * pi[i];
                    }
                    if hessian {
                        let c = (4.0 - 2.0 * q) * h;
                        for i in 0..n {
                            if pi[i] == 0.0 {
                                continue;
                            }
                            acc.2[(i, i)] += 2.0 * q * h * pi[i];
                            for k in 0..n {
                                acc.2[(i, k)] += c * pi[i] * pi[k];
                            }
                        }
                    }
                }
                acc
            })
            .collect();
        let mut total = zero;
        for p in parts {
            total.0 += p.0;
            total.1 += &p.1;
            total.2 += &p.2;
        }
        let m = self.count() as f64;
        (total.0 / m, total.1 / m, total.2 / m)
    }
}

struct Outcome {
    f: f64,
    f0: f64,
    residual: f64,
    iterations: usize,
}

/// Newton on the traceless subspace with backtracking.
fn newton_lp(data: &LpData, s: &mut DVector<f64>, opts: &EllPositionOptions) -> Outcome {
    let n = data.n;
    let (mut f, mut g, mut h) = data.eval(s, true);
    let f0 = f;
    let mut residual = traceless(&g).norm() / f;
    let mut iterations = 0;
    // Quadratic convergence makes a few extra digits nearly free.
    let target = opts.tol * 1e-3;
    while iterations < opts.max_iter && residual > target {
        iterations += 1;
        let mut kkt = DMatrix::zeros(n + 1, n + 1);
        let reg = 1e-14 * h.diagonal().amax().max(1e-300);
        for i in 0..n {
            for k in 0..n {
                kkt[(i, k)] = h[(i, k)];
            }
            kkt[(i, i)] += reg;
            kkt[(i, n)] = 1.0;
            kkt[(n, i)] = 1.0;
        }
        let mut rhs = DVector::zeros(n + 1);
        for i in 0..n {
            rhs[i] = -g[i];
        }
        let dir = match kkt.lu().solve(&rhs) {
            Some(d) => traceless(&d.rows(0, n).into_owned()),
            None => -traceless(&g),
        };
        let dir = if g.dot(&dir) < 0.0 { dir } else { -traceless(&g) };
        let slope = g.dot(&dir);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..50 {
            let cand = &*s + &dir * t;
            let (fc, _, _) = data.eval(&cand, false);
            if fc < f && fc <= f + 1e-4 * t * slope {
                *s = cand;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        (f, g, h) = data.eval(s, true);
        residual = traceless(&g).norm() / f;
    }
    Outcome {
        f,
        f0,
        residual,
        iterations,
    }
}

/// Gradient descent with Barzilai–Borwein steps and Armijo backtracking on
/// the traceless log-diagonal.
fn descent_diag(k: &ConvexBody, sample: &GaussianSample, s: &mut DVector<f64>, opts: &EllPositionOptions) -> Result<Outcome> {
    let (mut f, mut g) = diag_objective(k, sample, s)?;
    let f0 = f;
    let mut d = traceless(&g);
    let mut residual = d.norm() / f;
    let mut step = 1.0 / d.norm().max(1e-300) * 1e-2;
    let mut iterations = 0;
    while iterations < opts.max_iter && residual > opts.tol {
        iterations += 1;
        let mut t = step;
        let mut next = None;
        for _ in 0..60 {
            let cand = &*s - &d * t;
            let (fc, gc) = diag_objective(k, sample, &cand)?;
            if fc < f && fc <= f - 1e-4 * t * d.norm_squared() {
                next = Some((cand, fc, gc));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, fc, gc)) = next else { break };
        let ds = &cand - &*s;
        let dc = traceless(&gc);
        let dg = &dc - &d;
        let curv = ds.dot(&dg);
        step = if curv > 0.0 { ds.norm_squared() / curv } else { 2.0 * t };
        *s = cand;
        f = fc;
        g = gc;
        d = dc;
        residual = d.norm() / f;
    }
    let _ = g;
    Ok(Outcome {
        f,
        f0,
        residual,
        iterations,
    })
}

/// Affine-invariant descent `A ← A^{1/2} exp(−ηR) A^{1/2}` with
/// `R = traceless sym(A^{1/2} G A^{1/2})`.
fn descent_full(k: &ConvexBody, sample: &GaussianSample, a: &mut DMatrix<f64>, opts: &EllPositionOptions) -> Result<Outcome> {
    let riem = |a: &DMatrix<f64>, g: &DMatrix<f64>| {
        let h = linalg::sym_sqrt(a);
        (traceless_matrix(&(&h * g * &h)), h)
    };
    let (mut f, g) = full_objective(k, sample, a)?;
    let f0 = f;
    let (mut r, mut half) = riem(a, &g);
    let mut residual = r.norm() / f;
    let mut step = 1e-2 / r.norm().max(1e-300);
    let mut iterations = 0;
    while iterations < opts.max_iter && residual > opts.tol {
        iterations += 1;
        let mut t = step;
        let mut next = None;
        for _ in 0..60 {
            let e = linalg::sym_exp(&(&r * -t));
            let cand = &half * e * &half;
            let cand = (&cand + cand.transpose()) * 0.5;
            let (fc, gc) = full_objective(k, sample, &cand)?;
            if fc < f && fc <= f - 1e-4 * t * r.norm_squared() {
                next = Some((cand, fc, gc));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, fc, gc)) = next else { break };
        let (rc, hc) = riem(&cand, &gc);
        let ds = &r * -t;
        let curv = ds.dot(&(&rc - &r));
        step = if curv > 0.0 { ds.norm_squared() / curv } else { 2.0 * t };
        *a = cand;
        f = fc;
        r = rc;
        half = hc;
        residual = r.norm() / f;
    }
    Ok(Outcome {
        f,
        f0,
        residual,
        iterations,
    })
}

/// Solves for the ℓ-position of `k` on `sample`.
pub fn solve_ell_position(k: &ConvexBody, sample: &GaussianSample, opts: &EllPositionOptions) -> Result<EllPositionResult> {
    let n = k.dim();
    if sample.dim() != n {
        return Err(GeomError::DimensionMismatch {
            expected: n,
            got: sample.dim(),
        });
    }
    if !(opts.tol > 0.0) {
        return Err(GeomError::InvalidParameter("tolerance must be positive".into()));
    }
    let structure = match opts.structure {
        Structure::Auto if k.symmetries().sign_flips => Structure::Diagonal,
        Structure::Auto => Structure::Full,
        s => s,
    };
    let start = match &opts.start {
        Some(p) if p.dim() != n => {
            return Err(GeomError::DimensionMismatch {
                expected: n,
                got: p.dim(),
            })
        }
        Some(p) => Some(p.normalized()?),
        None => None,
    };
    let (map, out) = match structure {
        Structure::Diagonal => {
            let mut s = match &start {
                None => DVector::zeros(n),
                Some(p) => {
                    let d = p.diagonal_entries().ok_or_else(|| {
                        GeomError::InvalidParameter("diagonal solver needs a diagonal start".into())
                    })?;
                    DVector::from_iterator(n, d.iter().map(|v| -v.ln()))
                }
            };
            let out = match k.weighted_lp_form() {
                Some((q, scales)) if q.is_finite() => newton_lp(&LpData::new(q, &scales, sample), &mut s, opts),
                _ => descent_diag(k, sample, &mut s, opts)?,
            };
            let s = traceless(&s);
            (PositionMap::from_log_diagonal((-s).as_slice())?, out)
        }
        _ => {
            let mut a = match &start {
                None => DMatrix::identity(n, n),
                Some(p) => p.inverse().clone(),
            };
            let out = descent_full(k, sample, &mut a, opts)?;
            let p = linalg::inverse(&a)?;
            (PositionMap::new((&p + p.transpose()) * 0.5)?.normalized()?, out)
        }
    };
    let product = if opts.compute_product {
        Some(ell_product(&ConvexBody::linear_image(&map, k)?, sample)?)
    } else {
        None
    };
    Ok(EllPositionResult {
        map,
        objective: out.f.sqrt(),
        objective_start: out.f0.sqrt(),
        residual: out.residual,
        iterations: out.iterations,
        converged: out.residual <= opts.tol,
        structure,
        product,
    })
}

/// `ℓ₂(P(K))` on the sample for a given map.
pub fn ell2_at(k: &ConvexBody, map: &PositionMap, sample: &GaussianSample) -> Result<f64> {
    let a = map.inverse();
    let values = sample.map(|x| {
        let y = a * DVector::from_column_slice(x);
        k.gauge(y.as_slice())
    })?;
    Ok((values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt())
}

/// `ℓ(K)·ℓ*(K)` on one sample, SE by the delta method over orbits.
pub fn ell_product(k: &ConvexBody, sample: &GaussianSample) -> Result<ProductEstimate> {
    if sample.dim() != k.dim() {
        return Err(GeomError::DimensionMismatch {
            expected: k.dim(),
            got: sample.dim(),
        });
    }
    let pairs = sample.map(|x| Ok((k.gauge(x)?, k.support(x)?)))?;
    let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let block = sample.block_size();
    let (ell, _) = block_mean_se(&a, block);
    let (ell_star, _) = block_mean_se(&b, block);
    let lin: Vec<f64> = a.iter().zip(&b).map(|(x, y)| ell_star * x + ell * y).collect();
    let (_, se) = block_mean_se(&lin, block);
    Ok(ProductEstimate {
        value: ell * ell_star,
        se,
        ell,
        ell_star,
    })
}

/// `a > 0` with `ℓ([aK, B₂]_θ) = ℓ*([aK, B₂]_θ)` on the sample.
pub fn balance_scale(k: &ConvexBody, theta: f64, sample: &GaussianSample) -> Result<f64> {
    if !(0.0..1.0).contains(&theta) {
        return Err(GeomError::InvalidParameter(format!("θ = {theta} must lie in [0, 1)")));
    }
    let kt = interpolate(&InterpolationPair::new(k.clone(), ConvexBody::euclidean_ball(k.dim()), theta)?)?;
    let l = gaussian::ell(&kt, 1, sample)?.value;
    let ls = gaussian::ell_star(&kt, 1, sample)?.value;
    Ok((l / ls).powf(1.0 / (2.0 * (1.0 - theta))))
}

#[cfg(test)]
mod tests;
