//! Injective complexification `‖x + iy‖ = max_θ ‖cos θ·x + sin θ·y‖_K`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{ConvexBody, Radii};
use crate::error::{GeomError, Result};
use crate::lp::Simplex;

/// Number of θ grid points on `[0, π)`.
pub const COMPLEX_GRID: usize = 256;
const REFINE_TOP: usize = 3;
const GOLDEN_ITERS: usize = 60;

fn rotated(x: &[f64], y: &[f64], theta: f64) -> Vec<f64> {
    let (s, c) = theta.sin_cos();
    x.iter().zip(y).map(|(a, b)| c * a + s * b).collect()
}

pub(super) fn gauge_subgrad(base: &ConvexBody, xy: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
    let n = base.dim();
    let (x, y) = xy.as_slice().split_at(n);
    let f = |t: f64| base.gauge(&rotated(x, y, t));
    let h = PI / COMPLEX_GRID as f64;
    let mut grid = Vec::with_capacity(COMPLEX_GRID);
    for j in 0..COMPLEX_GRID {
        let t = j as f64 * h;
        grid.push((f(t)?, t));
    }
    let mut order: Vec<usize> = (0..COMPLEX_GRID).collect();
    order.sort_by(|&a, &b| grid[b].0.total_cmp(&grid[a].0));
    let (mut best, mut best_t) = grid[order[0]];
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    for &j in order.iter().take(REFINE_TOP) {
        let (mut a, mut b) = (grid[j].1 - h, grid[j].1 + h);
        let mut c = b - ratio * (b - a);
        let mut d = a + ratio * (b - a);
        let (mut fc, mut fd) = (f(c)?, f(d)?);
        for _ in 0..GOLDEN_ITERS {
            if fc >= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - ratio * (b - a);
                fc = f(c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + ratio * (b - a);
                fd = f(d)?;
            }
        }
        for (v, t) in [(fc, c), (fd, d)] {
            if v > best {
                best = v;
                best_t = t;
            }
        }
    }
    let (s, c) = best_t.sin_cos();
    let (v, xi) = base.gauge_subgrad(&rotated(x, y, best_t))?;
    let mut g = DVector::zeros(2 * n);
    for i in 0..n {
        g[i] = c * xi[i];
        g[n + i] = s * xi[i];
    }
    Ok((v.max(best), g))
}

/// `r(K^ℂ) = r(K)` exactly; `R(K) ≤ R(K^ℂ) ≤ √2·R(K)` and the upper bound
/// is reported.
pub(super) fn radii(base: &ConvexBody) -> Result<Radii> {
    let r = base.radii();
    Ok(Radii {
        inner: r.inner,
        outer: 2f64.sqrt() * r.outer,
        exact: false,
    })
}

/// Kelley cutting planes for `min_ζ ‖x0 + Cζ‖` over a body given only by
/// its gauge and subgradients.
#[derive(Debug, Clone)]
pub struct GenericFiber {
    base: Arc<ConvexBody>,
    c: DMatrix<f64>,
    outer: f64,
    pub max_cuts: usize,
    pub rel_gap: f64,
}

impl GenericFiber {
    pub(super) fn new(base: Arc<ConvexBody>, c: DMatrix<f64>, outer: f64) -> Self {
        Self {
            base,
            c,
            outer,
            max_cuts: 400,
            rel_gap: 1e-9,
        }
    }

    fn eval(&self, z: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        complexified_or_plain(&self.base, z)
    }

    pub fn solve(&mut self, x0: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let d = self.c.ncols();
        let (mut best, mut best_g) = self.eval(x0)?;
        if d == 0 || best == 0.0 {
            return Ok((best, best_g));
        }
        let bound = x0.norm() + self.outer * best;
        let mut cuts: Vec<(DVector<f64>, f64)> = Vec::new();
        let mut g = best_g.clone();
        for _ in 0..self.max_cuts {
            cuts.push((self.c.transpose() * &g, g.dot(x0)));
            // variables: ζ (d), t, slacks (one per cut)
            let m = cuts.len();
            let mut a = DMatrix::zeros(m, d + 1 + m);
            let mut b = vec![0.0; m];
            for (j, (ct, off)) in cuts.iter().enumerate() {
                for i in 0..d {
                    a[(j, i)] = ct[i];
                }
                a[(j, d)] = -1.0;
                a[(j, d + 1 + j)] = 1.0;
                b[j] = -off;
            }
            let mut lo = vec![-bound; d];
            let mut hi = vec![bound; d];
            lo.push(0.0);
            hi.push(f64::INFINITY);
            lo.extend(std::iter::repeat_n(0.0, m));
            hi.extend(std::iter::repeat_n(f64::INFINITY, m));
            let mut lp = Simplex::new(a, b, lo, hi)?;
            let mut obj = vec![0.0; d + 1 + m];
            obj[d] = -1.0;
            let lower = -lp.maximize(&obj)?;
            if best - lower <= self.rel_gap * best {
                return Ok((best, best_g));
            }
            let zeta = DVector::from_column_slice(&lp.solution()[..d]);
            let z = x0 + &self.c * zeta;
            let (v, gz) = self.eval(&z)?;
            if v < best {
                best = v;
                best_g = gz.clone();
            }
            g = gz;
        }
        Err(GeomError::SolverNonConvergence {
            residual: (self.c.transpose() * best_g).norm(),
        })
    }
}

fn complexified_or_plain(base: &ConvexBody, z: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
    if z.len() == 2 * base.dim() {
        gauge_subgrad(base, z)
    } else {
        base.gauge_subgrad(z.as_slice())
    }
}
