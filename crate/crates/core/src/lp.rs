//! Dense bounded-variable primal simplex.
//!
//! Solves `max cᵀx` subject to `A x = b` and `lower ≤ x ≤ upper`, where
//! bounds may be infinite. The inner problems of the polyhedral oracles are
//! tiny (a few dozen rows) and re-solved many times with the same
//! constraints and a changing objective, so the solver keeps its basis
//! between calls to [`Simplex::maximize`].

use nalgebra::DMatrix;

use crate::error::{GeomError, Result};

const PIVOT_TOL: f64 = 1e-9;
const REFRESH_EVERY: usize = 40;
const MAX_PIVOTS_FACTOR: usize = 50;

#[derive(Debug, Clone)]
pub struct Simplex {
    rows: usize,
    cols: usize,
    a: DMatrix<f64>,
    b: Vec<f64>,
    signs: Vec<f64>,
    // Row-major tableau B^{-1} [A | S], width cols + rows.
    tab: Vec<f64>,
    basis: Vec<usize>,
    position: Vec<Option<usize>>,
    x: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    pivots_since_refresh: usize,
}

impl Simplex {
    /// Builds the program and runs phase one. Fails if the constraints are
    /// infeasible.
    pub fn new(a: DMatrix<f64>, b: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let (rows, cols) = a.shape();
        assert_eq!(b.len(), rows);
        assert_eq!(lower.len(), cols);
        assert_eq!(upper.len(), cols);
        let width = cols + rows;
        let mut x = vec![0.0; width];
        for j in 0..cols {
            if lower[j] > upper[j] {
                return Err(GeomError::LinearProgram("infeasible"));
            }
            x[j] = if lower[j].is_finite() {
                lower[j]
            } else if upper[j].is_finite() {
                upper[j]
            } else {
                0.0
            };
        }
        let mut signs = vec![1.0; rows];
        let mut tab = vec![0.0; rows * width];
        for i in 0..rows {
            let mut r = b[i];
            for j in 0..cols {
                r -= a[(i, j)] * x[j];
            }
            let s = if r < 0.0 { -1.0 } else { 1.0 };
            signs[i] = s;
            for j in 0..cols {
                tab[i * width + j] = s * a[(i, j)];
            }
            tab[i * width + cols + i] = 1.0;
            x[cols + i] = r.abs();
        }
        let mut lo = lower;
        let mut hi = upper;
        lo.extend(std::iter::repeat_n(0.0, rows));
        hi.extend(std::iter::repeat_n(f64::INFINITY, rows));
        let mut position = vec![None; width];
        let basis: Vec<usize> = (0..rows).map(|i| cols + i).collect();
        for (i, &v) in basis.iter().enumerate() {
            position[v] = Some(i);
        }
        let mut s = Self {
            rows,
            cols,
            a,
            b,
            signs,
            tab,
            basis,
            position,
            x,
            lo,
            hi,
            pivots_since_refresh: 0,
        };
        let mut c1 = vec![0.0; width];
        for c in c1.iter_mut().skip(cols) {
            *c = -1.0;
        }
        let infeas = -s.optimize(&c1)?;
        let scale = 1.0 + s.b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if infeas > 1e-8 * scale {
            return Err(GeomError::LinearProgram("infeasible"));
        }
        for i in 0..rows {
            s.hi[cols + i] = 0.0;
            if s.position[cols + i].is_none() {
                s.x[cols + i] = 0.0;
            }
        }
        s.drive_out_artificials();
        s.refresh();
        Ok(s)
    }

    pub fn num_vars(&self) -> usize {
        self.cols
    }

    /// Maximizes `cᵀx` from the current basis; returns the optimal value.
    pub fn maximize(&mut self, c: &[f64]) -> Result<f64> {
        assert_eq!(c.len(), self.cols);
        let mut full = c.to_vec();
        full.extend(std::iter::repeat_n(0.0, self.rows));
        self.optimize(&full)?;
        Ok(c.iter().zip(&self.x).map(|(ci, xi)| ci * xi).sum())
    }

    pub fn solution(&self) -> &[f64] {
        &self.x[..self.cols]
    }

    fn width(&self) -> usize {
        self.cols + self.rows
    }

    fn optimize(&mut self, c: &[f64]) -> Result<f64> {
        let width = self.width();
        let cscale = 1.0 + c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let opt_tol = 1e-11 * cscale;
        let max_pivots = MAX_PIVOTS_FACTOR * (width + 10);
        let mut degenerate_streak = 0usize;
        let mut reduced = vec![0.0; width];
        for _ in 0..max_pivots {
            // Reduced costs d = c - c_Bᵀ T.
            reduced.copy_from_slice(c);
            for i in 0..self.rows {
                let cb = c[self.basis[i]];
                if cb != 0.0 {
                    let row = &self.tab[i * width..(i + 1) * width];
                    for (d, t) in reduced.iter_mut().zip(row) {
                        *d -= cb * t;
                    }
                }
            }
            let bland = degenerate_streak > 30;
            let mut best: Option<(usize, f64)> = None;
            let mut best_score = 0.0;
            for j in 0..width {
                if self.position[j].is_some() || self.hi[j] - self.lo[j] <= 0.0 {
                    continue;
                }
                let d = reduced[j];
                let dir = if d > opt_tol && self.x[j] < self.hi[j] {
                    1.0
                } else if d < -opt_tol && self.x[j] > self.lo[j] {
                    -1.0
                } else {
                    continue;
                };
                if bland {
                    best = Some((j, dir));
                    break;
                }
                if d.abs() > best_score {
                    best_score = d.abs();
                    best = Some((j, dir));
                }
            }
            let Some((enter, dir)) = best else {
                return Ok(c.iter().zip(&self.x).map(|(ci, xi)| ci * xi).sum());
            };
            let step = self.ratio_test(enter, dir)?;
            if step.1 <= 1e-14 {
                degenerate_streak += 1;
            } else {
                degenerate_streak = 0;
            }
            self.apply_step(enter, dir, step);
        }
        Err(GeomError::LinearProgram("cycling"))
    }

    /// Returns (leaving row or None for a bound flip, step length).
    fn ratio_test(&self, enter: usize, dir: f64) -> Result<(Option<usize>, f64)> {
        let width = self.width();
        let mut best_t = if self.hi[enter].is_finite() && self.lo[enter].is_finite() {
            self.hi[enter] - self.lo[enter]
        } else {
            f64::INFINITY
        };
        let mut best_row = None;
        let mut best_piv = 0.0;
        for i in 0..self.rows {
            let col = self.tab[i * width + enter];
            let delta = -dir * col;
            let v = self.basis[i];
            let limit = if delta < -PIVOT_TOL && self.lo[v].is_finite() {
                ((self.x[v] - self.lo[v]) / -delta).max(0.0)
            } else if delta > PIVOT_TOL && self.hi[v].is_finite() {
                ((self.hi[v] - self.x[v]) / delta).max(0.0)
            } else {
                continue;
            };
            // Ties go to the larger pivot element.
            if limit < best_t - 1e-12 || (limit <= best_t + 1e-12 && col.abs() > best_piv) {
                best_t = limit;
                best_row = Some(i);
                best_piv = col.abs();
            }
        }
        if !best_t.is_finite() {
            return Err(GeomError::LinearProgram("unbounded"));
        }
        Ok((best_row, best_t))
    }

    fn apply_step(&mut self, enter: usize, dir: f64, (row, t): (Option<usize>, f64)) {
        let width = self.width();
        if t > 0.0 {
            for i in 0..self.rows {
                let col = self.tab[i * width + enter];
                let v = self.basis[i];
                self.x[v] -= dir * t * col;
            }
            self.x[enter] += dir * t;
        }
        match row {
            None => {
                // Bound flip.
                self.x[enter] = if dir > 0.0 { self.hi[enter] } else { self.lo[enter] };
            }
            Some(r) => {
                let leave = self.basis[r];
                let col = self.tab[r * width + enter];
                let delta = -dir * col;
                self.x[leave] = if delta < 0.0 { self.lo[leave] } else { self.hi[leave] };
                self.pivot(r, enter);
            }
        }
    }

    fn pivot(&mut self, r: usize, enter: usize) {
        let width = self.width();
        let p = self.tab[r * width + enter];
        for v in &mut self.tab[r * width..(r + 1) * width] {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.tab[r * width..(r + 1) * width].to_vec();
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.tab[i * width + enter];
            if f != 0.0 {
                let row = &mut self.tab[i * width..(i + 1) * width];
                for (v, pr) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pr;
                }
                row[enter] = 0.0;
            }
        }
        let leave = self.basis[r];
        self.position[leave] = None;
        self.position[enter] = Some(r);
        self.basis[r] = enter;
        self.pivots_since_refresh += 1;
        if self.pivots_since_refresh >= REFRESH_EVERY {
            self.refresh();
        }
    }

    /// Recomputes basic values from the original data to limit drift.
    fn refresh(&mut self) {
        let width = self.width();
        let mut rhs = self.b.clone();
        for j in 0..self.cols {
            if self.position[j].is_none() && self.x[j] != 0.0 {
                for (i, r) in rhs.iter_mut().enumerate() {
                    *r -= self.a[(i, j)] * self.x[j];
                }
            }
        }
        for i in 0..self.rows {
            let j = self.cols + i;
            if self.position[j].is_none() && self.x[j] != 0.0 {
                rhs[i] -= self.signs[i] * self.x[j];
            }
        }
        // B^{-1} = T_art · S.
        for i in 0..self.rows {
            let mut v = 0.0;
            for (k, r) in rhs.iter().enumerate() {
                v += self.tab[i * width + self.cols + k] * self.signs[k] * r;
            }
            self.x[self.basis[i]] = v;
        }
        self.pivots_since_refresh = 0;
    }

    fn drive_out_artificials(&mut self) {
        let width = self.width();
        for r in 0..self.rows {
            if self.basis[r] < self.cols {
                continue;
            }
            let mut best = None;
            let mut best_abs = 1e-7;
            for j in 0..self.cols {
                if self.position[j].is_some() || self.hi[j] - self.lo[j] <= 0.0 {
                    continue;
                }
                let v = self.tab[r * width + j].abs();
                if v > best_abs {
                    best_abs = v;
                    best = Some(j);
                }
            }
            if let Some(j) = best {
                let leave = self.basis[r];
                self.x[leave] = 0.0;
                self.pivot(r, j);
            }
        }
    }
}
