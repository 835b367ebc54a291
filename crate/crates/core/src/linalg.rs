//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{GeomError, Result};

/// Applies a scalar function to the spectrum of a symmetric matrix.
pub fn sym_apply(a: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mapped = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|&l| f(l)));
    &eig.eigenvectors * DMatrix::from_diagonal(&mapped) * eig.eigenvectors.transpose()
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let sym = (a + a.transpose()) * 0.5;
    let mut v: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    v.sort_by(|x, y| x.total_cmp(y));
    v
}

pub fn sym_exp(a: &DMatrix<f64>) -> DMatrix<f64> {
    sym_apply(a, f64::exp)
}

pub fn sym_log(a: &DMatrix<f64>) -> DMatrix<f64> {
    sym_apply(a, f64::ln)
}

pub fn sym_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    sym_apply(a, |l| l.max(0.0).sqrt())
}

pub fn inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let lu = a.clone().lu();
    let det = lu.determinant();
    if !det.is_finite() || det.abs() < 1e-300 {
        return Err(GeomError::SingularMap);
    }
    let inv = lu.try_inverse().ok_or(GeomError::SingularMap)?;
    // Reject numerically singular maps.
    let cond = a.norm() * inv.norm();
    if !cond.is_finite() || cond > 1e14 {
        return Err(GeomError::SingularMap);
    }
    Ok(inv)
}

pub fn is_diagonal(a: &DMatrix<f64>) -> bool {
    a.is_square()
        && (0..a.nrows()).all(|i| (0..a.ncols()).all(|j| i == j || a[(i, j)] == 0.0))
}

/// Thin orthonormal basis of the column span. Fails on rank deficiency.
pub fn orthonormalize(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, k) = m.shape();
    if k == 0 {
        return Ok(DMatrix::zeros(n, 0));
    }
    if k > n {
        return Err(GeomError::RankDeficient);
    }
    let qr = m.clone().qr();
    let r = qr.r();
    let scale = m.norm().max(1e-300);
    for i in 0..k {
        if r[(i, i)].abs() <= 1e-10 * scale {
            return Err(GeomError::RankDeficient);
        }
    }
    Ok(qr.q())
}

/// Orthonormal basis of the whole space whose first `k` columns span the
/// columns of `m` (assumed full column rank).
pub fn complete_basis(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, k) = m.shape();
    let q1 = orthonormalize(m)?;
    if k == n {
        return Ok(q1);
    }
    // Project the identity off span(q1) and orthonormalize the columns that
    // survive best, one at a time.
    let mut cols: Vec<DVector<f64>> = (0..k).map(|j| q1.column(j).into_owned()).collect();
    for e in 0..n {
        if cols.len() == n {
            break;
        }
        let mut v = DVector::zeros(n);
        v[e] = 1.0;
        for _ in 0..2 {
            for c in &cols {
                let d = c.dot(&v);
                v.axpy(-d, c, 1.0);
            }
        }
        let nv = v.norm();
        if nv > 1e-6 {
            cols.push(v / nv);
        }
    }
    if cols.len() != n {
        return Err(GeomError::RankDeficient);
    }
    Ok(DMatrix::from_columns(&cols))
}

/// Orthonormal basis of the orthogonal complement of an orthonormal basis.
pub fn complement(basis: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = basis.ncols();
    let full = complete_basis(basis)?;
    Ok(full.columns(k, full.ncols() - k).into_owned())
}

/// Orthonormal basis of the intersection of two subspaces given by
/// orthonormal bases: directions of span(`b1`) whose distance from
/// span(`b2`) is at most `tol`.
pub fn intersection(b1: &DMatrix<f64>, b2: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let n = b1.nrows();
    if b1.ncols() == 0 || b2.ncols() == 0 {
        return DMatrix::zeros(n, 0);
    }
    let resid = b1 - b2 * (b2.transpose() * b1);
    let svd = resid.svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let d1 = b1.ncols();
    let mut cols: Vec<DVector<f64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= tol)
        .map(|(i, _)| b1 * v_t.row(i).transpose())
        .collect();
    // Rows of V^T beyond the rank of a wide residual have singular value 0.
    for i in svd.singular_values.len()..d1.min(v_t.nrows()) {
        cols.push(b1 * v_t.row(i).transpose());
    }
    if cols.is_empty() {
        return DMatrix::zeros(n, 0);
    }
    let m = DMatrix::from_columns(&cols);
    orthonormalize(&m).unwrap_or(m)
}

/// Orthonormal basis of the column span of `m` from the eigenvectors of
/// `mᵀm`: the `keep` leading directions, or all with singular value above
/// `tol` when `keep` is `None`.
pub fn range_basis(m: &DMatrix<f64>, keep: Option<usize>, tol: f64) -> DMatrix<f64> {
    let n = m.nrows();
    if m.ncols() == 0 {
        return DMatrix::zeros(n, 0);
    }
    let eig = (m.transpose() * m).symmetric_eigen();
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let take = keep.unwrap_or_else(|| idx.iter().filter(|&&i| eig.eigenvalues[i].max(0.0).sqrt() > tol).count());
    let cols: Vec<DVector<f64>> = idx
        .iter()
        .take(take)
        .map(|&i| {
            let c = m * eig.eigenvectors.column(i);
            let nc = c.norm();
            c / nc
        })
        .collect();
    if cols.is_empty() {
        return DMatrix::zeros(n, 0);
    }
    let b = DMatrix::from_columns(&cols);
    orthonormalize(&b).unwrap_or(b)
}

/// Largest distance of a column of `a` from span(`b`), for orthonormal `b`.
pub fn containment_residual(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let resid = a - b * (b.transpose() * a);
    resid
        .column_iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
}

pub fn geometric_mean(v: &[f64]) -> f64 {
    (v.iter().map(|x| x.ln()).sum::<f64>() / v.len() as f64).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_log_roundtrip() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, -0.2, 0.1, -0.2, 0.5]);
        let back = sym_exp(&sym_log(&a));
        assert!((back - &a).norm() < 1e-12);
    }

    #[test]
    fn complement_is_orthogonal() {
        let m = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 0.0, 2.0, 0.0, 0.0]);
        let q = orthonormalize(&m).unwrap();
        let c = complement(&q).unwrap();
        assert_eq!(c.ncols(), 2);
        assert!((q.transpose() * &c).norm() < 1e-12);
        assert!((c.transpose() * &c - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn intersection_of_coordinate_planes() {
        let e = DMatrix::identity(4, 4);
        let b1 = e.columns(0, 3).into_owned();
        let b2 = e.columns(1, 3).into_owned();
        let i = intersection(&b1, &b2, 1e-9);
        assert_eq!(i.ncols(), 2);
        assert!(containment_residual(&i, &b1) < 1e-12);
        assert!(containment_residual(&i, &b2) < 1e-12);
    }

    #[test]
    fn rank_deficiency_detected() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        assert_eq!(orthonormalize(&m), Err(GeomError::RankDeficient));
    }
}
