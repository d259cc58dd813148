//! Dense and tridiagonal numerical kernels.
//!
//! d = 1 operators are tridiagonal in the deterministic site ordering, so
//! linear solves and eigenvalue counting get O(n) fast paths (partial-pivot
//! elimination and Sturm counts); everything else falls back to dense
//! factorizations.

use crate::error::{CoreError, Result};
use nalgebra::{Complex, DMatrix, DVector};

pub type C64 = Complex<f64>;

/// Symmetric tridiagonal view of a matrix (diag, first off-diagonal).
#[derive(Clone, Debug)]
pub struct Tridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

/// Extract the tridiagonal representation if all entries beyond the first
/// off-diagonal vanish.
pub fn tridiag_of(mat: &DMatrix<f64>) -> Option<Tridiag> {
    let n = mat.nrows();
    for i in 0..n {
        for j in (i + 2)..n {
            if mat[(i, j)] != 0.0 || mat[(j, i)] != 0.0 {
                return None;
            }
        }
    }
    let diag = (0..n).map(|i| mat[(i, i)]).collect();
    let off = (0..n.saturating_sub(1)).map(|i| mat[(i, i + 1)]).collect();
    Some(Tridiag { diag, off })
}

/// Number of eigenvalues of the symmetric tridiagonal matrix strictly below
/// `x`, via the Sturm (LDL^T pivot sign) recurrence.
pub fn sturm_count_below(t: &Tridiag, x: f64) -> usize {
    let pivmin = 1e-300;
    let mut count = 0usize;
    let mut q = 1.0f64;
    for i in 0..t.diag.len() {
        let b2 = if i == 0 {
            0.0
        } else {
            t.off[i - 1] * t.off[i - 1]
        };
        q = (t.diag[i] - x) - b2 / q;
        if q.abs() < pivmin {
            q = -pivmin;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Solve T y = rhs for a general tridiagonal T given as (sub, diag, super),
/// by Gaussian elimination with partial pivoting. Returns None on an exactly
/// singular pivot.
pub fn tridiag_solve_pp(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    if n == 0 {
        return Some(Vec::new());
    }
    let mut dl = sub.to_vec();
    let mut d = diag.to_vec();
    let mut du = sup.to_vec();
    let mut du2 = vec![0.0; n.saturating_sub(2)];
    let mut b = rhs.to_vec();

    for i in 0..n.saturating_sub(1) {
        if dl[i] == 0.0 {
            if d[i] == 0.0 {
                return None;
            }
        } else if d[i].abs() >= dl[i].abs() {
            let fact = dl[i] / d[i];
            d[i + 1] -= fact * du[i];
            b[i + 1] -= fact * b[i];
            if i + 2 < n {
                dl[i] = 0.0; // du2 slot stays zero
            }
        } else {
            // Interchange rows i and i+1.
            let fact = d[i] / dl[i];
            d[i] = dl[i];
            let tmp = d[i + 1];
            d[i + 1] = du[i] - fact * tmp;
            if i + 2 < n {
                du2[i] = du[i + 1];
                du[i + 1] = -fact * du2[i];
            }
            du[i] = tmp;
            b.swap(i, i + 1);
            b[i + 1] -= fact * b[i];
        }
    }
    if d[n - 1] == 0.0 {
        return None;
    }

    // Back substitution.
    b[n - 1] /= d[n - 1];
    if n > 1 {
        b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / d[n - 2];
    }
    for i in (0..n.saturating_sub(2)).rev() {
        b[i] = (b[i] - du[i] * b[i + 1] - du2[i] * b[i + 2]) / d[i];
    }
    Some(b)
}

/// Solve (z I - T) y = rhs for symmetric tridiagonal T.
pub fn shifted_tridiag_solve(t: &Tridiag, z: f64, rhs: &[f64]) -> Option<Vec<f64>> {
    let d: Vec<f64> = t.diag.iter().map(|v| z - v).collect();
    let o: Vec<f64> = t.off.iter().map(|v| -v).collect();
    tridiag_solve_pp(&o, &d, &o, rhs)
}

/// Eigendecomposition of a real symmetric matrix with eigenvalues sorted
/// ascending and eigenvector columns permuted to match.
pub fn sym_eigen_sorted(mat: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = mat.nrows();
    if n == 0 {
        return Err(CoreError::Domain("empty matrix".into()));
    }
    let eig = mat
        .clone()
        .try_symmetric_eigen(f64::EPSILON, 0)
        .ok_or_else(|| {
            CoreError::NumericalFailure("symmetric eigensolver did not converge".into())
        })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .expect("eigenvalues of a real symmetric matrix are finite")
    });
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

/// Determinant of a real matrix via LU.
pub fn det_real(mat: &DMatrix<f64>) -> f64 {
    if mat.nrows() == 0 {
        return 1.0;
    }
    mat.clone().lu().determinant()
}

pub fn det_complex(mat: &DMatrix<C64>) -> C64 {
    if mat.nrows() == 0 {
        return C64::new(1.0, 0.0);
    }
    mat.clone().lu().determinant()
}

/// Solve M y = rhs (dense, real). None on singular M.
pub fn solve_real(mat: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    mat.clone().lu().solve(rhs)
}

pub fn solve_complex(mat: &DMatrix<C64>, rhs: &DVector<C64>) -> Option<DVector<C64>> {
    mat.clone().lu().solve(rhs)
}

/// Spectral norm of a real symmetric matrix: max |eigenvalue|.
pub fn sym_spectral_norm(mat: &DMatrix<f64>) -> Result<f64> {
    let (vals, _) = sym_eigen_sorted(mat)?;
    Ok(vals.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}
