//! Schur complements at a pivot site, disk-local root finding for Rellich
//! values, and the rank-one jump-sign machinery.
//!
//! For a block Λ with pivot p, the complement
//!   s(z) = z - H(p,p) - c^T (z Id - H_{Λ\{p}})^{-1} c
//! vanishes exactly at the eigenvalues of H_Λ that the pivot-deleted block
//! does not share, and det(z Id - H_Λ) = s(z) det(z Id - H_{Λ\{p}}).

use crate::error::{CoreError, Result};
use crate::lattice::{LatticePoint, LatticeSet};
use crate::linalg::{self, C64};
use crate::operator::{assemble, DirichletOperator, ModelParams};
use crate::quasiperiodic::{frac, Side};
use nalgebra::{DMatrix, DVector};

/// One evaluation of the Schur complement at a pivot.
#[derive(Clone, Debug)]
pub struct SchurEvaluation {
    pub pivot: LatticePoint,
    pub z: C64,
    /// s(z) = (z - diagonal(pivot)) - r(z).
    pub s_value: C64,
    /// r(z) = c^T (z Id - H_minor)^{-1} c.
    pub r_value: C64,
    /// s'(z) = 1 + y^T y with y = (z Id - H_minor)^{-1} c.
    pub s_derivative: C64,
}

/// Hopping column of the pivot restricted to the pivot-deleted block, and the
/// minor's row/column indices into the parent matrix.
fn pivot_split(op: &DirichletOperator, pivot: &LatticePoint) -> Result<(usize, Vec<usize>)> {
    let k = op
        .domain
        .index_of(pivot)
        .ok_or_else(|| CoreError::Domain("pivot not contained in the operator domain".into()))?;
    let others = (0..op.len()).filter(|i| *i != k).collect();
    Ok((k, others))
}

fn minor_matrix(op: &DirichletOperator, keep: &[usize]) -> DMatrix<f64> {
    let m = keep.len();
    DMatrix::from_fn(m, m, |i, j| op.matrix()[(keep[i], keep[j])])
}

fn hopping_column(op: &DirichletOperator, k: usize, keep: &[usize]) -> DVector<f64> {
    DVector::from_iterator(keep.len(), keep.iter().map(|&i| op.matrix()[(i, k)]))
}

/// Evaluate the Schur complement at z; real z uses the tridiagonal fast path
/// when the minor is tridiagonal in the deterministic ordering.
pub fn schur_complement(
    op: &DirichletOperator,
    pivot: &LatticePoint,
    z: C64,
) -> Result<SchurEvaluation> {
    let (k, keep) = pivot_split(op, pivot)?;
    let diag = op.matrix()[(k, k)];
    if keep.is_empty() {
        return Ok(SchurEvaluation {
            pivot: pivot.clone(),
            z,
            s_value: z - diag,
            r_value: C64::new(0.0, 0.0),
            s_derivative: C64::new(1.0, 0.0),
        });
    }
    let c = hopping_column(op, k, &keep);
    if c.amax() == 0.0 {
        return Ok(SchurEvaluation {
            pivot: pivot.clone(),
            z,
            s_value: z - diag,
            r_value: C64::new(0.0, 0.0),
            s_derivative: C64::new(1.0, 0.0),
        });
    }

    if z.im == 0.0 {
        let y = real_minor_solve(op, &keep, z.re, &c)?;
        let r: f64 = c.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
        let y_sq: f64 = y.iter().map(|v| v * v).sum();
        return Ok(SchurEvaluation {
            pivot: pivot.clone(),
            z,
            s_value: C64::new(z.re - diag - r, 0.0),
            r_value: C64::new(r, 0.0),
            s_derivative: C64::new(1.0 + y_sq, 0.0),
        });
    }

    let m = minor_matrix(op, &keep);
    let shifted = DMatrix::from_fn(keep.len(), keep.len(), |i, j| {
        if i == j {
            z - m[(i, j)]
        } else {
            C64::new(-m[(i, j)], 0.0)
        }
    });
    let rhs = DVector::from_iterator(keep.len(), c.iter().map(|v| C64::new(*v, 0.0)));
    let y = linalg::solve_complex(&shifted, &rhs).ok_or(CoreError::SingularMinor)?;
    // (z Id - M) is complex symmetric, so c^T M^{-2} c = y^T y without
    // conjugation.
    let r: C64 = c
        .iter()
        .zip(y.iter())
        .map(|(a, b)| C64::new(*a, 0.0) * b)
        .sum();
    let y_sq: C64 = y.iter().map(|v| v * v).sum();
    Ok(SchurEvaluation {
        pivot: pivot.clone(),
        z,
        s_value: z - diag - r,
        r_value: r,
        s_derivative: C64::new(1.0, 0.0) + y_sq,
    })
}

/// Solve (z Id - M) y = c for the pivot-deleted block at real z.
fn real_minor_solve(
    op: &DirichletOperator,
    keep: &[usize],
    z: f64,
    c: &DVector<f64>,
) -> Result<DVector<f64>> {
    let m = minor_matrix(op, keep);
    if let Some(t) = linalg::tridiag_of(&m) {
        let rhs: Vec<f64> = c.iter().cloned().collect();
        let y = linalg::shifted_tridiag_solve(&t, z, &rhs).ok_or(CoreError::SingularMinor)?;
        return Ok(DVector::from_vec(y));
    }
    let shifted = DMatrix::identity(keep.len(), keep.len()) * z - &m;
    linalg::solve_real(&shifted, c).ok_or(CoreError::SingularMinor)
}

/// Number of eigenvalues of the pivot-deleted block in [a, b].
pub fn minor_eig_count_in(
    op: &DirichletOperator,
    pivot: &LatticePoint,
    a: f64,
    b: f64,
) -> Result<usize> {
    let (_, keep) = pivot_split(op, pivot)?;
    if keep.is_empty() {
        return Ok(0);
    }
    let m = minor_matrix(op, &keep);
    if let Some(t) = linalg::tridiag_of(&m) {
        return Ok(linalg::sturm_count_below(&t, b.next_up()) - linalg::sturm_count_below(&t, a));
    }
    let (vals, _) = linalg::sym_eigen_sorted(&m)?;
    Ok(vals.iter().filter(|v| **v >= a && **v <= b).count())
}

/// Result of a disk-local root find.
#[derive(Clone, Debug)]
pub struct RootFind {
    pub root: f64,
    pub s_derivative: f64,
    /// |s'(root) - 1| <= derivative_budget.
    pub derivative_ok: bool,
    pub iterations: usize,
    pub used_bisection: bool,
}

pub struct RootOptions {
    pub derivative_budget: f64,
    pub max_iterations: usize,
}

impl Default for RootOptions {
    fn default() -> Self {
        Self {
            derivative_budget: 0.5,
            max_iterations: 100,
        }
    }
}

/// Find the unique zero of the pivot Schur complement in
/// [center - radius, center + radius].
///
/// Preconditions verified here: the pivot-deleted block has no eigenvalue in
/// the closed interval (else SingularMinor), and the full matrix has exactly
/// one (else RootCountMismatch). Safeguarded Newton with central-difference
/// derivative and bisection fallback on the sign change of s.
pub fn find_rellich_root(
    op: &DirichletOperator,
    pivot: &LatticePoint,
    center: f64,
    radius: f64,
    opts: &RootOptions,
) -> Result<RootFind> {
    let lo = center - radius;
    let hi = center + radius;
    if minor_eig_count_in(op, pivot, lo, hi)? != 0 {
        return Err(CoreError::SingularMinor);
    }
    let full_count = op.eig_count_in(lo, hi)?;
    if full_count != 1 {
        return Err(CoreError::RootCountMismatch { found: full_count });
    }

    let tol_root = 1e-12 * center.abs().max(1.0);
    let s_at =
        |z: f64| -> Result<f64> { Ok(schur_complement(op, pivot, C64::new(z, 0.0))?.s_value.re) };

    let mut e = center;
    let mut f = s_at(e)?;
    let mut iterations = 0usize;
    let mut used_bisection = false;

    // Bracket the sign change; s is increasing in regime, so this normally
    // succeeds immediately.
    let mut a = lo;
    let mut b = hi;
    let mut fa = s_at(a)?;
    let fb = s_at(b)?;
    let have_bracket = fa * fb <= 0.0;

    let h = 1e-6 * radius;
    while f.abs() > tol_root && iterations < opts.max_iterations {
        iterations += 1;
        if have_bracket {
            if fa * f <= 0.0 {
                b = e;
            } else {
                a = e;
                fa = f;
            }
        }
        let fp = (s_at(e + h)? - s_at(e - h)?) / (2.0 * h);
        let newton = if fp != 0.0 { e - f / fp } else { f64::NAN };
        let next = if newton.is_finite() && newton > a && newton < b {
            newton
        } else if have_bracket {
            used_bisection = true;
            0.5 * (a + b)
        } else {
            return Err(CoreError::NumericalFailure(
                "no sign change and Newton left the window".into(),
            ));
        };
        e = next;
        f = s_at(e)?;
    }
    if f.abs() > tol_root {
        return Err(CoreError::NumericalFailure(format!(
            "root iteration did not reach tolerance: |s| = {:e}",
            f.abs()
        )));
    }
    let s_derivative = schur_complement(op, pivot, C64::new(e, 0.0))?
        .s_derivative
        .re;
    Ok(RootFind {
        root: e,
        s_derivative,
        derivative_ok: (s_derivative - 1.0).abs() <= opts.derivative_budget,
        iterations,
        used_bisection,
    })
}

/// Rank-one jump analysis for the discontinuity at beta_x = {-x . omega}:
/// determinants of the pivot-deleted blocks on both sides, the shared
/// adjugate column b(z), and the two routes to s(beta_x) - s(beta_x - 0).
#[derive(Clone, Debug)]
pub struct JumpAnalysis {
    pub site_x: LatticePoint,
    pub z: f64,
    pub det_left: f64,
    pub det_right: f64,
    pub b_vector: DVector<f64>,
    pub c_dot_b: f64,
    pub s_diff_direct: f64,
    pub s_diff_formula: f64,
    pub sign_consistent: bool,
}

/// Analyze the jump of the pivot Schur complement at beta_x for x != o on the
/// given block (which must contain both the origin pivot and x).
pub fn jump_analysis(
    params: &ModelParams,
    block: &LatticeSet,
    x: &LatticePoint,
    z: f64,
) -> Result<JumpAnalysis> {
    let origin = LatticePoint::origin(block.dim())?;
    if *x == origin {
        return Err(CoreError::Domain("jump analysis requires x != o".into()));
    }
    if !block.contains(&origin) || !block.contains(x) {
        return Err(CoreError::Domain(
            "block must contain both the origin and x".into(),
        ));
    }
    let beta = frac(-params.freq.phase_shift(x));
    let deleted = block.remove(&origin);

    let op_right = assemble(params, &deleted, beta, Side::Right)?;
    let op_left = assemble(params, &deleted, beta, Side::Left)?;
    let n = deleted.len();
    let shift_right = DMatrix::identity(n, n) * z - op_right.matrix();
    let shift_left = DMatrix::identity(n, n) * z - op_left.matrix();
    let det_right = linalg::det_real(&shift_right);
    let det_left = linalg::det_real(&shift_left);

    let kx = deleted.index_of(x).expect("x is in the deleted block");
    let b_vector = adjugate_column(&shift_right, kx)?;

    // Hopping column of the origin pivot restricted to the deleted block.
    let full_right = assemble(params, block, beta, Side::Right)?;
    let k0 = block.index_of(&origin).expect("origin is in the block");
    let c = DVector::from_iterator(
        n,
        deleted
            .iter()
            .map(|p| full_right.matrix()[(block.index_of(p).unwrap(), k0)]),
    );
    let c_dot_b: f64 = c.dot(&b_vector);
    let s_diff_formula = (c_dot_b * c_dot_b) / (det_left * det_right);

    let full_left = assemble(params, block, beta, Side::Left)?;
    let s_right = schur_complement(&full_right, &origin, C64::new(z, 0.0))?;
    let s_left = schur_complement(&full_left, &origin, C64::new(z, 0.0))?;
    let s_diff_direct = s_right.s_value.re - s_left.s_value.re;

    let sign_consistent = if s_diff_direct.abs() > 1e-12 && s_diff_formula.abs() > 1e-12 {
        s_diff_direct.signum() == s_diff_formula.signum()
    } else {
        true
    };
    Ok(JumpAnalysis {
        site_x: x.clone(),
        z,
        det_left,
        det_right,
        b_vector,
        c_dot_b,
        s_diff_direct,
        s_diff_formula,
        sign_consistent,
    })
}

/// Column `col` of the adjugate of `mat`, computed as det(mat) mat^{-1} e_col.
pub fn adjugate_column(mat: &DMatrix<f64>, col: usize) -> Result<DVector<f64>> {
    let n = mat.nrows();
    let det = linalg::det_real(mat);
    let mut e = DVector::zeros(n);
    e[col] = 1.0;
    let y = linalg::solve_real(mat, &e).ok_or(CoreError::SingularMinor)?;
    Ok(y * det)
}

/// Column `col` of the adjugate via cofactors; intended for small oracle
/// instances (n <= 9).
pub fn adjugate_column_cofactor(mat: &DMatrix<f64>, col: usize) -> DVector<f64> {
    let n = mat.nrows();
    assert!(n <= 9, "cofactor adjugate is for small instances only");
    let mut out = DVector::zeros(n);
    for i in 0..n {
        // adj(i, col) = (-1)^{i+col} det(mat with row `col` and column `i`
        // removed).
        let minor = DMatrix::from_fn(n - 1, n - 1, |r, c| {
            let rr = if r < col { r } else { r + 1 };
            let cc = if c < i { c } else { c + 1 };
            mat[(rr, cc)]
        });
        let sign = if (i + col).is_multiple_of(2) {
            1.0
        } else {
            -1.0
        };
        out[i] = sign * linalg::det_real(&minor);
    }
    out
}

/// |s at the larger block - s at the smaller block| for the same pivot and
/// real energy; the cross-scale tail of the complement.
pub fn scale_tail(
    op_full: &DirichletOperator,
    op_sub: &DirichletOperator,
    pivot: &LatticePoint,
    z: f64,
) -> Result<f64> {
    let zz = C64::new(z, 0.0);
    let big = schur_complement(op_full, pivot, zz)?;
    let small = schur_complement(op_sub, pivot, zz)?;
    Ok((big.s_value.re - small.s_value.re).abs())
}
