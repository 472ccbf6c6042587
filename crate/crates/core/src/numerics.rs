//! Dense kernels shared by every block update: ridge least squares on either
//! side, Moore-Penrose pseudoinverse, singular value thresholding and the
//! unit-column feasibility projection.
//!
//! All solves go through a thin SVD. Normal equations are never formed here.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::instrument::record_solver_call;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative rank cutoff factor; multiplied by `max(rows, cols) * s_max`.
pub const RANK_REL_TOL: f64 = 1e-12;

pub(crate) fn ensure_finite(m: &Matrix, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteInput(what))
    }
}

fn ensure_ridge(ridge: f64) -> Result<()> {
    if ridge.is_finite() && ridge >= 0.0 {
        Ok(())
    } else {
        Err(Error::WeightError(format!("ridge must be >= 0, got {ridge}")))
    }
}

/// Absolute singular value cutoff for a `rows x cols` matrix with largest
/// singular value `s_max`.
pub fn rank_tolerance(rows: usize, cols: usize, s_max: f64) -> f64 {
    RANK_REL_TOL * rows.max(cols) as f64 * s_max
}

struct ThinSvd {
    u: Matrix,
    s: Vector,
    v_t: Matrix,
}

impl ThinSvd {
    fn of(m: &Matrix) -> ThinSvd {
        let svd = m.clone().svd(true, true);
        ThinSvd {
            u: svd.u.expect("svd computed with u"),
            s: svd.singular_values,
            v_t: svd.v_t.expect("svd computed with v_t"),
        }
    }

    fn s_max(&self) -> f64 {
        self.s.iter().cloned().fold(0.0, f64::max)
    }
}

/// Singular values of `m`, in descending order.
pub fn singular_values(m: &Matrix) -> Vector {
    if m.is_empty() {
        return Vector::zeros(0);
    }
    let mut s: Vec<f64> = m.clone().singular_values().iter().cloned().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Vector::from_vec(s)
}

pub fn nuclear_norm(m: &Matrix) -> f64 {
    singular_values(m).sum()
}

/// Number of singular values above `rel * s_max`.
pub fn numerical_rank(m: &Matrix, rel: f64) -> usize {
    let s = singular_values(m);
    let s_max = s.iter().cloned().fold(0.0, f64::max);
    if s_max == 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > rel * s_max).count()
}

/// Minimizer of `||G X - H||_F^2 + ridge ||X||_F^2`.
///
/// With `ridge == 0` and rank-deficient `G` the minimum-norm minimizer is
/// returned.
pub fn solve_lsq_left(g: &Matrix, h: &Matrix, ridge: f64) -> Result<Matrix> {
    if g.nrows() != h.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "solve_lsq_left: G is {}x{}, H is {}x{}",
            g.nrows(),
            g.ncols(),
            h.nrows(),
            h.ncols()
        )));
    }
    ensure_ridge(ridge)?;
    ensure_finite(g, "solve_lsq_left G")?;
    ensure_finite(h, "solve_lsq_left H")?;
    let (p, q) = g.shape();
    if p == 0 || q == 0 || h.ncols() == 0 {
        return Ok(Matrix::zeros(q, h.ncols()));
    }
    record_solver_call();

    let svd = ThinSvd::of(g);
    let tol = rank_tolerance(p, q, svd.s_max());
    let mut projected = svd.u.transpose() * h;
    for (i, &s) in svd.s.iter().enumerate() {
        let factor = if ridge > 0.0 {
            s / (s * s + ridge)
        } else if s > tol {
            1.0 / s
        } else {
            0.0
        };
        projected.row_mut(i).scale_mut(factor);
    }
    let x = svd.v_t.transpose() * projected;
    ensure_finite(&x, "solve_lsq_left output")?;
    Ok(x)
}

/// Minimizer of `||A G - H||_F^2 + ridge ||A||_F^2`; the transpose of
/// [`solve_lsq_left`] on `(G^T, H^T)`.
pub fn solve_lsq_right(g: &Matrix, h: &Matrix, ridge: f64) -> Result<Matrix> {
    if g.ncols() != h.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "solve_lsq_right: G is {}x{}, H is {}x{}",
            g.nrows(),
            g.ncols(),
            h.nrows(),
            h.ncols()
        )));
    }
    Ok(solve_lsq_left(&g.transpose(), &h.transpose(), ridge)?.transpose())
}

/// Proximal operator of `tau * ||.||_*`: soft-shrinks every singular value
/// of `m` by `tau`.
pub fn svt(m: &Matrix, tau: f64) -> Result<Matrix> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::WeightError(format!("svt threshold must be > 0, got {tau}")));
    }
    ensure_finite(m, "svt")?;
    if m.is_empty() {
        return Ok(m.clone());
    }
    record_solver_call();
    let mut svd = ThinSvd::of(m);
    for s in svd.s.iter_mut() {
        *s = (*s - tau).max(0.0);
    }
    let mut us = svd.u;
    for (j, &s) in svd.s.iter().enumerate() {
        us.column_mut(j).scale_mut(s);
    }
    Ok(us * svd.v_t)
}

/// Moore-Penrose pseudoinverse. Singular values at or below
/// [`rank_tolerance`] are treated as zero.
pub fn pseudoinverse(m: &Matrix) -> Result<Matrix> {
    ensure_finite(m, "pseudoinverse")?;
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return Ok(Matrix::zeros(c, r));
    }
    record_solver_call();
    let svd = ThinSvd::of(m);
    let tol = rank_tolerance(r, c, svd.s_max());
    let mut v = svd.v_t.transpose();
    for (j, &s) in svd.s.iter().enumerate() {
        let inv = if s > tol { 1.0 / s } else { 0.0 };
        v.column_mut(j).scale_mut(inv);
    }
    Ok(v * svd.u.transpose())
}

/// Euclidean projection onto `{D : ||d_k|| <= 1 for every column}`.
pub fn project_columns_unit(d: &Matrix) -> Result<Matrix> {
    ensure_finite(d, "project_columns_unit")?;
    let mut out = d.clone();
    for mut col in out.column_iter_mut() {
        let norm = col.norm();
        if norm > 1.0 {
            col.unscale_mut(norm);
        }
    }
    Ok(out)
}

/// Horizontal concatenation of equally tall blocks.
pub fn hstack(blocks: &[&Matrix]) -> Result<Matrix> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    if blocks.iter().any(|b| b.nrows() != rows) {
        return Err(Error::DimensionMismatch("hstack: row counts differ".into()));
    }
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.columns_mut(at, b.ncols()).copy_from(b);
        at += b.ncols();
    }
    Ok(out)
}

/// Vertical concatenation of equally wide blocks.
pub fn vstack(blocks: &[&Matrix]) -> Result<Matrix> {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    if blocks.iter().any(|b| b.ncols() != cols) {
        return Err(Error::DimensionMismatch("vstack: column counts differ".into()));
    }
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.rows_mut(at, b.nrows()).copy_from(b);
        at += b.nrows();
    }
    Ok(out)
}
