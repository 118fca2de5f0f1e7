//! Dense linear-algebra helpers over `faer`: Gram products, shifted
//! positive-definite solves, and a few conversions used across modules.

use faer::dyn_stack::{MemBuffer, MemStack, StackReq};
use faer::linalg::cholesky::llt::factor::{cholesky_in_place, cholesky_in_place_scratch};
use faer::linalg::cholesky::llt::solve::solve_in_place;
use faer::linalg::matmul::matmul;
use faer::linalg::matmul::triangular::{self, BlockStructure};
use faer::{Accum, Mat, MatRef, Par};
use rayon::prelude::*;

use crate::{Error, Result};

pub(crate) fn par() -> Par {
    faer::get_global_parallelism()
}

/// `a · b`.
pub fn mul(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Result<Mat<f64>> {
    if a.ncols() != b.nrows() {
        return Err(Error::dim(format!(
            "cannot multiply {}x{} by {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let mut out = Mat::zeros(a.nrows(), b.ncols());
    matmul(&mut out, Accum::Replace, a, b, 1.0, par());
    Ok(out)
}

/// `a · bᵀ`, the matrix of row inner products.
pub fn mul_transpose(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Result<Mat<f64>> {
    if a.ncols() != b.ncols() {
        return Err(Error::dim(format!(
            "row lengths differ: {} vs {}",
            a.ncols(),
            b.ncols()
        )));
    }
    let mut out = Mat::zeros(a.nrows(), b.nrows());
    matmul(&mut out, Accum::Replace, a, b.transpose(), 1.0, par());
    Ok(out)
}

/// Accumulates `scale · aᵀa` into the lower triangle of `acc`.
///
/// Only the lower triangle is touched; call [`mirror_lower`] once the
/// accumulation is finished.
pub fn add_gram_lower(acc: &mut Mat<f64>, a: MatRef<'_, f64>, scale: f64) {
    assert_eq!(acc.nrows(), a.ncols());
    assert_eq!(acc.ncols(), a.ncols());
    triangular::matmul(
        acc.as_mut(),
        BlockStructure::TriangularLower,
        Accum::Add,
        a.transpose(),
        BlockStructure::Rectangular,
        a,
        BlockStructure::Rectangular,
        scale,
        par(),
    );
}

/// Copies the strict lower triangle onto the upper one.
pub fn mirror_lower(a: &mut Mat<f64>) {
    let n = a.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            a[(j, i)] = a[(i, j)];
        }
    }
}

/// Exactly symmetric `aᵀa`.
pub fn gram_cols(a: MatRef<'_, f64>) -> Mat<f64> {
    let mut g = Mat::zeros(a.ncols(), a.ncols());
    add_gram_lower(&mut g, a, 1.0);
    mirror_lower(&mut g);
    g
}

/// Exactly symmetric `a·aᵀ`.
pub fn gram_rows(a: MatRef<'_, f64>) -> Mat<f64> {
    gram_cols(a.transpose())
}

/// Largest `|a_ij − a_ji|` relative to the largest `|a_ij|`.
pub fn relative_asymmetry(a: MatRef<'_, f64>) -> f64 {
    let n = a.nrows();
    let mut scale = 0.0f64;
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            scale = scale.max(a[(i, j)].abs());
            if i > j {
                worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
            }
        }
    }
    if scale == 0.0 {
        0.0
    } else {
        worst / scale
    }
}

pub fn all_finite(a: MatRef<'_, f64>) -> bool {
    (0..a.ncols()).all(|j| (0..a.nrows()).all(|i| a[(i, j)].is_finite()))
}

/// Lower Cholesky factor of a symmetric positive-definite matrix, computed in
/// place so the only storage is the factor itself.
pub struct Cholesky {
    factor: Mat<f64>,
}

impl Cholesky {
    /// Factors `a + shift·I`. Only the lower triangle of `a` is read.
    pub fn factor_shifted(mut a: Mat<f64>, shift: f64) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::dim(format!(
                "cannot factor a non-square {}x{} matrix",
                a.nrows(),
                a.ncols()
            )));
        }
        let n = a.nrows();
        for i in 0..n {
            a[(i, i)] += shift;
        }
        let par = par();
        let mut mem = MemBuffer::new(cholesky_in_place_scratch::<f64>(n, par, Default::default()));
        cholesky_in_place(
            a.as_mut(),
            Default::default(),
            par,
            MemStack::new(&mut mem),
            Default::default(),
        )
        .map_err(|e| Error::SolveFailed(format!("Cholesky factorization of {n}x{n} matrix: {e}")))?;
        Ok(Self { factor: a })
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    pub fn solve_in_place(&self, rhs: &mut Mat<f64>) {
        assert_eq!(rhs.nrows(), self.dim());
        let mut mem = MemBuffer::new(StackReq::EMPTY);
        solve_in_place(
            self.factor.as_ref(),
            rhs.as_mut(),
            par(),
            MemStack::new(&mut mem),
        );
    }

    pub fn solve(&self, rhs: MatRef<'_, f64>) -> Result<Mat<f64>> {
        if rhs.nrows() != self.dim() {
            return Err(Error::dim(format!(
                "right-hand side has {} rows, factor is {}x{}",
                rhs.nrows(),
                self.dim(),
                self.dim()
            )));
        }
        let mut x = rhs.to_owned();
        self.solve_in_place(&mut x);
        if !all_finite(x.as_ref()) {
            return Err(Error::SolveFailed(
                "solution contains non-finite values".into(),
            ));
        }
        Ok(x)
    }
}

/// Solves `(a + shift·I) x = rhs` through a Cholesky factorization.
pub fn solve_shifted(a: MatRef<'_, f64>, shift: f64, rhs: MatRef<'_, f64>) -> Result<Mat<f64>> {
    Cholesky::factor_shifted(a.to_owned(), shift)?.solve(rhs)
}

/// Row-major `Vec<Vec<f64>>` to a matrix.
pub fn from_rows(rows: &[Vec<f64>]) -> Result<Mat<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::dim("ragged rows"));
    }
    Ok(Mat::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Fills every column of `out` in parallel; `f(j, column)` receives the
/// contiguous column slice.
pub fn par_fill_columns<F>(out: &mut Mat<f64>, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    out.as_mut()
        .par_col_iter_mut()
        .enumerate()
        .for_each(|(j, col)| {
            let slice = col
                .try_as_col_major_mut()
                .expect("owned matrices are column-major")
                .as_slice_mut();
            f(j, slice);
        });
}

/// Selected rows of `a`, in the given order.
pub fn select_rows(a: MatRef<'_, f64>, rows: &[usize]) -> Mat<f64> {
    Mat::from_fn(rows.len(), a.ncols(), |i, j| a[(rows[i], j)])
}

/// Frobenius norm.
pub fn frobenius(a: MatRef<'_, f64>) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)] * a[(i, j)];
        }
    }
    s.sqrt()
}

/// Max entrywise `|a − b| / max(|b|)`.
pub fn max_rel_diff(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut scale = 0.0f64;
    let mut worst = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            scale = scale.max(b[(i, j)].abs());
            worst = worst.max((a[(i, j)] - b[(i, j)]).abs());
        }
    }
    if scale == 0.0 {
        worst
    } else {
        worst / scale
    }
}
