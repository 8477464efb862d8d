use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Largest accepted relative residual after refinement.
const RESIDUAL_CEILING: f64 = 1e-6;

/// Solve `a x = b` with full-pivot LU plus one round of iterative refinement.
/// Fails on an exactly zero pivot, a non-finite solution or a refined
/// relative residual above `RESIDUAL_CEILING`.
pub(crate) fn solve_dense(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n || b.nrows() != n {
        return Err(Error::Singular(format!(
            "shape mismatch {}x{} vs rhs {}",
            a.nrows(),
            a.ncols(),
            b.nrows()
        )));
    }
    let lu = a.clone().full_piv_lu();
    let mut x = lu
        .solve(b)
        .ok_or_else(|| Error::Singular("zero pivot".into()))?;
    let r = b - a * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("non-finite solution".into()));
    }
    let res = relative_residual(a, &x, b);
    if !(res <= RESIDUAL_CEILING) {
        return Err(Error::Singular(format!("relative residual {res:.3e}")));
    }
    Ok(x)
}

/// `|a x - b|_max / (|a|_max |x|_max + |b|_max)`.
pub(crate) fn relative_residual(a: &DMatrix<f64>, x: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let r = a * x - b;
    let scale = a.amax() * x.amax() + b.amax();
    if scale == 0.0 {
        0.0
    } else {
        r.amax() / scale
    }
}
