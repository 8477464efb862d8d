//! Thin-plate radial kernels and the linear polynomial basis.
//!
//! The kernel for intrinsic dimension `d` is `r^(4-d) log r` for even `d`
//! and `r^(4-d)` for odd `d`, extended by continuity with value 0 at `r = 0`.

use crate::error::{Error, Result};

/// Largest intrinsic dimension for which the kernel is defined.
pub const MAX_INTRINSIC_DIM: usize = 3;

pub(crate) fn check_dim(d: usize) -> Result<()> {
    if (1..=MAX_INTRINSIC_DIM).contains(&d) {
        Ok(())
    } else {
        Err(Error::UnsupportedDimension(d))
    }
}

/// Thin-plate kernel value `eta_d(r)`.
pub fn eta_kernel(d: usize, r: f64) -> Result<f64> {
    check_dim(d)?;
    if !(r >= 0.0) {
        return Err(Error::invalid(format!(
            "kernel radius must be >= 0, got {r}"
        )));
    }
    Ok(eta(d, r))
}

/// Unchecked kernel; `d` must already be validated.
#[inline]
pub(crate) fn eta(d: usize, r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    match d {
        1 => r * r * r,
        2 => r * r * r.ln(),
        _ => r,
    }
}

/// `eta_d` as a function of the squared radius, avoiding the square root
/// where the kernel allows.
#[inline]
pub(crate) fn eta_sq(d: usize, r2: f64) -> f64 {
    if r2 <= 0.0 {
        return 0.0;
    }
    match d {
        1 => r2 * r2.sqrt(),
        2 => 0.5 * r2 * r2.ln(),
        _ => r2.sqrt(),
    }
}

/// Radial derivative divided by the radius, `eta_d'(r) / r`, so that the
/// gradient of `eta_d(|x - c|)` with respect to `x` is this factor times
/// `x - c`. Zero at the origin (the limit for d <= 2, a subgradient for d = 3).
#[inline]
pub(crate) fn eta_grad_factor(d: usize, r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    match d {
        1 => 3.0 * r,
        2 => 2.0 * r.ln() + 1.0,
        _ => 1.0 / r,
    }
}

/// `G'(r) / r` for the gradient factor `G`, so that the Hessian of
/// `eta_d(|x - c|)` is `G I + (G'/r) u u^T` with `u = x - c`. Zero at the
/// origin, where the Hessian is undefined for d >= 2.
#[inline]
pub(crate) fn eta_hess_factor(d: usize, r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    match d {
        1 => 3.0 / r,
        2 => 2.0 / (r * r),
        _ => -1.0 / (r * r * r),
    }
}

/// Linear polynomial basis `(1, r_1, ..., r_d)`.
pub fn poly_basis(r: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(r.len() + 1);
    out.push(1.0);
    out.extend_from_slice(r);
    out
}

#[inline]
pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    #[test]
    fn kernel_examples() {
        assert_eq!(eta_kernel(1, 2.0).unwrap(), 8.0);
        assert_eq!(eta_kernel(2, 1.0).unwrap(), 0.0);
        assert!((eta_kernel(2, E).unwrap() - E * E).abs() < 1e-12);
        assert_eq!(eta_kernel(3, 2.5).unwrap(), 2.5);
    }

    #[test]
    fn kernel_zero_and_near_zero() {
        for d in 1..=3 {
            assert_eq!(eta_kernel(d, 0.0).unwrap(), 0.0);
            assert!(eta_kernel(d, 1e-9).unwrap().abs() < 1e-6);
        }
    }

    #[test]
    fn kernel_rejects_high_dimension() {
        assert!(matches!(
            eta_kernel(4, 1.0),
            Err(Error::UnsupportedDimension(4))
        ));
        assert!(matches!(
            eta_kernel(0, 1.0),
            Err(Error::UnsupportedDimension(0))
        ));
        assert!(eta_kernel(1, -1.0).is_err());
    }

    #[test]
    fn poly_basis_examples() {
        assert_eq!(poly_basis(&[3.0]), vec![1.0, 3.0]);
        assert_eq!(poly_basis(&[0.0, 0.0]), vec![1.0, 0.0, 0.0]);
        assert_eq!(poly_basis(&[-1.0, 2.0]), vec![1.0, -1.0, 2.0]);
    }

    #[test]
    fn grad_factor_matches_finite_difference() {
        for d in 1..=3 {
            for &r in &[0.3, 1.0, 2.7] {
                let h = 1e-6;
                let fd = (eta(d, r + h) - eta(d, r - h)) / (2.0 * h);
                assert!((eta_grad_factor(d, r) * r - fd).abs() < 1e-6, "d={d} r={r}");
            }
        }
    }

    #[test]
    fn hess_factor_matches_finite_difference() {
        for d in 1..=3 {
            for &r in &[0.3, 1.0, 2.7] {
                let h = 1e-5;
                let fd = (eta_grad_factor(d, r + h) - eta_grad_factor(d, r - h)) / (2.0 * h);
                assert!((eta_hess_factor(d, r) * r - fd).abs() < 1e-5, "d={d} r={r}");
            }
        }
    }
}
