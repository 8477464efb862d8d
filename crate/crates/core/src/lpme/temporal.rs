//! Weighted cubic smoothing splines over time, applied column-wise to
//! flattened spline coefficient vectors.
//!
//! `g(t) = sum_i delta_i |t - t_i|^3 + nu_1 + nu_2 t` minimizes
//! `(B - A delta - T nu)^T W (B - A delta - T nu) + gamma delta^T A delta`
//! subject to `T^T delta = 0`, via the KKT system
//!
//! ```text
//! [ 2AWA + 2 gamma A   2AWT   T ] [ delta ]   [ 2AWB ]
//! [ 2T^T WA            2T^TWT 0 ] [ nu    ] = [ 2T^TWB ]
//! [ T^T                0      0 ] [ m     ]   [ 0 ]
//! ```

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::solve_dense;

/// Floor applied to per-time errors before inverse weighting.
pub const TAU_FLOOR: f64 = 1e-12;

/// Normalized inverse errors `w_t = 1 / (tau_t sum_i 1/tau_i)`.
pub fn normalized_inverse_weights(tau: &[f64]) -> Result<Vec<f64>> {
    if let Some(t) = tau.iter().find(|t| !(**t >= 0.0) || !t.is_finite()) {
        return Err(Error::invalid(format!(
            "per-time error must be finite and >= 0, got {t}"
        )));
    }
    let floored: Vec<f64> = tau.iter().map(|t| t.max(TAU_FLOOR)).collect();
    let inv_sum: f64 = floored.iter().map(|t| 1.0 / t).sum();
    Ok(floored.iter().map(|t| 1.0 / (t * inv_sum)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalSpline {
    pub times: Vec<f64>,
    /// `T x M`.
    pub delta: DMatrix<f64>,
    /// `2 x M`.
    pub nu: DMatrix<f64>,
    pub gamma: f64,
    pub weights: Vec<f64>,
}

fn cubic_matrix(times: &[f64]) -> DMatrix<f64> {
    let n = times.len();
    DMatrix::from_fn(n, n, |i, j| (times[i] - times[j]).abs().powi(3))
}

fn linear_matrix(times: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(times.len(), 2, |i, k| if k == 0 { 1.0 } else { times[i] })
}

/// Assemble the KKT matrix and right-hand side for coefficient rows `b`
/// (`T x M`) with weights `w`.
pub fn temporal_system(
    times: &[f64],
    weights: &[f64],
    b: &DMatrix<f64>,
    gamma: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = times.len();
    let a = cubic_matrix(times);
    let tm = linear_matrix(times);
    let w = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(weights));
    let aw = &a * &w;
    let tw = tm.transpose() * &w;
    let size = n + 4;
    let mut k = DMatrix::zeros(size, size);
    k.view_mut((0, 0), (n, n))
        .copy_from(&((&aw * &a) * 2.0 + &a * (2.0 * gamma)));
    k.view_mut((0, n), (n, 2)).copy_from(&((&aw * &tm) * 2.0));
    k.view_mut((0, n + 2), (n, 2)).copy_from(&tm);
    k.view_mut((n, 0), (2, n)).copy_from(&((&tw * &a) * 2.0));
    k.view_mut((n, n), (2, 2)).copy_from(&((&tw * &tm) * 2.0));
    k.view_mut((n + 2, 0), (2, n)).copy_from(&tm.transpose());
    let mut rhs = DMatrix::zeros(size, b.ncols());
    rhs.rows_mut(0, n).copy_from(&((&aw * b) * 2.0));
    rhs.rows_mut(n, 2).copy_from(&((&tw * b) * 2.0));
    (k, rhs)
}

/// Fit the weighted cubic smoothing spline through coefficient vectors `b`
/// observed at `times`, weighted by the normalized inverse of `tau`.
///
/// Two time points are accepted: the side condition then forces
/// `delta = 0` and the fit is the straight line through both.
pub fn temporal_smooth(
    b: &[Vec<f64>],
    times: &[f64],
    tau: &[f64],
    gamma: f64,
) -> Result<TemporalSpline> {
    let n = times.len();
    if n < 2 || b.len() != n || tau.len() != n {
        return Err(Error::invalid(format!(
            "temporal smoothing needs >= 2 aligned time points ({} times, {} coefficient rows, {} errors)",
            n,
            b.len(),
            tau.len()
        )));
    }
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("duplicate time stamps"));
    }
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::invalid(format!(
            "gamma must be finite and >= 0, got {gamma}"
        )));
    }
    let m = b[0].len();
    if b.iter().any(|row| row.len() != m) {
        return Err(Error::invalid("coefficient vectors differ in length"));
    }
    let weights = normalized_inverse_weights(tau)?;
    let bm = DMatrix::from_fn(n, m, |i, j| b[i][j]);
    let (k, rhs) = temporal_system(times, &weights, &bm, gamma);
    let x = solve_dense(&k, &rhs)?;
    let delta = x.rows(0, n).into_owned();
    let nu = x.rows(n, 2).into_owned();
    let spline = TemporalSpline {
        times: times.to_vec(),
        delta,
        nu,
        gamma,
        weights,
    };
    let side = spline.side_condition_residual();
    if side > 1e-8 {
        return Err(Error::Singular(format!(
            "side condition violated by {side:.3e}"
        )));
    }
    Ok(spline)
}

impl TemporalSpline {
    pub fn n_coefficients(&self) -> usize {
        self.delta.ncols()
    }

    /// `g(t)`, one value per coefficient column.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let m = self.delta.ncols();
        let mut out: Vec<f64> = (0..m)
            .map(|j| self.nu[(0, j)] + self.nu[(1, j)] * t)
            .collect();
        for (i, ti) in self.times.iter().enumerate() {
            let c = (t - ti).abs().powi(3);
            for (j, o) in out.iter_mut().enumerate() {
                *o += self.delta[(i, j)] * c;
            }
        }
        out
    }

    /// Whether `t` lies outside the fitted time span.
    pub fn extrapolates(&self, t: f64) -> bool {
        let lo = self.times.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.times.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        t < lo || t > hi
    }

    /// `max |T^T delta|` relative to `max(1, max |delta|)`.
    pub fn side_condition_residual(&self) -> f64 {
        let tm = linear_matrix(&self.times);
        (tm.transpose() * &self.delta).amax() / self.delta.amax().max(1.0)
    }

    /// `sum_columns delta^T A delta`.
    pub fn roughness(&self) -> f64 {
        let a = cubic_matrix(&self.times);
        (&a * &self.delta).component_mul(&self.delta).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn weights_follow_inverse_errors() {
        let w = normalized_inverse_weights(&[0.1, 0.2, 0.4]).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w[0] > w[1] && w[1] > w[2]);
        assert!((w[0] / w[1] - 2.0).abs() < 1e-12);
        let z = normalized_inverse_weights(&[0.0, 1.0]).unwrap();
        assert!(z.iter().all(|v| v.is_finite() && *v > 0.0));
        assert!(z[0] > 0.999);
    }

    #[test]
    fn two_points_give_the_line() {
        let b = vec![vec![1.0, 0.0], vec![3.0, -2.0]];
        let s = temporal_smooth(&b, &[0.0, 2.0], &[0.1, 0.3], 5.0).unwrap();
        let mid = s.eval(1.0);
        assert!((mid[0] - 2.0).abs() < 1e-10);
        assert!((mid[1] + 1.0).abs() < 1e-10);
    }

    #[test]
    fn duplicate_times_rejected() {
        let b = vec![vec![1.0]; 3];
        assert!(temporal_smooth(&b, &[0.0, 1.0, 1.0], &[1.0; 3], 1.0).is_err());
    }

    #[test]
    fn side_condition_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let times = [0.0, 0.3, 0.7, 1.5, 2.0];
        let b: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        for g in [0.0, 1e-3, 1.0, 1e4] {
            let s = temporal_smooth(&b, &times, &[0.1, 0.2, 0.1, 0.5, 0.3], g).unwrap();
            assert!(s.side_condition_residual() < 1e-8);
        }
    }
}
