//! Thin-plate spline models `f: R^d -> R^D`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::{check_dim, dist, eta, eta_grad_factor, eta_hess_factor, eta_sq};

/// A fitted thin-plate spline
/// `f_l(r) = sum_j s[j,l] eta_d(|r - knot_j|) + sum_k alpha[k,l] p_k(r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineModel {
    d: usize,
    /// `N x d`, one knot per row.
    knots: DMatrix<f64>,
    /// `N x D` kernel coefficients.
    s: DMatrix<f64>,
    /// `(d+1) x D` polynomial coefficients.
    alpha: DMatrix<f64>,
    /// Row-major copies of `knots` and `s` for the evaluation loops.
    knots_rm: Vec<f64>,
    s_rm: Vec<f64>,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

impl SplineModel {
    pub fn new(knots: DMatrix<f64>, s: DMatrix<f64>, alpha: DMatrix<f64>) -> Result<Self> {
        let d = knots.ncols();
        check_dim(d)?;
        if s.nrows() != knots.nrows() {
            return Err(Error::invalid(format!(
                "kernel coefficients have {} rows for {} knots",
                s.nrows(),
                knots.nrows()
            )));
        }
        if alpha.nrows() != d + 1 || alpha.ncols() != s.ncols() {
            return Err(Error::invalid(format!(
                "polynomial coefficients must be {}x{}, got {}x{}",
                d + 1,
                s.ncols(),
                alpha.nrows(),
                alpha.ncols()
            )));
        }
        if s.ncols() == 0 {
            return Err(Error::invalid("ambient dimension must be >= 1"));
        }
        Ok(Self {
            d,
            knots_rm: row_major(&knots),
            s_rm: row_major(&s),
            knots,
            s,
            alpha,
        })
    }

    /// Rebuild a model from a flattened coefficient vector `(vec(s), vec(alpha))`
    /// in the layout produced by [`SplineModel::flatten_coefficients`].
    pub fn from_flat(knots: DMatrix<f64>, ambient: usize, coef: &[f64]) -> Result<Self> {
        let n = knots.nrows();
        let d = knots.ncols();
        let expected = (n + d + 1) * ambient;
        if coef.len() != expected {
            return Err(Error::invalid(format!(
                "flat coefficient length {} != {expected}",
                coef.len()
            )));
        }
        let cols = ambient;
        let s = DMatrix::from_fn(n, cols, |j, l| coef[j * cols + l]);
        let alpha = DMatrix::from_fn(d + 1, cols, |k, l| coef[(n + k) * cols + l]);
        Self::new(knots, s, alpha)
    }

    /// Row-major flattening of the stacked `[s; alpha]` matrix: entry `(i, l)`
    /// lands at `i * D + l`.
    pub fn flatten_coefficients(&self) -> Vec<f64> {
        let cols = self.ambient_dim();
        let mut out = Vec::with_capacity((self.n_knots() + self.d + 1) * cols);
        for j in 0..self.n_knots() {
            out.extend((0..cols).map(|l| self.s[(j, l)]));
        }
        for k in 0..=self.d {
            out.extend((0..cols).map(|l| self.alpha[(k, l)]));
        }
        out
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.d
    }

    pub fn ambient_dim(&self) -> usize {
        self.s.ncols()
    }

    pub fn n_knots(&self) -> usize {
        self.knots.nrows()
    }

    pub fn knots(&self) -> &DMatrix<f64> {
        &self.knots
    }

    pub fn knot(&self, j: usize) -> Vec<f64> {
        self.knots.row(j).iter().copied().collect()
    }

    pub fn kernel_coefficients(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn poly_coefficients(&self) -> &DMatrix<f64> {
        &self.alpha
    }

    fn linear_part(&self, r: &[f64], out: &mut [f64]) {
        for (l, o) in out.iter_mut().enumerate().take(self.ambient_dim()) {
            let mut v = self.alpha[(0, l)];
            for (k, &rk) in r.iter().enumerate() {
                v += self.alpha[(k + 1, l)] * rk;
            }
            *o = v;
        }
    }

    /// Evaluate `f(r)` into `out` (length `D`).
    pub fn eval_into(&self, r: &[f64], out: &mut [f64]) {
        debug_assert_eq!(r.len(), self.d);
        let d = self.d;
        let big_d = self.ambient_dim();
        self.linear_part(r, out);
        for (kn, sj) in self
            .knots_rm
            .chunks_exact(d)
            .zip(self.s_rm.chunks_exact(big_d))
        {
            let mut rho2 = 0.0;
            for (a, b) in r.iter().zip(kn) {
                rho2 += (a - b) * (a - b);
            }
            let e = eta_sq(d, rho2);
            for (o, s) in out.iter_mut().zip(sj) {
                *o += s * e;
            }
        }
    }

    pub fn eval(&self, r: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.ambient_dim());
        self.eval_into(r, out.as_mut_slice());
        out
    }

    /// Evaluate `f(r)` and its `D x d` Jacobian.
    pub fn eval_with_jacobian(&self, r: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let big_d = self.ambient_dim();
        let d = self.d;
        let mut value = DVector::zeros(big_d);
        let mut jac = vec![0.0; big_d * d];
        let mut hess = vec![0.0; big_d * d * d];
        self.eval_second_order(r, value.as_mut_slice(), &mut jac, &mut hess);
        (value, DMatrix::from_row_slice(big_d, d, &jac))
    }

    /// Value, Jacobian and per-output Hessians written into caller buffers:
    /// `jac[l * d + k]` is `d f_l / d r_k` and `hess[(l * d + a) * d + b]`
    /// is `d^2 f_l / d r_a d r_b`.
    pub fn eval_second_order(
        &self,
        r: &[f64],
        value: &mut [f64],
        jac: &mut [f64],
        hess: &mut [f64],
    ) {
        let d = self.d;
        let big_d = self.ambient_dim();
        hess[..big_d * d * d].fill(0.0);
        for l in 0..big_d {
            let mut v = self.alpha[(0, l)];
            for (k, &rk) in r.iter().enumerate() {
                v += self.alpha[(k + 1, l)] * rk;
                jac[l * d + k] = self.alpha[(k + 1, l)];
            }
            value[l] = v;
        }
        let mut u = [0.0; 3];
        for (kn, sj) in self
            .knots_rm
            .chunks_exact(d)
            .zip(self.s_rm.chunks_exact(big_d))
        {
            let mut rho2 = 0.0;
            for k in 0..d {
                u[k] = r[k] - kn[k];
                rho2 += u[k] * u[k];
            }
            if rho2 == 0.0 {
                continue;
            }
            let rho = rho2.sqrt();
            let e = eta_sq(d, rho2);
            let g = eta_grad_factor(d, rho);
            let h = eta_hess_factor(d, rho);
            for l in 0..big_d {
                let s = sj[l];
                value[l] += s * e;
                let (sg, sh) = (s * g, s * h);
                for a in 0..d {
                    jac[l * d + a] += sg * u[a];
                    let row = &mut hess[(l * d + a) * d..(l * d + a + 1) * d];
                    for b in 0..d {
                        row[b] += sh * u[a] * u[b];
                    }
                    row[a] += sg;
                }
            }
        }
    }

    /// Kernel matrix `E_ij = eta(|knot_i - knot_j|)` of this model's knots.
    pub fn kernel_matrix(&self) -> DMatrix<f64> {
        kernel_matrix(self.d, &self.knots)
    }

    /// Roughness `sum_l s_l^T E s_l`.
    pub fn roughness(&self) -> f64 {
        let e = self.kernel_matrix();
        let es = &e * &self.s;
        self.s.component_mul(&es).sum()
    }

    /// Largest `|sum_j s[j,l] p_k(knot_j)|` relative to the largest `|s|`.
    pub fn orthogonality_residual(&self) -> f64 {
        let scale = self.s.amax();
        if scale == 0.0 {
            return 0.0;
        }
        let p = poly_matrix(&self.knots);
        (&p * &self.s).amax() / scale
    }

    /// Same knots, coefficients multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let s = &self.s * c;
        Self {
            d: self.d,
            knots: self.knots.clone(),
            knots_rm: self.knots_rm.clone(),
            s_rm: row_major(&s),
            s,
            alpha: &self.alpha * c,
        }
    }
}

/// `N x N` kernel matrix over knot rows.
pub(crate) fn kernel_matrix(d: usize, knots: &DMatrix<f64>) -> DMatrix<f64> {
    let n = knots.nrows();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| knots.row(i).iter().copied().collect())
        .collect();
    let mut e = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = eta(d, dist(&rows[i], &rows[j]));
            e[(i, j)] = v;
            e[(j, i)] = v;
        }
    }
    e
}

/// `(d+1) x N` polynomial matrix `R_kj = p_k(knot_j)`.
pub(crate) fn poly_matrix(knots: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, d) = knots.shape();
    DMatrix::from_fn(
        d + 1,
        n,
        |k, j| if k == 0 { 1.0 } else { knots[(j, k - 1)] },
    )
}
