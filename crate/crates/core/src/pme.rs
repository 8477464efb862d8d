//! Single time point principal manifold estimation.
//!
//! A fit alternates two steps over a fixed set of weighted centers: a
//! weighted penalized thin-plate regression of the centers on their current
//! parameters, and re-projection of every center onto the new spline. This is
//! repeated for every smoothing value in a grid, and the value whose manifold
//! has the smallest mean squared distance to the full data cloud wins.
//!
//! The weighted regression minimizes
//! `sum_j w_j |y_j - f(r_j)|^2 + lambda s^T E s` subject to `R s = 0`. Its
//! stationarity conditions are solved exactly by
//! `W(Y - E s - R^T alpha) = lambda s`, which gives the block system
//!
//! ```text
//! [ E + lambda W^-1   R^T ] [ s     ]   [ Y ]
//! [ R                 0   ] [ alpha ] = [ 0 ]
//! ```
//!
//! With unit weights this is the usual thin-plate smoothing system.

use nalgebra::{DMatrix, Matrix2, Matrix3, Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::Point;
use crate::error::{Error, Result};
use crate::linalg::solve_dense;
use crate::spline::{kernel_matrix, poly_matrix, SplineModel};

/// Stopping rules for [`project`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProjectOptions {
    pub max_steps: usize,
    pub grad_tol: f64,
    /// Run local descent only from the `max_starts` seeds with the smallest
    /// objective. `None` descends from every seed.
    pub max_starts: Option<usize>,
}

impl Default for ProjectOptions {
    fn default() -> Self {
        Self {
            max_steps: 200,
            grad_tol: 1e-8,
            max_starts: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub param: Point,
    /// `|x - f(param)|^2`.
    pub objective: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PmeSettings {
    pub lambda_grid: Vec<f64>,
    /// Relative tolerance on the weighted center objective.
    pub eps: f64,
    pub max_iter: usize,
    pub project: ProjectOptions,
}

impl Default for PmeSettings {
    fn default() -> Self {
        Self {
            lambda_grid: default_lambda_grid(),
            eps: 1e-3,
            max_iter: 100,
            project: ProjectOptions {
                max_starts: Some(2),
                ..ProjectOptions::default()
            },
        }
    }
}

/// `exp(g)` for `g = -15..=5`.
pub fn default_lambda_grid() -> Vec<f64> {
    (-15..=5).map(|g| (g as f64).exp()).collect()
}

/// Outcome of the alternating fit at one smoothing value.
#[derive(Debug, Clone)]
pub struct LambdaTrace {
    pub lambda: f64,
    pub tau: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Weighted center objective plus roughness after every spline solve.
    pub objective: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PmeFit {
    pub model: SplineModel,
    pub lambda_star: f64,
    /// Mean squared distance of the full cloud to the selected manifold.
    pub tau: f64,
    /// Projection parameters of the centers on the selected manifold.
    pub params: Vec<Point>,
    pub iterations: usize,
    pub converged: bool,
    pub per_lambda: Vec<LambdaTrace>,
}

/// Assemble the weighted block matrix for knots `params` (`N x d`).
pub fn penalized_system(params: &DMatrix<f64>, weights: &[f64], lambda: f64) -> DMatrix<f64> {
    let (n, d) = params.shape();
    let e = kernel_matrix(d, params);
    let r = poly_matrix(params);
    let m = n + d + 1;
    let mut a = DMatrix::zeros(m, m);
    a.view_mut((0, 0), (n, n)).copy_from(&e);
    for (j, w) in weights.iter().enumerate() {
        a[(j, j)] += lambda / w;
    }
    a.view_mut((0, n), (n, d + 1)).copy_from(&r.transpose());
    a.view_mut((n, 0), (d + 1, n)).copy_from(&r);
    a
}

/// Right-hand side `[Y; 0]` for targets given one per row.
pub fn penalized_rhs(targets: &[Point], d: usize) -> DMatrix<f64> {
    let n = targets.len();
    let big_d = targets.first().map_or(0, Vec::len);
    DMatrix::from_fn(
        n + d + 1,
        big_d,
        |i, l| if i < n { targets[i][l] } else { 0.0 },
    )
}

/// Weighted penalized thin-plate regression of `targets` on `params`.
pub fn solve_penalized_spline(
    params: &[Point],
    targets: &[Point],
    weights: &[f64],
    lambda: f64,
) -> Result<SplineModel> {
    let n = params.len();
    let d = params.first().map_or(0, Vec::len);
    crate::kernel::check_dim(d)?;
    if targets.len() != n || weights.len() != n {
        return Err(Error::invalid(format!(
            "{n} params, {} targets, {} weights",
            targets.len(),
            weights.len()
        )));
    }
    if n < d + 2 {
        return Err(Error::invalid(format!(
            "need at least d+2 = {} knots, got {n}",
            d + 2
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
        return Err(Error::invalid(format!("weights must be positive, got {w}")));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!("lambda must be >= 0, got {lambda}")));
    }
    let big_d = targets[0].len();
    if params.iter().any(|p| p.len() != d) || targets.iter().any(|y| y.len() != big_d) {
        return Err(Error::invalid("ragged params or targets"));
    }
    let knots = points_to_matrix(params);
    if !affinely_spanning(&knots) || (lambda == 0.0 && has_duplicate_rows(params)) {
        return Err(Error::DegenerateKnots);
    }
    let a = penalized_system(&knots, weights, lambda);
    let b = penalized_rhs(targets, d);
    let x = solve_dense(&a, &b).map_err(|_| Error::DegenerateKnots)?;
    let s = x.rows(0, n).into_owned();
    let alpha = x.rows(n, d + 1).into_owned();
    SplineModel::new(knots, s, alpha)
}

/// Whether the knots span `R^d` affinely, i.e. the polynomial matrix has
/// full row rank.
pub(crate) fn affinely_spanning(knots: &DMatrix<f64>) -> bool {
    let r = poly_matrix(knots);
    let sv = r.singular_values();
    let max = sv.max();
    max > 0.0 && sv.min() > 1e-10 * max
}

fn has_duplicate_rows(points: &[Point]) -> bool {
    let mut sorted: Vec<&Point> = points.iter().collect();
    sorted.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    sorted.windows(2).any(|w| w[0] == w[1])
}

pub fn points_to_matrix(points: &[Point]) -> DMatrix<f64> {
    let cols = points.first().map_or(0, Vec::len);
    DMatrix::from_fn(points.len(), cols, |i, k| points[i][k])
}

pub fn matrix_to_points(m: &DMatrix<f64>) -> Vec<Point> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn sq_dist_to(model: &SplineModel, x: &[f64], r: &[f64], buf: &mut [f64]) -> f64 {
    model.eval_into(r, buf);
    x.iter()
        .zip(buf.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// Solve the symmetric `d x d` system `h p = g` by Cholesky; `None` when `h`
/// is not positive definite.
fn spd_solve(h: &[f64; 9], g: &[f64; 3], d: usize) -> Option<[f64; 3]> {
    let mut p = [0.0; 3];
    match d {
        1 => {
            if !(h[0] > 0.0) {
                return None;
            }
            p[0] = g[0] / h[0];
        }
        2 => {
            let m = Matrix2::new(h[0], h[1], h[2], h[3]);
            let x = m.cholesky()?.solve(&Vector2::new(g[0], g[1]));
            p[..2].copy_from_slice(x.as_slice());
        }
        _ => {
            let m = Matrix3::from_row_slice(h);
            let x = m.cholesky()?.solve(&Vector3::new(g[0], g[1], g[2]));
            p.copy_from_slice(x.as_slice());
        }
    }
    p.iter().all(|v| v.is_finite()).then_some(p)
}

/// Local descent on `|x - f(r)|^2` from `start`: Newton directions from the
/// exact Hessian, falling back to Gauss-Newton and then steepest descent
/// when the curvature is not positive, with Armijo backtracking.
fn descend(model: &SplineModel, x: &[f64], start: &[f64], opts: &ProjectOptions) -> Projection {
    let d = start.len();
    let big_d = x.len();
    let mut r = start.to_vec();
    let mut buf = vec![0.0; big_d];
    let mut value = vec![0.0; big_d];
    let mut jac = vec![0.0; big_d * d];
    let mut hess = vec![0.0; big_d * d * d];
    let mut trial = vec![0.0; d];
    let mut phi = sq_dist_to(model, x, &r, &mut buf);
    for _ in 0..opts.max_steps {
        model.eval_second_order(&r, &mut value, &mut jac, &mut hess);
        // grad = -2 J^T res; half-Hessian = J^T J - sum_l res_l H_l
        let mut jtr = [0.0; 3];
        let mut gn = [0.0; 9];
        let mut newton = [0.0; 9];
        for l in 0..big_d {
            let res = x[l] - value[l];
            for a in 0..d {
                jtr[a] += jac[l * d + a] * res;
                for b in 0..d {
                    let jj = jac[l * d + a] * jac[l * d + b];
                    gn[a * 3 + b] += jj;
                    newton[a * 3 + b] += jj - res * hess[(l * d + a) * d + b];
                }
            }
        }
        let gnorm = 2.0 * jtr[..d].iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm < opts.grad_tol {
            break;
        }
        let pack = |m: &[f64; 9]| {
            let mut h = [0.0; 9];
            let tr: f64 = (0..d).map(|k| m[k * 3 + k]).sum();
            for a in 0..d {
                for b in 0..d {
                    h[a * d + b] = m[a * 3 + b];
                }
                h[a * d + a] += 1e-12 * tr.abs().max(1e-300);
            }
            h
        };
        let mut dir = spd_solve(&pack(&newton), &jtr, d)
            .or_else(|| spd_solve(&pack(&gn), &jtr, d))
            .unwrap_or(jtr);
        // directional derivative of phi along dir is -2 jtr . dir
        let mut slope = -2.0 * (0..d).map(|k| dir[k] * jtr[k]).sum::<f64>();
        if !(slope < 0.0) {
            dir = jtr;
            slope = -2.0 * jtr[..d].iter().map(|g| g * g).sum::<f64>();
        }
        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-14 {
            for k in 0..d {
                trial[k] = r[k] + step * dir[k];
            }
            let cand = sq_dist_to(model, x, &trial, &mut buf);
            if cand <= phi + 1e-4 * step * slope {
                accepted = Some(cand);
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some(cand) => {
                let improvement = phi - cand;
                let moved = step * dir[..d].iter().map(|v| v * v).sum::<f64>().sqrt();
                let scale = 1.0 + r.iter().map(|v| v * v).sum::<f64>().sqrt();
                r.copy_from_slice(&trial);
                phi = cand;
                // stop once steps and gains fall to rounding level
                if phi == 0.0 || improvement <= 1e-13 * phi || moved <= 1e-11 * scale {
                    break;
                }
            }
            None => break,
        }
    }
    Projection {
        param: r,
        objective: phi,
    }
}

/// Multi-start projector onto one spline manifold. The images of the seeds
/// are computed once, so ranking the seeds for a point costs `O(N D)`.
pub struct Projector<'a> {
    model: &'a SplineModel,
    seeds: Vec<Point>,
    images: Vec<f64>,
    opts: ProjectOptions,
}

impl<'a> Projector<'a> {
    /// An empty `seeds` slice uses the model's knots.
    pub fn new(model: &'a SplineModel, seeds: &[Point], opts: &ProjectOptions) -> Self {
        let seeds = if seeds.is_empty() {
            matrix_to_points(model.knots())
        } else {
            seeds.to_vec()
        };
        let big_d = model.ambient_dim();
        let mut images = vec![0.0; seeds.len() * big_d];
        for (s, img) in seeds.iter().zip(images.chunks_mut(big_d)) {
            model.eval_into(s, img);
        }
        Self {
            model,
            seeds,
            images,
            opts: *opts,
        }
    }

    pub fn model(&self) -> &SplineModel {
        self.model
    }

    /// The returned objective is never larger than the best seed's objective.
    pub fn project(&self, x: &[f64]) -> Projection {
        let big_d = self.model.ambient_dim();
        let mut scored: Vec<(f64, usize)> = self
            .images
            .chunks(big_d)
            .enumerate()
            .map(|(i, img)| {
                (
                    x.iter()
                        .zip(img)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>(),
                    i,
                )
            })
            .collect();
        let starts = self
            .opts
            .max_starts
            .unwrap_or(usize::MAX)
            .max(1)
            .min(scored.len());
        if starts < scored.len() {
            scored
                .select_nth_unstable_by(starts - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            scored.truncate(starts);
        }
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let (obj0, i0) = scored[0];
        let mut best = Projection {
            param: self.seeds[i0].clone(),
            objective: obj0,
        };
        for &(_, i) in &scored {
            let cand = descend(self.model, x, &self.seeds[i], &self.opts);
            if cand.objective < best.objective {
                best = cand;
            }
        }
        best
    }

    /// Mean squared distance from `points` to the manifold.
    pub fn msd(&self, points: &[Point]) -> f64 {
        if points.is_empty() {
            return 0.0;
        }
        points
            .iter()
            .map(|x| self.project(x).objective)
            .sum::<f64>()
            / points.len() as f64
    }
}

/// Multi-start projection of `x` onto the manifold of `model`.
///
/// The returned objective is never larger than the best seed's objective.
/// An empty `seeds` slice uses the model's knots.
pub fn project(
    model: &SplineModel,
    x: &[f64],
    seeds: &[Point],
    opts: &ProjectOptions,
) -> Projection {
    Projector::new(model, seeds, opts).project(x)
}

/// Mean squared distance from `points` to the manifold of `model`.
pub fn msd(model: &SplineModel, points: &[Point], seeds: &[Point], opts: &ProjectOptions) -> f64 {
    Projector::new(model, seeds, opts).msd(points)
}

/// Objective values below this share of the center spread count as zero
/// in the convergence test.
const CONVERGENCE_FLOOR: f64 = 1e-8;

/// `sum_j w_j |mu_j - mean|^2` with the weighted mean.
fn weighted_spread(centers: &[Point], weights: &[f64]) -> f64 {
    let big_d = centers.first().map_or(0, Vec::len);
    let total: f64 = weights.iter().sum();
    let mean: Vec<f64> = (0..big_d)
        .map(|l| {
            centers
                .iter()
                .zip(weights)
                .map(|(c, w)| w * c[l])
                .sum::<f64>()
                / total
        })
        .collect();
    centers
        .iter()
        .zip(weights)
        .map(|(c, w)| {
            w * c
                .iter()
                .zip(&mean)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .sum()
}

struct LambdaFit {
    model: SplineModel,
    params: Vec<Point>,
    trace: LambdaTrace,
}

fn fit_one_lambda(
    centers: &[Point],
    weights: &[f64],
    init_params: &[Point],
    data: &[Point],
    lambda: f64,
    settings: &PmeSettings,
) -> Result<LambdaFit> {
    let mut params = init_params.to_vec();
    let mut objective = Vec::new();
    let mut prev_fit: Option<f64> = None;
    // Near-interpolating fits drive the objective to rounding noise, where a
    // purely relative test never passes; measure it against the spread of
    // the centers instead.
    let floor = CONVERGENCE_FLOOR * weighted_spread(centers, weights).max(f64::MIN_POSITIVE);
    let mut iterations = 0;
    let mut converged = false;
    let (model, projected) = loop {
        let model = solve_penalized_spline(&params, centers, weights, lambda)?;
        let projector = Projector::new(&model, &[], &settings.project);
        let proj: Vec<Projection> = centers.iter().map(|mu| projector.project(mu)).collect();
        let fit: f64 = proj.iter().zip(weights).map(|(p, w)| w * p.objective).sum();
        let obj = fit + lambda * model.roughness();
        iterations += 1;
        if let Some(prev) = prev_fit {
            if (prev - fit).abs() <= settings.eps * f64::max(prev, floor) {
                converged = true;
            }
        }
        prev_fit = Some(fit);
        objective.push(obj);
        let next: Vec<Point> = proj.into_iter().map(|p| p.param).collect();
        if converged || iterations >= settings.max_iter.max(1) {
            break (model, next);
        }
        params = next;
    };
    let tau = Projector::new(&model, &[], &settings.project).msd(data);
    Ok(LambdaFit {
        model,
        params: projected,
        trace: LambdaTrace {
            lambda,
            tau,
            iterations,
            converged,
            objective,
        },
    })
}

/// Principal manifold fit of weighted centers, tuned over `settings.lambda_grid`
/// by the mean squared distance of `data` to each candidate manifold.
pub fn fit_pme(
    centers: &[Point],
    weights: &[f64],
    init_params: &[Point],
    data: &[Point],
    settings: &PmeSettings,
) -> Result<PmeFit> {
    if centers.len() != weights.len() || centers.len() != init_params.len() {
        return Err(Error::invalid(format!(
            "{} centers, {} weights, {} init params",
            centers.len(),
            weights.len(),
            init_params.len()
        )));
    }
    if settings.lambda_grid.is_empty() {
        return Err(Error::invalid("empty lambda grid"));
    }
    if data.is_empty() {
        return Err(Error::invalid("empty data cloud"));
    }
    let results: Vec<Result<LambdaFit>> = settings
        .lambda_grid
        .par_iter()
        .map(|&lambda| fit_one_lambda(centers, weights, init_params, data, lambda, settings))
        .collect();
    let mut best: Option<LambdaFit> = None;
    let mut traces = Vec::new();
    let mut first_err = None;
    for res in results {
        match res {
            Ok(fit) => {
                traces.push(fit.trace.clone());
                let better = match &best {
                    None => true,
                    Some(b) => {
                        fit.trace.tau < b.trace.tau
                            || (fit.trace.tau == b.trace.tau && fit.trace.lambda < b.trace.lambda)
                    }
                };
                if better {
                    best = Some(fit);
                }
            }
            Err(e) => {
                log::warn!("pme fit failed for one lambda: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    let best = match best {
        Some(b) => b,
        None => return Err(first_err.expect("non-empty grid")),
    };
    Ok(PmeFit {
        lambda_star: best.trace.lambda,
        tau: best.trace.tau,
        iterations: best.trace.iterations,
        converged: best.trace.converged,
        model: best.model,
        params: best.params,
        per_lambda: traces,
    })
}
