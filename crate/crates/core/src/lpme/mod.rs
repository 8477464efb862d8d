//! The longitudinal pipeline.
//!
//! 1. Reduce every time point to weighted mixture centers.
//! 2. Parameterize the first time point (Isomap, then a principal manifold
//!    fit) and project the centers of every later time onto that manifold.
//! 3. Fit a principal manifold at every time point from those parameters.
//! 4. Re-express every fit on one shared knot grid ("comparable
//!    coefficients") so all time points live in the same coefficient space.
//! 5. Smooth the coefficient vectors over time with a weighted cubic spline,
//!    with the smoothing value chosen by leave-one-time-out cross
//!    validation of the data mean squared distance.

pub mod temporal;
pub mod volume;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{LongitudinalCloud, Point};
use crate::error::{Error, Result};
use crate::isomap::isomap_embed;
use crate::pme::{
    fit_pme, msd, points_to_matrix, solve_penalized_spline, PmeFit, PmeSettings, ProjectOptions,
    Projector,
};
use crate::reduce::{reduce_longitudinal, ReduceSettings, ReducedCloud};
use crate::spline::SplineModel;

pub use temporal::{normalized_inverse_weights, temporal_smooth, TemporalSpline};
pub use volume::{estimate_volume, estimate_volume_spherical, lattice_volume, VolumeOptions};

/// `exp(g)` for `g = -10..=10`.
pub fn default_gamma_grid() -> Vec<f64> {
    (-10..=10).map(|g| (g as f64).exp()).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LpmeSettings {
    pub reduce: ReduceSettings,
    pub pme: PmeSettings,
    /// Isomap neighbor count; `None` uses the size-based default.
    pub isomap_neighbors: Option<usize>,
    pub gamma_grid: Vec<f64>,
    /// Fixed temporal smoothing value. Skips cross validation.
    pub gamma: Option<f64>,
    pub seed: u64,
}

impl Default for LpmeSettings {
    fn default() -> Self {
        Self {
            reduce: ReduceSettings::default(),
            pme: PmeSettings::default(),
            isomap_neighbors: None,
            gamma_grid: default_gamma_grid(),
            gamma: None,
            seed: 0,
        }
    }
}

/// Initial per-time center parameters.
#[derive(Debug, Clone)]
pub struct Initialization {
    /// The fit of the first time point that every later time is projected on.
    pub reference: PmeFit,
    /// `params[t][j]` is the parameter of center `j` at time `t`.
    pub params: Vec<Vec<Point>>,
}

/// Fit the first time point from an Isomap start and project every later
/// time point's centers on it.
pub fn initialize_longitudinal(
    reduced: &ReducedCloud,
    data: &LongitudinalCloud,
    pme: &PmeSettings,
    isomap_neighbors: Option<usize>,
) -> Result<Initialization> {
    if reduced.per_time.len() < 2 || data.n_times() < 2 {
        return Err(Error::TooFewTimePoints);
    }
    if reduced.per_time.len() != data.n_times() {
        return Err(Error::invalid(
            "reduction and data disagree on the number of time points",
        ));
    }
    let d = data.intrinsic_dim();
    let first = &reduced.per_time[0];
    let iso = isomap_embed(&first.centers, d, isomap_neighbors)?;
    let reference = fit_pme(&first.centers, &first.weights, &iso, data.cloud(0), pme)?;
    let projector = Projector::new(&reference.model, &[], &pme.project);
    let mut params = vec![reference.params.clone()];
    for red in &reduced.per_time[1..] {
        let p: Vec<Point> = red
            .centers
            .par_iter()
            .map(|mu| projector.project(mu).param)
            .collect();
        params.push(p);
    }
    Ok(Initialization { reference, params })
}

/// Shared knots and per-time coefficient vectors.
#[derive(Debug, Clone)]
pub struct ComparableCoefficients {
    pub grid: Vec<Point>,
    /// Flattened `[s; alpha]` per time, see [`SplineModel::flatten_coefficients`].
    pub coefficients: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

/// Regular lattice spanning `[min, max]` of every dimension of `params`,
/// with `m^d >= n_target` points for the smallest such `m` (exactly
/// `n_target` points when `d = 1`).
pub fn knot_grid(params: &[Point], d: usize, n_target: usize) -> Result<(Vec<Point>, Vec<String>)> {
    if params.is_empty() || n_target < d + 2 {
        return Err(Error::invalid(format!(
            "grid needs parameters and at least d+2 = {} knots",
            d + 2
        )));
    }
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for p in params {
        for k in 0..d {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let ranges: Vec<f64> = (0..d).map(|k| hi[k] - lo[k]).collect();
    let mut warnings = Vec::new();
    for k in 0..d {
        if ranges[k] > 0.0 {
            continue;
        }
        let other = (0..d)
            .filter(|&j| j != k)
            .map(|j| ranges[j])
            .fold(0.0, f64::max);
        let pad = if other > 0.0 {
            1e-3 * other
        } else {
            1e-3 * lo[k].abs().max(1.0)
        };
        lo[k] -= pad / 2.0;
        hi[k] += pad / 2.0;
        let msg = format!(
            "zero parameter range in dimension {}; padded by {pad:.3e}",
            k + 1
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let mut m = 1usize;
    while m.pow(d as u32) < n_target {
        m += 1;
    }
    let axis = |k: usize, i: usize| lo[k] + (hi[k] - lo[k]) * i as f64 / (m - 1) as f64;
    let total = m.pow(d as u32);
    let grid = (0..total)
        .map(|mut idx| {
            let mut p = vec![0.0; d];
            for k in (0..d).rev() {
                p[k] = axis(k, idx % m);
                idx /= m;
            }
            p
        })
        .collect();
    Ok((grid, warnings))
}

/// Re-fit every per-time model on a shared knot grid, with unit weights and
/// each time point's own smoothing value.
pub fn comparable_coefficients(fits: &[PmeFit]) -> Result<ComparableCoefficients> {
    let first = fits.first().ok_or_else(|| Error::invalid("no fits"))?;
    let d = first.model.intrinsic_dim();
    let big_d = first.model.ambient_dim();
    if fits
        .iter()
        .any(|f| f.model.intrinsic_dim() != d || f.model.ambient_dim() != big_d)
    {
        return Err(Error::invalid("fits disagree on dimensions"));
    }
    let all_params: Vec<Point> = fits.iter().flat_map(|f| f.params.iter().cloned()).collect();
    let n_target = fits.iter().map(|f| f.params.len()).max().unwrap_or(0);
    let (grid, warnings) = knot_grid(&all_params, d, n_target)?;
    let unit = vec![1.0; grid.len()];
    let coefficients = fits
        .par_iter()
        .map(|f| {
            let targets: Vec<Point> = grid
                .iter()
                .map(|r| f.model.eval(r).as_slice().to_vec())
                .collect();
            solve_penalized_spline(&grid, &targets, &unit, f.lambda_star)
                .map(|m| m.flatten_coefficients())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ComparableCoefficients {
        grid,
        coefficients,
        warnings,
    })
}

/// Cross-validated score of one smoothing value.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaScore {
    pub gamma: f64,
    /// Mean of the held-out per-time scores; `None` if a refit failed.
    pub msd: Option<f64>,
    pub per_time: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LoocvResult {
    pub gamma_star: f64,
    pub table: Vec<GammaScore>,
}

/// Everything the held-out refits need besides the smoothing value.
#[derive(Debug, Clone, Copy)]
pub struct LoocvInputs<'a> {
    pub grid: &'a [Point],
    pub coefficients: &'a [Vec<f64>],
    pub times: &'a [f64],
    pub tau: &'a [f64],
    pub data: &'a LongitudinalCloud,
    pub project: &'a ProjectOptions,
}

/// Held-out data MSD at every time for one smoothing value.
pub fn loocv_scores(inputs: &LoocvInputs<'_>, gamma: f64) -> Result<Vec<f64>> {
    let n = inputs.times.len();
    let knots = points_to_matrix(inputs.grid);
    let big_d = inputs.data.ambient_dim();
    (0..n)
        .map(|held| {
            let keep: Vec<usize> = (0..n).filter(|&i| i != held).collect();
            let b: Vec<Vec<f64>> = keep
                .iter()
                .map(|&i| inputs.coefficients[i].clone())
                .collect();
            let times: Vec<f64> = keep.iter().map(|&i| inputs.times[i]).collect();
            let tau: Vec<f64> = keep.iter().map(|&i| inputs.tau[i]).collect();
            let g = temporal_smooth(&b, &times, &tau, gamma)?;
            let model = SplineModel::from_flat(knots.clone(), big_d, &g.eval(inputs.times[held]))?;
            Ok(msd(
                &model,
                inputs.data.cloud(held),
                inputs.grid,
                inputs.project,
            ))
        })
        .collect()
}

/// Leave-one-time-out selection of the temporal smoothing value. Ties go to
/// the smallest value.
pub fn loocv_tune(inputs: &LoocvInputs<'_>, gamma_grid: &[f64]) -> Result<LoocvResult> {
    if inputs.times.len() < 4 {
        return Err(Error::FixedGammaRequired(format!(
            "cross validation needs at least 4 time points, got {}",
            inputs.times.len()
        )));
    }
    if gamma_grid.is_empty() {
        return Err(Error::invalid("empty gamma grid"));
    }
    let table: Vec<GammaScore> = gamma_grid
        .par_iter()
        .map(|&gamma| match loocv_scores(inputs, gamma) {
            Ok(per_time) => GammaScore {
                gamma,
                msd: Some(per_time.iter().sum::<f64>() / per_time.len() as f64),
                per_time,
            },
            Err(e) => {
                log::warn!("gamma {gamma:e} excluded: held-out refit failed: {e}");
                GammaScore {
                    gamma,
                    msd: None,
                    per_time: Vec::new(),
                }
            }
        })
        .collect();
    let gamma_star = table
        .iter()
        .filter_map(|s| s.msd.map(|m| (m, s.gamma)))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)))
        .map(|(_, g)| g)
        .ok_or_else(|| Error::Singular("every gamma failed its held-out refits".into()))?;
    Ok(LoocvResult { gamma_star, table })
}

/// A fitted spacetime embedding `F(t, r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LongitudinalModel {
    pub intrinsic_dim: usize,
    pub ambient_dim: usize,
    pub grid: Vec<Point>,
    pub times: Vec<f64>,
    /// Comparable coefficient vectors `b_t`.
    pub coefficients: Vec<Vec<f64>>,
    pub tau: Vec<f64>,
    pub weights: Vec<f64>,
    pub lambda_star: Vec<f64>,
    pub gamma_star: f64,
    pub temporal: TemporalSpline,
    /// Cross-validation table; empty when the smoothing value was fixed.
    pub msd_table: Vec<GammaScore>,
}

/// One evaluation of `F(t, r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub point: Vec<f64>,
    /// `t` lies outside the observed time span.
    pub extrapolated: bool,
}

impl LongitudinalModel {
    pub fn grid_matrix(&self) -> DMatrix<f64> {
        points_to_matrix(&self.grid)
    }

    /// The spline whose coefficients are `g(t)`.
    pub fn model_at(&self, t: f64) -> SplineModel {
        SplineModel::from_flat(self.grid_matrix(), self.ambient_dim, &self.temporal.eval(t))
            .expect("temporal spline matches the grid layout")
    }

    /// The comparable-coefficient model of observed time index `i`.
    pub fn observed_model(&self, i: usize) -> SplineModel {
        SplineModel::from_flat(self.grid_matrix(), self.ambient_dim, &self.coefficients[i])
            .expect("coefficients match the grid layout")
    }

    pub fn embed(&self, t: f64, r: &[f64]) -> Embedding {
        Embedding {
            point: self.model_at(t).eval(r).as_slice().to_vec(),
            extrapolated: self.temporal.extrapolates(t),
        }
    }

    /// Data MSD of `points` to the manifold at time `t`, projecting from the
    /// grid knots.
    pub fn msd_at(&self, t: f64, points: &[Point], opts: &ProjectOptions) -> f64 {
        msd(&self.model_at(t), points, &self.grid, opts)
    }

    /// Structural checks used after deserialization.
    pub fn validate(&self) -> Result<()> {
        let n = self.times.len();
        let m = (self.grid.len() + self.intrinsic_dim + 1) * self.ambient_dim;
        let ok = n >= 2
            && self.coefficients.len() == n
            && self.coefficients.iter().all(|c| c.len() == m)
            && self.tau.len() == n
            && self.weights.len() == n
            && self.lambda_star.len() == n
            && self.grid.iter().all(|g| g.len() == self.intrinsic_dim)
            && self.temporal.times == self.times
            && self.temporal.delta.shape() == (n, m)
            && self.temporal.nu.shape() == (2, m);
        if !ok {
            return Err(Error::invalid("inconsistent longitudinal model layout"));
        }
        Ok(())
    }
}

/// Intermediate products of [`fit_lpme_detailed`].
#[derive(Debug, Clone)]
pub struct LpmeRun {
    pub model: LongitudinalModel,
    pub reduced: ReducedCloud,
    pub init: Initialization,
    /// Independent per-time principal manifold fits.
    pub per_time: Vec<PmeFit>,
    pub warnings: Vec<String>,
}

pub fn fit_lpme(data: &LongitudinalCloud, settings: &LpmeSettings) -> Result<LongitudinalModel> {
    fit_lpme_detailed(data, settings).map(|r| r.model)
}

pub fn fit_lpme_detailed(data: &LongitudinalCloud, settings: &LpmeSettings) -> Result<LpmeRun> {
    let n_times = data.n_times();
    if n_times < 2 {
        return Err(Error::TooFewTimePoints);
    }
    if settings.gamma.is_none() && n_times < 4 {
        return Err(Error::FixedGammaRequired(format!(
            "{n_times} time points are too few to tune gamma by cross validation; \
             supply a fixed gamma (fixed-gamma mode)"
        )));
    }
    let reduced =
        reduce_longitudinal(data, &settings.reduce, settings.seed).map_err(Error::at("reduce"))?;
    let init = initialize_longitudinal(&reduced, data, &settings.pme, settings.isomap_neighbors)
        .map_err(Error::at("initialize"))?;
    // The reference fit already is the first time point's fit.
    let mut per_time = vec![init.reference.clone()];
    per_time.extend(
        reduced.per_time[1..]
            .par_iter()
            .zip(init.params[1..].par_iter())
            .enumerate()
            .map(|(t, (red, params))| {
                fit_pme(
                    &red.centers,
                    &red.weights,
                    params,
                    data.cloud(t + 1),
                    &settings.pme,
                )
            })
            .collect::<Result<Vec<_>>>()
            .map_err(Error::at("per-time fit"))?,
    );
    let comparable =
        comparable_coefficients(&per_time).map_err(Error::at("comparable coefficients"))?;
    let tau: Vec<f64> = per_time.iter().map(|f| f.tau).collect();
    let (gamma_star, msd_table) = match settings.gamma {
        Some(g) => (g, Vec::new()),
        None => {
            let inputs = LoocvInputs {
                grid: &comparable.grid,
                coefficients: &comparable.coefficients,
                times: data.times(),
                tau: &tau,
                data,
                project: &settings.pme.project,
            };
            let res =
                loocv_tune(&inputs, &settings.gamma_grid).map_err(Error::at("gamma tuning"))?;
            (res.gamma_star, res.table)
        }
    };
    let temporal = temporal_smooth(&comparable.coefficients, data.times(), &tau, gamma_star)
        .map_err(Error::at("temporal smoothing"))?;
    let model = LongitudinalModel {
        intrinsic_dim: data.intrinsic_dim(),
        ambient_dim: data.ambient_dim(),
        grid: comparable.grid,
        times: data.times().to_vec(),
        coefficients: comparable.coefficients,
        weights: temporal.weights.clone(),
        tau,
        lambda_star: per_time.iter().map(|f| f.lambda_star).collect(),
        gamma_star,
        temporal,
        msd_table,
    };
    Ok(LpmeRun {
        model,
        reduced,
        init,
        per_time,
        warnings: comparable.warnings,
    })
}
