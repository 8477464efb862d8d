//! Versioned model files: JSON after a `#` comment header, every float a
//! hex string so reloads are bit-exact.

use crate::error::CliError;
use crate::hexfloat::{hex_rows, hex_vec, unhex_rows, unhex_vec, Hex};
use lpme::augment::{lift, LiftMode, LiftSpec};
use lpme::cloud::Point;
use lpme::lpme::{GammaScore, LongitudinalModel, TemporalSpline};
use lpme::pme::{matrix_to_points, points_to_matrix, ProjectOptions, Projector};
use lpme::SplineModel;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const FORMAT_VERSION: u32 = 1;

/// A lift applied before fitting, with its center pinned.
#[derive(Debug, Clone, PartialEq)]
pub struct Lift {
    pub spec: LiftSpec,
    pub original_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeFit {
    pub time: f64,
    pub model: SplineModel,
    pub lambda_star: f64,
    pub tau: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Fitted {
    Lpme(LongitudinalModel),
    /// Independent fits, one per observed time.
    Pme(Vec<TimeFit>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub intrinsic_dim: usize,
    pub ambient_dim: usize,
    pub lift: Option<Lift>,
    /// Projection settings used for every distance computed from this model.
    pub project: ProjectOptions,
    pub fitted: Fitted,
}

impl ModelFile {
    /// Dimension of the clouds this model is evaluated against.
    pub fn input_dim(&self) -> usize {
        self.lift
            .as_ref()
            .map_or(self.ambient_dim, |l| l.original_dim)
    }

    pub fn times(&self) -> Vec<f64> {
        match &self.fitted {
            Fitted::Lpme(m) => m.times.clone(),
            Fitted::Pme(f) => f.iter().map(|x| x.time).collect(),
        }
    }

    /// Map input-space points to the fitted space.
    pub fn prepare(&self, points: &[Point]) -> Result<Vec<Point>, CliError> {
        if let Some(p) = points.iter().find(|p| p.len() != self.input_dim()) {
            return Err(CliError::usage(format!(
                "cloud has {} coordinates, model expects {}",
                p.len(),
                self.input_dim()
            )));
        }
        match &self.lift {
            Some(l) => Ok(lift(points, &l.spec)?),
            None => Ok(points.to_vec()),
        }
    }

    /// Manifold at time `t` and the seeds its projections start from.
    pub fn spline_at(&self, t: f64) -> Result<(SplineModel, Vec<Point>), CliError> {
        match &self.fitted {
            Fitted::Lpme(m) => Ok((m.model_at(t), m.grid.clone())),
            Fitted::Pme(fits) => fits
                .iter()
                .find(|f| f.time == t)
                .map(|f| (f.model.clone(), Vec::new()))
                .ok_or_else(|| CliError::usage(format!("per-time model has no fit at t = {t}"))),
        }
    }

    /// Mean squared distance of fitted-space `points` to the manifold at `t`.
    pub fn msd(&self, t: f64, points: &[Point]) -> Result<f64, CliError> {
        let (spline, seeds) = self.spline_at(t)?;
        Ok(Projector::new(&spline, &seeds, &self.project).msd(points))
    }

    pub fn to_text(&self, header: &str) -> String {
        let rec = self.record();
        format!(
            "{header}{}\n",
            serde_json::to_string_pretty(&rec).expect("model serializes")
        )
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_text(&text).map_err(|m| CliError::usage(format!("{}: {m}", path.display())))
    }

    pub fn from_text(text: &str) -> Result<Self, String> {
        let body: String = text
            .lines()
            .skip_while(|l| l.starts_with('#'))
            .collect::<Vec<_>>()
            .join("\n");
        let rec: Record =
            serde_json::from_str(&body).map_err(|e| format!("malformed model: {e}"))?;
        if rec.format_version != FORMAT_VERSION {
            return Err(format!("unsupported format_version {}", rec.format_version));
        }
        rec.into_model()
    }

    fn record(&self) -> Record {
        let (kind, lpme, pme) = match &self.fitted {
            Fitted::Lpme(m) => ("lpme", Some(LpmeRecord::from_model(m)), None),
            Fitted::Pme(f) => (
                "pme",
                None,
                Some(f.iter().map(TimeFitRecord::from_fit).collect()),
            ),
        };
        Record {
            format_version: FORMAT_VERSION,
            kind: kind.into(),
            intrinsic_dim: self.intrinsic_dim,
            ambient_dim: self.ambient_dim,
            lift: self.lift.as_ref().map(|l| LiftRecord {
                mode: l.spec.mode,
                scales: hex_vec(&l.spec.scales),
                center: hex_vec(l.spec.center.as_deref().unwrap_or(&[])),
                original_dim: l.original_dim,
            }),
            project: ProjectRecord {
                max_steps: self.project.max_steps,
                grad_tol: Hex(self.project.grad_tol),
                max_starts: self.project.max_starts,
            },
            lpme,
            pme,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    format_version: u32,
    kind: String,
    intrinsic_dim: usize,
    ambient_dim: usize,
    lift: Option<LiftRecord>,
    project: ProjectRecord,
    lpme: Option<LpmeRecord>,
    pme: Option<Vec<TimeFitRecord>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LiftRecord {
    mode: LiftMode,
    scales: Vec<Hex>,
    center: Vec<Hex>,
    original_dim: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProjectRecord {
    max_steps: usize,
    grad_tol: Hex,
    max_starts: Option<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GammaRecord {
    gamma: Hex,
    msd: Option<Hex>,
    per_time: Vec<Hex>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LpmeRecord {
    times: Vec<Hex>,
    grid: Vec<Vec<Hex>>,
    coefficients: Vec<Vec<Hex>>,
    tau: Vec<Hex>,
    weights: Vec<Hex>,
    lambda_star: Vec<Hex>,
    gamma_star: Hex,
    /// Temporal spline: `delta` is `T x M`, `nu` is `2 x M`.
    delta: Vec<Vec<Hex>>,
    nu: Vec<Vec<Hex>>,
    cv_table: Vec<GammaRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TimeFitRecord {
    time: Hex,
    knots: Vec<Vec<Hex>>,
    kernel: Vec<Vec<Hex>>,
    poly: Vec<Vec<Hex>>,
    lambda_star: Hex,
    tau: Hex,
    iterations: usize,
    converged: bool,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<Hex>> {
    hex_rows(&matrix_to_points(m))
}

fn matrix_of(rows: &[Vec<Hex>], ncols: usize, what: &str) -> Result<DMatrix<f64>, String> {
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(format!("{what}: ragged rows"));
    }
    if rows.is_empty() {
        return Ok(DMatrix::zeros(0, ncols));
    }
    Ok(points_to_matrix(&unhex_rows(rows)))
}

impl LpmeRecord {
    fn from_model(m: &LongitudinalModel) -> Self {
        Self {
            times: hex_vec(&m.times),
            grid: hex_rows(&m.grid),
            coefficients: hex_rows(&m.coefficients),
            tau: hex_vec(&m.tau),
            weights: hex_vec(&m.weights),
            lambda_star: hex_vec(&m.lambda_star),
            gamma_star: Hex(m.gamma_star),
            delta: rows_of(&m.temporal.delta),
            nu: rows_of(&m.temporal.nu),
            cv_table: m
                .msd_table
                .iter()
                .map(|g| GammaRecord {
                    gamma: Hex(g.gamma),
                    msd: g.msd.map(Hex),
                    per_time: hex_vec(&g.per_time),
                })
                .collect(),
        }
    }
}

impl TimeFitRecord {
    fn from_fit(f: &TimeFit) -> Self {
        Self {
            time: Hex(f.time),
            knots: rows_of(f.model.knots()),
            kernel: rows_of(f.model.kernel_coefficients()),
            poly: rows_of(f.model.poly_coefficients()),
            lambda_star: Hex(f.lambda_star),
            tau: Hex(f.tau),
            iterations: f.iterations,
            converged: f.converged,
        }
    }
}

impl Record {
    fn into_model(self) -> Result<ModelFile, String> {
        let (d, big_d) = (self.intrinsic_dim, self.ambient_dim);
        let fitted = match (self.kind.as_str(), self.lpme, self.pme) {
            ("lpme", Some(r), None) => {
                let times = unhex_vec(&r.times);
                let m_len = r.coefficients.first().map_or(0, Vec::len);
                let weights = unhex_vec(&r.weights);
                let model = LongitudinalModel {
                    intrinsic_dim: d,
                    ambient_dim: big_d,
                    grid: unhex_rows(&r.grid),
                    coefficients: unhex_rows(&r.coefficients),
                    tau: unhex_vec(&r.tau),
                    lambda_star: unhex_vec(&r.lambda_star),
                    gamma_star: r.gamma_star.0,
                    temporal: TemporalSpline {
                        times: times.clone(),
                        delta: matrix_of(&r.delta, m_len, "delta")?,
                        nu: matrix_of(&r.nu, m_len, "nu")?,
                        gamma: r.gamma_star.0,
                        weights: weights.clone(),
                    },
                    msd_table: r
                        .cv_table
                        .iter()
                        .map(|g| GammaScore {
                            gamma: g.gamma.0,
                            msd: g.msd.map(|h| h.0),
                            per_time: unhex_vec(&g.per_time),
                        })
                        .collect(),
                    times,
                    weights,
                };
                model.validate().map_err(|e| e.to_string())?;
                Fitted::Lpme(model)
            }
            ("pme", None, Some(fits)) => Fitted::Pme(
                fits.iter()
                    .map(|f| {
                        let model = SplineModel::new(
                            matrix_of(&f.knots, d, "knots")?,
                            matrix_of(&f.kernel, big_d, "kernel")?,
                            matrix_of(&f.poly, big_d, "poly")?,
                        )
                        .map_err(|e| e.to_string())?;
                        Ok(TimeFit {
                            time: f.time.0,
                            model,
                            lambda_star: f.lambda_star.0,
                            tau: f.tau.0,
                            iterations: f.iterations,
                            converged: f.converged,
                        })
                    })
                    .collect::<Result<Vec<_>, String>>()?,
            ),
            (k, _, _) => return Err(format!("model kind '{k}' does not match its payload")),
        };
        let lift = self.lift.map(|l| Lift {
            spec: LiftSpec {
                mode: l.mode,
                scales: unhex_vec(&l.scales),
                center: Some(unhex_vec(&l.center)),
            },
            original_dim: l.original_dim,
        });
        if let Some(l) = &lift {
            if l.original_dim != l.spec.mode.base_dim()
                || big_d != l.original_dim + l.spec.mode.added_dims()
            {
                return Err("lift does not match the model dimensions".into());
            }
        }
        Ok(ModelFile {
            intrinsic_dim: d,
            ambient_dim: big_d,
            lift,
            project: ProjectOptions {
                max_steps: self.project.max_steps,
                grad_tol: self.project.grad_tol.0,
                max_starts: self.project.max_starts,
            },
            fitted,
        })
    }
}
