//! Angular coordinate lifts for closed manifolds.
//!
//! A closed curve in the plane (or a closed surface in space) self-intersects
//! any graph-like parameterization. Appending the angle of every point about
//! a center turns it into an open arc (or sheet) in a higher dimension that a
//! spline can fit; the appended coordinates are dropped again afterwards.
//! Points on either side of the branch cut at angle `pi` end up far apart.

use serde::{Deserialize, Serialize};

use crate::cloud::Point;
use crate::error::{Error, Result};

/// `sin(theta)` below this is treated as a pole, where the azimuth is 0.
pub const POLE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LiftMode {
    /// `D = 2 -> 3`: appends the polar angle.
    Polar,
    /// `D = 3 -> 5`: appends the polar angle `theta` and the azimuth `phi`.
    Spherical,
}

impl LiftMode {
    pub fn base_dim(self) -> usize {
        match self {
            LiftMode::Polar => 2,
            LiftMode::Spherical => 3,
        }
    }

    pub fn added_dims(self) -> usize {
        match self {
            LiftMode::Polar => 1,
            LiftMode::Spherical => 2,
        }
    }
}

impl std::str::FromStr for LiftMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "polar" => Ok(LiftMode::Polar),
            "spherical" => Ok(LiftMode::Spherical),
            other => Err(Error::invalid(format!(
                "unknown lift mode '{other}' (polar|spherical)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiftSpec {
    pub mode: LiftMode,
    /// One positive scale per appended coordinate.
    pub scales: Vec<f64>,
    /// Angular origin; `None` uses the centroid of the lifted cloud.
    #[serde(default)]
    pub center: Option<Point>,
}

impl LiftSpec {
    /// Unit scales about the centroid.
    pub fn new(mode: LiftMode) -> Self {
        Self {
            mode,
            scales: vec![1.0; mode.added_dims()],
            center: None,
        }
    }

    pub fn with_scale(mut self, c: f64) -> Self {
        self.scales = vec![c; self.mode.added_dims()];
        self
    }

    pub fn with_center(mut self, center: Point) -> Self {
        self.center = Some(center);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.scales.len() != self.mode.added_dims() {
            return Err(Error::invalid(format!(
                "{} scales for {} appended coordinates",
                self.scales.len(),
                self.mode.added_dims()
            )));
        }
        if let Some(c) = self.scales.iter().find(|c| !(**c > 0.0) || !c.is_finite()) {
            return Err(Error::invalid(format!(
                "lift scale must be positive, got {c}"
            )));
        }
        if let Some(center) = &self.center {
            if center.len() != self.mode.base_dim() || center.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(
                    "lift center must be finite with matching dimension",
                ));
            }
        }
        Ok(())
    }

    /// The center used for `points`.
    pub fn resolve_center(&self, points: &[Point]) -> Point {
        self.center
            .clone()
            .unwrap_or_else(|| centroid(points, self.mode.base_dim()))
    }
}

fn centroid(points: &[Point], dim: usize) -> Point {
    let mut c = vec![0.0; dim];
    for p in points {
        for (ci, pi) in c.iter_mut().zip(p) {
            *ci += pi;
        }
    }
    let n = points.len().max(1) as f64;
    c.iter_mut().for_each(|v| *v /= n);
    c
}

/// Append scaled angle coordinates to every point.
pub fn lift(points: &[Point], spec: &LiftSpec) -> Result<Vec<Point>> {
    spec.validate()?;
    let dim = spec.mode.base_dim();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::invalid(format!(
            "{:?} lift needs {dim}-dimensional points, got {}",
            spec.mode,
            p.len()
        )));
    }
    let center = spec.resolve_center(points);
    points
        .iter()
        .map(|p| lift_point(p, &center, spec))
        .collect()
}

fn lift_point(p: &[f64], center: &[f64], spec: &LiftSpec) -> Result<Point> {
    let mut out = p.to_vec();
    let x = p[0] - center[0];
    let y = p[1] - center[1];
    match spec.mode {
        LiftMode::Polar => {
            if x == 0.0 && y == 0.0 {
                return Err(Error::UndefinedAngle);
            }
            out.push(spec.scales[0] * y.atan2(x));
        }
        LiftMode::Spherical => {
            let z = p[2] - center[2];
            let rho = (x * x + y * y + z * z).sqrt();
            if rho == 0.0 {
                return Err(Error::UndefinedAngle);
            }
            let theta = (z / rho).clamp(-1.0, 1.0).acos();
            let phi = if theta.sin() < POLE_TOLERANCE {
                0.0
            } else {
                y.atan2(x)
            };
            out.push(spec.scales[0] * theta);
            out.push(spec.scales[1] * phi);
        }
    }
    Ok(out)
}

/// Truncate every point to its first `original_dim` coordinates.
pub fn drop(points: &[Point], original_dim: usize) -> Result<Vec<Point>> {
    if let Some(p) = points.iter().find(|p| p.len() <= original_dim) {
        return Err(Error::invalid(format!(
            "cannot drop to {original_dim} coordinates from a point with {}",
            p.len()
        )));
    }
    Ok(points.iter().map(|p| p[..original_dim].to_vec()).collect())
}
