//! Longitudinal point clouds.

use crate::error::{Error, Result};

/// A point in `R^D` (or a parameter in `R^d`).
pub type Point = Vec<f64>;

/// Point clouds observed at strictly increasing time stamps.
#[derive(Debug, Clone, PartialEq)]
pub struct LongitudinalCloud {
    times: Vec<f64>,
    clouds: Vec<Vec<Point>>,
    intrinsic_dim: usize,
    ambient_dim: usize,
}

impl LongitudinalCloud {
    /// Validating constructor. A single time point is accepted here so that
    /// single-time fits can share the container; the longitudinal pipeline
    /// checks `T >= 2` itself.
    pub fn new(times: Vec<f64>, clouds: Vec<Vec<Point>>, intrinsic_dim: usize) -> Result<Self> {
        if times.is_empty() || times.len() != clouds.len() {
            return Err(Error::invalid(format!(
                "{} time stamps for {} clouds",
                times.len(),
                clouds.len()
            )));
        }
        if let Some(w) = times.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::invalid(format!(
                "time stamps must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("non-finite time stamp"));
        }
        let ambient_dim = clouds
            .iter()
            .flat_map(|c| c.first())
            .map(|p| p.len())
            .next()
            .ok_or_else(|| Error::invalid("empty cloud"))?;
        for (t, cloud) in times.iter().zip(&clouds) {
            if cloud.is_empty() {
                return Err(Error::invalid(format!("no points at time {t}")));
            }
            if let Some(p) = cloud.iter().find(|p| p.len() != ambient_dim) {
                return Err(Error::invalid(format!(
                    "point with {} coordinates at time {t}, expected {ambient_dim}",
                    p.len()
                )));
            }
            if cloud.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("non-finite coordinate at time {t}")));
            }
        }
        if intrinsic_dim == 0 || intrinsic_dim >= ambient_dim {
            return Err(Error::invalid(format!(
                "need 1 <= d < D, got d={intrinsic_dim}, D={ambient_dim}"
            )));
        }
        Ok(Self {
            times,
            clouds,
            intrinsic_dim,
            ambient_dim,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn clouds(&self) -> &[Vec<Point>] {
        &self.clouds
    }

    pub fn cloud(&self, t: usize) -> &[Point] {
        &self.clouds[t]
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.intrinsic_dim
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn n_points(&self) -> usize {
        self.clouds.iter().map(Vec::len).sum()
    }

    /// Apply `f` to every cloud, keeping time stamps.
    pub fn map_clouds<F>(&self, intrinsic_dim: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(&[Point]) -> Result<Vec<Point>>,
    {
        let clouds = self
            .clouds
            .iter()
            .map(|c| f(c))
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.times.clone(), clouds, intrinsic_dim)
    }

    /// Keep only the time indices in `keep`.
    pub fn subset(&self, keep: &[usize]) -> Result<Self> {
        Self::new(
            keep.iter().map(|&i| self.times[i]).collect(),
            keep.iter().map(|&i| self.clouds[i].clone()).collect(),
            self.intrinsic_dim,
        )
    }
}
