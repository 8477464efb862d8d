//! Enclosed volume of a closed fitted surface by voxel counting.
//!
//! The surface is sampled on a regular parameter lattice and triangulated
//! (two triangles per lattice cell). Voxel centers are then classified as
//! interior by crossing-parity ray casting along each of the three axes; the
//! majority of the three votes decides. A surface with gaps makes the axis
//! votes disagree, and too much disagreement is reported as an error rather
//! than a volume.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::LongitudinalModel;
use crate::error::{Error, Result};
use crate::pme::{ProjectOptions, Projector};
use crate::SplineModel;

/// Share of candidate voxels whose axis votes may disagree.
pub const MAX_DISAGREEMENT: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VolumeOptions {
    /// Voxel edge length.
    pub voxel: f64,
    /// Parameter lattice points per dimension.
    pub resolution: usize,
}

impl Default for VolumeOptions {
    fn default() -> Self {
        Self {
            voxel: 0.05,
            resolution: 100,
        }
    }
}

type P3 = [f64; 3];

/// Volume enclosed by the triangulated lattice `rows[i][j]`.
///
/// The lattice must be rectangular with at least 2 rows and columns.
pub fn lattice_volume(rows: &[Vec<P3>], voxel: f64) -> Result<f64> {
    if !(voxel > 0.0) || !voxel.is_finite() {
        return Err(Error::invalid(format!(
            "voxel edge must be positive, got {voxel}"
        )));
    }
    let nr = rows.len();
    let nc = rows.first().map_or(0, Vec::len);
    if nr < 2 || nc < 2 || rows.iter().any(|r| r.len() != nc) {
        return Err(Error::invalid(
            "surface lattice must be rectangular and at least 2x2",
        ));
    }
    if rows.iter().flatten().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite surface sample"));
    }
    let mut tris: Vec<[P3; 3]> = Vec::with_capacity(2 * (nr - 1) * (nc - 1));
    for i in 0..nr - 1 {
        for j in 0..nc - 1 {
            let (a, b, c, d) = (
                rows[i][j],
                rows[i][j + 1],
                rows[i + 1][j + 1],
                rows[i + 1][j],
            );
            tris.push([a, b, c]);
            tris.push([a, c, d]);
        }
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in rows.iter().flatten() {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    // One spare voxel on every side.
    let dims: [usize; 3] = std::array::from_fn(|k| ((hi[k] - lo[k]) / voxel).ceil() as usize + 2);
    let origin: P3 = std::array::from_fn(|k| lo[k] - voxel);
    let total = dims[0] * dims[1] * dims[2];
    if total > 400_000_000 {
        return Err(Error::invalid(format!(
            "{total} voxels; increase the voxel size"
        )));
    }
    let mut votes = vec![0u8; total];
    for axis in 0..3 {
        cast_axis(&tris, axis, origin, voxel, dims, &mut votes);
    }
    let candidates = votes.iter().filter(|&&v| v > 0).count();
    let disagreeing = votes.iter().filter(|&&v| v == 1 || v == 2).count();
    if candidates == 0 || disagreeing as f64 > MAX_DISAGREEMENT * candidates as f64 {
        return Err(Error::NotWatertight {
            disagreeing,
            total: candidates,
        });
    }
    let inside = votes.iter().filter(|&&v| v >= 2).count();
    Ok(inside as f64 * voxel.powi(3))
}

fn cast_axis(
    tris: &[[P3; 3]],
    axis: usize,
    origin: P3,
    voxel: f64,
    dims: [usize; 3],
    votes: &mut [u8],
) {
    let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
    let (nu, nv, na) = (dims[u], dims[v], dims[axis]);
    // Small irrational offsets keep rays off lattice edges and vertices.
    let ju = 0.5 + 1e-3 * std::f64::consts::SQRT_2;
    let jv = 0.5 + 1e-3 * std::f64::consts::PI;
    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); nu * nv];
    for (ti, t) in tris.iter().enumerate() {
        let umin = t.iter().map(|p| p[u]).fold(f64::INFINITY, f64::min);
        let umax = t.iter().map(|p| p[u]).fold(f64::NEG_INFINITY, f64::max);
        let vmin = t.iter().map(|p| p[v]).fold(f64::INFINITY, f64::min);
        let vmax = t.iter().map(|p| p[v]).fold(f64::NEG_INFINITY, f64::max);
        let i0 = (((umin - origin[u]) / voxel) - ju).ceil().max(0.0) as usize;
        let i1 = (((umax - origin[u]) / voxel) - ju).floor();
        let k0 = (((vmin - origin[v]) / voxel) - jv).ceil().max(0.0) as usize;
        let k1 = (((vmax - origin[v]) / voxel) - jv).floor();
        if i1 < 0.0 || k1 < 0.0 {
            continue;
        }
        for i in i0..=(i1 as usize).min(nu - 1) {
            for k in k0..=(k1 as usize).min(nv - 1) {
                buckets[i * nv + k].push(ti as u32);
            }
        }
    }
    let index = |a: usize, i: usize, k: usize| {
        let mut c = [0usize; 3];
        c[axis] = a;
        c[u] = i;
        c[v] = k;
        (c[0] * dims[1] + c[1]) * dims[2] + c[2]
    };
    let mut hits = Vec::new();
    for i in 0..nu {
        for k in 0..nv {
            let bucket = &buckets[i * nv + k];
            if bucket.is_empty() {
                continue;
            }
            let pu = origin[u] + (i as f64 + ju) * voxel;
            let pv = origin[v] + (k as f64 + jv) * voxel;
            hits.clear();
            for &ti in bucket {
                if let Some(h) = crossing(&tris[ti as usize], u, v, axis, pu, pv) {
                    hits.push(h);
                }
            }
            if hits.is_empty() {
                continue;
            }
            hits.sort_by(f64::total_cmp);
            let mut next = 0;
            for a in 0..na {
                let center = origin[axis] + (a as f64 + 0.5) * voxel;
                while next < hits.len() && hits[next] < center {
                    next += 1;
                }
                if next % 2 == 1 {
                    votes[index(a, i, k)] += 1;
                }
            }
        }
    }
}

/// Axis coordinate where the ray through `(pu, pv)` crosses triangle `t`.
fn crossing(t: &[P3; 3], u: usize, v: usize, axis: usize, pu: f64, pv: f64) -> Option<f64> {
    let (a, b, c) = (t[0], t[1], t[2]);
    let det = (b[u] - a[u]) * (c[v] - a[v]) - (c[u] - a[u]) * (b[v] - a[v]);
    if det == 0.0 {
        return None;
    }
    let l1 = ((pu - a[u]) * (c[v] - a[v]) - (c[u] - a[u]) * (pv - a[v])) / det;
    let l2 = ((b[u] - a[u]) * (pv - a[v]) - (pu - a[u]) * (b[v] - a[v])) / det;
    let l0 = 1.0 - l1 - l2;
    if l0 < 0.0 || l1 < 0.0 || l2 < 0.0 {
        return None;
    }
    Some(l0 * a[axis] + l1 * b[axis] + l2 * c[axis])
}

fn check_surface(model: &LongitudinalModel, opts: &VolumeOptions) -> Result<()> {
    if model.intrinsic_dim != 2 || model.ambient_dim < 3 {
        return Err(Error::invalid(format!(
            "volume needs a surface in at least 3 dimensions, got d={}, D={}",
            model.intrinsic_dim, model.ambient_dim
        )));
    }
    if opts.resolution < 2 {
        return Err(Error::invalid("parameter resolution must be >= 2"));
    }
    Ok(())
}

/// Volume enclosed by the surface of `model` at time `t`, sampled on a
/// `resolution x resolution` lattice over the bounding box of the knot grid.
/// Only the first three embedding coordinates are used, so surfaces fitted
/// in a lifted space are measured after dropping the angle coordinates.
pub fn estimate_volume(model: &LongitudinalModel, t: f64, opts: &VolumeOptions) -> Result<f64> {
    check_surface(model, opts)?;
    let spline = model.model_at(t);
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for g in &model.grid {
        for k in 0..2 {
            lo[k] = lo[k].min(g[k]);
            hi[k] = hi[k].max(g[k]);
        }
    }
    let res = opts.resolution;
    let at = |k: usize, i: usize| lo[k] + (hi[k] - lo[k]) * i as f64 / (res - 1) as f64;
    let rows: Vec<Vec<P3>> = (0..res)
        .map(|i| {
            (0..res)
                .map(|j| {
                    let x = spline.eval(&[at(0, i), at(1, j)]);
                    [x[0], x[1], x[2]]
                })
                .collect()
        })
        .collect();
    lattice_volume(&rows, opts.voxel)
}

/// Volume of a closed surface fitted after a spherical lift, whose last two
/// embedding coordinates are `scales[0] * polar` and `scales[1] * azimuth`.
///
/// A bounding-box lattice over such a fit overlaps itself along the seam and
/// frays at the poles. Instead the lattice is the preimage of a regular
/// polar x azimuth grid covering the whole sphere of directions: each
/// parameter is the projection of the target angles onto the angle part of
/// the embedding. The pole rows are collapsed to their mean and the seam
/// column is shared, which closes the mesh.
pub fn estimate_volume_spherical(
    model: &LongitudinalModel,
    t: f64,
    opts: &VolumeOptions,
    scales: [f64; 2],
) -> Result<f64> {
    check_surface(model, opts)?;
    if model.ambient_dim < 5 {
        return Err(Error::invalid(
            "a spherically lifted surface has at least 5 coordinates",
        ));
    }
    if scales.iter().any(|c| !(*c > 0.0) || !c.is_finite()) {
        return Err(Error::invalid("lift scales must be positive"));
    }
    let spline = model.model_at(t);
    let a0 = model.ambient_dim - 2;
    let angles = SplineModel::new(
        spline.knots().clone(),
        spline.kernel_coefficients().columns(a0, 2).into_owned(),
        spline.poly_coefficients().columns(a0, 2).into_owned(),
    )?;
    // the angle map is close to linear, so a few nearby starts suffice
    let opts_proj = ProjectOptions {
        max_starts: Some(4),
        ..ProjectOptions::default()
    };
    let projector = Projector::new(&angles, &model.grid, &opts_proj);
    let res = opts.resolution;
    let mut rows: Vec<Vec<P3>> = (0..res)
        .into_par_iter()
        .map(|i| {
            let polar = PI * i as f64 / (res - 1) as f64;
            (0..res)
                .map(|j| {
                    let azimuth = -PI + 2.0 * PI * j as f64 / (res - 1) as f64;
                    let r = projector
                        .project(&[scales[0] * polar, scales[1] * azimuth])
                        .param;
                    let x = spline.eval(&r);
                    [x[0], x[1], x[2]]
                })
                .collect()
        })
        .collect();
    for i in [0, res - 1] {
        let n = res as f64;
        let mean: P3 = std::array::from_fn(|k| rows[i].iter().map(|p| p[k]).sum::<f64>() / n);
        rows[i].iter_mut().for_each(|p| *p = mean);
    }
    for row in &mut rows {
        row[res - 1] = row[0];
    }
    lattice_volume(&rows, opts.voxel)
}
