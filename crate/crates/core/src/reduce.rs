//! Mixture-center reduction of a raw point cloud.
//!
//! Starting from `N0` components, the cloud is partitioned by Lloyd k-means
//! (seeded from one random point, then farthest points), each cluster becomes
//! an isotropic Gaussian at its mean with a bandwidth shared by all
//! components, and the mixture weights are estimated by EM with the centers
//! held fixed. Components are added one at a time while a one-sided paired
//! z-test on the per-point log-density gains of the larger mixture rejects
//! at level `alpha`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::cloud::Point;
use crate::error::{Error, Result};
use crate::kernel::dist;

const LLOYD_MAX_ITER: usize = 100;
const EM_MAX_ITER: usize = 1000;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReduceSettings {
    /// Minimum number of components; `None` means `10 d`.
    pub n0: Option<usize>,
    /// Level of the sequential z-test.
    pub alpha: f64,
    /// Relative log-likelihood tolerance for the EM weights.
    pub eps: f64,
    /// Component cap; `None` means `10 d + 100`. Always capped at `I - 1`.
    pub max_components: Option<usize>,
}

impl Default for ReduceSettings {
    fn default() -> Self {
        Self {
            n0: None,
            alpha: 0.05,
            eps: 1e-3,
            max_components: None,
        }
    }
}

impl ReduceSettings {
    pub fn n0_for(&self, d: usize) -> usize {
        self.n0.unwrap_or(10 * d)
    }

    pub fn cap_for(&self, d: usize) -> usize {
        self.max_components.unwrap_or(10 * d + 100)
    }
}

/// Weighted centers summarizing one cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct Reduction {
    pub centers: Vec<Point>,
    pub weights: Vec<f64>,
    /// Negative log-likelihood of every accepted mixture size, in order.
    pub nll_path: Vec<(usize, f64)>,
}

impl Reduction {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }
}

/// Per-time reductions of a longitudinal cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedCloud {
    pub times: Vec<f64>,
    pub per_time: Vec<Reduction>,
}

struct Mixture {
    centers: Vec<Point>,
    assignment: Vec<usize>,
    weights: Vec<f64>,
    log_density: Vec<f64>,
}

impl Mixture {
    fn nll(&self) -> f64 {
        -self.log_density.iter().sum::<f64>()
    }
}

fn nearest(centers: &[Point], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d2: f64 = c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
        if d2 < best.1 {
            best = (j, d2);
        }
    }
    best
}

/// Index of the point farthest from its nearest center.
fn farthest_point(points: &[Point], centers: &[Point]) -> usize {
    let mut best = (0, -1.0);
    for (i, p) in points.iter().enumerate() {
        let (_, d2) = nearest(centers, p);
        if d2 > best.1 {
            best = (i, d2);
        }
    }
    best.0
}

fn lloyd(points: &[Point], mut centers: Vec<Point>) -> (Vec<Point>, Vec<usize>) {
    let big_d = points[0].len();
    let k = centers.len();
    let mut assignment = vec![usize::MAX; points.len()];
    for _ in 0..LLOYD_MAX_ITER {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let (j, _) = nearest(&centers, p);
            if assignment[i] != j {
                assignment[i] = j;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; big_d]; k];
        let mut counts = vec![0usize; k];
        for (p, &j) in points.iter().zip(&assignment) {
            counts[j] += 1;
            for (s, v) in sums[j].iter_mut().zip(p) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centers[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        // empty clusters take the point worst served by the others
        for j in 0..k {
            if counts[j] == 0 {
                let i = farthest_point(points, &centers);
                centers[j] = points[i].clone();
                assignment[i] = j;
            }
        }
    }
    (centers, assignment)
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn build_mixture(
    points: &[Point],
    centers: Vec<Point>,
    assignment: Vec<usize>,
    bandwidth_floor: f64,
    eps: f64,
) -> Mixture {
    let n_pts = points.len();
    let k = centers.len();
    let big_d = points[0].len() as f64;
    let sigma = (points
        .iter()
        .zip(&assignment)
        .map(|(p, &j)| dist(p, &centers[j]))
        .sum::<f64>()
        / n_pts as f64)
        .max(bandwidth_floor);
    let norm = -0.5 * big_d * (2.0 * std::f64::consts::PI * sigma * sigma).ln();
    let inv2s2 = 0.5 / (sigma * sigma);
    // component log densities, row-major n_pts x k
    let comp: Vec<f64> = points
        .iter()
        .flat_map(|p| {
            centers.iter().map(move |c| {
                let d2: f64 = c.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum();
                norm - d2 * inv2s2
            })
        })
        .collect();
    let mut weights = vec![1.0 / k as f64; k];
    let mut row = vec![0.0; k];
    let mut log_density = vec![0.0; n_pts];
    let mut prev_ll = f64::NEG_INFINITY;
    for _ in 0..EM_MAX_ITER {
        let log_w: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
        let mut acc = vec![0.0; k];
        let mut ll = 0.0;
        for i in 0..n_pts {
            for j in 0..k {
                row[j] = log_w[j] + comp[i * k + j];
            }
            let lse = log_sum_exp(&row);
            log_density[i] = lse;
            ll += lse;
            for j in 0..k {
                acc[j] += (row[j] - lse).exp();
            }
        }
        let converged = prev_ll.is_finite() && (ll - prev_ll).abs() <= eps * ll.abs();
        prev_ll = ll;
        if converged {
            break;
        }
        let total: f64 = acc.iter().sum();
        weights = acc.iter().map(|a| (a / total).max(1e-300)).collect();
        let renorm: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= renorm);
    }
    Mixture {
        centers,
        assignment,
        weights,
        log_density,
    }
}

/// Reduce one cloud to weighted mixture centers.
pub fn reduce_cloud(
    points: &[Point],
    n0: usize,
    settings: &ReduceSettings,
    seed: u64,
) -> Result<Reduction> {
    let n_pts = points.len();
    if n_pts < 3 || n0 == 0 || n0 + 1 >= n_pts {
        return Err(Error::invalid(format!(
            "need 1 <= N0 < I - 1, got N0 = {n0}, I = {n_pts}"
        )));
    }
    if !(settings.alpha > 0.0 && settings.alpha < 1.0)
        || !(settings.eps > 0.0 && settings.eps < 1.0)
    {
        return Err(Error::invalid("alpha and eps must lie in (0, 1)"));
    }
    let big_d = points[0].len();
    if points.iter().any(|p| p.len() != big_d) {
        return Err(Error::invalid("ragged cloud"));
    }
    let mut lo = points[0].clone();
    let mut hi = points[0].clone();
    for p in points {
        for k in 0..big_d {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let diameter = dist(&lo, &hi);
    if diameter == 0.0 {
        return Err(Error::ZeroVarianceCloud);
    }
    let bandwidth_floor = 1e-6 * diameter;
    let cap = settings
        .max_components
        .unwrap_or(usize::MAX)
        .min(n_pts - 1)
        .max(n0);
    let z_crit = Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(1.0 - settings.alpha);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seeds = vec![points[rng.random_range(0..n_pts)].clone()];
    while seeds.len() < n0 {
        let i = farthest_point(points, &seeds);
        seeds.push(points[i].clone());
    }
    let (centers, assignment) = lloyd(points, seeds);
    let mut current = build_mixture(points, centers, assignment, bandwidth_floor, settings.eps);
    let mut nll_path = vec![(current.centers.len(), current.nll())];

    while current.centers.len() < cap {
        let mut grown = current.centers.clone();
        let worst = points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, dist(p, &current.centers[current.assignment[i]])))
            .fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a })
            .0;
        grown.push(points[worst].clone());
        let (centers, assignment) = lloyd(points, grown);
        let candidate = build_mixture(points, centers, assignment, bandwidth_floor, settings.eps);
        let gains: Vec<f64> = candidate
            .log_density
            .iter()
            .zip(&current.log_density)
            .map(|(a, b)| a - b)
            .collect();
        let mean = gains.iter().sum::<f64>() / n_pts as f64;
        let var = gains.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (n_pts - 1) as f64;
        let reject = if var > 0.0 {
            mean / (var / n_pts as f64).sqrt() > z_crit
        } else {
            mean > 0.0
        };
        if !reject {
            break;
        }
        current = candidate;
        nll_path.push((current.centers.len(), current.nll()));
    }

    Ok(Reduction {
        centers: current.centers,
        weights: current.weights,
        nll_path,
    })
}

/// Reduce every time point of a longitudinal cloud. Time point `t` uses seed
/// `seed + t`.
pub fn reduce_longitudinal(
    cloud: &crate::cloud::LongitudinalCloud,
    settings: &ReduceSettings,
    seed: u64,
) -> Result<ReducedCloud> {
    use rayon::prelude::*;
    let d = cloud.intrinsic_dim();
    let per_time = cloud
        .clouds()
        .par_iter()
        .enumerate()
        .map(|(t, pts)| {
            let n0 = settings.n0_for(d);
            let s = ReduceSettings {
                max_components: Some(settings.cap_for(d)),
                ..settings.clone()
            };
            reduce_cloud(pts, n0, &s, seed.wrapping_add(t as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReducedCloud {
        times: cloud.times().to_vec(),
        per_time,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal as NormalDist};

    fn two_blobs(seed: u64) -> (Vec<Point>, [f64; 2], [f64; 2], f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sd = 0.3;
        let n = NormalDist::new(0.0, sd).unwrap();
        let m1 = [-3.0, 0.0];
        let m2 = [3.0, 1.0];
        let mut pts = Vec::new();
        for i in 0..1000 {
            let m = if i < 500 { m1 } else { m2 };
            pts.push(vec![m[0] + n.sample(&mut rng), m[1] + n.sample(&mut rng)]);
        }
        (pts, m1, m2, sd)
    }

    #[test]
    fn square_corners_with_twins() {
        let mut pts = Vec::new();
        for c in [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]] {
            pts.push(vec![c[0], c[1]]);
            pts.push(vec![c[0] + 1e-9, c[1]]);
        }
        let s = ReduceSettings {
            max_components: Some(4),
            ..Default::default()
        };
        let red = reduce_cloud(&pts, 4, &s, 0).unwrap();
        assert_eq!(red.len(), 4);
        for w in &red.weights {
            assert!((w - 0.25).abs() < 1e-9);
        }
        for c in &red.centers {
            let snapped = [c[0].round(), c[1].round()];
            assert!(dist(c, &snapped) < 1e-8);
        }
    }

    #[test]
    fn two_blobs_recover_means() {
        let (pts, m1, m2, sd) = two_blobs(1);
        // oracle: per-component sample means from the known labels
        let mean = |r: std::ops::Range<usize>| {
            let n = r.len() as f64;
            let mut m = [0.0; 2];
            for i in r {
                m[0] += pts[i][0] / n;
                m[1] += pts[i][1] / n;
            }
            m
        };
        let (s1, s2) = (mean(0..500), mean(500..1000));
        let s = ReduceSettings {
            max_components: Some(2),
            ..Default::default()
        };
        let red = reduce_cloud(&pts, 2, &s, 3).unwrap();
        assert_eq!(red.len(), 2);
        let tol = 3.0 * sd / 500f64.sqrt();
        for (truth, sample) in [(m1, s1), (m2, s2)] {
            let j = (0..2)
                .min_by(|&a, &b| {
                    dist(&red.centers[a], &truth).total_cmp(&dist(&red.centers[b], &truth))
                })
                .unwrap();
            assert!(dist(&red.centers[j], &truth) < tol);
            assert!(dist(&red.centers[j], &sample) < 1e-9);
            assert!((red.weights[j] - 0.5).abs() < 0.1);
        }
    }

    #[test]
    fn weights_normalized_and_centers_in_box() {
        let (pts, ..) = two_blobs(2);
        let red = reduce_cloud(&pts, 5, &ReduceSettings::default(), 9).unwrap();
        assert!(red.len() >= 5 && red.len() < pts.len());
        assert!((red.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(red.weights.iter().all(|w| *w > 0.0));
        for c in &red.centers {
            for k in 0..2 {
                let lo = pts.iter().map(|p| p[k]).fold(f64::INFINITY, f64::min);
                let hi = pts.iter().map(|p| p[k]).fold(f64::NEG_INFINITY, f64::max);
                assert!(c[k] >= lo && c[k] <= hi);
            }
        }
        // first moment approximately preserved
        let diam = 7.0;
        for k in 0..2 {
            let wm: f64 = red
                .centers
                .iter()
                .zip(&red.weights)
                .map(|(c, w)| w * c[k])
                .sum();
            let m: f64 = pts.iter().map(|p| p[k]).sum::<f64>() / pts.len() as f64;
            assert!((wm - m).abs() < 0.05 * diam);
        }
        // accepted path never increases the negative log-likelihood
        for w in red.nll_path.windows(2) {
            assert!(w[1].1 <= w[0].1);
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let (pts, ..) = two_blobs(4);
        let a = reduce_cloud(&pts, 3, &ReduceSettings::default(), 17).unwrap();
        let b = reduce_cloud(&pts, 3, &ReduceSettings::default(), 17).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_inputs() {
        let same = vec![vec![1.0, 2.0]; 10];
        assert!(matches!(
            reduce_cloud(&same, 2, &ReduceSettings::default(), 0),
            Err(Error::ZeroVarianceCloud)
        ));
        let few = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
        assert!(reduce_cloud(&few, 3, &ReduceSettings::default(), 0).is_err());
        assert!(reduce_cloud(&few, 4, &ReduceSettings::default(), 0).is_err());
        assert!(reduce_cloud(&few, 2, &ReduceSettings::default(), 0).is_ok());
    }
}
