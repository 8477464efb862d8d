//! Isomap initial parameterization of mixture centers.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use nalgebra::DMatrix;

use crate::cloud::Point;
use crate::error::{Error, Result};
use crate::kernel::dist;

/// k-NN graph over distinct vertices with all-pairs geodesic distances.
#[derive(Debug, Clone)]
pub struct GeodesicGraph {
    pub vertices: Vec<Point>,
    /// Symmetrized neighbor lists `(vertex, euclidean length)`.
    pub neighbors: Vec<Vec<(usize, f64)>>,
    /// `N x N` shortest-path distances.
    pub dist: DMatrix<f64>,
}

/// `max(d + 2, ceil(log2 N) + 1)`.
pub fn default_neighbors(n: usize, d: usize) -> usize {
    let log = (n.max(1) as f64).log2().ceil() as usize;
    (d + 2).max(log + 1)
}

#[derive(Clone, Copy, PartialEq, PartialOrd)]
struct Key(f64);
impl Eq for Key {}
impl Ord for Key {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

impl GeodesicGraph {
    /// Build the graph over `vertices` (assumed pairwise distinct).
    pub fn build(vertices: Vec<Point>, k: usize) -> Self {
        let n = vertices.len();
        let k = k.min(n.saturating_sub(1));
        let mut adj = vec![vec![]; n];
        let add = |adj: &mut Vec<Vec<(usize, f64)>>, i: usize, j: usize, w: f64| {
            if !adj[i].iter().any(|&(v, _)| v == j) {
                adj[i].push((j, w));
                adj[j].push((i, w));
            }
        };
        for i in 0..n {
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (dist(&vertices[i], &vertices[j]), j))
                .collect();
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for &(w, j) in cand.iter().take(k) {
                add(&mut adj, i, j, w);
            }
        }
        // join components through their shortest connecting edge
        loop {
            let mut parent: Vec<usize> = (0..n).collect();
            for i in 0..n {
                for &(j, _) in &adj[i] {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    if a != b {
                        parent[a] = b;
                    }
                }
            }
            let roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
            if roots.iter().all(|&r| r == roots[0]) {
                break;
            }
            let mut best = (f64::INFINITY, 0, 0);
            for i in 0..n {
                for j in (i + 1)..n {
                    if roots[i] != roots[j] {
                        let w = dist(&vertices[i], &vertices[j]);
                        if w < best.0 {
                            best = (w, i, j);
                        }
                    }
                }
            }
            add(&mut adj, best.1, best.2, best.0);
        }
        let mut geo = DMatrix::from_element(n, n, f64::INFINITY);
        for src in 0..n {
            let mut heap = BinaryHeap::new();
            geo[(src, src)] = 0.0;
            heap.push(Reverse((Key(0.0), src)));
            while let Some(Reverse((Key(dv), v))) = heap.pop() {
                if dv > geo[(src, v)] {
                    continue;
                }
                for &(u, w) in &adj[v] {
                    let nd = dv + w;
                    if nd < geo[(src, u)] {
                        geo[(src, u)] = nd;
                        heap.push(Reverse((Key(nd), u)));
                    }
                }
            }
        }
        // symmetrize against rounding in path order
        for i in 0..n {
            for j in (i + 1)..n {
                let m = geo[(i, j)].min(geo[(j, i)]);
                geo[(i, j)] = m;
                geo[(j, i)] = m;
            }
        }
        Self {
            vertices,
            neighbors: adj,
            dist: geo,
        }
    }
}

/// Classical multidimensional scaling of a distance matrix into `d`
/// coordinates, leading spectral value first, each coordinate sign-fixed so
/// its first clearly nonzero entry is positive.
pub fn classical_mds(dist: &DMatrix<f64>, d: usize) -> Result<Vec<Point>> {
    let n = dist.nrows();
    let sq = dist.map(|v| v * v);
    let row_means: Vec<f64> = (0..n).map(|i| sq.row(i).mean()).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let b = DMatrix::from_fn(n, n, |i, j| {
        -0.5 * (sq[(i, j)] - row_means[i] - row_means[j] + grand)
    });
    let eig = nalgebra::SymmetricEigen::try_new(b, 1e-13, 10_000)
        .ok_or_else(|| Error::Spectral("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &c| {
        eig.eigenvalues[c]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&c))
    });
    let mut coords = vec![vec![0.0; d]; n];
    for (k, &idx) in order.iter().take(d).enumerate() {
        let lam = eig.eigenvalues[idx].max(0.0);
        let v = eig.eigenvectors.column(idx);
        let vmax = v.amax();
        let sign = v
            .iter()
            .find(|x| x.abs() > 1e-8 * vmax)
            .map_or(1.0, |x| x.signum());
        for i in 0..n {
            coords[i][k] = sign * v[i] * lam.sqrt();
        }
    }
    Ok(coords)
}

/// Isomap embedding of `centers` into `R^d`. Exact duplicates are merged
/// before the graph is built and share their twin's coordinates.
pub fn isomap_embed(centers: &[Point], d: usize, k: Option<usize>) -> Result<Vec<Point>> {
    if d == 0 {
        return Err(Error::invalid("target dimension must be >= 1"));
    }
    let mut unique: Vec<Point> = Vec::new();
    let mut slot = Vec::with_capacity(centers.len());
    for c in centers {
        match unique.iter().position(|u| u == c) {
            Some(i) => slot.push(i),
            None => {
                slot.push(unique.len());
                unique.push(c.clone());
            }
        }
    }
    let n = unique.len();
    if n < d + 2 {
        return Err(Error::invalid(format!(
            "isomap needs at least d+2 = {} distinct centers, got {n}",
            d + 2
        )));
    }
    let k = k.unwrap_or_else(|| default_neighbors(n, d));
    if k < d + 1 {
        return Err(Error::invalid(format!(
            "need k >= d+1 = {}, got {k}",
            d + 1
        )));
    }
    let graph = GeodesicGraph::build(unique, k);
    let coords = classical_mds(&graph.dist, d)?;
    Ok(slot.into_iter().map(|i| coords[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn straight_segment_is_affine_in_arc_length() {
        let pts: Vec<Point> = (0..10)
            .map(|i| {
                let s = i as f64 / 9.0;
                vec![1.0 + 2.0 * s, -s, 0.5 * s]
            })
            .collect();
        let emb = isomap_embed(&pts, 1, Some(2)).unwrap();
        let arc: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let e: Vec<f64> = emb.iter().map(|p| p[0]).collect();
        assert!((correlation(&arc, &e).abs() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn quarter_arc_geodesics_match_arc_length() {
        let n = 20;
        let pts: Vec<Point> = (0..n)
            .map(|i| {
                let a = std::f64::consts::FRAC_PI_2 * i as f64 / (n - 1) as f64;
                vec![a.cos(), a.sin()]
            })
            .collect();
        let g = GeodesicGraph::build(pts, 3);
        let step = std::f64::consts::FRAC_PI_2 / (n - 1) as f64;
        for i in 0..n - 2 {
            let arc = 2.0 * step;
            let geo = g.dist[(i, i + 2)];
            assert!((geo - arc).abs() / arc < 0.05);
        }
        let full = g.dist[(0, n - 1)];
        assert!((full - std::f64::consts::FRAC_PI_2).abs() / std::f64::consts::FRAC_PI_2 < 0.05);
    }

    #[test]
    fn duplicates_share_parameters() {
        let mut pts: Vec<Point> = (0..8).map(|i| vec![i as f64, (i as f64).sin()]).collect();
        pts.push(pts[3].clone());
        let emb = isomap_embed(&pts, 1, None).unwrap();
        assert_eq!(emb.len(), 9);
        assert_eq!(emb[8], emb[3]);
    }

    #[test]
    fn too_few_points() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0]];
        assert!(isomap_embed(&pts, 1, None).is_err());
    }

    #[test]
    fn geodesic_matrix_is_a_metric() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<Point> = (0..40)
            .map(|_| {
                vec![
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-0.1..0.1),
                ]
            })
            .collect();
        let g = GeodesicGraph::build(pts, 3);
        let n = 40;
        for i in 0..n {
            assert_eq!(g.dist[(i, i)], 0.0);
            for j in 0..n {
                assert!(g.dist[(i, j)].is_finite());
                assert_eq!(g.dist[(i, j)], g.dist[(j, i)]);
                for m in 0..n {
                    assert!(g.dist[(i, j)] <= g.dist[(i, m)] + g.dist[(m, j)] + 1e-9);
                }
            }
        }
    }

    #[test]
    fn disconnected_clusters_are_joined() {
        let mut pts: Vec<Point> = (0..6).map(|i| vec![i as f64 * 0.1, 0.0]).collect();
        pts.extend((0..6).map(|i| vec![10.0 + i as f64 * 0.1, 0.0]));
        let g = GeodesicGraph::build(pts, 2);
        assert!(g.dist.iter().all(|v| v.is_finite()));
        assert!((g.dist[(5, 6)] - (10.0 - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn rigid_motion_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pts: Vec<Point> = (0..30)
            .map(|_| {
                let u: f64 = rng.random_range(0.0..3.0);
                let v: f64 = rng.random_range(0.0..1.0);
                vec![u, v, 0.3 * u]
            })
            .collect();
        let (c, s) = (0.6f64.cos(), 0.6f64.sin());
        let moved: Vec<Point> = pts
            .iter()
            .map(|p| {
                vec![
                    c * p[0] - s * p[1] + 4.0,
                    s * p[0] + c * p[1] - 1.0,
                    p[2] + 2.0,
                ]
            })
            .collect();
        let a = isomap_embed(&pts, 2, Some(5)).unwrap();
        let b = isomap_embed(&moved, 2, Some(5)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            for k in 0..2 {
                assert!((x[k] - y[k]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn flat_plane_low_stress() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let pts: Vec<Point> = (0..120)
            .map(|_| {
                let (u, v): (f64, f64) = (rng.random_range(0.0..2.0), rng.random_range(0.0..1.0));
                vec![u + 0.5 * v, v, u - v]
            })
            .collect();
        // sparse random graphs inflate long geodesics; 25 neighbours keeps it under 5%
        let kk = 25;
        let emb = isomap_embed(&pts, 2, Some(kk)).unwrap();
        let g = GeodesicGraph::build(pts.clone(), kk);
        let diam = g.dist.max();
        let mut worst: f64 = 0.0;
        for i in 0..pts.len() {
            for j in 0..pts.len() {
                worst = worst.max((g.dist[(i, j)] - dist(&emb[i], &emb[j])).abs());
            }
        }
        assert!(worst / diam < 0.05, "stress {}", worst / diam);
    }
}
