use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sensing::PointCloud;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleDetection {
    /// Cluster mean in the frame of the input cloud.
    pub centroid: [f64; 3],
    pub point_count: usize,
    pub cluster_id: usize,
}

const NOISE: usize = usize::MAX;
const UNVISITED: usize = usize::MAX - 1;

/// Grid of `eps`-sized cells for fixed-radius neighbor queries.
struct Grid<'a> {
    points: &'a [[f64; 3]],
    eps: f64,
    cells: HashMap<[i64; 3], Vec<usize>>,
}

impl<'a> Grid<'a> {
    fn new(points: &'a [[f64; 3]], eps: f64) -> Self {
        let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, eps)).or_default().push(i);
        }
        Self { points, eps, cells }
    }

    fn key(p: &[f64; 3], eps: f64) -> [i64; 3] {
        p.map(|v| (v / eps).floor() as i64)
    }

    /// Indices within `eps` of point `i`, itself included, ascending.
    fn neighbors(&self, i: usize) -> Vec<usize> {
        let p = self.points[i];
        let k = Self::key(&p, self.eps);
        let eps2 = self.eps * self.eps;
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(list) = self.cells.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        for &j in list {
                            let q = self.points[j];
                            let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
                            if d2 <= eps2 {
                                out.push(j);
                            }
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Per-point cluster labels (`None` for noise) from standard DBSCAN.
///
/// Neighborhoods are closed `eps`-balls that include the point itself.
/// Clusters are numbered in order of their lowest-index core point, and a
/// border point reachable from several clusters joins the first of them.
pub fn dbscan_labels(points: &[[f64; 3]], eps: f64, min_pts: usize) -> Result<Vec<Option<usize>>> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Argument(format!("eps must be positive, got {eps}")));
    }
    if min_pts < 1 {
        return Err(Error::Argument("min_pts must be at least 1".into()));
    }
    let grid = Grid::new(points, eps);
    let mut label = vec![UNVISITED; points.len()];
    let mut next = 0usize;
    for i in 0..points.len() {
        if label[i] != UNVISITED {
            continue;
        }
        let nb = grid.neighbors(i);
        if nb.len() < min_pts {
            label[i] = NOISE;
            continue;
        }
        let c = next;
        next += 1;
        label[i] = c;
        let mut queue: Vec<usize> = nb;
        let mut head = 0;
        while head < queue.len() {
            let j = queue[head];
            head += 1;
            if label[j] == NOISE {
                label[j] = c;
            }
            if label[j] != UNVISITED {
                continue;
            }
            label[j] = c;
            let nj = grid.neighbors(j);
            if nj.len() >= min_pts {
                queue.extend(nj.into_iter().filter(|&k| label[k] == UNVISITED || label[k] == NOISE));
            }
        }
    }
    Ok(label
        .into_iter()
        .map(|l| (l != NOISE && l != UNVISITED).then_some(l))
        .collect())
}

/// Cluster a cloud and report one detection per cluster; noise is dropped.
pub fn dbscan_cluster(cloud: &PointCloud, eps: f64, min_pts: usize) -> Result<Vec<ObstacleDetection>> {
    let labels = dbscan_labels(&cloud.points, eps, min_pts)?;
    let count = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let mut sums = vec![[0.0f64; 3]; count];
    let mut counts = vec![0usize; count];
    for (p, l) in cloud.points.iter().zip(&labels) {
        if let Some(c) = l {
            for a in 0..3 {
                sums[*c][a] += p[a];
            }
            counts[*c] += 1;
        }
    }
    Ok((0..count)
        .map(|c| ObstacleDetection {
            centroid: sums[c].map(|s| s / counts[c] as f64),
            point_count: counts[c],
            cluster_id: c,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::CloudFrame;
    use rand::{Rng, SeedableRng};

    fn cloud(points: Vec<[f64; 3]>) -> PointCloud {
        let pixels = (0..points.len() as u32).collect();
        PointCloud {
            points,
            pixels,
            frame: CloudFrame::Vehicle,
        }
    }

    #[test]
    fn empty_cloud() {
        assert!(dbscan_cluster(&cloud(vec![]), 0.1, 3).unwrap().is_empty());
    }

    #[test]
    fn two_blobs() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut pts = Vec::new();
        for center in [[1.0, 0.0, 0.1], [1.0, 0.5, 0.1]] {
            for _ in 0..20 {
                let mut p = center;
                for v in p.iter_mut() {
                    *v += rng.random_range(-0.011..0.011);
                }
                pts.push(p);
            }
        }
        let det = dbscan_cluster(&cloud(pts), 0.05, 5).unwrap();
        assert_eq!(det.len(), 2);
        for (d, c) in det.iter().zip([[1.0, 0.0, 0.1], [1.0, 0.5, 0.1]]) {
            let err = ((d.centroid[0] - c[0]).powi(2) + (d.centroid[1] - c[1]).powi(2) + (d.centroid[2] - c[2]).powi(2)).sqrt();
            assert!(err < 0.01);
            assert_eq!(d.point_count, 20);
        }
    }

    #[test]
    fn sparse_points_are_noise() {
        let pts = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        assert!(dbscan_cluster(&cloud(pts), 0.1, 5).unwrap().is_empty());
    }

    #[test]
    fn bad_parameters() {
        assert!(dbscan_cluster(&cloud(vec![]), 0.0, 3).is_err());
        assert!(dbscan_cluster(&cloud(vec![]), 0.1, 0).is_err());
    }
}
