use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Spline;
use crate::sensing::PointCloud;

/// Samples per fitted lane spline.
pub const LANE_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudDistanceStats {
    pub mean: f64,
    pub max: f64,
    pub std: f64,
    pub matched_count: usize,
    /// Points of either cloud whose source pixel has no partner.
    pub unmatched_count: usize,
}

/// Euclidean distances between points that came from the same depth pixel.
pub fn cloud_stats(a: &PointCloud, b: &PointCloud) -> Result<CloudDistanceStats> {
    if a.frame != b.frame {
        return Err(Error::Argument("clouds are in different frames".into()));
    }
    let mut ia: Vec<usize> = (0..a.len()).collect();
    let mut ib: Vec<usize> = (0..b.len()).collect();
    ia.sort_by_key(|&k| a.pixels[k]);
    ib.sort_by_key(|&k| b.pixels[k]);
    let mut dists = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < ia.len() && j < ib.len() {
        let (pa, pb) = (a.pixels[ia[i]], b.pixels[ib[j]]);
        if pa < pb {
            i += 1;
        } else if pb < pa {
            j += 1;
        } else {
            let (p, q) = (a.points[ia[i]], b.points[ib[j]]);
            dists.push(((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt());
            i += 1;
            j += 1;
        }
    }
    if dists.is_empty() {
        return Err(Error::EmptyCorrespondence);
    }
    let n = dists.len() as f64;
    let mean = dists.iter().sum::<f64>() / n;
    let max = dists.iter().copied().fold(0.0, f64::max);
    let std = (dists.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(CloudDistanceStats {
        mean,
        max,
        std,
        matched_count: dists.len(),
        unmatched_count: a.len() + b.len() - 2 * dists.len(),
    })
}

/// Axis-aligned box in continuous pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelBox {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl PixelBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self {
            min: [x0, y0],
            max: [x1, y1],
        }
    }

    pub fn area(&self) -> f64 {
        (self.max[0] - self.min[0]) * (self.max[1] - self.min[1])
    }
}

pub fn iou(a: &PixelBox, b: &PixelBox) -> Result<f64> {
    for bx in [a, b] {
        let ok = bx.min.iter().chain(&bx.max).all(|v| v.is_finite())
            && bx.min[0] <= bx.max[0]
            && bx.min[1] <= bx.max[1];
        if !ok {
            return Err(Error::Argument(format!("invalid box {bx:?}")));
        }
    }
    if a.area() == 0.0 || b.area() == 0.0 {
        log::warn!("IoU of a zero-area box is reported as 0");
        return Ok(0.0);
    }
    let w = (a.max[0].min(b.max[0]) - a.min[0].max(b.min[0])).max(0.0);
    let h = (a.max[1].min(b.max[1]) - a.min[1].max(b.min[1])).max(0.0);
    let inter = w * h;
    Ok(inter / (a.area() + b.area() - inter))
}

/// Mean distance between 100 equally spaced parameter samples of the
/// Catmull-Rom splines through two anchor sets.
pub fn lane_alignment(real: &[[f64; 2]], mixed: &[[f64; 2]]) -> Result<f64> {
    if real.len() < 4 || mixed.len() < 4 {
        return Err(Error::Argument("lane alignment needs at least 4 anchors per spline".into()));
    }
    let a = Spline::open_through(real)?.sample_uniform(LANE_SAMPLES);
    let b = Spline::open_through(mixed)?.sample_uniform(LANE_SAMPLES);
    Ok(a.iter()
        .zip(&b)
        .map(|(p, q)| (p[0] - q[0]).hypot(p[1] - q[1]))
        .sum::<f64>()
        / LANE_SAMPLES as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::CloudFrame;
    use proptest::prelude::*;

    fn cloud(points: Vec<[f64; 3]>) -> PointCloud {
        PointCloud {
            pixels: (0..points.len() as u32).collect(),
            points,
            frame: CloudFrame::Sensor,
        }
    }

    #[test]
    fn iou_by_hand() {
        let a = PixelBox::new(0.0, 0.0, 2.0, 2.0);
        let b = PixelBox::new(1.0, 0.0, 3.0, 2.0);
        assert!((iou(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &PixelBox::new(5.0, 5.0, 6.0, 6.0)).unwrap(), 0.0);
        assert_eq!(iou(&a, &PixelBox::new(1.0, 1.0, 1.0, 3.0)).unwrap(), 0.0);
        assert!(iou(&a, &PixelBox::new(2.0, 0.0, 1.0, 1.0)).is_err());
    }

    #[test]
    fn shifted_cloud() {
        let a = cloud(vec![[0.0, 0.0, 1.0], [1.0, 2.0, 3.0], [-1.0, 0.5, 2.0]]);
        let b = cloud(a.points.iter().map(|p| [p[0] + 0.1, p[1], p[2]]).collect());
        let s = cloud_stats(&a, &b).unwrap();
        assert!((s.mean - 0.1).abs() < 1e-12 && s.std < 1e-12);
        let z = cloud_stats(&a, &a).unwrap();
        assert_eq!((z.mean, z.max, z.std), (0.0, 0.0, 0.0));
    }

    #[test]
    fn unmatched_pixels_are_counted() {
        let a = cloud(vec![[0.0, 0.0, 1.0], [0.0, 0.0, 2.0]]);
        let mut b = cloud(vec![[0.0, 0.0, 1.5]]);
        b.pixels = vec![1];
        let s = cloud_stats(&a, &b).unwrap();
        assert_eq!((s.matched_count, s.unmatched_count), (1, 1));
        assert!((s.mean - 0.5).abs() < 1e-12);
        b.pixels = vec![9];
        assert!(matches!(cloud_stats(&a, &b), Err(Error::EmptyCorrespondence)));
    }

    #[test]
    fn lane_shift() {
        let real = [[100.0, 200.0], [104.0, 170.0], [110.0, 140.0], [118.0, 110.0], [128.0, 80.0]];
        let mixed: Vec<[f64; 2]> = real.iter().map(|p| [p[0] + 3.0, p[1]]).collect();
        assert!((lane_alignment(&real, &mixed).unwrap() - 3.0).abs() < 1e-6);
        assert_eq!(lane_alignment(&real, &real).unwrap(), 0.0);
        assert!(lane_alignment(&real[..3], &mixed).is_err());
    }

    proptest! {
        #[test]
        fn cloud_stats_matches_loop(pts in prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64, 0.1..4.0f64, -0.2..0.2f64), 1..20)) {
            let a = cloud(pts.iter().map(|p| [p.0, p.1, p.2]).collect());
            let b = cloud(pts.iter().map(|p| [p.0 + p.3, p.1 - p.3, p.2]).collect());
            let s = cloud_stats(&a, &b).unwrap();
            let mut d = Vec::new();
            for k in 0..a.len() {
                let mut acc = 0.0;
                for c in 0..3 {
                    acc += (a.points[k][c] - b.points[k][c]) * (a.points[k][c] - b.points[k][c]);
                }
                d.push(acc.sqrt());
            }
            let mean: f64 = d.iter().sum::<f64>() / d.len() as f64;
            let mut max = 0.0f64;
            for v in &d { if *v > max { max = *v; } }
            prop_assert!((s.mean - mean).abs() < 1e-12);
            prop_assert_eq!(s.max, max);
            prop_assert!(s.max >= s.mean);
        }

        #[test]
        fn iou_symmetric_and_bounded(a in (0.0..50.0f64, 0.0..50.0f64, 0.1..30.0f64, 0.1..30.0f64),
                                     b in (0.0..50.0f64, 0.0..50.0f64, 0.1..30.0f64, 0.1..30.0f64)) {
            let ba = PixelBox::new(a.0, a.1, a.0 + a.2, a.1 + a.3);
            let bb = PixelBox::new(b.0, b.1, b.0 + b.2, b.1 + b.3);
            let v = iou(&ba, &bb).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!((v - iou(&bb, &ba).unwrap()).abs() < 1e-12);
            prop_assert!((iou(&ba, &ba).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
