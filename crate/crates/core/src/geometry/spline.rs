use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Knot spacing exponent: 0.5 is the centripetal parameterization, which
/// cannot form cusps or self-intersections within a segment.
pub const CENTRIPETAL_ALPHA: f64 = 0.5;

const MIN_KNOT_GAP: f64 = 1e-9;

/// Catmull-Rom spline through an ordered list of control points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spline {
    pub control_points: Vec<[f64; 2]>,
    pub closed: bool,
}

impl Spline {
    pub fn new(control_points: Vec<[f64; 2]>, closed: bool) -> Result<Self> {
        if control_points.len() < 4 {
            return Err(Error::Argument(format!(
                "spline needs at least 4 control points, got {}",
                control_points.len()
            )));
        }
        if control_points
            .iter()
            .any(|p| !p[0].is_finite() || !p[1].is_finite())
        {
            return Err(Error::Argument("non-finite control point".into()));
        }
        Ok(Self {
            control_points,
            closed,
        })
    }

    /// Open spline whose end segments reach the first and last points,
    /// using mirrored phantom points at both ends.
    pub fn open_through(points: &[[f64; 2]]) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::Argument(format!(
                "need at least 4 anchor points, got {}",
                points.len()
            )));
        }
        let n = points.len();
        let first = [
            2.0 * points[0][0] - points[1][0],
            2.0 * points[0][1] - points[1][1],
        ];
        let last = [
            2.0 * points[n - 1][0] - points[n - 2][0],
            2.0 * points[n - 1][1] - points[n - 2][1],
        ];
        let mut cps = Vec::with_capacity(n + 2);
        cps.push(first);
        cps.extend_from_slice(points);
        cps.push(last);
        Self::new(cps, false)
    }

    pub fn segment_count(&self) -> usize {
        let n = self.control_points.len();
        if self.closed {
            n
        } else {
            n - 3
        }
    }

    /// The four control points driving `segment`; the curve runs from the
    /// second to the third.
    fn segment_points(&self, segment: usize) -> [[f64; 2]; 4] {
        let n = self.control_points.len();
        let at = |k: usize| self.control_points[k % n];
        [
            at(segment),
            at(segment + 1),
            at(segment + 2),
            at(segment + 3),
        ]
    }

    /// Point on `segment` at local parameter `t` in [0, 1].
    pub fn eval(&self, segment: usize, t: f64) -> Result<[f64; 2]> {
        if segment >= self.segment_count() {
            return Err(Error::Range(format!(
                "segment {segment} out of range (spline has {})",
                self.segment_count()
            )));
        }
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Range(format!("t = {t} outside [0, 1]")));
        }
        Ok(hermite_eval(self.segment_points(segment), t))
    }

    /// Evaluate at a global parameter `u` in [0, segment_count].
    pub fn eval_global(&self, u: f64) -> [f64; 2] {
        let count = self.segment_count();
        let u = u.clamp(0.0, count as f64);
        let seg = (u.floor() as usize).min(count - 1);
        hermite_eval(self.segment_points(seg), u - seg as f64)
    }

    /// `n` points at equal parameter steps covering the whole curve. For an
    /// open spline both ends are included; a closed one omits the repeated
    /// end point.
    pub fn sample_uniform(&self, n: usize) -> Vec<[f64; 2]> {
        let count = self.segment_count() as f64;
        if n == 0 {
            return Vec::new();
        }
        if n == 1 {
            return vec![self.eval_global(0.0)];
        }
        let denom = if self.closed { n as f64 } else { (n - 1) as f64 };
        (0..n)
            .map(|i| self.eval_global(count * i as f64 / denom))
            .collect()
    }
}

/// Centripetal Catmull-Rom segment in cubic Hermite form: the end tangents
/// come from the non-uniform knot sequence t_i = t_{i-1} + |P_i − P_{i-1}|^α.
fn hermite_eval(p: [[f64; 2]; 4], t: f64) -> [f64; 2] {
    let knot = |a: [f64; 2], b: [f64; 2]| {
        let d = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        d.powf(CENTRIPETAL_ALPHA).max(MIN_KNOT_GAP)
    };
    let d01 = knot(p[0], p[1]);
    let d12 = knot(p[1], p[2]);
    let d23 = knot(p[2], p[3]);

    let mut out = [0.0; 2];
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    for k in 0..2 {
        let m1 = (p[1][k] - p[0][k]) / d01 - (p[2][k] - p[0][k]) / (d01 + d12)
            + (p[2][k] - p[1][k]) / d12;
        let m2 = (p[2][k] - p[1][k]) / d12 - (p[3][k] - p[1][k]) / (d12 + d23)
            + (p[3][k] - p[2][k]) / d23;
        out[k] = h00 * p[1][k] + h10 * d12 * m1 + h01 * p[2][k] + h11 * d12 * m2;
    }
    out
}

/// Convenience wrapper mirroring the spline method.
pub fn catmull_rom_eval(spline: &Spline, segment: usize, t: f64) -> Result<[f64; 2]> {
    spline.eval(segment, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn square() -> Spline {
        Spline::new(vec![[0.0, 0.0], [1.0, 1.0], [2.0, 1.0], [3.0, 0.0]], false).unwrap()
    }

    #[test]
    fn collinear_midpoint() {
        let s = Spline::new(vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]], false).unwrap();
        let p = s.eval(0, 0.5).unwrap();
        assert!((p[0] - 1.5).abs() < 1e-12 && p[1].abs() < 1e-12);
    }

    #[test]
    fn interpolates_interior_points() {
        let s = square();
        assert_eq!(s.eval(0, 0.0).unwrap(), [1.0, 1.0]);
        let end = s.eval(0, 1.0).unwrap();
        assert!((end[0] - 2.0).abs() < 1e-15 && (end[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn centripetal_reference_value() {
        // Frozen from a 30-digit Barry-Goldman pyramid evaluation.
        let p = square().eval(0, 0.5).unwrap();
        assert!((p[0] - 1.5).abs() < 1e-12);
        assert!((p[1] - 1.096_027_508_029_164_9).abs() < 1e-12);
    }

    #[test]
    fn invalid_segment_and_t() {
        let s = square();
        assert!(matches!(s.eval(1, 0.5), Err(Error::Range(_))));
        assert!(matches!(s.eval(0, 1.5), Err(Error::Range(_))));
        assert!(Spline::new(vec![[0.0, 0.0]; 3], true).is_err());
    }

    #[test]
    fn duplicate_points_stay_finite() {
        let s = Spline::new(vec![[0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [1.0, 0.0]], false).unwrap();
        let p = s.eval(0, 0.3).unwrap();
        assert!(p[0].is_finite() && p[1].is_finite());
    }

    #[test]
    fn open_through_spans_all_anchors() {
        let pts = [[0.0, 0.0], [1.0, 2.0], [2.0, 3.0], [3.0, 2.5], [4.0, 0.0]];
        let s = Spline::open_through(&pts).unwrap();
        assert_eq!(s.segment_count(), 4);
        let samples = s.sample_uniform(100);
        assert_eq!(samples.len(), 100);
        assert!((samples[0][0]).abs() < 1e-12);
        assert!((samples[99][0] - 4.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn closed_spline_continuous_across_segments(
            pts in proptest::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 4..10)
        ) {
            let cps: Vec<[f64; 2]> = pts.iter().map(|&(x, y)| [x, y]).collect();
            let s = Spline::new(cps, true).unwrap();
            for seg in 0..s.segment_count() {
                let a = s.eval(seg, 1.0).unwrap();
                let b = s.eval((seg + 1) % s.segment_count(), 0.0).unwrap();
                prop_assert!(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt() < 1e-12);
            }
        }
    }
}
