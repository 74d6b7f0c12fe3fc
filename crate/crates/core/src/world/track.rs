use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, Pose, Spline};

/// Sub-samples per spline segment in the arc-length table.
const SAMPLES_PER_SEGMENT: usize = 40;

/// Closed driving track: a centerline plus lane and marking widths.
///
/// Travel direction is the order of the centerline control points; the
/// lateral coordinate is positive to the left of travel.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(into = "TrackSpec", try_from = "TrackSpec")]
pub struct Track {
    center: Spline,
    pub lane_half_width: f64,
    pub margin_width: f64,
    pub has_center_dots: bool,
    table: ArcTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSpec {
    pub control_points: Vec<[f64; 2]>,
    pub lane_half_width: f64,
    pub margin_width: f64,
    pub has_center_dots: bool,
}

impl From<Track> for TrackSpec {
    fn from(t: Track) -> Self {
        TrackSpec {
            control_points: t.center.control_points,
            lane_half_width: t.lane_half_width,
            margin_width: t.margin_width,
            has_center_dots: t.has_center_dots,
        }
    }
}

impl TryFrom<TrackSpec> for Track {
    type Error = Error;
    fn try_from(s: TrackSpec) -> Result<Self> {
        Track::new(
            s.control_points,
            s.lane_half_width,
            s.margin_width,
            s.has_center_dots,
        )
    }
}

impl PartialEq for Track {
    fn eq(&self, other: &Self) -> bool {
        self.center == other.center
            && self.lane_half_width == other.lane_half_width
            && self.margin_width == other.margin_width
            && self.has_center_dots == other.has_center_dots
    }
}

/// Result of projecting a pose onto the track.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneQuery {
    pub inside: bool,
    /// Signed distance from the centerline, positive to the left of travel.
    pub lateral_offset: f64,
    /// Arc length of the projection, in [0, length).
    pub arc_position: f64,
}

/// Polyline approximation of the centerline with cumulative arc length.
#[derive(Debug, Clone)]
struct ArcTable {
    points: Vec<[f64; 2]>,
    cum: Vec<f64>,
    headings: Vec<f64>,
    curvature: Vec<f64>,
    length: f64,
}

impl ArcTable {
    fn build(spline: &Spline) -> Self {
        let segs = spline.segment_count();
        let n = segs * SAMPLES_PER_SEGMENT;
        let mut points = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let u = i as f64 / SAMPLES_PER_SEGMENT as f64;
            points.push(spline.eval_global(u));
        }
        // Close the loop exactly.
        points[n] = points[0];
        let mut cum = Vec::with_capacity(n + 1);
        cum.push(0.0);
        let mut headings = Vec::with_capacity(n);
        for w in points.windows(2) {
            let d = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
            cum.push(cum.last().unwrap() + d);
            headings.push((w[1][1] - w[0][1]).atan2(w[1][0] - w[0][0]));
        }
        let length = *cum.last().unwrap();
        // Heading change over a ±4 sample window, per unit arc.
        let span = 4usize;
        let curvature = (0..n)
            .map(|i| {
                let a = (i + n - span) % n;
                let b = (i + span) % n;
                let dh = normalize_angle(headings[b] - headings[a]);
                let mut ds = cum[b] - cum[a];
                if ds <= 0.0 {
                    ds += length;
                }
                dh / ds
            })
            .collect();
        Self {
            points,
            cum,
            headings,
            curvature,
            length,
        }
    }

    fn segment_count(&self) -> usize {
        self.points.len() - 1
    }

    fn locate(&self, s: f64) -> (usize, f64) {
        let s = s.rem_euclid(self.length);
        let idx = match self.cum.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        }
        .min(self.segment_count() - 1);
        let seg_len = self.cum[idx + 1] - self.cum[idx];
        let f = if seg_len > 0.0 {
            (s - self.cum[idx]) / seg_len
        } else {
            0.0
        };
        (idx, f.clamp(0.0, 1.0))
    }
}

impl Track {
    pub fn new(
        control_points: Vec<[f64; 2]>,
        lane_half_width: f64,
        margin_width: f64,
        has_center_dots: bool,
    ) -> Result<Self> {
        if !(lane_half_width > 0.0) || !(margin_width >= 0.0) {
            return Err(Error::Argument(
                "lane half-width must be positive and margin non-negative".into(),
            ));
        }
        let center = Spline::new(control_points, true)?;
        let table = ArcTable::build(&center);
        if !(table.length > 0.0) {
            return Err(Error::Argument("degenerate track centerline".into()));
        }
        Ok(Self {
            center,
            lane_half_width,
            margin_width,
            has_center_dots,
            table,
        })
    }

    pub fn center(&self) -> &Spline {
        &self.center
    }

    pub fn length(&self) -> f64 {
        self.table.length
    }

    /// Signed shoelace area of the control polygon; positive means the
    /// travel direction is counter-clockwise.
    pub fn signed_area(&self) -> f64 {
        let p = &self.center.control_points;
        let n = p.len();
        (0..n)
            .map(|i| {
                let a = p[i];
                let b = p[(i + 1) % n];
                a[0] * b[1] - b[0] * a[1]
            })
            .sum::<f64>()
            / 2.0
    }

    /// Same geometry traversed the other way.
    pub fn reversed(&self) -> Self {
        let mut cps = self.center.control_points.clone();
        cps.reverse();
        Track::new(
            cps,
            self.lane_half_width,
            self.margin_width,
            self.has_center_dots,
        )
        .expect("reversing a valid track")
    }

    /// Centerline point and heading at arc length `s` (wrapped).
    pub fn point_at(&self, s: f64) -> ([f64; 2], f64) {
        let (i, f) = self.table.locate(s);
        let a = self.table.points[i];
        let b = self.table.points[i + 1];
        (
            [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])],
            self.table.headings[i],
        )
    }

    /// World point at Frénet coordinates (s, d).
    pub fn frenet_to_world(&self, s: f64, d: f64) -> [f64; 2] {
        let (p, h) = self.point_at(s);
        [p[0] - d * h.sin(), p[1] + d * h.cos()]
    }

    /// Pose on the track at (s, d) heading along travel.
    pub fn pose_at(&self, s: f64, d: f64) -> Pose {
        let [x, y] = self.frenet_to_world(s, d);
        let (_, h) = self.point_at(s);
        Pose::planar(x, y, h)
    }

    /// Signed centerline curvature at `s` (positive = turning left).
    pub fn curvature_at(&self, s: f64) -> f64 {
        let (i, _) = self.table.locate(s);
        self.table.curvature[i]
    }

    /// Nearest centerline projection of a planar point: (lateral, arc).
    pub fn project(&self, p: [f64; 2]) -> (f64, f64) {
        let mut best = (f64::INFINITY, 0.0, 0.0);
        let pts = &self.table.points;
        for i in 0..self.table.segment_count() {
            let a = pts[i];
            let b = pts[i + 1];
            let ab = [b[0] - a[0], b[1] - a[1]];
            let len2 = ab[0] * ab[0] + ab[1] * ab[1];
            let u = if len2 > 0.0 {
                (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let q = [a[0] + u * ab[0], a[1] + u * ab[1]];
            let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
            if d2 < best.0 {
                let len = len2.sqrt();
                let cross = if len > 0.0 {
                    (ab[0] * (p[1] - a[1]) - ab[1] * (p[0] - a[0])) / len
                } else {
                    0.0
                };
                let dist = d2.sqrt();
                let lateral = if cross < 0.0 { -dist } else { dist };
                let arc = self.table.cum[i] + u * len;
                best = (d2, lateral, arc);
            }
        }
        let arc = if best.2 >= self.table.length {
            best.2 - self.table.length
        } else {
            best.2
        };
        (best.1, arc)
    }

    pub(crate) fn table_points(&self) -> &[[f64; 2]] {
        &self.table.points
    }

    pub(crate) fn table_cum(&self) -> &[f64] {
        &self.table.cum
    }
}

/// Lane membership and Frénet position of a pose.
pub fn lane_query(pose: &Pose, track: &Track) -> LaneQuery {
    let (lateral_offset, arc_position) = track.project(pose.xy());
    LaneQuery {
        inside: lateral_offset.abs() <= track.lane_half_width,
        lateral_offset,
        arc_position,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Rounded rectangle with long straight runs along y = 0 (travel +x).
    fn oval() -> Track {
        let mut cps = Vec::new();
        for i in 0..=10 {
            cps.push([i as f64 * 0.4, 0.0]);
        }
        for i in 1..10 {
            let a = -std::f64::consts::FRAC_PI_2 + std::f64::consts::PI * i as f64 / 10.0;
            cps.push([4.0 + 1.0 * a.cos(), 1.0 + 1.0 * a.sin()]);
        }
        for i in 0..=10 {
            cps.push([4.0 - i as f64 * 0.4, 2.0]);
        }
        for i in 1..10 {
            let a = std::f64::consts::FRAC_PI_2 + std::f64::consts::PI * i as f64 / 10.0;
            cps.push([1.0 * a.cos(), 1.0 + 1.0 * a.sin()]);
        }
        Track::new(cps, 0.4, 0.1, true).unwrap()
    }

    #[test]
    fn on_centerline() {
        let t = oval();
        let q = lane_query(&Pose::planar(2.0, 0.0, 0.0), &t);
        assert!(q.inside);
        assert!(q.lateral_offset.abs() < 1e-12);
        assert!((q.arc_position - 1.6).abs() < 1e-6);
    }

    #[test]
    fn known_offset_on_straight() {
        let t = oval();
        let q = lane_query(&Pose::planar(1.7, 0.05, 0.0), &t);
        assert!((q.lateral_offset - 0.05).abs() < 1e-6);
        let q = lane_query(&Pose::planar(1.7, -0.05, 0.0), &t);
        assert!((q.lateral_offset + 0.05).abs() < 1e-6);
    }

    #[test]
    fn outside_lane() {
        let t = oval();
        let q = lane_query(&Pose::planar(2.0, -(0.4 + 0.01), 0.0), &t);
        assert!(!q.inside);
    }

    #[test]
    fn ccw_oval_has_positive_area() {
        let t = oval();
        assert!(t.signed_area() > 0.0);
        assert!(t.reversed().signed_area() < 0.0);
    }

    #[test]
    fn arc_position_continuous_along_centerline() {
        let t = oval();
        let step = 0.01;
        let mut prev = lane_query(&t.pose_at(0.0, 0.0), &t).arc_position;
        let mut wraps = 0;
        let n = (t.length() / step) as usize;
        for k in 1..n {
            let s = k as f64 * step;
            let q = lane_query(&t.pose_at(s, 0.0), &t);
            let jump = q.arc_position - prev;
            if jump < -t.length() / 2.0 {
                wraps += 1;
            } else {
                assert!(jump.abs() <= step + 1e-6, "jump {jump} at s={s}");
            }
            prev = q.arc_position;
        }
        assert!(wraps <= 1);
    }

    #[test]
    fn frenet_round_trip() {
        let t = oval();
        for &(s, d) in &[(0.7, 0.1), (3.2, -0.2), (6.0, 0.3)] {
            let p = t.frenet_to_world(s, d);
            let (lat, arc) = t.project(p);
            assert!((lat - d).abs() < 1e-3, "{lat} vs {d}");
            assert!((arc - s).abs() < 1e-2, "{arc} vs {s}");
        }
    }
}
