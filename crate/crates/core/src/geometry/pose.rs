use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Wrap an angle into (−π, π].
pub fn normalize_angle(a: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut y = a - two_pi * ((a + PI) / two_pi).floor();
    if y <= -PI {
        y += two_pi;
    }
    if y > PI {
        y -= two_pi;
    }
    y
}

/// Planar vehicle or object pose. Height is carried but never rotated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub z: f64,
    /// Heading, counter-clockwise from +x, normalized to (−π, π].
    pub yaw: f64,
    #[serde(default)]
    pub timestamp: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, z: f64, yaw: f64, timestamp: f64) -> Self {
        Self {
            x,
            y,
            z,
            yaw: normalize_angle(yaw),
            timestamp,
        }
    }

    pub fn planar(x: f64, y: f64, yaw: f64) -> Self {
        Self::new(x, y, 0.0, yaw, 0.0)
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn xy(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.z.is_finite()
            && self.yaw.is_finite()
            && self.timestamp.is_finite()
    }

    /// Map a point expressed in this pose's frame to the parent frame.
    pub fn transform_point(&self, p: [f64; 3]) -> [f64; 3] {
        let (s, c) = self.yaw.sin_cos();
        [
            self.x + c * p[0] - s * p[1],
            self.y + s * p[0] + c * p[1],
            self.z + p[2],
        ]
    }

    /// Map a parent-frame point into this pose's frame.
    pub fn inverse_transform_point(&self, p: [f64; 3]) -> [f64; 3] {
        let (s, c) = self.yaw.sin_cos();
        let dx = p[0] - self.x;
        let dy = p[1] - self.y;
        [c * dx + s * dy, -s * dx + c * dy, p[2] - self.z]
    }

    pub fn inverse(&self) -> Pose {
        let (s, c) = self.yaw.sin_cos();
        Pose {
            x: -(c * self.x + s * self.y),
            y: -(-s * self.x + c * self.y),
            z: -self.z,
            yaw: normalize_angle(-self.yaw),
            timestamp: self.timestamp,
        }
    }
}

/// Rigid composition: `child_offset` is expressed in `parent`'s frame.
/// The result keeps the parent's timestamp.
pub fn compose(parent: &Pose, child_offset: &Pose) -> Pose {
    let [x, y, z] = parent.transform_point([child_offset.x, child_offset.y, child_offset.z]);
    Pose {
        x,
        y,
        z,
        yaw: normalize_angle(parent.yaw + child_offset.yaw),
        timestamp: parent.timestamp,
    }
}

/// Time-ordered pose sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    poses: Vec<Pose>,
}

impl Trajectory {
    pub fn new(poses: Vec<Pose>) -> Result<Self> {
        if poses.is_empty() {
            return Err(Error::Argument("trajectory needs at least one pose".into()));
        }
        if poses.windows(2).any(|w| w[1].timestamp <= w[0].timestamp) {
            return Err(Error::Argument(
                "trajectory timestamps must be strictly increasing".into(),
            ));
        }
        Ok(Self { poses })
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn points(&self) -> Vec<[f64; 2]> {
        self.poses.iter().map(Pose::xy).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_range() {
        assert_eq!(normalize_angle(PI), PI);
        assert_eq!(normalize_angle(-PI), PI);
        assert!((normalize_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(-0.5) + 0.5).abs() < 1e-15);
        assert!((normalize_angle(2.0 * PI + 0.25) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn identity_offset_leaves_parent() {
        let p = Pose::new(1.5, -2.0, 0.3, 0.7, 4.0);
        assert_eq!(compose(&p, &Pose::identity()), p);
    }

    #[test]
    fn quarter_turn_moves_along_y() {
        let p = Pose::new(2.0, 3.0, 0.0, PI / 2.0, 0.0);
        let w = compose(&p, &Pose::planar(1.0, 0.0, 0.0));
        assert!((w.x - 2.0).abs() < 1e-12);
        assert!((w.y - 4.0).abs() < 1e-12);
    }

    #[test]
    fn trajectory_rejects_bad_input() {
        assert!(Trajectory::new(vec![]).is_err());
        let p = Pose::new(0.0, 0.0, 0.0, 0.0, 1.0);
        assert!(Trajectory::new(vec![p, p]).is_err());
    }

    proptest! {
        #[test]
        fn inverse_round_trip(
            px in -10.0..10.0f64, py in -10.0..10.0f64, pyaw in -4.0..4.0f64,
            ax in -10.0..10.0f64, ay in -10.0..10.0f64, ayaw in -4.0..4.0f64,
        ) {
            let p = Pose::planar(px, py, pyaw);
            let a = Pose::planar(ax, ay, ayaw);
            let back = compose(&compose(&p, &a), &a.inverse());
            prop_assert!((back.x - p.x).abs() < 1e-12);
            prop_assert!((back.y - p.y).abs() < 1e-12);
            prop_assert!(normalize_angle(back.yaw - p.yaw).abs() < 1e-12);
        }

        #[test]
        fn point_transform_round_trip(x in -5.0..5.0f64, y in -5.0..5.0f64, yaw in -4.0..4.0f64) {
            let p = Pose::planar(1.0, -2.0, yaw);
            let q = p.inverse_transform_point(p.transform_point([x, y, 0.2]));
            prop_assert!((q[0] - x).abs() < 1e-12 && (q[1] - y).abs() < 1e-12);
        }
    }
}
