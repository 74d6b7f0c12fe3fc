use serde::{Deserialize, Serialize};

use crate::geometry::Pose;
use crate::world::Obstacle;

/// Box dimensions in meters; length runs along the owner's heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxSize {
    pub length: f64,
    pub width: f64,
    pub height: f64,
}

impl BoxSize {
    pub fn new(length: f64, width: f64, height: f64) -> Self {
        Self {
            length,
            width,
            height,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.length > 0.0 && self.width > 0.0 && self.height > 0.0
    }
}

/// Planar oriented rectangle, treated as a closed set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedRect {
    pub center: [f64; 2],
    pub yaw: f64,
    pub half_length: f64,
    pub half_width: f64,
}

impl OrientedRect {
    pub fn new(pose: &Pose, size: &BoxSize) -> Self {
        Self {
            center: [pose.x, pose.y],
            yaw: pose.yaw,
            half_length: size.length / 2.0,
            half_width: size.width / 2.0,
        }
    }

    fn axes(&self) -> [[f64; 2]; 2] {
        let (s, c) = self.yaw.sin_cos();
        [[c, s], [-s, c]]
    }

    /// Half-extent of the projection onto a unit axis.
    fn radius_on(&self, axis: [f64; 2]) -> f64 {
        let [u, v] = self.axes();
        self.half_length * (u[0] * axis[0] + u[1] * axis[1]).abs()
            + self.half_width * (v[0] * axis[0] + v[1] * axis[1]).abs()
    }

    /// Separating-axis test; touching boundaries count as overlap.
    pub fn overlaps(&self, other: &OrientedRect) -> bool {
        let d = [
            other.center[0] - self.center[0],
            other.center[1] - self.center[1],
        ];
        let a = self.axes();
        let b = other.axes();
        for axis in a.iter().chain(b.iter()) {
            let dist = (d[0] * axis[0] + d[1] * axis[1]).abs();
            if dist > self.radius_on(*axis) + other.radius_on(*axis) {
                return false;
            }
        }
        true
    }

    /// Corners in counter-clockwise order.
    pub fn corners(&self) -> [[f64; 2]; 4] {
        let [u, v] = self.axes();
        [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)].map(|(a, b)| {
            [
                self.center[0] + a * self.half_length * u[0] + b * self.half_width * v[0],
                self.center[1] + a * self.half_length * u[1] + b * self.half_width * v[1],
            ]
        })
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        let [u, v] = self.axes();
        let d = [p[0] - self.center[0], p[1] - self.center[1]];
        (d[0] * u[0] + d[1] * u[1]).abs() <= self.half_length
            && (d[0] * v[0] + d[1] * v[1]).abs() <= self.half_width
    }
}

/// First obstacle (in list order) whose footprint overlaps the vehicle box
/// centered at `vehicle_pose`.
pub fn collision_query<'a>(
    vehicle_pose: &Pose,
    vehicle_footprint: &BoxSize,
    obstacles: &'a [Obstacle],
) -> Option<&'a str> {
    let vehicle = OrientedRect::new(vehicle_pose, vehicle_footprint);
    obstacles
        .iter()
        .find(|o| vehicle.overlaps(&OrientedRect::new(&o.pose, &o.footprint)))
        .map(|o| o.id.as_str())
}
