//! Synthetic sensors: pinhole RGB camera with render masks, ToF depth
//! camera, sensor noise, and depth reprojection to point clouds.

mod image;
pub mod io;
mod noise;
mod render;

pub use image::{DepthImage, RgbImage, RgbaImage};
pub use noise::{apply_depth_noise, apply_rgb_noise, apply_sensor_noise, NoisyFrame};
pub use render::{render_depth, render_depth_masked, render_rgb, RenderMask};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose;

/// Pinhole intrinsics. Pixel `(i, j)` is column `i`, row `j`; the
/// principal ray passes through pixel `(c_x, c_y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// 256×192 ToF sensor.
    pub fn tof_default() -> Self {
        Self {
            fx: 160.0,
            fy: 160.0,
            cx: 128.0,
            cy: 96.0,
            width: 256,
            height: 192,
        }
    }

    /// 320×240 RGB camera, roughly 60° horizontal field of view.
    pub fn rgb_default() -> Self {
        Self {
            fx: 277.0,
            fy: 277.0,
            cx: 160.0,
            cy: 120.0,
            width: 320,
            height: 240,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.fx.is_finite() || !self.fy.is_finite() {
            return Err(Error::Validation("focal lengths must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Validation("image dimensions must be positive".into()));
        }
        let inside = |c: f64, n: u32| c.is_finite() && c >= 0.0 && c <= f64::from(n);
        if !inside(self.cx, self.width) || !inside(self.cy, self.height) {
            return Err(Error::Validation("principal point outside image".into()));
        }
        Ok(())
    }

    /// Shift the principal point by `offset` pixels.
    pub fn shifted(&self, offset: [f64; 2]) -> Self {
        Self {
            cx: self.cx + offset[0],
            cy: self.cy + offset[1],
            ..*self
        }
    }

    /// Optical-frame point (x right, y down, z forward) to pixel coordinates.
    pub fn project(&self, p: [f64; 3]) -> Option<[f64; 2]> {
        (p[2] > 0.0).then(|| [self.fx * p[0] / p[2] + self.cx, self.fy * p[1] / p[2] + self.cy])
    }

    /// Back-project pixel `(i, j)` at planar depth `z`.
    pub fn unproject(&self, i: f64, j: f64, z: f64) -> [f64; 3] {
        [(i - self.cx) * z / self.fx, (j - self.cy) * z / self.fy, z]
    }
}

/// Sensor placement in the vehicle frame (x forward, y left, z up); the
/// optical axis is horizontal and points along the vehicle's heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorMount {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl SensorMount {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    /// Optical-frame point to the vehicle frame.
    pub fn optical_to_vehicle(&self, p: [f64; 3]) -> [f64; 3] {
        [self.x + p[2], self.y - p[0], self.z - p[1]]
    }

    /// Vehicle-frame point to the optical frame.
    pub fn vehicle_to_optical(&self, p: [f64; 3]) -> [f64; 3] {
        [-(p[1] - self.y), -(p[2] - self.z), p[0] - self.x]
    }

    /// Optical-frame point to the world frame for a vehicle at `pose`.
    pub fn optical_to_world(&self, pose: &Pose, p: [f64; 3]) -> [f64; 3] {
        pose.transform_point(self.optical_to_vehicle(p))
    }

    pub fn world_to_optical(&self, pose: &Pose, p: [f64; 3]) -> [f64; 3] {
        self.vehicle_to_optical(pose.inverse_transform_point(p))
    }
}

/// Both on-board sensors with their mounts and the ToF range limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorRig {
    pub rgb: CameraIntrinsics,
    pub rgb_mount: SensorMount,
    pub tof: CameraIntrinsics,
    pub tof_mount: SensorMount,
    pub max_range: f64,
    pub min_range: f64,
    /// Multiplier applied to raw depth values before reprojection.
    pub depth_scale: f64,
}

impl Default for SensorRig {
    fn default() -> Self {
        Self {
            rgb: CameraIntrinsics::rgb_default(),
            rgb_mount: SensorMount::new(0.10, 0.0, 0.20),
            tof: CameraIntrinsics::tof_default(),
            tof_mount: SensorMount::new(0.12, 0.0, 0.12),
            max_range: 5.0,
            min_range: 0.05,
            depth_scale: 1.0,
        }
    }
}

impl SensorRig {
    pub fn validate(&self) -> Result<()> {
        self.rgb.validate()?;
        self.tof.validate()?;
        if !(self.max_range > 0.0 && self.max_range.is_finite()) {
            return Err(Error::Validation("max_range must be positive".into()));
        }
        if !(self.min_range >= 0.0 && self.min_range < self.max_range) {
            return Err(Error::Validation("min_range must be in [0, max_range)".into()));
        }
        if !(self.depth_scale > 0.0 && self.depth_scale.is_finite()) {
            return Err(Error::Validation("depth_scale must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CloudFrame {
    Sensor,
    Vehicle,
    World,
}

/// Points with the linear index (`j·width + i`) of the depth pixel each
/// came from, which is the correspondence key between aligned clouds.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
    pub pixels: Vec<u32>,
    pub frame: CloudFrame,
}

impl PointCloud {
    pub fn empty(frame: CloudFrame) -> Self {
        Self {
            points: Vec::new(),
            pixels: Vec::new(),
            frame,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn to_vehicle(&self, mount: &SensorMount) -> Result<Self> {
        if self.frame != CloudFrame::Sensor {
            return Err(Error::Argument("cloud is not in the sensor frame".into()));
        }
        Ok(Self {
            points: self.points.iter().map(|p| mount.optical_to_vehicle(*p)).collect(),
            pixels: self.pixels.clone(),
            frame: CloudFrame::Vehicle,
        })
    }

    pub fn to_world(&self, pose: &Pose) -> Result<Self> {
        if self.frame != CloudFrame::Vehicle {
            return Err(Error::Argument("cloud is not in the vehicle frame".into()));
        }
        Ok(Self {
            points: self.points.iter().map(|p| pose.transform_point(*p)).collect(),
            pixels: self.pixels.clone(),
            frame: CloudFrame::World,
        })
    }

    /// Keep points whose predicate holds.
    pub fn filtered(&self, mut keep: impl FnMut(&[f64; 3]) -> bool) -> Self {
        let mut out = Self::empty(self.frame);
        for (p, k) in self.points.iter().zip(&self.pixels) {
            if keep(p) {
                out.points.push(*p);
                out.pixels.push(*k);
            }
        }
        out
    }
}

/// Reproject a depth image: `x = (i − c_x)·z/f_x`, `y = (j − c_y)·z/f_y`,
/// `z = depth(i, j)`, dropping returns below `min_range` and sentinels.
pub fn depth_to_cloud(
    depth: &DepthImage,
    intrinsics: &CameraIntrinsics,
    min_range: f64,
) -> Result<PointCloud> {
    if depth.width != intrinsics.width || depth.height != intrinsics.height {
        return Err(Error::Argument(format!(
            "depth image {}x{} does not match intrinsics {}x{}",
            depth.width, depth.height, intrinsics.width, intrinsics.height
        )));
    }
    let mut cloud = PointCloud::empty(CloudFrame::Sensor);
    let w = depth.width as usize;
    for (k, &d) in depth.data.iter().enumerate() {
        if !depth.is_valid(d) {
            continue;
        }
        let z = f64::from(d);
        if z < min_range {
            continue;
        }
        let i = (k % w) as f64;
        let j = (k / w) as f64;
        cloud.points.push(intrinsics.unproject(i, j, z));
        cloud.pixels.push(k as u32);
    }
    Ok(cloud)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn principal_ray_and_unit_offset() {
        let k = CameraIntrinsics::tof_default();
        let mut d = DepthImage::sentinel_filled(256, 192, 5.0);
        d.set(128, 96, 2.5);
        let c = depth_to_cloud(&d, &k, 0.0).unwrap();
        assert_eq!(c.points, vec![[0.0, 0.0, 2.5]]);
        assert_eq!(c.pixels, vec![96 * 256 + 128]);

        let k = CameraIntrinsics::new(100.0, 100.0, 50.0, 40.0, 200, 80).unwrap();
        let mut d = DepthImage::sentinel_filled(200, 80, 5.0);
        d.set(150, 40, 1.0);
        let c = depth_to_cloud(&d, &k, 0.0).unwrap();
        assert_eq!(c.points, vec![[1.0, 0.0, 1.0]]);
    }

    #[test]
    fn sentinel_and_min_range_excluded() {
        let k = CameraIntrinsics::tof_default();
        let mut d = DepthImage::sentinel_filled(256, 192, 5.0);
        assert!(depth_to_cloud(&d, &k, 0.1).unwrap().is_empty());
        d.set(3, 3, 0.05);
        assert!(depth_to_cloud(&d, &k, 0.1).unwrap().is_empty());
    }

    #[test]
    fn dimension_mismatch() {
        let d = DepthImage::sentinel_filled(10, 10, 5.0);
        assert!(matches!(
            depth_to_cloud(&d, &CameraIntrinsics::tof_default(), 0.0),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn principal_point_must_be_inside() {
        assert!(CameraIntrinsics::new(100.0, 100.0, 300.0, 10.0, 256, 192).is_err());
        assert!(CameraIntrinsics::new(0.0, 100.0, 10.0, 10.0, 256, 192).is_err());
    }

    #[test]
    fn mount_round_trip() {
        let m = SensorMount::new(0.12, 0.01, 0.12);
        let pose = Pose::planar(1.0, 2.0, 0.7);
        let p = [0.3, -0.2, 1.7];
        let w = m.optical_to_world(&pose, p);
        let back = m.world_to_optical(&pose, w);
        for a in 0..3 {
            assert!((back[a] - p[a]).abs() < 1e-12);
        }
        // Optical z is the vehicle's forward axis.
        let f = m.optical_to_vehicle([0.0, 0.0, 1.0]);
        assert_eq!(f, [1.12, 0.01, 0.12]);
    }

    proptest! {
        #[test]
        fn reprojection_round_trip(i in 0u32..256, j in 0u32..192, z in 0.1f64..5.0) {
            let k = CameraIntrinsics::tof_default();
            let p = k.unproject(f64::from(i), f64::from(j), z);
            let uv = k.project(p).unwrap();
            prop_assert!((uv[0] - f64::from(i)).abs() < 1e-6);
            prop_assert!((uv[1] - f64::from(j)).abs() < 1e-6);
            prop_assert!((p[2] - z).abs() < 1e-12);
        }
    }
}
