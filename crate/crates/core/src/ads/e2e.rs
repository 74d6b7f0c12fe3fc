use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{ControlCommand, VehicleState};
use crate::sensing::{DepthImage, RgbImage};

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyInput {
    pub rgb: RgbImage,
    pub depth: Option<DepthImage>,
    pub timestamp: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub command: ControlCommand,
    pub event: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct E2eParams {
    pub steering_gain: f64,
    pub throttle: f64,
    /// Lane markings are pixels brighter than this on every channel.
    pub lane_threshold: u8,
    /// Obstacle blobs smaller than this many pixels are ignored.
    pub min_blob_px: usize,
    /// Steering added per unit of blob coverage of the lower two thirds.
    pub avoid_gain: f64,
}

impl Default for E2eParams {
    fn default() -> Self {
        Self {
            steering_gain: 2.5,
            throttle: 0.342,
            lane_threshold: 200,
            min_blob_px: 150,
            avoid_gain: 6.0,
        }
    }
}

impl E2eParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.steering_gain.is_finite() && self.avoid_gain.is_finite()) {
            return Err(Error::Validation("non-finite E2E gains".into()));
        }
        if !(0.0..=1.0).contains(&self.throttle) {
            return Err(Error::Validation("E2E throttle outside [0, 1]".into()));
        }
        Ok(())
    }
}

fn is_obstacle_color(px: &[u8]) -> bool {
    let (r, g, b) = (i32::from(px[0]), i32::from(px[1]), i32::from(px[2]));
    r > 140 && r > g + 60 && r > b + 80
}

/// Mean column of obstacle-colored pixels and their count, over rows below
/// the top third.
fn obstacle_blob(img: &RgbImage) -> Option<(f64, usize)> {
    let w = img.width as usize;
    let top = img.height as usize / 3;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (k, px) in img.data.chunks_exact(3).enumerate().skip(top * w) {
        if is_obstacle_color(px) {
            sum += (k % w) as f64;
            n += 1;
        }
    }
    (n > 0).then(|| (sum / n as f64, n))
}

/// Heuristic lane follower: steer toward the centroid of bright lane
/// marking pixels in the lower third of the image, nudged away from large
/// obstacle-colored blobs. Returns the previous command when no marking is
/// visible.
pub fn e2e_reference_policy(
    input: &PolicyInput,
    params: &E2eParams,
    last: &mut Option<ControlCommand>,
) -> PolicyOutput {
    let img = &input.rgb;
    let w = img.width as usize;
    let h = img.height as usize;
    let start = h - h / 3;
    let t = params.lane_threshold;
    let mut sum = 0.0;
    let mut n = 0usize;
    for j in start..h {
        for i in 0..w {
            let k = (j * w + i) * 3;
            if img.data[k] > t && img.data[k + 1] > t && img.data[k + 2] > t {
                sum += i as f64;
                n += 1;
            }
        }
    }
    if n == 0 {
        let command = last.map_or_else(ControlCommand::default, |c| ControlCommand {
            timestamp: input.timestamp,
            ..c
        });
        *last = Some(command);
        return PolicyOutput {
            command,
            event: Some("perception_loss".into()),
        };
    }
    let half = w as f64 / 2.0;
    let q = sum / n as f64 - (w as f64 - 1.0) / 2.0;
    let mut steering = params.steering_gain * q / half;
    if let Some((col, count)) = obstacle_blob(img) {
        if count >= params.min_blob_px {
            let coverage = count as f64 / (w * (h - h / 3)) as f64;
            let side = if col >= (w as f64 - 1.0) / 2.0 { -1.0 } else { 1.0 };
            steering += side * params.avoid_gain * coverage;
        }
    }
    let command = ControlCommand {
        throttle: params.throttle,
        steering: steering.clamp(-1.0, 1.0),
        brake: 0.0,
        timestamp: input.timestamp,
    };
    *last = Some(command);
    PolicyOutput {
        command,
        event: None,
    }
}

/// State line sent to external policies: `x y yaw speed timestamp`.
pub fn state_line(state: &VehicleState) -> String {
    let p = state.pose;
    format!("{} {} {} {} {}", p.x, p.y, p.yaw, state.speed, p.timestamp)
}
