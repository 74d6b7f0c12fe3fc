//! Top-down raster of the track's Frénet coordinates.
//!
//! Rendering needs the lane-marking class of every floor hit and the ADS
//! needs a cheap "is this point near the driving corridor" test; both
//! reduce to a lookup of the nearest-centerline lateral offset and arc
//! position, precomputed once per scenario.

use crate::world::Track;

/// Cell edge in meters.
pub const FLOOR_RESOLUTION: f64 = 0.01;

/// Center dashes: painted length and period along the arc.
const DASH_LENGTH: f64 = 0.075;
const DASH_PERIOD: f64 = 0.15;
const DASH_HALF_WIDTH: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Marking {
    None,
    Margin,
    CenterDash,
}

#[derive(Debug, Clone)]
pub struct FloorMap {
    width_cells: usize,
    height_cells: usize,
    /// Signed lateral offset per cell; NaN beyond the mapped band.
    lateral: Vec<f32>,
    arc: Vec<f32>,
    lane_half_width: f64,
    margin_width: f64,
    has_center_dots: bool,
    band: f64,
}

impl FloorMap {
    /// Rasterize every cell within `band` meters of the centerline.
    pub fn build(track: &Track, room_size: [f64; 2], band: f64) -> Self {
        let width_cells = (room_size[0] / FLOOR_RESOLUTION).ceil() as usize;
        let height_cells = (room_size[1] / FLOOR_RESOLUTION).ceil() as usize;
        let mut lateral = vec![f32::NAN; width_cells * height_cells];
        let mut arc = vec![f32::NAN; width_cells * height_cells];
        let mut best = vec![f64::INFINITY; width_cells * height_cells];

        let pts = track.table_points();
        let cum = track.table_cum();
        let length = track.length();
        // Coarser stride over the dense table keeps the build cheap.
        let stride = 2usize;
        let mut i = 0;
        while i + 1 < pts.len() {
            let j = (i + stride).min(pts.len() - 1);
            let a = pts[i];
            let b = pts[j];
            let (s0, s1) = (cum[i], cum[j]);
            let ab = [b[0] - a[0], b[1] - a[1]];
            let len2 = ab[0] * ab[0] + ab[1] * ab[1];
            let len = len2.sqrt();
            let x0 = ((a[0].min(b[0]) - band) / FLOOR_RESOLUTION).floor().max(0.0) as usize;
            let x1 = (((a[0].max(b[0]) + band) / FLOOR_RESOLUTION).ceil() as usize).min(width_cells);
            let y0 = ((a[1].min(b[1]) - band) / FLOOR_RESOLUTION).floor().max(0.0) as usize;
            let y1 = (((a[1].max(b[1]) + band) / FLOOR_RESOLUTION).ceil() as usize).min(height_cells);
            for cy in y0..y1 {
                let py = (cy as f64 + 0.5) * FLOOR_RESOLUTION;
                for cx in x0..x1 {
                    let px = (cx as f64 + 0.5) * FLOOR_RESOLUTION;
                    let u = if len2 > 0.0 {
                        (((px - a[0]) * ab[0] + (py - a[1]) * ab[1]) / len2).clamp(0.0, 1.0)
                    } else {
                        0.0
                    };
                    let qx = a[0] + u * ab[0];
                    let qy = a[1] + u * ab[1];
                    let d2 = (px - qx).powi(2) + (py - qy).powi(2);
                    let k = cy * width_cells + cx;
                    if d2 < best[k] && d2 <= band * band {
                        best[k] = d2;
                        let cross = if len > 0.0 {
                            (ab[0] * (py - a[1]) - ab[1] * (px - a[0])) / len
                        } else {
                            0.0
                        };
                        let d = d2.sqrt();
                        lateral[k] = if cross < 0.0 { -d } else { d } as f32;
                        let mut s = s0 + u * (s1 - s0);
                        if s >= length {
                            s -= length;
                        }
                        arc[k] = s as f32;
                    }
                }
            }
            i = j;
        }

        Self {
            width_cells,
            height_cells,
            lateral,
            arc,
            lane_half_width: track.lane_half_width,
            margin_width: track.margin_width,
            has_center_dots: track.has_center_dots,
            band,
        }
    }

    fn cell(&self, p: [f64; 2]) -> Option<usize> {
        if p[0] < 0.0 || p[1] < 0.0 {
            return None;
        }
        let cx = (p[0] / FLOOR_RESOLUTION) as usize;
        let cy = (p[1] / FLOOR_RESOLUTION) as usize;
        (cx < self.width_cells && cy < self.height_cells).then(|| cy * self.width_cells + cx)
    }

    /// (lateral, arc) of the nearest centerline point, when within the band.
    pub fn frenet(&self, p: [f64; 2]) -> Option<(f64, f64)> {
        let k = self.cell(p)?;
        let lat = self.lateral[k];
        (!lat.is_nan()).then(|| (f64::from(lat), f64::from(self.arc[k])))
    }

    pub fn band(&self) -> f64 {
        self.band
    }

    pub fn marking(&self, p: [f64; 2]) -> Marking {
        let Some((lat, arc)) = self.frenet(p) else {
            return Marking::None;
        };
        let a = lat.abs();
        if a >= self.lane_half_width && a <= self.lane_half_width + self.margin_width {
            return Marking::Margin;
        }
        if self.has_center_dots && a <= DASH_HALF_WIDTH && arc.rem_euclid(DASH_PERIOD) < DASH_LENGTH {
            return Marking::CenterDash;
        }
        Marking::None
    }
}
