use crate::error::{Error, Result};

/// 8-bit RGB, row-major, 3 bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

/// 8-bit RGBA, row-major, 4 bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbaImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

/// Planar z-depth in meters. Values above `max_range` mean "no return".
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: u32,
    pub height: u32,
    pub max_range: f32,
    pub data: Vec<f32>,
}

fn check_len(width: u32, height: u32, channels: usize, len: usize) -> Result<()> {
    let expected = width as usize * height as usize * channels;
    if len != expected {
        return Err(Error::Argument(format!(
            "buffer length {len} does not match {width}x{height}x{channels}"
        )));
    }
    Ok(())
}

impl RgbImage {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        check_len(width, height, 3, data.len())?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let n = width as usize * height as usize;
        Self {
            width,
            height,
            data: rgb.iter().copied().cycle().take(n * 3).collect(),
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn get(&self, i: u32, j: u32) -> [u8; 3] {
        let k = (j as usize * self.width as usize + i as usize) * 3;
        [self.data[k], self.data[k + 1], self.data[k + 2]]
    }

    pub fn set(&mut self, i: u32, j: u32, rgb: [u8; 3]) {
        let k = (j as usize * self.width as usize + i as usize) * 3;
        self.data[k..k + 3].copy_from_slice(&rgb);
    }

    /// Integer luma, `(77 R + 150 G + 29 B + 128) >> 8`.
    pub fn luma(&self) -> Vec<u8> {
        self.data
            .chunks_exact(3)
            .map(|p| {
                ((77 * u32::from(p[0]) + 150 * u32::from(p[1]) + 29 * u32::from(p[2]) + 128) >> 8)
                    as u8
            })
            .collect()
    }

    pub fn same_shape(&self, other: &RgbImage) -> bool {
        self.width == other.width && self.height == other.height
    }
}

impl RgbaImage {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        check_len(width, height, 4, data.len())?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Fully transparent black image.
    pub fn transparent(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0; width as usize * height as usize * 4],
        }
    }

    pub fn get(&self, i: u32, j: u32) -> [u8; 4] {
        let k = (j as usize * self.width as usize + i as usize) * 4;
        [self.data[k], self.data[k + 1], self.data[k + 2], self.data[k + 3]]
    }

    pub fn alpha(&self, i: u32, j: u32) -> u8 {
        self.get(i, j)[3]
    }

    /// Drop alpha; transparent pixels keep whatever color they carry.
    pub fn to_rgb(&self) -> RgbImage {
        RgbImage {
            width: self.width,
            height: self.height,
            data: self
                .data
                .chunks_exact(4)
                .flat_map(|p| [p[0], p[1], p[2]])
                .collect(),
        }
    }
}

impl DepthImage {
    pub fn new(width: u32, height: u32, max_range: f32, data: Vec<f32>) -> Result<Self> {
        check_len(width, height, 1, data.len())?;
        if !(max_range > 0.0 && max_range.is_finite()) {
            return Err(Error::Argument("max_range must be positive".into()));
        }
        if data.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::Argument("depth values must be finite and non-negative".into()));
        }
        Ok(Self {
            width,
            height,
            max_range,
            data,
        })
    }

    pub fn sentinel_filled(width: u32, height: u32, max_range: f32) -> Self {
        Self {
            width,
            height,
            max_range,
            data: vec![max_range + 1.0; width as usize * height as usize],
        }
    }

    pub fn sentinel(&self) -> f32 {
        self.max_range + 1.0
    }

    pub fn is_valid(&self, d: f32) -> bool {
        d <= self.max_range
    }

    pub fn get(&self, i: u32, j: u32) -> f32 {
        self.data[j as usize * self.width as usize + i as usize]
    }

    pub fn set(&mut self, i: u32, j: u32, d: f32) {
        let k = j as usize * self.width as usize + i as usize;
        self.data[k] = d;
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|d| self.is_valid(**d)).count()
    }

    /// Rescale raw readings into meters; returns beyond range become sentinel.
    pub fn scaled(&self, factor: f32) -> Self {
        let sentinel = self.sentinel();
        Self {
            data: self
                .data
                .iter()
                .map(|&d| {
                    let v = d * factor;
                    if self.is_valid(d) && v <= self.max_range {
                        v
                    } else {
                        sentinel
                    }
                })
                .collect(),
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn buffer_length_checked() {
        assert!(RgbImage::new(2, 2, vec![0; 11]).is_err());
        assert!(RgbaImage::new(2, 2, vec![0; 16]).is_ok());
        assert!(DepthImage::new(2, 1, 5.0, vec![1.0, f32::NAN]).is_err());
    }

    #[test]
    fn luma_of_primaries() {
        let img = RgbImage::new(3, 1, vec![255, 0, 0, 0, 255, 0, 255, 255, 255]).unwrap();
        assert_eq!(img.luma(), vec![77, 149, 255]);
    }

    #[test]
    fn scaling_keeps_sentinels() {
        let d = DepthImage::new(3, 1, 5.0, vec![1.0, 6.0, 4.0]).unwrap();
        let s = d.scaled(1.5);
        assert_eq!(s.data, vec![1.5, 6.0, 6.0]);
    }
}
