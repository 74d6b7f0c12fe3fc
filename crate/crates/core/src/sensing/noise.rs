use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;

use super::{DepthImage, RgbImage};
use crate::plant::{GapProfile, PerceptionGap};

/// Frames that can carry pseudo-real sensor noise.
pub trait NoisyFrame: Sized {
    fn with_noise(&self, gap: &PerceptionGap, seed: u64) -> Self;
}

impl NoisyFrame for RgbImage {
    fn with_noise(&self, gap: &PerceptionGap, seed: u64) -> Self {
        apply_rgb_noise(self, gap, seed)
    }
}

impl NoisyFrame for DepthImage {
    fn with_noise(&self, gap: &PerceptionGap, seed: u64) -> Self {
        apply_depth_noise(self, gap, seed)
    }
}

/// Apply the perception part of `gap` to an RGB or depth frame.
pub fn apply_sensor_noise<F: NoisyFrame>(frame: &F, gap: &GapProfile, seed: u64) -> F {
    frame.with_noise(&gap.perception, seed)
}

/// Additive Gaussian noise per channel plus an exposure offset, rounded and
/// clamped to 8 bits. Every pixel consumes three normal draws regardless of
/// content, so equal seeds give equal noise fields for different scenes.
pub fn apply_rgb_noise(img: &RgbImage, gap: &PerceptionGap, seed: u64) -> RgbImage {
    if gap.rgb_is_zero() {
        return img.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = img.clone();
    for px in out.data.chunks_exact_mut(3) {
        for (c, v) in px.iter_mut().enumerate() {
            let n: f64 = rng.sample(StandardNormal);
            let noisy = f64::from(*v) + gap.exposure_offset + gap.rgb_sigma[c] * n;
            *v = noisy.round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

/// Gaussian noise on valid returns and Bernoulli dropout to the sentinel.
/// Each pixel consumes one normal and one uniform draw.
pub fn apply_depth_noise(depth: &DepthImage, gap: &PerceptionGap, seed: u64) -> DepthImage {
    if gap.depth_is_zero() {
        return depth.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sentinel = depth.sentinel();
    let max = depth.max_range;
    let mut out = depth.clone();
    for d in out.data.iter_mut() {
        let n: f64 = rng.sample(StandardNormal);
        let u: f64 = rng.random();
        if *d > max {
            continue;
        }
        if u < gap.depth_dropout {
            *d = sentinel;
        } else {
            let v = f64::from(*d) + gap.depth_sigma * n;
            *d = (v as f32).clamp(0.0, max);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_std(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, var.sqrt())
    }

    #[test]
    fn zero_profile_is_identity() {
        let img = RgbImage::filled(64, 48, [10, 200, 99]);
        assert_eq!(apply_sensor_noise(&img, &GapProfile::zero(), 7), img);
        let mut d = DepthImage::sentinel_filled(16, 16, 5.0);
        d.set(3, 4, 1.25);
        assert_eq!(apply_sensor_noise(&d, &GapProfile::zero(), 7), d);
    }

    #[test]
    fn rgb_noise_statistics() {
        let img = RgbImage::filled(400, 300, [128, 128, 128]);
        let gap = PerceptionGap {
            rgb_sigma: [10.0; 3],
            ..Default::default()
        };
        let out = apply_rgb_noise(&img, &gap, 42);
        let v: Vec<f64> = out.data.iter().map(|b| f64::from(*b)).collect();
        assert!(v.len() >= 100_000);
        let (m, s) = mean_std(&v);
        assert!((m - 128.0).abs() < 1.0, "mean {m}");
        assert!((s - 10.0).abs() < 1.0, "std {s}");
    }

    #[test]
    fn depth_dropout_rate() {
        let d = DepthImage::new(400, 300, 5.0, vec![2.0; 120_000]).unwrap();
        let gap = PerceptionGap {
            depth_dropout: 0.1,
            ..Default::default()
        };
        let out = apply_depth_noise(&d, &gap, 3);
        let dropped = out.data.iter().filter(|v| **v > 5.0).count() as f64;
        let rate = dropped / 120_000.0;
        assert!((rate - 0.1).abs() < 0.01, "rate {rate}");
    }

    #[test]
    fn sentinels_untouched_and_range_kept() {
        let mut d = DepthImage::sentinel_filled(50, 50, 5.0);
        for i in 0..50 {
            d.set(i, 0, 4.99);
        }
        let gap = PerceptionGap {
            depth_sigma: 0.5,
            ..Default::default()
        };
        let out = apply_depth_noise(&d, &gap, 1);
        for (a, b) in d.data.iter().zip(&out.data) {
            if *a > 5.0 {
                assert_eq!(a, b);
            } else {
                assert!(*b >= 0.0 && *b <= 5.0);
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let img = RgbImage::filled(32, 32, [90, 90, 90]);
        let gap = PerceptionGap {
            rgb_sigma: [4.0, 5.0, 6.0],
            exposure_offset: 3.0,
            ..Default::default()
        };
        assert_eq!(apply_rgb_noise(&img, &gap, 9), apply_rgb_noise(&img, &gap, 9));
        assert_ne!(apply_rgb_noise(&img, &gap, 9), apply_rgb_noise(&img, &gap, 10));
    }
}
