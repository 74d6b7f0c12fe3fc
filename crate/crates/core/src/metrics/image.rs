//! Image similarity battery.
//!
//! Frozen definitions: correlation, MSE, PSNR and SSIM are averaged over the
//! three channels; every other metric works on BT.601 luma. SSIM uses
//! sliding 8×8 uniform windows with K1 = 0.01 and K2 = 0.03. Histograms have
//! 256 bins. LBP uses the 8-neighbor uniform code (59 bins). The GLCM is
//! symmetric at distance 1 over 0°, 45°, 90° and 135° on 16 gray levels, and
//! its contrast, homogeneity and energy are compared by cosine similarity.
//! The fractal dimension is a box-counting estimate over Sobel edges, and
//! the Wasserstein distance is the 1-D earth mover's distance between luma
//! histograms in gray levels.

use std::path::Path;
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sensing::io::write_ppm;
use crate::sensing::RgbImage;

pub const SSIM_WINDOW: usize = 8;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const GLCM_LEVELS: usize = 16;
pub const EDGE_THRESHOLD: f64 = 100.0;
const KL_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageMetricReport {
    pub correlation: f64,
    pub histogram_intersection: f64,
    pub lbp_similarity: f64,
    /// dB; infinite for identical images.
    pub psnr: f64,
    pub ssim: f64,
    pub nmi: f64,
    pub fractal_dimension_delta: f64,
    pub kl_divergence: f64,
    pub mse: f64,
    pub glcm_similarity: f64,
    pub wasserstein: f64,
    pub perceptual_distance: Option<f64>,
}

impl ImageMetricReport {
    pub const NAMES: [&'static str; 12] = [
        "correlation",
        "histogram_intersection",
        "lbp_similarity",
        "psnr",
        "ssim",
        "nmi",
        "fractal_dimension_delta",
        "kl_divergence",
        "mse",
        "glcm_similarity",
        "wasserstein",
        "perceptual_distance",
    ];

    /// Values in the order of [`Self::NAMES`]; a missing plugin value is NaN.
    pub fn values(&self) -> [f64; 12] {
        [
            self.correlation,
            self.histogram_intersection,
            self.lbp_similarity,
            self.psnr,
            self.ssim,
            self.nmi,
            self.fractal_dimension_delta,
            self.kl_divergence,
            self.mse,
            self.glcm_similarity,
            self.wasserstein,
            self.perceptual_distance.unwrap_or(f64::NAN),
        ]
    }
}

fn channel(img: &RgbImage, c: usize) -> Vec<f64> {
    img.data.iter().skip(c).step_by(3).map(|v| f64::from(*v)).collect()
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return if a == b { 1.0 } else { 0.0 };
    }
    sab / (saa * sbb).sqrt()
}

/// Summed-area table with one row and column of zero padding.
struct Integral {
    w: usize,
    s: Vec<f64>,
}

impl Integral {
    fn new(v: &[f64], w: usize, h: usize) -> Self {
        let mut s = vec![0.0; (w + 1) * (h + 1)];
        for j in 0..h {
            let mut row = 0.0;
            for i in 0..w {
                row += v[j * w + i];
                s[(j + 1) * (w + 1) + i + 1] = s[j * (w + 1) + i + 1] + row;
            }
        }
        Self { w: w + 1, s }
    }

    fn sum(&self, i: usize, j: usize, ww: usize, wh: usize) -> f64 {
        let w = self.w;
        self.s[(j + wh) * w + i + ww] - self.s[j * w + i + ww] - self.s[(j + wh) * w + i]
            + self.s[j * w + i]
    }
}

fn ssim_channel(a: &[f64], b: &[f64], w: usize, h: usize) -> f64 {
    let c1 = (SSIM_K1 * 255.0).powi(2);
    let c2 = (SSIM_K2 * 255.0).powi(2);
    let ww = SSIM_WINDOW.min(w);
    let wh = SSIM_WINDOW.min(h);
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let aa: Vec<f64> = a.iter().map(|x| x * x).collect();
    let bb: Vec<f64> = b.iter().map(|x| x * x).collect();
    let (ia, ib) = (Integral::new(a, w, h), Integral::new(b, w, h));
    let (iab, iaa, ibb) = (Integral::new(&ab, w, h), Integral::new(&aa, w, h), Integral::new(&bb, w, h));
    let n = (ww * wh) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for j in 0..=h - wh {
        for i in 0..=w - ww {
            let ma = ia.sum(i, j, ww, wh) / n;
            let mb = ib.sum(i, j, ww, wh) / n;
            let va = (iaa.sum(i, j, ww, wh) / n - ma * ma).max(0.0);
            let vb = (ibb.sum(i, j, ww, wh) / n - mb * mb).max(0.0);
            let cov = iab.sum(i, j, ww, wh) / n - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    total / count as f64
}

/// Mean SSIM over channels.
pub fn ssim(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    check_shape(a, b)?;
    if a.data == b.data {
        return Ok(1.0);
    }
    let (w, h) = (a.width as usize, a.height as usize);
    Ok((0..3)
        .map(|c| ssim_channel(&channel(a, c), &channel(b, c), w, h))
        .sum::<f64>()
        / 3.0)
}

pub fn mse(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    check_shape(a, b)?;
    Ok(a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (f64::from(*x) - f64::from(*y)).powi(2))
        .sum::<f64>()
        / a.data.len() as f64)
}

fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0f64 * 255.0 / mse).log10()
    }
}

fn histogram(luma: &[u8]) -> [f64; 256] {
    let mut h = [0.0; 256];
    for v in luma {
        h[*v as usize] += 1.0;
    }
    let n = luma.len() as f64;
    h.map(|c| c / n)
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|v| **v > 0.0).map(|v| v * v.ln()).sum::<f64>()
}

fn nmi(a: &[u8], b: &[u8]) -> f64 {
    let mut joint = vec![0.0; 256 * 256];
    for (x, y) in a.iter().zip(b) {
        joint[*x as usize * 256 + *y as usize] += 1.0;
    }
    let n = a.len() as f64;
    joint.iter_mut().for_each(|v| *v /= n);
    let (ha, hb) = (entropy(&histogram(a)), entropy(&histogram(b)));
    let hab = entropy(&joint);
    if ha + hb == 0.0 {
        return 1.0;
    }
    2.0 * (ha + hb - hab) / (ha + hb)
}

fn kl(p: &[f64; 256], q: &[f64; 256]) -> f64 {
    let norm = 1.0 + 256.0 * KL_EPS;
    p.iter()
        .zip(q)
        .map(|(a, b)| {
            let (a, b) = ((a + KL_EPS) / norm, (b + KL_EPS) / norm);
            a * (a / b).ln()
        })
        .sum::<f64>()
        .max(0.0)
}

fn wasserstein(p: &[f64; 256], q: &[f64; 256]) -> f64 {
    let mut cp = 0.0;
    let mut cq = 0.0;
    let mut total = 0.0;
    for k in 0..256 {
        cp += p[k];
        cq += q[k];
        total += (cp - cq).abs();
    }
    total
}

/// Uniform LBP code of every interior pixel; 58 uniform patterns plus one
/// bin for the rest.
fn lbp_histogram(luma: &[u8], w: usize, h: usize) -> Vec<f64> {
    let mut table = [58u8; 256];
    let mut next = 0u8;
    for code in 0..=255u8 {
        if (code ^ code.rotate_left(1)).count_ones() <= 2 {
            table[code as usize] = next;
            next += 1;
        }
    }
    let mut hist = vec![0.0; 59];
    if w < 3 || h < 3 {
        return hist;
    }
    let offsets: [(isize, isize); 8] = [(-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0)];
    for j in 1..h - 1 {
        for i in 1..w - 1 {
            let c = luma[j * w + i];
            let mut code = 0u8;
            for (bit, (dx, dy)) in offsets.iter().enumerate() {
                let v = luma[(j as isize + dy) as usize * w + (i as isize + dx) as usize];
                if v >= c {
                    code |= 1 << bit;
                }
            }
            hist[table[code as usize] as usize] += 1.0;
        }
    }
    let n = ((w - 2) * (h - 2)) as f64;
    hist.iter_mut().for_each(|v| *v /= n);
    hist
}

fn intersection(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| a.min(*b)).sum()
}

/// Contrast, homogeneity and energy of the symmetric normalized GLCM,
/// averaged over the four angles.
fn glcm_features(luma: &[u8], w: usize, h: usize) -> [f64; 3] {
    let l = GLCM_LEVELS;
    let q: Vec<usize> = luma.iter().map(|v| *v as usize * l / 256).collect();
    let mut feats = [0.0; 3];
    let offsets: [(isize, isize); 4] = [(1, 0), (1, -1), (0, -1), (-1, -1)];
    for (dx, dy) in offsets {
        let mut m = vec![0.0; l * l];
        let mut total = 0.0;
        for j in 0..h as isize {
            for i in 0..w as isize {
                let (x, y) = (i + dx, j + dy);
                if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
                    continue;
                }
                let a = q[(j as usize) * w + i as usize];
                let b = q[(y as usize) * w + x as usize];
                m[a * l + b] += 1.0;
                m[b * l + a] += 1.0;
                total += 2.0;
            }
        }
        if total == 0.0 {
            continue;
        }
        for a in 0..l {
            for b in 0..l {
                let p = m[a * l + b] / total;
                let d = a as f64 - b as f64;
                feats[0] += p * d * d;
                feats[1] += p / (1.0 + d * d);
                feats[2] += p * p;
            }
        }
    }
    feats[2] = (feats[2] / 4.0).sqrt();
    feats[0] /= 4.0;
    feats[1] /= 4.0;
    feats
}

fn cosine(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return if na == nb { 1.0 } else { 0.0 };
    }
    dot / (na * nb)
}

/// Sobel edge mask of the luma image.
fn edges(luma: &[u8], w: usize, h: usize) -> Vec<bool> {
    let mut out = vec![false; w * h];
    if w < 3 || h < 3 {
        return out;
    }
    let at = |i: usize, j: usize| f64::from(luma[j * w + i]);
    for j in 1..h - 1 {
        for i in 1..w - 1 {
            let gx = at(i + 1, j - 1) + 2.0 * at(i + 1, j) + at(i + 1, j + 1)
                - at(i - 1, j - 1)
                - 2.0 * at(i - 1, j)
                - at(i - 1, j + 1);
            let gy = at(i - 1, j + 1) + 2.0 * at(i, j + 1) + at(i + 1, j + 1)
                - at(i - 1, j - 1)
                - 2.0 * at(i, j - 1)
                - at(i + 1, j - 1);
            out[j * w + i] = gx.hypot(gy) > EDGE_THRESHOLD;
        }
    }
    out
}

/// Box-counting dimension of an edge mask: least-squares slope of
/// log N(s) against log(1/s) for box sizes 2, 4, 8, …; 0 without edges.
pub fn fractal_dimension(mask: &[bool], w: usize, h: usize) -> f64 {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut s = 2;
    while s <= w.min(h) / 2 {
        let mut count = 0usize;
        for by in (0..h).step_by(s) {
            for bx in (0..w).step_by(s) {
                let hit = (by..(by + s).min(h))
                    .any(|j| (bx..(bx + s).min(w)).any(|i| mask[j * w + i]));
                count += usize::from(hit);
            }
        }
        if count > 0 {
            xs.push((1.0 / s as f64).ln());
            ys.push((count as f64).ln());
        }
        s *= 2;
    }
    if xs.len() < 2 {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn check_shape(a: &RgbImage, b: &RgbImage) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::Argument(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    if a.data.is_empty() {
        return Err(Error::Argument("empty image".into()));
    }
    Ok(())
}

/// The eleven built-in metrics; the perceptual slot stays empty.
pub fn image_battery(a: &RgbImage, b: &RgbImage) -> Result<ImageMetricReport> {
    check_shape(a, b)?;
    let (w, h) = (a.width as usize, a.height as usize);
    let correlation = (0..3).map(|c| pearson(&channel(a, c), &channel(b, c))).sum::<f64>() / 3.0;
    let mse = mse(a, b)?;
    let (la, lb) = (a.luma(), b.luma());
    let (ha, hb) = (histogram(&la), histogram(&lb));
    let ea = edges(&la, w, h);
    let eb = edges(&lb, w, h);
    Ok(ImageMetricReport {
        correlation,
        histogram_intersection: intersection(&ha, &hb),
        lbp_similarity: intersection(&lbp_histogram(&la, w, h), &lbp_histogram(&lb, w, h)),
        psnr: psnr_from_mse(mse),
        ssim: ssim(a, b)?,
        nmi: nmi(&la, &lb),
        fractal_dimension_delta: (fractal_dimension(&ea, w, h) - fractal_dimension(&eb, w, h)).abs(),
        kl_divergence: kl(&ha, &hb),
        mse,
        glcm_similarity: cosine(&glcm_features(&la, w, h), &glcm_features(&lb, w, h)),
        wasserstein: wasserstein(&ha, &hb),
        perceptual_distance: None,
    })
}

/// Perceptual-distance plugin: runs `argv` with two PPM paths appended and
/// reads one number from its standard output.
pub fn perceptual_distance(argv: &[String], a: &RgbImage, b: &RgbImage) -> Result<f64> {
    check_shape(a, b)?;
    let (cmd, args) = argv
        .split_first()
        .ok_or_else(|| Error::Argument("empty plugin command".into()))?;
    let dir = tempfile::tempdir()?;
    let (pa, pb) = (dir.path().join("a.ppm"), dir.path().join("b.ppm"));
    write_ppm(&pa, a)?;
    write_ppm(&pb, b)?;
    let out = Command::new(cmd)
        .args(args)
        .arg(Path::new(&pa))
        .arg(Path::new(&pb))
        .output()
        .map_err(|e| Error::Startup(format!("cannot run {cmd}: {e}")))?;
    if !out.status.success() {
        return Err(Error::Protocol(format!("plugin exited with {}", out.status)));
    }
    String::from_utf8_lossy(&out.stdout)
        .trim()
        .parse()
        .map_err(|_| Error::Protocol("plugin did not print a number".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn gray(w: u32, h: u32, v: &[u8]) -> RgbImage {
        RgbImage::new(w, h, v.iter().flat_map(|x| [*x; 3]).collect()).unwrap()
    }

    fn textured(w: u32, h: u32) -> RgbImage {
        let mut img = RgbImage::filled(w, h, [0; 3]);
        for j in 0..h {
            for i in 0..w {
                let v = ((i * 7 + j * 13) % 200 + (i / 8 + j / 8) % 2 * 50) as u8;
                img.set(i, j, [v, v / 2 + 20, 255 - v]);
            }
        }
        img
    }

    fn noisy(img: &RgbImage, sigma: f64, seed: u64) -> RgbImage {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, sigma).unwrap();
        let data = img
            .data
            .iter()
            .map(|v| (f64::from(*v) + n.sample(&mut rng)).round().clamp(0.0, 255.0) as u8)
            .collect();
        RgbImage::new(img.width, img.height, data).unwrap()
    }

    #[test]
    fn identity_fixed_point() {
        let a = textured(40, 30);
        let r = image_battery(&a, &a).unwrap();
        assert_eq!(r.ssim, 1.0);
        assert_eq!(r.mse, 0.0);
        assert_eq!(r.kl_divergence, 0.0);
        assert_eq!(r.wasserstein, 0.0);
        assert!((r.correlation - 1.0).abs() < 1e-12);
        assert!((r.histogram_intersection - 1.0).abs() < 1e-12);
        assert!((r.lbp_similarity - 1.0).abs() < 1e-12);
        assert!((r.nmi - 1.0).abs() < 1e-12);
        assert!((r.glcm_similarity - 1.0).abs() < 1e-12);
        assert_eq!(r.fractal_dimension_delta, 0.0);
        assert!(r.psnr.is_infinite());
    }

    #[test]
    fn mse_by_hand() {
        let a = gray(2, 2, &[0, 0, 255, 255]);
        let b = gray(2, 2, &[0, 0, 0, 0]);
        assert_eq!(mse(&a, &b).unwrap(), 32512.5);
    }

    #[test]
    fn noise_ladder_is_monotone() {
        let a = textured(64, 48);
        let mut last_psnr = f64::INFINITY;
        let mut last_ssim = 1.0;
        for sigma in [5.0, 10.0, 20.0] {
            let r = image_battery(&a, &noisy(&a, sigma, 3)).unwrap();
            assert!(r.psnr.is_finite() && r.psnr < last_psnr);
            assert!(r.ssim < last_ssim);
            assert!(r.kl_divergence >= 0.0 && r.mse > 0.0);
            last_psnr = r.psnr;
            last_ssim = r.ssim;
        }
    }

    #[test]
    fn ssim_single_window_matches_formula() {
        // 8x8 gray images give exactly one window.
        let va: Vec<u8> = (0..64).map(|k| (k * 3) as u8).collect();
        let vb: Vec<u8> = (0..64).map(|k| (k * 3 + (k % 5) * 4) as u8).collect();
        let (fa, fb): (Vec<f64>, Vec<f64>) = (va.iter().map(|v| f64::from(*v)).collect(), vb.iter().map(|v| f64::from(*v)).collect());
        let ma = fa.iter().sum::<f64>() / 64.0;
        let mb = fb.iter().sum::<f64>() / 64.0;
        let va_ = fa.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / 64.0;
        let vb_ = fb.iter().map(|x| (x - mb).powi(2)).sum::<f64>() / 64.0;
        let cov = fa.iter().zip(&fb).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / 64.0;
        let (c1, c2) = (2.55f64.powi(2), 7.65f64.powi(2));
        let expected = ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va_ + vb_ + c2));
        let got = ssim(&gray(8, 8, &va), &gray(8, 8, &vb)).unwrap();
        assert!((got - expected).abs() < 1e-9);
    }

    #[test]
    fn wasserstein_of_shifted_constant() {
        let a = gray(4, 4, &[10; 16]);
        let b = gray(4, 4, &[13; 16]);
        assert!((image_battery(&a, &b).unwrap().wasserstein - 3.0).abs() < 1e-12);
    }

    #[test]
    fn full_box_dimension_is_two() {
        let (w, h) = (64, 64);
        assert!((fractal_dimension(&vec![true; w * h], w, h) - 2.0).abs() < 1e-9);
        let mut line = vec![false; w * h];
        for i in 0..w {
            line[20 * w + i] = true;
        }
        assert!((fractal_dimension(&line, w, h) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn mismatched_sizes_are_rejected() {
        assert!(image_battery(&textured(8, 8), &textured(9, 8)).is_err());
    }

    #[test]
    fn perceptual_plugin_reads_stdout() {
        let a = textured(8, 8);
        let argv = vec!["sh".to_string(), "-c".to_string(), "echo 0.25".to_string(), "plugin".to_string()];
        assert_eq!(perceptual_distance(&argv, &a, &a).unwrap(), 0.25);
    }
}
