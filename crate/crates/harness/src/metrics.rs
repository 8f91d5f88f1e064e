//! PSNR and SSIM on the 8-bit scale, on RGB or on BT.601 luma.

use std::fmt;
use std::path::PathBuf;

use crate::error::{HarnessError, Result};
use crate::image::{rgb_to_y, ImageF64, ImageU8};

/// Reported PSNR for identical images.
pub const PSNR_CAP: f64 = 100.0;

const PEAK: f64 = 255.0;
const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelMode {
    /// Luma only; RGB inputs are converted, gray inputs used as is.
    Y,
    /// Every stored channel.
    Rgb,
}

impl fmt::Display for ChannelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChannelMode::Y => "Y",
            ChannelMode::Rgb => "RGB",
        })
    }
}

/// Converts to the measured channels and removes `crop` pixels per side.
pub fn prepare(img: &ImageU8, mode: ChannelMode, crop: usize) -> Result<ImageF64> {
    let f = match mode {
        ChannelMode::Y if img.channels == 3 => rgb_to_y(img)?,
        _ => img.to_float(),
    };
    if crop == 0 {
        Ok(f)
    } else {
        f.crop(crop)
    }
}

fn same_shape(a: &ImageF64, b: &ImageF64) -> Result<()> {
    if (a.height, a.width, a.channels) != (b.height, b.width, b.channels) {
        return Err(HarnessError::Shape(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.height, a.width, a.channels, b.height, b.width, b.channels
        )));
    }
    Ok(())
}

/// `10·log10(255² / MSE)`, capped at [`PSNR_CAP`].
pub fn psnr_f64(a: &ImageF64, b: &ImageF64) -> Result<f64> {
    same_shape(a, b)?;
    let mse = a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.data.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (PEAK * PEAK / mse).log10()).min(PSNR_CAP))
}

fn gaussian_window() -> [f64; WINDOW] {
    let mut w = [0.0; WINDOW];
    let r = (WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-d * d / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Separable Gaussian filter over the valid region of one channel.
fn filter_valid(plane: &[f64], h: usize, w: usize, g: &[f64; WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h + 1 - WINDOW, w + 1 - WINDOW);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..WINDOW).map(|k| g[k] * plane[y * w + x + k]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..WINDOW).map(|k| g[k] * rows[(y + k) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM over valid window positions and channels.
pub fn ssim_f64(a: &ImageF64, b: &ImageF64) -> Result<f64> {
    same_shape(a, b)?;
    let (h, w, c) = (a.height, a.width, a.channels);
    if h < WINDOW || w < WINDOW {
        return Err(HarnessError::Shape(format!(
            "SSIM needs at least {WINDOW}x{WINDOW} pixels, got {h}x{w}"
        )));
    }
    let g = gaussian_window();
    let c1 = (K1 * PEAK).powi(2);
    let c2 = (K2 * PEAK).powi(2);
    let mut total = 0.0;
    let mut count = 0usize;
    for ch in 0..c {
        let x: Vec<f64> = a.data.iter().skip(ch).step_by(c).copied().collect();
        let y: Vec<f64> = b.data.iter().skip(ch).step_by(c).copied().collect();
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let mx = filter_valid(&x, h, w, &g);
        let my = filter_valid(&y, h, w, &g);
        let sxx = filter_valid(&xx, h, w, &g);
        let syy = filter_valid(&yy, h, w, &g);
        let sxy = filter_valid(&xy, h, w, &g);
        for i in 0..mx.len() {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cov = sxy[i] - ux * uy;
            total += ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

pub fn psnr(a: &ImageU8, b: &ImageU8, mode: ChannelMode, crop: usize) -> Result<f64> {
    psnr_f64(&prepare(a, mode, crop)?, &prepare(b, mode, crop)?)
}

pub fn ssim(a: &ImageU8, b: &ImageU8, mode: ChannelMode, crop: usize) -> Result<f64> {
    ssim_f64(&prepare(a, mode, crop)?, &prepare(b, mode, crop)?)
}

/// How the low-quality input was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Degradation {
    Bicubic { scale: usize },
    Jpeg { quality: u8 },
    Unknown,
}

/// Outcome of comparing one restored image with its reference.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub input: PathBuf,
    pub reference: PathBuf,
    pub degradation: Degradation,
    pub psnr: f64,
    pub ssim: f64,
    pub mode: ChannelMode,
    pub crop: usize,
}

impl EvalRecord {
    pub fn measure(
        input: impl Into<PathBuf>,
        reference: impl Into<PathBuf>,
        degradation: Degradation,
        test: &ImageU8,
        truth: &ImageU8,
        mode: ChannelMode,
        crop: usize,
    ) -> Result<Self> {
        Ok(Self {
            input: input.into(),
            reference: reference.into(),
            degradation,
            psnr: psnr(truth, test, mode, crop)?,
            ssim: ssim(truth, test, mode, crop)?,
            mode,
            crop,
        })
    }

    /// Border crop convention: the scale factor for SR, none otherwise.
    pub fn default_crop(degradation: Degradation) -> usize {
        match degradation {
            Degradation::Bicubic { scale } => scale,
            _ => 0,
        }
    }
}

impl fmt::Display for EvalRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PSNR={:.4} SSIM={:.4}", self.psnr, self.ssim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(v: u8, n: usize) -> ImageU8 {
        ImageU8::new(n, n, 3, vec![v; n * n * 3]).unwrap()
    }

    #[test]
    fn identical_images() {
        let img = ImageU8::new(12, 13, 3, (0..12 * 13 * 3).map(|i| (i * 37 % 256) as u8).collect()).unwrap();
        assert_eq!(psnr(&img, &img, ChannelMode::Rgb, 0).unwrap(), PSNR_CAP);
        assert_eq!(ssim(&img, &img, ChannelMode::Rgb, 0).unwrap(), 1.0);
        assert_eq!(ssim(&img, &img, ChannelMode::Y, 0).unwrap(), 1.0);
    }

    #[test]
    fn offset_by_one() {
        let p = psnr(&constant(100, 16), &constant(101, 16), ChannelMode::Rgb, 0).unwrap();
        assert!((p - 20.0 * 255f64.log10()).abs() < 1e-9);
        assert!((p - 48.1308).abs() < 1e-3);
    }

    #[test]
    fn mismatched_shapes() {
        assert!(psnr(&constant(0, 12), &constant(0, 13), ChannelMode::Rgb, 0).is_err());
        assert!(ssim(&constant(0, 8), &constant(0, 8), ChannelMode::Rgb, 0).is_err());
    }

    #[test]
    fn window_is_normalized() {
        let g = gaussian_window();
        assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(g[0], g[10]);
    }
}
