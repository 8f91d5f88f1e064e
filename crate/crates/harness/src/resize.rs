//! Separable bicubic resampling.
//!
//! Sample positions follow the pixel-center convention
//! `x_in = (x_out + 0.5) / s − 0.5`. When shrinking, the kernel is stretched
//! by the scale factor so that it low-passes the input. Taps that fall off
//! the image read the nearest edge pixel, and each output's weights are
//! renormalized to sum to one.

use crate::error::{HarnessError, Result};
use crate::image::ImageF64;

/// Cubic convolution kernel with `a = −0.5`.
pub fn cubic(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        (((x - 5.0) * x + 8.0) * x - 4.0) * A
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resize {
    Up(usize),
    Down(usize),
}

impl Resize {
    fn factor(self) -> Result<usize> {
        let s = match self {
            Resize::Up(s) | Resize::Down(s) => s,
        };
        if (2..=4).contains(&s) {
            Ok(s)
        } else {
            Err(HarnessError::Argument(format!("resize factor {s} is not one of 2, 3, 4")))
        }
    }
}

/// Tap positions and normalized weights of one output sample along an axis.
pub struct Taps {
    pub first: isize,
    pub weights: Vec<f64>,
}

/// Per-output taps for resampling to `n_out` samples at ratio
/// `out/in = ratio`.
pub fn axis_taps(n_out: usize, ratio: f64) -> Vec<Taps> {
    let stretch = if ratio < 1.0 { 1.0 / ratio } else { 1.0 };
    (0..n_out)
        .map(|o| taps_at((o as f64 + 0.5) / ratio - 0.5, stretch))
        .collect()
}

/// Taps for a sample at input coordinate `center` with the kernel widened by
/// `stretch`.
pub fn taps_at(center: f64, stretch: f64) -> Taps {
    let support = 2.0 * stretch;
    let first = (center - support).floor() as isize + 1;
    let last = (center + support).ceil() as isize - 1;
    let mut weights: Vec<f64> = (first..=last).map(|i| cubic((center - i as f64) / stretch)).collect();
    let sum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= sum);
    Taps { first, weights }
}

fn resample_axis(img: &ImageF64, n_out: usize, ratio: f64, along_width: bool) -> ImageF64 {
    let (h, w, c) = (img.height, img.width, img.channels);
    let n_in = if along_width { w } else { h };
    let taps = axis_taps(n_out, ratio);
    let (oh, ow) = if along_width { (h, n_out) } else { (n_out, w) };
    let mut data = vec![0.0; oh * ow * c];
    for y in 0..oh {
        for x in 0..ow {
            let (o, fixed) = if along_width { (x, y) } else { (y, x) };
            let t = &taps[o];
            for (k, &wt) in t.weights.iter().enumerate() {
                let i = (t.first + k as isize).clamp(0, n_in as isize - 1) as usize;
                let (sy, sx) = if along_width { (fixed, i) } else { (i, fixed) };
                for ch in 0..c {
                    data[(y * ow + x) * c + ch] += wt * img.at(sy, sx, ch);
                }
            }
        }
    }
    ImageF64 {
        height: oh,
        width: ow,
        channels: c,
        data,
    }
}

/// Upscales by `s` or downscales by `s` (output `⌊H/s⌋ × ⌊W/s⌋`).
pub fn bicubic_resize(img: &ImageF64, how: Resize) -> Result<ImageF64> {
    let s = how.factor()?;
    let (oh, ow, ratio) = match how {
        Resize::Up(_) => (img.height * s, img.width * s, s as f64),
        Resize::Down(_) => (img.height / s, img.width / s, 1.0 / s as f64),
    };
    if oh == 0 || ow == 0 {
        return Err(HarnessError::Argument(format!(
            "{}x{} image is too small to shrink by {s}",
            img.height, img.width
        )));
    }
    let tmp = resample_axis(img, ow, ratio, true);
    Ok(resample_axis(&tmp, oh, ratio, false))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_taps() {
        assert_eq!(cubic(0.0), 1.0);
        assert_eq!(cubic(0.5), 0.5625);
        assert_eq!(cubic(1.5), -0.0625);
        assert_eq!(cubic(2.0), 0.0);
    }

    #[test]
    fn impulse_upscaled_by_two() {
        let mut data = vec![0.0; 9];
        data[4] = 1.0;
        let img = ImageF64 {
            height: 1,
            width: 9,
            channels: 1,
            data,
        };
        // Output o samples input (o + 0.5)/2 − 0.5, a quarter pixel off the
        // input grid, so the impulse is spread over the kernel at ±0.25,
        // ±0.75, ±1.25, ±1.75.
        let out = resample_axis(&img, 18, 2.0, true);
        let want = [
            (5, -0.0234375),
            (6, -0.0703125),
            (7, 0.2265625),
            (8, 0.8671875),
            (9, 0.8671875),
            (10, 0.2265625),
            (11, -0.0703125),
            (12, -0.0234375),
        ];
        for (i, v) in want {
            assert!((out.data[i] - v).abs() < 1e-12, "{i}: {}", out.data[i]);
        }
    }

    #[test]
    fn midpoint_taps() {
        let t = taps_at(4.5, 1.0);
        assert_eq!(t.first, 3);
        assert_eq!(t.weights, vec![-0.0625, 0.5625, 0.5625, -0.0625]);
    }

    #[test]
    fn rejects_bad_factor() {
        let img = ImageF64 {
            height: 4,
            width: 4,
            channels: 1,
            data: vec![0.0; 16],
        };
        assert!(bicubic_resize(&img, Resize::Up(5)).is_err());
        assert!(bicubic_resize(&img, Resize::Down(1)).is_err());
        assert!(bicubic_resize(&img, Resize::Down(4)).is_ok());
    }
}
