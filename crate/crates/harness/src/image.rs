//! 8-bit images on disk (PNG, binary PPM/PGM) and real-valued working copies.

use std::fs::File;
use std::io::{BufWriter, Read};
use std::path::Path;

use cat_tensor::{Element, Tensor};

use crate::error::{HarnessError, Result};

/// Row-major 8-bit image with 1 (gray) or 3 (RGB) interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageU8 {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl ImageU8 {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(HarnessError::Image("image extents must be positive".into()));
        }
        if channels != 1 && channels != 3 {
            return Err(HarnessError::Image(format!("{channels} channels; only 1 or 3 are supported")));
        }
        if data.len() != height * width * channels {
            return Err(HarnessError::Image(format!(
                "{} samples for a {height}x{width}x{channels} image",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn to_float(&self) -> ImageF64 {
        ImageF64 {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| v as f64).collect(),
        }
    }

    /// `[1, H, W, C]` tensor scaled to `[0, 1]`.
    pub fn to_tensor<T: Element>(&self) -> Tensor<T> {
        let data = self.data.iter().map(|&v| T::from_f64(v as f64 / 255.0)).collect();
        Tensor::from_vec(&[1, self.height, self.width, self.channels], data).expect("extents are positive")
    }

    /// Quantizes a `[1, H, W, C]` tensor in `[0, 1]`.
    pub fn from_tensor<T: Element>(t: &Tensor<T>) -> Result<Self> {
        match *t.shape() {
            [1, h, w, c] => Self::new(
                h,
                w,
                c,
                t.data().iter().map(|&v| quantize(Element::to_f64(v) * 255.0)).collect(),
            ),
            _ => Err(HarnessError::Image(format!("expected a [1,H,W,C] tensor, got {:?}", t.shape()))),
        }
    }
}

/// Round to nearest and clamp into `0..=255`.
pub fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Real-valued image on the 0–255 scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageF64 {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl ImageF64 {
    pub fn to_u8(&self) -> ImageU8 {
        ImageU8 {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| quantize(v)).collect(),
        }
    }

    pub fn at(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Drops `k` pixels from every side.
    pub fn crop(&self, k: usize) -> Result<Self> {
        if 2 * k >= self.height || 2 * k >= self.width {
            return Err(HarnessError::Image(format!(
                "border crop {k} leaves nothing of a {}x{} image",
                self.height, self.width
            )));
        }
        let (h, w) = (self.height - 2 * k, self.width - 2 * k);
        let mut data = Vec::with_capacity(h * w * self.channels);
        for y in k..k + h {
            let start = (y * self.width + k) * self.channels;
            data.extend_from_slice(&self.data[start..start + w * self.channels]);
        }
        Ok(Self {
            height: h,
            width: w,
            channels: self.channels,
            data,
        })
    }
}

/// Luma of an RGB image in the limited-range BT.601 mapping, `[16, 235]`.
pub fn rgb_to_y(img: &ImageU8) -> Result<ImageF64> {
    if img.channels != 3 {
        return Err(HarnessError::Image(format!(
            "luma conversion needs 3 channels, got {}",
            img.channels
        )));
    }
    let data = img
        .data
        .chunks(3)
        .map(|p| 16.0 + (65.481 * p[0] as f64 + 128.553 * p[1] as f64 + 24.966 * p[2] as f64) / 255.0)
        .collect();
    Ok(ImageF64 {
        height: img.height,
        width: img.width,
        channels: 1,
        data,
    })
}

pub fn load_image(path: impl AsRef<Path>) -> Result<ImageU8> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    let decoded = if bytes.starts_with(b"\x89PNG") {
        decode_png(&bytes)
    } else if bytes.starts_with(b"P5") || bytes.starts_with(b"P6") {
        decode_pnm(&bytes)
    } else {
        Err(HarnessError::Image("unrecognized file signature (expected PNG, P5 or P6)".into()))
    };
    decoded.map_err(|e| e.at(path))
}

/// Writes PNG for `.png`, PGM/PPM for `.pgm`/`.ppm`/`.pnm`.
pub fn save_image(img: &ImageU8, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let io = |e: std::io::Error| HarnessError::Io(format!("{}: {e}", path.display()));
    match ext.as_str() {
        "png" => {
            let file = File::create(path).map_err(io)?;
            let mut enc = png::Encoder::new(BufWriter::new(file), img.width as u32, img.height as u32);
            enc.set_color(if img.channels == 3 {
                png::ColorType::Rgb
            } else {
                png::ColorType::Grayscale
            });
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc.write_header().map_err(|e| HarnessError::Image(e.to_string()))?;
            writer
                .write_image_data(&img.data)
                .map_err(|e| HarnessError::Image(e.to_string()))
        }
        "ppm" | "pgm" | "pnm" => {
            let expected = if img.channels == 3 { "ppm" } else { "pgm" };
            if ext != "pnm" && ext != expected {
                return Err(HarnessError::Image(format!(
                    "{}-channel image cannot be written as .{ext}",
                    img.channels
                )));
            }
            std::fs::write(path, encode_pnm(img)).map_err(io)
        }
        _ => Err(HarnessError::Image(format!(
            "{}: unsupported output extension (use .png, .ppm or .pgm)",
            path.display()
        ))),
    }
}

fn decode_png(bytes: &[u8]) -> Result<ImageU8> {
    let bad = |m: String| HarnessError::Image(m);
    let mut decoder = png::Decoder::new(bytes);
    // Palette and sub-byte gray expand to 8-bit samples.
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| bad(format!("malformed PNG: {e}")))?;
    let info = reader.info();
    if info.bit_depth == png::BitDepth::Sixteen {
        return Err(bad("16-bit PNG is not supported".into()));
    }
    if info.interlaced {
        return Err(bad("interlaced PNG is not supported".into()));
    }
    let mut buf = vec![0; reader.output_buffer_size()];
    let frame = reader.next_frame(&mut buf).map_err(|e| bad(format!("malformed PNG: {e}")))?;
    let channels = match frame.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => return Err(bad(format!("PNG color type {other:?} is not supported (gray or RGB only)"))),
    };
    let (w, h) = (frame.width as usize, frame.height as usize);
    let mut data = Vec::with_capacity(w * h * channels);
    for row in buf.chunks(frame.line_size).take(h) {
        data.extend_from_slice(&row[..w * channels]);
    }
    ImageU8::new(h, w, channels, data)
}

fn decode_pnm(bytes: &[u8]) -> Result<ImageU8> {
    let bad = |m: &str| HarnessError::Image(format!("malformed PNM header: {m}"));
    let channels = if bytes[1] == b'6' { 3 } else { 1 };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(bad("truncated")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("expected a decimal number"))?;
    }
    let [w, h, maxval] = fields;
    if maxval != 255 {
        return Err(HarnessError::Image(format!(
            "PNM maximum value {maxval} is not supported (8-bit only)"
        )));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(bad("missing separator after maximum value"));
    }
    pos += 1;
    let n = w * h * channels;
    let raster = bytes
        .get(pos..pos + n)
        .ok_or_else(|| HarnessError::Image(format!("PNM raster holds {} of {n} bytes", bytes.len() - pos)))?;
    ImageU8::new(h, w, channels, raster.to_vec())
}

fn encode_pnm(img: &ImageU8) -> Vec<u8> {
    let magic = if img.channels == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn luma_of_extremes() {
        let img = ImageU8::new(1, 3, 3, vec![255, 255, 255, 0, 0, 0, 128, 128, 128]).unwrap();
        let y = rgb_to_y(&img).unwrap();
        assert!((y.data[0] - 235.0).abs() < 1e-3);
        assert_eq!(y.data[1], 16.0);
        assert!((y.data[2] - (16.0 + 219.0 * 128.0 / 255.0)).abs() < 1e-3);
    }

    #[test]
    fn hand_built_ppm() {
        let mut bytes = b"P6\n# two by two\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[255, 0, 0, 0, 255, 0, 0, 0, 255, 10, 20, 30]);
        let img = decode_pnm(&bytes).unwrap();
        assert_eq!((img.height, img.width, img.channels), (2, 2, 3));
        assert_eq!(&img.data[9..], &[10, 20, 30]);
        assert_eq!(decode_pnm(&encode_pnm(&img)).unwrap(), img);
    }

    #[test]
    fn pnm_errors() {
        assert!(decode_pnm(b"P5\n2 2\n65535\n\0\0\0\0\0\0\0\0").is_err());
        assert!(decode_pnm(b"P5\n2 2\n255\n\0\0").is_err());
        assert!(decode_pnm(b"P5\n2 x\n255\n").is_err());
    }

    #[test]
    fn tensor_roundtrip() {
        let img = ImageU8::new(2, 2, 1, vec![0, 64, 200, 255]).unwrap();
        assert_eq!(ImageU8::from_tensor(&img.to_tensor::<f32>()).unwrap(), img);
    }

    #[test]
    fn crop_borders() {
        let img = ImageU8::new(4, 4, 1, (0..16).collect()).unwrap().to_float();
        assert_eq!(img.crop(1).unwrap().data, vec![5.0, 6.0, 9.0, 10.0]);
        assert!(img.crop(2).is_err());
    }
}
