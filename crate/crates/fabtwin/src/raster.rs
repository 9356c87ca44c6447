//! Binary masks and grayscale rasters with lossless 8-bit PNG round-tripping.
//!
//! Foreground is 1 (written as white, 255); background is 0 (black). Grayscale
//! values live in `[0, 1]` and are stored as `round(v * 255)` on encode.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("codec: {0}")]
    Codec(#[from] image::ImageError),
}

/// Binary raster, row-major, one byte per pixel holding 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMask {
    width: usize,
    height: usize,
    bits: Vec<u8>,
}

impl BitMask {
    pub fn new(width: usize, height: usize, bits: Vec<u8>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::InvalidInput("zero-sized mask".into()));
        }
        if bits.len() != width * height {
            return Err(RasterError::InvalidInput(format!(
                "expected {} pixels, got {}",
                width * height,
                bits.len()
            )));
        }
        if let Some(v) = bits.iter().find(|&&v| v > 1) {
            return Err(RasterError::InvalidInput(format!(
                "mask pixel out of range: {v}"
            )));
        }
        Ok(Self { width, height, bits })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, bits: vec![0; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        debug_assert!(v <= 1);
        self.bits[y * self.width + x] = v;
    }

    pub fn foreground_count(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    pub fn foreground_fraction(&self) -> f64 {
        self.foreground_count() as f64 / (self.width * self.height) as f64
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            values: self.bits.iter().map(|&b| b as f64).collect(),
        }
    }

    /// Translate by whole pixels; vacated area is filled with background.
    pub fn shifted(&self, dx: i64, dy: i64) -> BitMask {
        let mut out = BitMask::zeros(self.width, self.height);
        for y in 0..self.height {
            let sy = y as i64 - dy;
            if sy < 0 || sy >= self.height as i64 {
                continue;
            }
            for x in 0..self.width {
                let sx = x as i64 - dx;
                if sx < 0 || sx >= self.width as i64 {
                    continue;
                }
                out.bits[y * self.width + x] = self.bits[sy as usize * self.width + sx as usize];
            }
        }
        out
    }

    /// Quarter-turn clockwise: pixel (x, y) moves to (h-1-y, x).
    pub fn rot90cw(&self) -> BitMask {
        let (w, h) = (self.width, self.height);
        let mut out = BitMask::zeros(h, w);
        for y in 0..h {
            for x in 0..w {
                let v = self.bits[y * w + x];
                out.bits[x * h + (h - 1 - y)] = v;
            }
        }
        out
    }

    pub fn rot180(&self) -> BitMask {
        let mut bits = self.bits.clone();
        bits.reverse();
        BitMask { width: self.width, height: self.height, bits }
    }

    pub fn rot270cw(&self) -> BitMask {
        self.rot180().rot90cw()
    }

    /// Encode as an 8-bit grayscale PNG (no alpha); 0 -> 0, 1 -> 255.
    pub fn to_png_bytes(&self) -> Result<Vec<u8>, RasterError> {
        let pixels: Vec<u8> = self.bits.iter().map(|&b| if b == 1 { 255 } else { 0 }).collect();
        encode_l8(&pixels, self.width, self.height)
    }

    /// Decode an 8-bit grayscale PNG; values >= 128 map to foreground.
    pub fn from_png_bytes(bytes: &[u8]) -> Result<Self, RasterError> {
        let (width, height, pixels) = decode_l8(bytes)?;
        let bits = pixels.iter().map(|&p| u8::from(p >= 128)).collect();
        Ok(Self { width, height, bits })
    }
}

/// Grayscale raster with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::InvalidInput("zero-sized image".into()));
        }
        if values.len() != width * height {
            return Err(RasterError::InvalidInput(format!(
                "expected {} pixels, got {}",
                width * height,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(RasterError::InvalidInput(format!(
                "gray value out of [0,1]: {v}"
            )));
        }
        Ok(Self { width, height, values })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, values: vec![0.0; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        debug_assert!((0.0..=1.0).contains(&v));
        self.values[y * self.width + x] = v;
    }

    pub fn to_png_bytes(&self) -> Result<Vec<u8>, RasterError> {
        let pixels: Vec<u8> = self.values.iter().map(|&v| (v * 255.0).round() as u8).collect();
        encode_l8(&pixels, self.width, self.height)
    }

    pub fn from_png_bytes(bytes: &[u8]) -> Result<Self, RasterError> {
        let (width, height, pixels) = decode_l8(bytes)?;
        let values = pixels.iter().map(|&p| p as f64 / 255.0).collect();
        Ok(Self { width, height, values })
    }
}

/// Threshold a grayscale image into a mask: foreground where `v >= threshold`.
pub fn binarize(img: &GrayImage, threshold: f64) -> Result<BitMask, RasterError> {
    if !threshold.is_finite() || threshold <= 0.0 || threshold >= 1.0 {
        return Err(RasterError::InvalidInput(format!(
            "threshold must lie in (0,1), got {threshold}"
        )));
    }
    if let Some(v) = img.values.iter().find(|v| !v.is_finite()) {
        return Err(RasterError::InvalidInput(format!("non-finite pixel: {v}")));
    }
    let bits = img.values.iter().map(|&v| u8::from(v >= threshold)).collect();
    Ok(BitMask { width: img.width, height: img.height, bits })
}

fn encode_l8(pixels: &[u8], width: usize, height: usize) -> Result<Vec<u8>, RasterError> {
    use image::codecs::png::PngEncoder;
    use image::{ExtendedColorType, ImageEncoder};
    let mut out = Vec::new();
    PngEncoder::new(&mut out).write_image(
        pixels,
        width as u32,
        height as u32,
        ExtendedColorType::L8,
    )?;
    Ok(out)
}

fn decode_l8(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>), RasterError> {
    let dynimg = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?;
    match dynimg {
        image::DynamicImage::ImageLuma8(img) => {
            let (w, h) = (img.width() as usize, img.height() as usize);
            Ok((w, h, img.into_raw()))
        }
        other => Err(RasterError::UnsupportedFormat(format!(
            "expected 8-bit grayscale PNG, got {:?}",
            other.color()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn binarize_midpoint_half_up() {
        // threshold comparison is inclusive: 0.5 >= 0.5 -> 1
        let img = GrayImage::new(2, 1, vec![0.5, 0.49999]).unwrap();
        let m = binarize(&img, 0.5).unwrap();
        assert_eq!(m.bits(), &[1, 0]);
    }

    #[test]
    fn binarize_rejects_bad_threshold() {
        let img = GrayImage::zeros(2, 2);
        assert!(binarize(&img, 0.0).is_err());
        assert!(binarize(&img, 1.0).is_err());
        assert!(binarize(&img, f64::NAN).is_err());
    }

    #[test]
    fn mask_png_roundtrip_identity() {
        let m = BitMask::new(3, 2, vec![1, 0, 1, 0, 1, 0]).unwrap();
        let bytes = m.to_png_bytes().unwrap();
        let back = BitMask::from_png_bytes(&bytes).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn decode_rejects_rgb_and_16bit() {
        // RGB png
        let rgb = image::DynamicImage::ImageRgb8(image::RgbImage::new(4, 4));
        let mut buf = std::io::Cursor::new(Vec::new());
        rgb.write_to(&mut buf, image::ImageFormat::Png).unwrap();
        match BitMask::from_png_bytes(buf.get_ref()) {
            Err(RasterError::UnsupportedFormat(_)) => {}
            other => panic!("expected unsupported format, got {other:?}"),
        }
        // 16-bit gray png
        let g16 = image::DynamicImage::ImageLuma16(image::ImageBuffer::new(4, 4));
        let mut buf = std::io::Cursor::new(Vec::new());
        g16.write_to(&mut buf, image::ImageFormat::Png).unwrap();
        assert!(matches!(
            GrayImage::from_png_bytes(buf.get_ref()),
            Err(RasterError::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn large_mask_roundtrip() {
        let n = 2048;
        let mut m = BitMask::zeros(n, n);
        for y in 0..n {
            for x in 0..n {
                if (x * 31 + y * 17) % 5 == 0 {
                    m.set(x, y, 1);
                }
            }
        }
        let back = BitMask::from_png_bytes(&m.to_png_bytes().unwrap()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn rot90_clockwise_convention() {
        let m = BitMask::new(2, 2, vec![1, 0, 0, 0]).unwrap();
        let r = m.rot90cw();
        assert_eq!(r.bits(), &[0, 1, 0, 0]);
    }

    #[test]
    fn four_rotations_compose_to_identity() {
        let m = BitMask::new(3, 3, vec![1, 1, 0, 0, 1, 0, 0, 0, 1]).unwrap();
        let r = m.rot90cw().rot90cw().rot90cw().rot90cw();
        assert_eq!(m, r);
        assert_eq!(m.rot90cw().rot90cw(), m.rot180());
        assert_eq!(m.rot180().rot90cw(), m.rot270cw());
    }

    #[test]
    fn shift_zero_fills() {
        let m = BitMask::new(2, 2, vec![1, 1, 1, 1]).unwrap();
        let s = m.shifted(1, 0);
        assert_eq!(s.bits(), &[0, 1, 0, 1]);
    }

    #[test]
    fn gray_rejects_out_of_range() {
        assert!(GrayImage::new(1, 1, vec![1.5]).is_err());
        assert!(GrayImage::new(1, 1, vec![-0.1]).is_err());
        assert!(GrayImage::new(1, 1, vec![f64::NAN]).is_err());
    }

    proptest! {
        #[test]
        fn prop_mask_codec_roundtrip(w in 1usize..48, h in 1usize..48, seed in 0u64..1000) {
            let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
            let bits: Vec<u8> = (0..w * h)
                .map(|_| {
                    state ^= state << 13;
                    state ^= state >> 7;
                    state ^= state << 17;
                    (state & 1) as u8
                })
                .collect();
            let m = BitMask::new(w, h, bits).unwrap();
            let back = BitMask::from_png_bytes(&m.to_png_bytes().unwrap()).unwrap();
            prop_assert_eq!(m, back);
        }

        #[test]
        fn prop_gray_quantized_roundtrip(w in 1usize..32, h in 1usize..32, seed in 0u64..1000) {
            // encode quantizes to 1/255 steps; a quantized image round-trips exactly
            let mut state = seed.wrapping_mul(0x2545f4914f6cdd1d).wrapping_add(7);
            let values: Vec<f64> = (0..w * h)
                .map(|_| {
                    state ^= state << 13;
                    state ^= state >> 7;
                    state ^= state << 17;
                    ((state % 256) as f64) / 255.0
                })
                .collect();
            let img = GrayImage::new(w, h, values).unwrap();
            let back = GrayImage::from_png_bytes(&img.to_png_bytes().unwrap()).unwrap();
            prop_assert_eq!(img, back);
        }

        #[test]
        fn prop_binarize_counts(thr in 0.01f64..0.99, w in 1usize..16, h in 1usize..16) {
            let values: Vec<f64> = (0..w * h).map(|i| (i % 100) as f64 / 100.0).collect();
            let img = GrayImage::new(w, h, values.clone()).unwrap();
            let m = binarize(&img, thr).unwrap();
            let expect = values.iter().filter(|&&v| v >= thr).count();
            prop_assert_eq!(m.foreground_count(), expect);
        }
    }
}
