use std::path::Path;

use crate::error::{Error, Result};
use crate::rawio;

pub const IMAGE_MAGIC: &[u8; 4] = b"VRIM";

/// Row-major, channel-fastest float image with values nominally in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {width}×{height}×{channels} image",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f64] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    /// Single-channel view of channel `c`.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(self.channels).copied().collect()
    }

    /// RGB(A) to 8-bit PNG; values are clamped to `[0, 1]` and rounded.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_png_bytes()?)?;
        Ok(())
    }

    pub fn to_png_bytes(&self) -> Result<Vec<u8>> {
        use image::ImageEncoder;
        let color = match self.channels {
            1 => image::ExtendedColorType::L8,
            3 => image::ExtendedColorType::Rgb8,
            4 => image::ExtendedColorType::Rgba8,
            c => return Err(Error::Image(format!("cannot write {c}-channel PNG"))),
        };
        let mut out = Vec::new();
        image::codecs::png::PngEncoder::new(&mut out)
            .write_image(&self.to_u8(), self.width as u32, self.height as u32, color)
            .map_err(|e| Error::Image(e.to_string()))?;
        Ok(out)
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::open(path).map_err(|e| Error::Image(e.to_string()))?.to_rgb8();
        let (w, h) = img.dimensions();
        let data = img.into_raw().into_iter().map(|v| v as f64 / 255.0).collect();
        Self::from_data(w as usize, h as usize, 3, data)
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    /// `VRIM` raw dump with header dims `(H, W, C)`.
    pub fn save_raw(&self, path: impl AsRef<Path>) -> Result<()> {
        let dims = [self.height, self.width, self.channels].map(|d| d as u32);
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        rawio::write_grid(file, IMAGE_MAGIC, dims, &self.data)
    }

    pub fn load_raw(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_raw_bytes(&std::fs::read(path)?)
    }

    pub fn from_raw_bytes(bytes: &[u8]) -> Result<Self> {
        let ([h, w, c], data) = rawio::parse_grid(bytes, IMAGE_MAGIC)?;
        Self::from_data(w, h, c, data)
    }

    /// Loads by extension: `.vrim`/`.raw` as a raw dump, anything else via PNG.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        match path.extension().and_then(|e| e.to_str()) {
            Some("vrim") | Some("raw") => Self::load_raw(path),
            _ => Self::load_png(path),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient() -> Image {
        let mut img = Image::new(5, 3, 3);
        for y in 0..3 {
            for x in 0..5 {
                img.pixel_mut(x, y).copy_from_slice(&[x as f64 / 4.0, y as f64 / 2.0, 0.25]);
            }
        }
        img
    }

    #[test]
    fn raw_round_trip_is_exact_for_f32_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.vrim");
        let img = gradient();
        img.save_raw(&path).unwrap();
        assert_eq!(Image::load(&path).unwrap(), img);
    }

    #[test]
    fn png_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let img = gradient();
        img.save_png(&path).unwrap();
        let back = Image::load(&path).unwrap();
        assert_eq!((back.width, back.height), (5, 3));
        for (a, b) in img.data.iter().zip(&back.data) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let mut bytes = vec![0u8; 24];
        bytes[..4].copy_from_slice(b"VRFM");
        assert_eq!(Image::from_raw_bytes(&bytes).unwrap_err().category(), "format");
    }
}
