//! 2D feature grid and UV bilinear sampling of per-vertex features.
//!
//! Texel centers sit at integer continuous coordinates:
//! `(u·(W−1), v·(H−1))`; UVs are clamped to `[0,1]²`.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::body::BodyTemplate;
use crate::error::{Error, Result};
use crate::rawio;

pub const FEATURE_MAGIC: &[u8; 4] = b"VRFM";
pub const DEFAULT_HEIGHT: usize = 256;
pub const DEFAULT_WIDTH: usize = 256;
pub const DEFAULT_CHANNELS: usize = 64;
pub const INIT_STD: f64 = 0.01;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Row-major, channel-fastest: `data[(y·W + x)·L + c]`.
    pub data: Vec<f64>,
}

/// Four bilinear taps: texel index (row-major `y·W + x`) and weight.
pub type Taps = [(usize, f64); 4];

impl FeatureMap {
    pub fn from_data(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::Format(format!(
                "feature map dims must be positive, got {height}×{width}×{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {height}×{width}×{channels} map",
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::InvariantViolation("feature map has non-finite entries".into()));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn constant(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    /// `N(0, INIT_STD²)` entries drawn in `f32` so the map survives a file round trip bit-exactly.
    pub fn random(height: usize, width: usize, channels: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0f32, INIT_STD as f32).unwrap();
        let data = (0..height * width * channels)
            .map(|_| normal.sample(&mut rng) as f64)
            .collect();
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn num_texels(&self) -> usize {
        self.height * self.width
    }

    pub fn texel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn taps(&self, uv: [f64; 2]) -> Taps {
        let axis = |t: f64, n: usize| {
            let x = t.clamp(0.0, 1.0) * (n - 1) as f64;
            let i0 = (x.floor() as usize).min(n - 1);
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, x - i0 as f64)
        };
        let (x0, x1, a) = axis(uv[0], self.width);
        let (y0, y1, b) = axis(uv[1], self.height);
        let w = self.width;
        [
            (y0 * w + x0, (1.0 - a) * (1.0 - b)),
            (y0 * w + x1, a * (1.0 - b)),
            (y1 * w + x0, (1.0 - a) * b),
            (y1 * w + x1, a * b),
        ]
    }

    pub fn sample_taps(&self, taps: &Taps, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let l = self.channels;
        for &(t, w) in taps {
            if w == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(&self.data[t * l..(t + 1) * l]) {
                *o += w * v;
            }
        }
    }

    pub fn sample_uv(&self, uv: [f64; 2]) -> Vec<f64> {
        let mut out = vec![0.0; self.channels];
        self.sample_taps(&self.taps(uv), &mut out);
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let dims = [self.height, self.width, self.channels].map(|d| d as u32);
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        rawio::write_grid(file, FEATURE_MAGIC, dims, &self.data)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let ([h, w, l], data) = rawio::parse_grid(bytes, FEATURE_MAGIC)?;
        Self::from_data(h, w, l, data)
    }
}

pub fn save_feature_map(map: &FeatureMap, path: impl AsRef<Path>) -> Result<()> {
    map.save(path)
}

pub fn load_feature_map(path: impl AsRef<Path>) -> Result<FeatureMap> {
    FeatureMap::load(path)
}

/// Per-vertex features, row-major `M × L_F`.
#[derive(Clone, Debug, PartialEq)]
pub struct VertexFeatures {
    pub channels: usize,
    pub data: Vec<f64>,
}

impl VertexFeatures {
    pub fn num_vertices(&self) -> usize {
        self.data.len() / self.channels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.channels..(i + 1) * self.channels]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.channels..(i + 1) * self.channels]
    }
}

/// Bilinear taps for every template vertex.
pub fn vertex_taps(map: &FeatureMap, template: &BodyTemplate) -> Vec<Taps> {
    template.uv.iter().map(|uv| map.taps(*uv)).collect()
}

pub fn vertex_features(map: &FeatureMap, template: &BodyTemplate) -> VertexFeatures {
    features_from_taps(map, &vertex_taps(map, template))
}

pub fn features_from_taps(map: &FeatureMap, taps: &[Taps]) -> VertexFeatures {
    let l = map.channels;
    let mut data = vec![0.0; taps.len() * l];
    for (row, t) in data.chunks_mut(l).zip(taps) {
        map.sample_taps(t, row);
    }
    VertexFeatures { channels: l, data }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ramp(h: usize, w: usize, l: usize) -> FeatureMap {
        let data = (0..h * w * l).map(|i| i as f64).collect();
        FeatureMap::from_data(h, w, l, data).unwrap()
    }

    #[test]
    fn grid_points_read_texels_exactly() {
        let m = ramp(4, 5, 2);
        for y in 0..4 {
            for x in 0..5 {
                let uv = [x as f64 / 4.0, y as f64 / 3.0];
                assert_eq!(m.sample_uv(uv), m.texel(x, y));
            }
        }
    }

    #[test]
    fn midpoint_is_mean() {
        let m = ramp(3, 3, 2);
        let s = m.sample_uv([0.25, 0.0]);
        let e: Vec<f64> = m.texel(0, 0).iter().zip(m.texel(1, 0)).map(|(a, b)| 0.5 * (a + b)).collect();
        assert_eq!(s, e);
    }

    #[test]
    fn outside_uv_is_clamped() {
        let m = ramp(3, 3, 1);
        assert_eq!(m.sample_uv([-1.0, 2.0]), m.texel(0, 2));
    }

    #[test]
    fn random_map_is_reproducible() {
        assert_eq!(FeatureMap::random(4, 4, 3, 7), FeatureMap::random(4, 4, 3, 7));
        assert_ne!(FeatureMap::random(4, 4, 3, 7), FeatureMap::random(4, 4, 3, 8));
    }

    #[test]
    fn taps_sum_to_one() {
        let m = FeatureMap::constant(7, 9, 1, 0.0);
        for uv in [[0.0, 0.0], [0.33, 0.71], [1.0, 1.0], [0.999, 0.5]] {
            let s: f64 = m.taps(uv).iter().map(|t| t.1).sum();
            assert_relative_eq!(s, 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn file_round_trip_is_bitwise() {
        let m = FeatureMap::random(6, 5, 4, 3);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.vrfm");
        save_feature_map(&m, &p).unwrap();
        let back = load_feature_map(&p).unwrap();
        assert_eq!(back.data.len(), m.data.len());
        assert!(back.data.iter().zip(&m.data).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn malformed_files() {
        let m = FeatureMap::random(2, 2, 2, 3);
        let mut bytes = Vec::new();
        rawio::write_grid(&mut bytes, FEATURE_MAGIC, [2, 2, 2], &m.data).unwrap();

        let truncated = &bytes[..bytes.len() - 3];
        assert!(matches!(FeatureMap::from_bytes(truncated), Err(Error::Truncated { .. })));

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(FeatureMap::from_bytes(&bad_magic), Err(Error::Format(_))));

        let mut zero = bytes.clone();
        zero[8..12].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(FeatureMap::from_bytes(&zero), Err(Error::Format(_))));

        let mut huge = bytes.clone();
        for i in 0..3 {
            huge[8 + 4 * i..12 + 4 * i].copy_from_slice(&u32::MAX.to_le_bytes());
        }
        assert!(matches!(FeatureMap::from_bytes(&huge), Err(Error::Format(_))));
    }
}
