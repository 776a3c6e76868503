//! Ray generation, body-bounded sampling and alpha compositing.

pub mod camera;
pub mod composite;
pub mod image;
pub mod sampling;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use self::camera::{Camera, Ray};
pub use self::composite::{composite, CompositeResult};
pub use self::image::Image;
pub use self::sampling::{ray_bounds, ray_box, ray_seed, sample_points, RaySamples};

use crate::error::{Error, Result};
use crate::field::{RadianceField, RadianceSample};

pub const DEFAULT_SAMPLES: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    pub samples_per_ray: usize,
    pub stratified: bool,
    pub seed: u64,
    /// Rays per decoder batch.
    pub chunk: usize,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            samples_per_ray: DEFAULT_SAMPLES,
            stratified: false,
            seed: 0,
            chunk: 64,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_ray == 0 || self.samples_per_ray > 4096 {
            return Err(Error::Config(format!(
                "samples_per_ray = {} must lie in 1..=4096",
                self.samples_per_ray
            )));
        }
        if self.chunk == 0 {
            return Err(Error::Config("chunk must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderOutput {
    pub rgb: Image,
    /// `1 − T_{N+1}` per pixel.
    pub alpha: Image,
}

impl RenderOutput {
    pub fn rgba(&self) -> Image {
        let mut out = Image::new(self.rgb.width, self.rgb.height, 4);
        for (i, px) in out.data.chunks_mut(4).enumerate() {
            px[..3].copy_from_slice(&self.rgb.data[3 * i..3 * i + 3]);
            px[3] = self.alpha.data[i];
        }
        out
    }
}

/// Renders the rays with global indices `first..first + rays.len()`.
pub fn render_rays<F: RadianceField + ?Sized>(
    field: &F,
    rays: &[Ray],
    first: usize,
    config: &RenderConfig,
) -> Result<Vec<CompositeResult>> {
    let bounds = field.bounds();
    let n = config.samples_per_ray;
    let mut samples = Vec::with_capacity(rays.len());
    let mut points = Vec::new();
    for (i, ray) in rays.iter().enumerate() {
        let s = ray_box(ray, &bounds).map(|(near, far)| {
            sample_points(near, far, n, config.stratified, ray_seed(config.seed, (first + i) as u64))
        });
        if let Some(s) = &s {
            points.extend(s.points(ray));
        }
        samples.push(s);
    }
    let decoded = if points.is_empty() {
        Vec::new()
    } else {
        field.query_batch(&points)?
    };
    let mut offset = 0;
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| match s {
            None => Ok(CompositeResult {
                color: [0.0; 3],
                weights: Vec::new(),
                residual: 1.0,
            }),
            Some(s) => {
                let block: &[RadianceSample] = &decoded[offset..offset + n];
                offset += n;
                let r = composite(block, &s.deltas);
                if !r.color.iter().all(|c| c.is_finite()) || !r.residual.is_finite() {
                    return Err(Error::Numeric { ray: first + i });
                }
                Ok(r)
            }
        })
        .collect()
}

/// Renders an RGB image and its alpha. Chunks of rays run in parallel; the
/// result does not depend on the worker count.
pub fn render_image<F: RadianceField + ?Sized>(
    field: &F,
    camera: &Camera,
    config: &RenderConfig,
) -> Result<RenderOutput> {
    camera.validate()?;
    config.validate()?;
    let rays = camera.generate_rays();
    let chunks: Vec<Vec<CompositeResult>> = rays
        .par_chunks(config.chunk)
        .enumerate()
        .map(|(c, chunk)| render_rays(field, chunk, c * config.chunk, config))
        .collect::<Result<_>>()?;
    let mut rgb = Image::new(camera.width, camera.height, 3);
    let mut alpha = Image::new(camera.width, camera.height, 1);
    for (i, r) in chunks.iter().flatten().enumerate() {
        rgb.data[3 * i..3 * i + 3].copy_from_slice(&r.color);
        alpha.data[i] = r.alpha();
    }
    Ok(RenderOutput { rgb, alpha })
}
