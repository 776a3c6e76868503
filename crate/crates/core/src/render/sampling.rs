use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::camera::Ray;
use crate::math::{Aabb, Vec3};

/// Slab test against `bounds`; returns `(near, far)` with `near` clamped to
/// zero for origins inside the box, or `None` on a miss.
pub fn ray_box(ray: &Ray, bounds: &Aabb) -> Option<(f64, f64)> {
    let mut near = f64::NEG_INFINITY;
    let mut far = f64::INFINITY;
    for a in 0..3 {
        let o = ray.origin[a];
        let d = ray.direction[a];
        if d == 0.0 {
            if o < bounds.min[a] || o > bounds.max[a] {
                return None;
            }
            continue;
        }
        let t0 = (bounds.min[a] - o) / d;
        let t1 = (bounds.max[a] - o) / d;
        near = near.max(t0.min(t1));
        far = far.min(t0.max(t1));
    }
    let near = near.max(0.0);
    if far <= 0.0 || near >= far {
        return None;
    }
    Some((near, far))
}

/// Intersection interval with the vertices' bounding box dilated by `margin`.
pub fn ray_bounds(ray: &Ray, posed_vertices: &[Vec3], margin: f64) -> Option<(f64, f64)> {
    let bounds = Aabb::from_points(posed_vertices)?.dilate(margin.max(0.0));
    ray_box(ray, &bounds)
}

/// Distances and intervals of the samples along one ray.
#[derive(Clone, Debug, PartialEq)]
pub struct RaySamples {
    pub t: Vec<f64>,
    pub deltas: Vec<f64>,
}

impl RaySamples {
    pub fn points(&self, ray: &Ray) -> Vec<Vec3> {
        self.t.iter().map(|t| ray.at(*t)).collect()
    }
}

/// Per-ray seed: `seed` and the ray index pushed through a SplitMix64 finalizer.
pub fn ray_seed(seed: u64, ray_index: u64) -> u64 {
    let mut z = seed ^ ray_index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `n` samples in `[near, far)`: bin midpoints, or one uniform draw per bin
/// when `stratified`. `δ_i = t_{i+1} − t_i`; the last interval is the bin width.
pub fn sample_points(near: f64, far: f64, n: usize, stratified: bool, rng_seed: u64) -> RaySamples {
    let width = (far - near) / n as f64;
    let t: Vec<f64> = if stratified {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        (0..n)
            .map(|i| near + (i as f64 + rng.gen::<f64>()) * width)
            .collect()
    } else {
        (0..n).map(|i| near + (i as f64 + 0.5) * width).collect()
    };
    let mut deltas: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    if n > 0 {
        deltas.push(width);
    }
    RaySamples { t, deltas }
}
