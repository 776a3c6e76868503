//! Ground-truth capsule figure and its brute-force ray caster. Nothing here
//! touches the volume renderer; only the camera type is shared.

use rayon::prelude::*;
use vrf_core::body::capsule::capsule_layout;
use vrf_core::body::{forward_kinematics, Pose, Skeleton};
use vrf_core::field::{RadianceField, RadianceSample};
use vrf_core::math::{Aabb, Vec3};
use vrf_core::render::{Camera, Image, Ray};
use vrf_core::{Error, Result};

/// Density used inside capsules by [`AnalyticField`]; opaque at any sane step.
pub const OPAQUE_DENSITY: f64 = 1e6;

#[derive(Clone, Debug, PartialEq)]
pub struct FigureCapsule {
    pub part: usize,
    pub start: Vec3,
    pub end: Vec3,
    pub radius: f64,
    pub color: [f64; 3],
}

/// Per-part capsules rigged to a skeleton, in the rest pose.
#[derive(Clone, Debug, PartialEq)]
pub struct CapsuleFigure {
    pub skeleton: Skeleton,
    pub capsules: Vec<FigureCapsule>,
}

pub fn part_color(part: usize) -> [f64; 3] {
    const COLORS: [[f64; 3]; 6] = [
        [0.80, 0.30, 0.20],
        [0.90, 0.75, 0.60],
        [0.20, 0.40, 0.85],
        [0.30, 0.60, 0.95],
        [0.20, 0.70, 0.30],
        [0.55, 0.85, 0.25],
    ];
    COLORS[part % COLORS.len()]
}

impl CapsuleFigure {
    /// The figure matching the capsule-person template part for part.
    pub fn capsule_person() -> Self {
        let layout = capsule_layout();
        Self {
            skeleton: Skeleton {
                joints: layout.iter().map(|c| c.joint).collect(),
                parent: layout.iter().map(|c| c.parent).collect(),
            },
            capsules: layout
                .iter()
                .enumerate()
                .map(|(part, c)| FigureCapsule {
                    part,
                    start: c.start,
                    end: c.end,
                    radius: c.radius,
                    color: part_color(part),
                })
                .collect(),
        }
    }

    /// Same skeleton, keeping only the listed parts.
    pub fn only(&self, parts: &[usize]) -> Self {
        Self {
            skeleton: self.skeleton.clone(),
            capsules: self.capsules.iter().filter(|c| parts.contains(&c.part)).cloned().collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.skeleton.parent.len();
        for c in &self.capsules {
            if !(c.radius > 0.0) || c.part >= p {
                return Err(Error::Config(format!(
                    "capsule for part {} needs a positive radius and a skeleton joint",
                    c.part
                )));
            }
        }
        Ok(())
    }

    /// Capsules moved rigidly by their part's transform.
    pub fn posed(&self, pose: &Pose) -> Result<Vec<FigureCapsule>> {
        self.validate()?;
        let transforms = forward_kinematics(&self.skeleton, pose)?;
        Ok(self
            .capsules
            .iter()
            .map(|c| FigureCapsule {
                start: transforms[c.part].apply(&c.start),
                end: transforms[c.part].apply(&c.end),
                ..c.clone()
            })
            .collect())
    }
}

/// Smallest positive root of `t² + 2bt + c = 0`, if any.
fn sphere_entry(origin: &Vec3, dir: &Vec3, center: &Vec3, r: f64) -> Option<f64> {
    let oc = origin - center;
    let b = dir.dot(&oc);
    let c = oc.dot(&oc) - r * r;
    let h = b * b - c;
    if h < 0.0 {
        return None;
    }
    let s = h.sqrt();
    [-b - s, -b + s].into_iter().find(|t| *t > 0.0)
}

/// Nearest positive hit distance of a unit-direction ray with a capsule:
/// the finite cylinder side or either end sphere.
pub fn ray_capsule(origin: &Vec3, dir: &Vec3, c: &FigureCapsule) -> Option<f64> {
    let ba = c.end - c.start;
    let oa = origin - c.start;
    let baba = ba.dot(&ba);
    let bard = ba.dot(dir);
    let baoa = ba.dot(&oa);
    let rdoa = dir.dot(&oa);
    let oaoa = oa.dot(&oa);
    let mut best: Option<f64> = None;
    let mut consider = |t: f64| {
        if t > 0.0 && best.map_or(true, |b| t < b) {
            best = Some(t);
        }
    };
    let qa = baba - bard * bard;
    if qa > 1e-12 * baba {
        let qb = baba * rdoa - baoa * bard;
        let qc = baba * oaoa - baoa * baoa - c.radius * c.radius * baba;
        let h = qb * qb - qa * qc;
        if h >= 0.0 {
            let s = h.sqrt();
            for t in [(-qb - s) / qa, (-qb + s) / qa] {
                let y = baoa + t * bard;
                if y > 0.0 && y < baba {
                    consider(t);
                }
            }
        }
    }
    for center in [c.start, c.end] {
        if let Some(t) = sphere_entry(origin, dir, &center, c.radius) {
            consider(t);
        }
    }
    best
}

/// Nearest hit over all capsules as `(distance, capsule index)`.
pub fn first_hit(capsules: &[FigureCapsule], ray: &Ray) -> Option<(f64, usize)> {
    capsules
        .iter()
        .enumerate()
        .filter_map(|(i, c)| ray_capsule(&ray.origin, &ray.direction, c).map(|t| (t, i)))
        .min_by(|a, b| a.0.total_cmp(&b.0))
}

pub fn point_in_capsule(p: &Vec3, c: &FigureCapsule) -> bool {
    let ab = c.end - c.start;
    let s = ((p - c.start).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (p - (c.start + ab * s)).norm() <= c.radius
}

/// Pixel-center ray cast: nearest capsule's part color, black background.
pub fn oracle_render(figure: &CapsuleFigure, pose: &Pose, camera: &Camera) -> Result<Image> {
    camera.validate()?;
    let capsules = figure.posed(pose)?;
    let mut img = Image::new(camera.width, camera.height, 3);
    img.data
        .par_chunks_mut(3 * camera.width)
        .enumerate()
        .for_each(|(y, row)| {
            for x in 0..camera.width {
                if let Some((_, i)) = first_hit(&capsules, &camera.pixel_ray(x, y)) {
                    row[3 * x..3 * x + 3].copy_from_slice(&capsules[i].color);
                }
            }
        });
    Ok(img)
}

/// Opaque solid capsules expressed as a radiance field, so the volume
/// renderer can be checked against [`oracle_render`].
#[derive(Clone, Debug)]
pub struct AnalyticField {
    pub capsules: Vec<FigureCapsule>,
    /// Replaces every part color when set.
    pub constant_color: Option<[f64; 3]>,
}

impl AnalyticField {
    pub fn new(figure: &CapsuleFigure, pose: &Pose) -> Result<Self> {
        Ok(Self {
            capsules: figure.posed(pose)?,
            constant_color: None,
        })
    }
}

impl RadianceField for AnalyticField {
    fn bounds(&self) -> Aabb {
        self.capsules
            .iter()
            .map(|c| {
                Aabb::from_points(&[c.start, c.end])
                    .expect("two points")
                    .dilate(c.radius)
            })
            .reduce(|a, b| a.union(&b))
            .unwrap_or(Aabb {
                min: Vec3::zeros(),
                max: Vec3::zeros(),
            })
    }

    fn query_batch(&self, points: &[Vec3]) -> Result<Vec<RadianceSample>> {
        Ok(points
            .iter()
            .map(|p| match self.capsules.iter().find(|c| point_in_capsule(p, c)) {
                Some(c) => RadianceSample {
                    color: self.constant_color.unwrap_or(c.color),
                    density: OPAQUE_DENSITY,
                },
                None => RadianceSample::EMPTY,
            })
            .collect())
    }
}

/// Binary silhouette of an RGB image: any nonzero channel.
pub fn silhouette(img: &Image) -> Vec<bool> {
    img.data.chunks(img.channels).map(|px| px.iter().any(|v| *v > 0.0)).collect()
}

/// Threshold on alpha (or luminance-free coverage) for rendered images.
pub fn silhouette_alpha(alpha: &Image, threshold: f64) -> Vec<bool> {
    alpha.data.iter().map(|a| *a > threshold).collect()
}

pub fn iou(a: &[bool], b: &[bool]) -> f64 {
    assert_eq!(a.len(), b.len());
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}
