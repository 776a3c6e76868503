//! Per-vertex local coordinate systems.
//!
//! Each rest frame sits at its vertex with the vertex normal as z-axis,
//! `x = normalize(z × up)` and `y = z × x`. Posed frames are the skinning
//! blend of the part transforms applied to the rest frame, with the linear
//! part projected back onto SO(3).

use crate::error::{Error, Result};
use crate::math::{blend_transforms, polar_rotation, Mat3, RigidTransform, Vec3};

pub const DEFAULT_UP: Vec3 = Vec3::new(0.0, 0.0, 1.0);
const FALLBACK_UP: Vec3 = Vec3::new(1.0, 0.0, 0.0);
const PARALLEL_TOL: f64 = 1e-6;
const UNIT_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct LocalFrameSet {
    pub rest_frames: Vec<RigidTransform>,
    pub posed_frames: Vec<RigidTransform>,
}

pub fn rest_frame(vertex: &Vec3, normal: &Vec3, up: &Vec3) -> Result<RigidTransform> {
    if (normal.norm() - 1.0).abs() > UNIT_TOL {
        return Err(Error::Frame(format!(
            "normal {normal:?} is not unit length"
        )));
    }
    let z = *normal;
    let mut x = z.cross(up);
    if x.norm() < PARALLEL_TOL {
        x = z.cross(&FALLBACK_UP);
    }
    let x = x.normalize();
    let y = z.cross(&x);
    Ok(RigidTransform::new(Mat3::from_columns(&[x, y, z]), *vertex))
}

pub fn rest_frames(vertices: &[Vec3], normals: &[Vec3], up: &Vec3) -> Result<Vec<RigidTransform>> {
    if vertices.len() != normals.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} vertices but {} normals",
            vertices.len(),
            normals.len()
        )));
    }
    vertices
        .iter()
        .zip(normals)
        .enumerate()
        .map(|(i, (v, n))| {
            rest_frame(v, n, up).map_err(|e| match e {
                Error::Frame(msg) => Error::Frame(format!("vertex {i}: {msg}")),
                other => other,
            })
        })
        .collect()
}

/// `T_posed = polar(Σ_p W_kp A_p) · T_rest`, origin at the skinned vertex.
pub fn pose_frames(
    rest: &[RigidTransform],
    skin_weights: &[f64],
    transforms: &[RigidTransform],
) -> Result<Vec<RigidTransform>> {
    let p = transforms.len();
    if p == 0 || skin_weights.len() != rest.len() * p {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} frames and {p} transforms",
            skin_weights.len(),
            rest.len()
        )));
    }
    crate::body::check_weights(skin_weights, p)?;
    rest.iter()
        .zip(skin_weights.chunks(p))
        .enumerate()
        .map(|(k, (frame, w))| {
            let blended = blend_transforms(w, transforms);
            let rotation =
                polar_rotation(&blended.linear).ok_or(Error::FrameDegeneracy { vertex: k })?;
            Ok(RigidTransform::new(
                rotation * frame.rotation,
                blended.apply(&frame.translation),
            ))
        })
        .collect()
}

/// `x^l = Rᵀ(x^w − t)`.
#[inline]
pub fn to_local(point: &Vec3, frame: &RigidTransform) -> Vec3 {
    frame.inverse_apply(point)
}
