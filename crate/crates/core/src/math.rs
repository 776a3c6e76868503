//! Rigid transforms, axis-angle rotations and the polar factor used to
//! re-orthonormalize blended skinning matrices.

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Mat4 = Matrix4<f64>;

const RIGID_TOL: f64 = 1e-6;

/// An element of SE(3): `x' = R x + t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Mat3, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self::new(Mat3::identity(), t)
    }

    pub fn from_rotation(rotation: Mat3) -> Self {
        Self::new(rotation, Vec3::zeros())
    }

    /// Build from an axis-angle vector (radians), rotating about the origin.
    pub fn from_axis_angle(axis_angle: &Vec3) -> Self {
        Self::from_rotation(axis_angle_to_matrix(axis_angle))
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Express a world point in this frame's coordinates: `Rᵀ(x − t)`.
    pub fn inverse_apply(&self, p: &Vec3) -> Vec3 {
        self.rotation.tr_mul(&(p - self.translation))
    }

    pub fn to_homogeneous(&self) -> Mat4 {
        let mut m = Mat4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Check `RᵀR = I` and `det R = +1` within 1e-6.
    pub fn validate(&self) -> Result<()> {
        if !self.rotation.iter().all(|v| v.is_finite())
            || !self.translation.iter().all(|v| v.is_finite())
        {
            return Err(Error::InvariantViolation(
                "rigid transform has non-finite entries".into(),
            ));
        }
        let ortho = (self.rotation.transpose() * self.rotation - Mat3::identity()).abs().max();
        let det = self.rotation.determinant();
        if ortho > RIGID_TOL || (det - 1.0).abs() > RIGID_TOL {
            return Err(Error::InvariantViolation(format!(
                "rotation is not orthonormal (|RᵀR − I| = {ortho:.3e}, det = {det:.6})"
            )));
        }
        Ok(())
    }
}

/// Affine 3×4 map produced by blending rigid transforms; not rigid in general.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Affine {
    pub linear: Mat3,
    pub translation: Vec3,
}

impl Affine {
    pub fn zero() -> Self {
        Self {
            linear: Mat3::zeros(),
            translation: Vec3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.linear * p + self.translation
    }

    /// `self += w · t`.
    pub fn accumulate(&mut self, w: f64, t: &RigidTransform) {
        self.linear += t.rotation * w;
        self.translation += t.translation * w;
    }
}

/// Convex combination `Σ_p w_p A_p` of rigid transforms.
pub fn blend_transforms(weights: &[f64], transforms: &[RigidTransform]) -> Affine {
    let mut out = Affine::zero();
    for (w, t) in weights.iter().zip(transforms) {
        if *w != 0.0 {
            out.accumulate(*w, t);
        }
    }
    out
}

/// Axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn from_points(points: &[Vec3]) -> Option<Self> {
        let first = points.first()?;
        let (mut min, mut max) = (*first, *first);
        for p in points {
            min = min.inf(p);
            max = max.sup(p);
        }
        Some(Self { min, max })
    }

    pub fn dilate(&self, margin: f64) -> Self {
        let m = Vec3::repeat(margin);
        Self {
            min: self.min - m,
            max: self.max + m,
        }
    }

    pub fn union(&self, other: &Aabb) -> Self {
        Self {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn diagonal(&self) -> f64 {
        (self.max - self.min).norm()
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }
}

pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Exponential map from axis-angle to rotation matrix (Rodrigues), with a
/// second-order Taylor expansion below 1e-8 rad.
pub fn axis_angle_to_matrix(v: &Vec3) -> Mat3 {
    let theta = v.norm();
    let k = skew(v);
    if theta < 1e-8 {
        return Mat3::identity() + k + k * k * 0.5;
    }
    let a = theta.sin() / theta;
    let b = (1.0 - theta.cos()) / (theta * theta);
    Mat3::identity() + k * a + k * k * b
}

/// Orthonormal polar factor of a matrix with positive determinant, via the
/// Newton iteration `X ← ½(X + X⁻ᵀ)`. Returns `None` when the matrix is
/// singular or orientation-reversing.
pub fn polar_rotation(m: &Mat3) -> Option<Mat3> {
    let scale = m.abs().max();
    if !scale.is_finite() || scale == 0.0 {
        return None;
    }
    let mut x = m / scale;
    if x.determinant() <= 1e-12 {
        return None;
    }
    for _ in 0..100 {
        let inv_t = x.try_inverse()?.transpose();
        let next = (x + inv_t) * 0.5;
        let delta = (next - x).abs().max();
        x = next;
        if delta < 1e-15 {
            break;
        }
    }
    // One Newton-Schulz polish step leaves an already orthonormal matrix in place.
    let x = x * (Mat3::identity() * 1.5 - x.transpose() * x * 0.5);
    Some(x)
}
