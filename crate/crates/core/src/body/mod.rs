//! Parametric articulated body: shape blendshapes, forward kinematics,
//! linear blend skinning, vertex normals and part labels.
//!
//! Vertices live in meters with the body at rest in a T-pose. `A_p` denotes
//! the per-part transform that maps rest-pose world coordinates to posed world
//! coordinates.

pub mod capsule;
mod io;

pub use io::{load_template, save_template, TemplateDocument, TEMPLATE_VERSION};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{axis_angle_to_matrix, blend_transforms, RigidTransform, Vec3};

const WEIGHT_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct BodyTemplate {
    pub rest_vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    /// Row-major `M × P`.
    pub skin_weights: Vec<f64>,
    pub joints_rest: Vec<Vec3>,
    pub parent: Vec<Option<usize>>,
    /// `S` displacement fields, each of length `M`.
    pub shape_basis: Vec<Vec<Vec3>>,
    pub uv: Vec<[f64; 2]>,
    pub part_names: Vec<String>,
}

impl BodyTemplate {
    pub fn num_vertices(&self) -> usize {
        self.rest_vertices.len()
    }

    pub fn num_parts(&self) -> usize {
        self.parent.len()
    }

    pub fn shape_dim(&self) -> usize {
        self.shape_basis.len()
    }

    pub fn weights(&self, vertex: usize) -> &[f64] {
        let p = self.num_parts();
        &self.skin_weights[vertex * p..(vertex + 1) * p]
    }

    pub fn skeleton(&self) -> Skeleton {
        Skeleton {
            joints: self.joints_rest.clone(),
            parent: self.parent.clone(),
        }
    }

    /// Per-vertex part labels (argmax of skinning weights).
    pub fn part_labels(&self) -> Vec<usize> {
        part_labels(&self.skin_weights, self.num_parts())
    }

    /// Checks every structural invariant of the template.
    pub fn validate(&self) -> Result<()> {
        let m = self.num_vertices();
        let p = self.num_parts();
        if m == 0 || p == 0 {
            return Err(Error::InvariantViolation(
                "template needs at least one vertex and one part".into(),
            ));
        }
        if self.joints_rest.len() != p {
            return Err(Error::InvariantViolation(format!(
                "{} joints for {p} parts",
                self.joints_rest.len()
            )));
        }
        if self.skin_weights.len() != m * p {
            return Err(Error::InvariantViolation(format!(
                "skin weight table has {} entries, expected {}",
                self.skin_weights.len(),
                m * p
            )));
        }
        if self.uv.len() != m {
            return Err(Error::InvariantViolation(format!(
                "{} uv coordinates for {m} vertices",
                self.uv.len()
            )));
        }
        if !self.part_names.is_empty() && self.part_names.len() != p {
            return Err(Error::InvariantViolation(format!(
                "{} part names for {p} parts",
                self.part_names.len()
            )));
        }
        let finite = |v: &Vec3| v.iter().all(|c| c.is_finite());
        if !self.rest_vertices.iter().all(finite) || !self.joints_rest.iter().all(finite) {
            return Err(Error::InvariantViolation(
                "non-finite vertex or joint position".into(),
            ));
        }
        check_weights(&self.skin_weights, p)?;
        for (f, face) in self.faces.iter().enumerate() {
            if face.iter().any(|&i| i >= m) {
                return Err(Error::InvariantViolation(format!(
                    "face {f} references a vertex index ≥ {m}"
                )));
            }
        }
        for (i, uv) in self.uv.iter().enumerate() {
            if !uv.iter().all(|c| (0.0..=1.0).contains(c)) {
                return Err(Error::InvariantViolation(format!(
                    "uv of vertex {i} lies outside [0,1]²"
                )));
            }
        }
        for (s, basis) in self.shape_basis.iter().enumerate() {
            if basis.len() != m || !basis.iter().all(finite) {
                return Err(Error::InvariantViolation(format!(
                    "shape basis {s} must hold {m} finite displacements"
                )));
            }
        }
        self.skeleton().traversal_order()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    /// Axis-angle per joint, radians.
    pub joint_rotations: Vec<Vec3>,
    /// Meters.
    pub root_translation: Vec3,
}

impl Pose {
    pub fn rest(num_joints: usize) -> Self {
        Self {
            joint_rotations: vec![Vec3::zeros(); num_joints],
            root_translation: Vec3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.joint_rotations
            .iter()
            .chain(std::iter::once(&self.root_translation))
            .all(|v| v.iter().all(|c| c.is_finite()))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ShapeCoeffs {
    pub beta: Vec<f64>,
}

impl ShapeCoeffs {
    pub fn zeros(dim: usize) -> Self {
        Self {
            beta: vec![0.0; dim],
        }
    }
}

/// Joint positions and the kinematic tree.
#[derive(Clone, Debug, PartialEq)]
pub struct Skeleton {
    pub joints: Vec<Vec3>,
    pub parent: Vec<Option<usize>>,
}

impl Skeleton {
    /// Parents-before-children ordering; rejects forests, cycles and
    /// out-of-range parents.
    pub fn traversal_order(&self) -> Result<Vec<usize>> {
        let p = self.parent.len();
        let roots: Vec<usize> = (0..p).filter(|&j| self.parent[j].is_none()).collect();
        if roots.len() != 1 {
            return Err(Error::Kinematics(format!(
                "expected exactly one root joint, found {}",
                roots.len()
            )));
        }
        let mut children = vec![Vec::new(); p];
        for (j, parent) in self.parent.iter().enumerate() {
            if let Some(q) = parent {
                if *q >= p {
                    return Err(Error::Kinematics(format!(
                        "joint {j} has out-of-range parent {q}"
                    )));
                }
                children[*q].push(j);
            }
        }
        let mut order = Vec::with_capacity(p);
        let mut stack = vec![roots[0]];
        while let Some(j) = stack.pop() {
            order.push(j);
            stack.extend(children[j].iter().rev().copied());
        }
        if order.len() != p {
            return Err(Error::Kinematics(
                "parent array contains a cycle or unreachable joints".into(),
            ));
        }
        Ok(order)
    }
}

/// Rest vertices and joints after applying shape blendshapes.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapedBody {
    pub vertices: Vec<Vec3>,
    pub joints: Vec<Vec3>,
}

/// `v̄(β) = V̄ + Σ_s β_s B_s`. Each joint moves by the mean displacement of
/// the vertices whose dominant part is that joint's part; joints with no such
/// vertices stay put.
pub fn apply_shape(template: &BodyTemplate, beta: &ShapeCoeffs) -> Result<ShapedBody> {
    let s = template.shape_dim();
    if beta.beta.len() != s {
        return Err(Error::ShapeDimension {
            expected: s,
            got: beta.beta.len(),
        });
    }
    let displacement: Vec<Vec3> = (0..template.num_vertices())
        .map(|i| {
            template
                .shape_basis
                .iter()
                .zip(&beta.beta)
                .fold(Vec3::zeros(), |acc, (basis, b)| acc + basis[i] * *b)
        })
        .collect();
    let vertices = template
        .rest_vertices
        .iter()
        .zip(&displacement)
        .map(|(v, d)| v + d)
        .collect();

    let p = template.num_parts();
    let labels = template.part_labels();
    let mut sum = vec![Vec3::zeros(); p];
    let mut count = vec![0usize; p];
    for (d, &l) in displacement.iter().zip(&labels) {
        sum[l] += d;
        count[l] += 1;
    }
    let joints = template
        .joints_rest
        .iter()
        .enumerate()
        .map(|(j, pos)| {
            if count[j] > 0 {
                pos + sum[j] / count[j] as f64
            } else {
                *pos
            }
        })
        .collect();
    Ok(ShapedBody { vertices, joints })
}

/// Per-part transforms `A_p = Tr(root) · Ĝ_p(θ) · Ĝ_p(0)⁻¹`, where `Ĝ_p`
/// chains rotations about each joint location down the tree.
pub fn forward_kinematics(skeleton: &Skeleton, pose: &Pose) -> Result<Vec<RigidTransform>> {
    let p = skeleton.parent.len();
    if skeleton.joints.len() != p {
        return Err(Error::Kinematics(format!(
            "{} joint positions for {p} parents",
            skeleton.joints.len()
        )));
    }
    if pose.joint_rotations.len() != p {
        return Err(Error::Kinematics(format!(
            "pose has {} joint rotations, skeleton has {p} joints",
            pose.joint_rotations.len()
        )));
    }
    let order = skeleton.traversal_order()?;
    let mut global = vec![RigidTransform::identity(); p];
    for &j in &order {
        let rot = axis_angle_to_matrix(&pose.joint_rotations[j]);
        let offset = match skeleton.parent[j] {
            Some(q) => skeleton.joints[j] - skeleton.joints[q],
            None => skeleton.joints[j],
        };
        let local = RigidTransform::new(rot, offset);
        global[j] = match skeleton.parent[j] {
            Some(q) => global[q].compose(&local),
            None => local,
        };
    }
    let root = RigidTransform::from_translation(pose.root_translation);
    Ok(global
        .iter()
        .zip(&skeleton.joints)
        .map(|(g, joint)| root.compose(&g.compose(&RigidTransform::from_translation(-joint))))
        .collect())
}

pub(crate) fn check_weights(weights: &[f64], parts: usize) -> Result<()> {
    for (i, row) in weights.chunks(parts).enumerate() {
        let sum: f64 = row.iter().sum();
        if row.iter().any(|w| !(*w >= 0.0)) || (sum - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::InvariantViolation(format!(
                "skin weights of vertex {i} are not a partition of unity (sum {sum})"
            )));
        }
    }
    Ok(())
}

/// `v_i = (Σ_p W_ip A_p) v̄_i`.
pub fn skin_vertices(
    rest_vertices: &[Vec3],
    skin_weights: &[f64],
    transforms: &[RigidTransform],
) -> Result<Vec<Vec3>> {
    let p = transforms.len();
    if p == 0 || skin_weights.len() != rest_vertices.len() * p {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} vertices and {p} transforms",
            skin_weights.len(),
            rest_vertices.len()
        )));
    }
    check_weights(skin_weights, p)?;
    Ok(rest_vertices
        .iter()
        .zip(skin_weights.chunks(p))
        .map(|(v, w)| blend_transforms(w, transforms).apply(v))
        .collect())
}

/// Area-weighted vertex normals. Isolated vertices get `(0,0,1)`.
pub fn vertex_normals(vertices: &[Vec3], faces: &[[usize; 3]]) -> Result<Vec<Vec3>> {
    let mut acc = vec![Vec3::zeros(); vertices.len()];
    let mut incident = vec![false; vertices.len()];
    for (f, face) in faces.iter().enumerate() {
        let [a, b, c] = *face;
        if a.max(b).max(c) >= vertices.len() {
            return Err(Error::InvariantViolation(format!(
                "face {f} references a missing vertex"
            )));
        }
        // Unnormalized cross product: magnitude is twice the face area.
        let n = (vertices[b] - vertices[a]).cross(&(vertices[c] - vertices[a]));
        for &i in face {
            acc[i] += n;
            incident[i] = true;
        }
    }
    acc.into_iter()
        .zip(incident)
        .enumerate()
        .map(|(i, (n, hit))| {
            if !hit {
                return Ok(Vec3::z());
            }
            let len = n.norm();
            if len == 0.0 || !len.is_finite() {
                Err(Error::DegenerateNormal { vertex: i })
            } else {
                Ok(n / len)
            }
        })
        .collect()
}

/// `argmax_p W_ip`, ties to the lowest part index.
pub fn part_labels(skin_weights: &[f64], parts: usize) -> Vec<usize> {
    skin_weights
        .chunks(parts)
        .map(|row| {
            let mut best = 0;
            for (p, w) in row.iter().enumerate() {
                if *w > row[best] {
                    best = p;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Mat3;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    fn single_joint() -> Skeleton {
        Skeleton {
            joints: vec![Vec3::zeros()],
            parent: vec![None],
        }
    }

    fn tiny_template() -> BodyTemplate {
        BodyTemplate {
            rest_vertices: vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)],
            faces: vec![[0, 1, 2]],
            skin_weights: vec![1.0, 0.0, 0.5, 0.5, 0.0, 1.0],
            joints_rest: vec![Vec3::zeros(), Vec3::new(0.5, 0.0, 0.0)],
            parent: vec![None, Some(0)],
            shape_basis: vec![vec![Vec3::new(0.2, 0.0, 0.0); 3], vec![Vec3::new(0.0, 0.1, 0.0); 3]],
            uv: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            part_names: vec!["a".into(), "b".into()],
        }
    }

    #[test]
    fn zero_beta_is_identity() {
        let t = tiny_template();
        let shaped = apply_shape(&t, &ShapeCoeffs::zeros(2)).unwrap();
        assert_eq!(shaped.vertices, t.rest_vertices);
        assert_eq!(shaped.joints, t.joints_rest);
    }

    #[test]
    fn shape_is_linear_in_beta() {
        let t = tiny_template();
        let shaped = apply_shape(&t, &ShapeCoeffs { beta: vec![0.0, 1.0] }).unwrap();
        for (a, b) in shaped.vertices.iter().zip(&t.rest_vertices) {
            assert_relative_eq!(a - b, Vec3::new(0.0, 0.1, 0.0), epsilon = 1e-15);
        }
        let shaped = apply_shape(&t, &ShapeCoeffs { beta: vec![0.5, 0.0] }).unwrap();
        for (a, b) in shaped.vertices.iter().zip(&t.rest_vertices) {
            assert_relative_eq!(a - b, Vec3::new(0.1, 0.0, 0.0), epsilon = 1e-15);
        }
        // Joints follow the mean displacement of their dominant vertices.
        assert_relative_eq!(shaped.joints[1], Vec3::new(0.6, 0.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn shape_length_mismatch() {
        let err = apply_shape(&tiny_template(), &ShapeCoeffs::zeros(3)).unwrap_err();
        assert!(matches!(err, Error::ShapeDimension { expected: 2, got: 3 }));
    }

    #[test]
    fn rest_pose_gives_identity_transforms() {
        let t = tiny_template();
        let a = forward_kinematics(&t.skeleton(), &Pose::rest(2)).unwrap();
        for x in a {
            assert_eq!(x, RigidTransform::identity());
        }
    }

    #[test]
    fn quarter_turn_about_origin_joint() {
        let pose = Pose {
            joint_rotations: vec![Vec3::new(0.0, 0.0, FRAC_PI_2)],
            root_translation: Vec3::zeros(),
        };
        let a = forward_kinematics(&single_joint(), &pose).unwrap();
        assert_relative_eq!(a[0].apply(&Vec3::x()), Vec3::y(), epsilon = 1e-12);
    }

    #[test]
    fn root_translation_is_pure_offset() {
        let t = tiny_template();
        let pose = Pose {
            joint_rotations: vec![Vec3::zeros(); 2],
            root_translation: Vec3::new(0.0, 0.0, 1.0),
        };
        for a in forward_kinematics(&t.skeleton(), &pose).unwrap() {
            assert_eq!(a.rotation, Mat3::identity());
            assert_eq!(a.translation, Vec3::new(0.0, 0.0, 1.0));
        }
    }

    #[test]
    fn child_rotates_about_its_own_joint() {
        let t = tiny_template();
        let pose = Pose {
            joint_rotations: vec![Vec3::zeros(), Vec3::new(0.0, 0.0, FRAC_PI_2)],
            root_translation: Vec3::zeros(),
        };
        let a = forward_kinematics(&t.skeleton(), &pose).unwrap();
        // The child joint stays fixed, a point one unit past it swings to +y.
        assert_relative_eq!(a[1].apply(&t.joints_rest[1]), t.joints_rest[1], epsilon = 1e-12);
        assert_relative_eq!(a[1].apply(&Vec3::new(1.5, 0.0, 0.0)), Vec3::new(0.5, 1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn malformed_trees_are_rejected() {
        let two_roots = Skeleton {
            joints: vec![Vec3::zeros(); 2],
            parent: vec![None, None],
        };
        assert!(matches!(two_roots.traversal_order(), Err(Error::Kinematics(_))));
        let cycle = Skeleton {
            joints: vec![Vec3::zeros(); 3],
            parent: vec![None, Some(2), Some(1)],
        };
        assert!(matches!(cycle.traversal_order(), Err(Error::Kinematics(_))));
        let out_of_range = Skeleton {
            joints: vec![Vec3::zeros(); 2],
            parent: vec![None, Some(7)],
        };
        assert!(forward_kinematics(&out_of_range, &Pose::rest(2)).is_err());
    }

    #[test]
    fn skinning_blends_transforms() {
        let rest = vec![Vec3::new(0.3, -0.2, 0.1)];
        let a = [
            RigidTransform::identity(),
            RigidTransform::from_translation(Vec3::new(2.0, 0.0, 0.0)),
        ];
        let posed = skin_vertices(&rest, &[0.5, 0.5], &a).unwrap();
        assert_relative_eq!(posed[0], rest[0] + Vec3::new(1.0, 0.0, 0.0), epsilon = 1e-15);

        let r = RigidTransform::from_axis_angle(&Vec3::new(0.0, FRAC_PI_2, 0.0));
        let posed = skin_vertices(&rest, &[0.0, 1.0], &[RigidTransform::identity(), r]).unwrap();
        assert_relative_eq!(posed[0], r.apply(&rest[0]), epsilon = 1e-15);

        let identity = skin_vertices(&rest, &[0.25, 0.75], &[RigidTransform::identity(); 2]).unwrap();
        assert_eq!(identity, rest);
    }

    #[test]
    fn unnormalized_weights_are_rejected() {
        let rest = vec![Vec3::zeros()];
        let err = skin_vertices(&rest, &[0.5, 0.6], &[RigidTransform::identity(); 2]).unwrap_err();
        assert!(matches!(err, Error::InvariantViolation(_)));
        let err = skin_vertices(&rest, &[1.5, -0.5], &[RigidTransform::identity(); 2]).unwrap_err();
        assert!(matches!(err, Error::InvariantViolation(_)));
    }

    #[test]
    fn planar_normals() {
        let v = vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(1.0, 1.0, 0.0)];
        let n = vertex_normals(&v[..3], &[[0, 1, 2]]).unwrap();
        assert!(n.iter().all(|n| *n == Vec3::z()));
        let n = vertex_normals(&v, &[[0, 1, 2], [1, 3, 2]]).unwrap();
        assert!(n.iter().all(|n| (n - Vec3::z()).norm() < 1e-15));
    }

    #[test]
    fn tent_ridge_normal() {
        // Two unit right triangles meeting at a right angle along the x-axis ridge.
        let v = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ];
        let faces = [[0, 1, 2], [0, 3, 1]];
        let n = vertex_normals(&v, &faces).unwrap();
        // Cross-product oracle per face.
        let n0 = (v[1] - v[0]).cross(&(v[2] - v[0]));
        let n1 = (v[3] - v[0]).cross(&(v[1] - v[0]));
        let expected = (n0 + n1).normalize();
        assert_relative_eq!(n[0], expected, epsilon = 1e-15);
        assert_relative_eq!(n[1], expected, epsilon = 1e-15);
        assert_relative_eq!(expected, Vec3::new(0.0, 1.0, 1.0) / 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn isolated_and_cancelling_normals() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::new(5.0, 5.0, 5.0)];
        let n = vertex_normals(&v, &[[0, 1, 2], [0, 2, 1]]);
        assert!(matches!(n, Err(Error::DegenerateNormal { vertex: 0 })));
        let n = vertex_normals(&v, &[[0, 1, 2]]).unwrap();
        assert_eq!(n[3], Vec3::z());
    }

    #[test]
    fn labels_by_argmax() {
        assert_eq!(part_labels(&[0.0, 1.0, 0.0], 3), vec![1]);
        assert_eq!(part_labels(&[0.5, 0.5], 2), vec![0]);
        assert_eq!(part_labels(&[0.2, 0.7, 0.1], 3), vec![1]);
    }

    #[test]
    fn tiny_template_validates() {
        tiny_template().validate().unwrap();
        let mut bad = tiny_template();
        bad.uv[0] = [1.2, 0.0];
        assert!(bad.validate().is_err());
        let mut bad = tiny_template();
        bad.faces.push([0, 1, 9]);
        assert!(bad.validate().is_err());
    }
}
