//! Procedural "capsule person": six capsule-shaped parts (torso, head, two
//! arms, two legs) meshed, rigged and UV-unwrapped with the same structure as
//! a full parametric body template. Y is up and the body faces +z.

use std::f64::consts::PI;

use super::BodyTemplate;
use crate::math::Vec3;

/// One rigid body part shaped as a capsule: all points within `radius` of the
/// segment `start → end`.
#[derive(Clone, Debug, PartialEq)]
pub struct CapsulePart {
    pub name: &'static str,
    pub start: Vec3,
    pub end: Vec3,
    pub radius: f64,
    pub joint: Vec3,
    pub parent: Option<usize>,
    segments: usize,
    cylinder_rows: usize,
}

pub const TORSO: usize = 0;
pub const HEAD: usize = 1;
pub const LEFT_ARM: usize = 2;
pub const RIGHT_ARM: usize = 3;
pub const LEFT_LEG: usize = 4;
pub const RIGHT_LEG: usize = 5;

/// Rest-pose capsule layout. `start` is the end nearest the parent joint.
pub fn capsule_layout() -> Vec<CapsulePart> {
    let v = Vec3::new;
    let part = |name, start, end, radius, joint, parent, segments, cylinder_rows| CapsulePart {
        name,
        start,
        end,
        radius,
        joint,
        parent,
        segments,
        cylinder_rows,
    };
    vec![
        part("torso", v(0.0, 0.05, 0.0), v(0.0, 0.50, 0.0), 0.15, v(0.0, 0.0, 0.0), None, 12, 7),
        part("head", v(0.0, 0.65, 0.0), v(0.0, 0.75, 0.0), 0.11, v(0.0, 0.57, 0.0), Some(TORSO), 12, 2),
        part("left_arm", v(0.20, 0.45, 0.0), v(0.80, 0.45, 0.0), 0.05, v(0.18, 0.45, 0.0), Some(TORSO), 8, 9),
        part("right_arm", v(-0.20, 0.45, 0.0), v(-0.80, 0.45, 0.0), 0.05, v(-0.18, 0.45, 0.0), Some(TORSO), 8, 9),
        part("left_leg", v(0.09, -0.05, 0.0), v(0.09, -0.85, 0.0), 0.065, v(0.09, -0.02, 0.0), Some(TORSO), 8, 9),
        part("right_leg", v(-0.09, -0.05, 0.0), v(-0.09, -0.85, 0.0), 0.065, v(-0.09, -0.02, 0.0), Some(TORSO), 8, 9),
    ]
}

/// Cap latitudes measured from the pole, excluding the pole and the equator.
const CAP_LATITUDES: [f64; 2] = [PI / 6.0, PI / 3.0];

fn perpendicular_basis(axis: &Vec3) -> (Vec3, Vec3) {
    let helper = if axis.z.abs() < 0.9 { Vec3::z() } else { Vec3::x() };
    let e1 = axis.cross(&helper).normalize();
    let e2 = axis.cross(&e1);
    (e1, e2)
}

struct CapsuleMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    /// Tile-local (u, v) in [0,1]².
    uv: Vec<[f64; 2]>,
    /// Blend factor toward the parent part: 0 away from the proximal cap.
    parent_share: Vec<f64>,
    /// Outward radial direction from the capsule axis (zero along the axis caps).
    radial: Vec<Vec3>,
}

fn mesh_capsule(c: &CapsulePart) -> CapsuleMesh {
    let axis_vec = c.end - c.start;
    let length = axis_vec.norm();
    let axis = axis_vec / length;
    let (e1, e2) = perpendicular_basis(&axis);
    let segs = c.segments;

    // Rows from the start pole to the end pole: (center along axis, ring radius, proximal share).
    let mut rows: Vec<(f64, f64, f64)> = Vec::new();
    for &lat in &CAP_LATITUDES {
        let share = 0.4 * (1.0 - lat / (PI / 2.0));
        rows.push((-c.radius * lat.cos(), c.radius * lat.sin(), share));
    }
    for k in 0..c.cylinder_rows {
        let t = k as f64 / (c.cylinder_rows - 1) as f64;
        rows.push((t * length, c.radius, 0.0));
    }
    for &lat in CAP_LATITUDES.iter().rev() {
        rows.push((length + c.radius * lat.cos(), c.radius * lat.sin(), 0.0));
    }
    let n_rows = rows.len();

    let mut vertices = Vec::new();
    let mut uv = Vec::new();
    let mut parent_share = Vec::new();
    let mut radial = Vec::new();
    let v_of = |row: f64| (row + 1.0) / (n_rows + 1) as f64;

    vertices.push(c.start - axis * c.radius);
    uv.push([0.5, 0.0]);
    parent_share.push(0.4);
    radial.push(Vec3::zeros());
    for (r, &(along, ring, share)) in rows.iter().enumerate() {
        for s in 0..segs {
            let phi = 2.0 * PI * s as f64 / segs as f64;
            let dir = e1 * phi.cos() + e2 * phi.sin();
            vertices.push(c.start + axis * along + dir * ring);
            uv.push([(s as f64 + 0.5) / segs as f64, v_of(r as f64)]);
            parent_share.push(share);
            radial.push(dir * ring);
        }
    }
    vertices.push(c.end + axis * c.radius);
    uv.push([0.5, 1.0]);
    parent_share.push(0.0);
    radial.push(Vec3::zeros());

    let ring_index = |r: usize, s: usize| 1 + r * segs + (s % segs);
    let last = vertices.len() - 1;
    let mut faces = Vec::new();
    // Winding: (e1, e2, axis) is right-handed, so increasing phi is CCW about +axis.
    for s in 0..segs {
        faces.push([0, ring_index(0, s + 1), ring_index(0, s)]);
    }
    for r in 0..n_rows - 1 {
        for s in 0..segs {
            let a = ring_index(r, s);
            let b = ring_index(r, s + 1);
            let c2 = ring_index(r + 1, s);
            let d = ring_index(r + 1, s + 1);
            faces.push([a, b, d]);
            faces.push([a, d, c2]);
        }
    }
    for s in 0..segs {
        faces.push([last, ring_index(n_rows - 1, s), ring_index(n_rows - 1, s + 1)]);
    }
    CapsuleMesh {
        vertices,
        faces,
        uv,
        parent_share,
        radial,
    }
}

/// UV tiles are laid out on a 3×2 grid with a margin so bilinear taps never
/// cross between parts.
fn tile_uv(part: usize, local: [f64; 2]) -> [f64; 2] {
    const COLS: usize = 3;
    const ROWS: usize = 2;
    const MARGIN: f64 = 0.1;
    let (col, row) = (part % COLS, part / COLS);
    let w = 1.0 / COLS as f64;
    let h = 1.0 / ROWS as f64;
    [
        (col as f64 + MARGIN + (1.0 - 2.0 * MARGIN) * local[0]) * w,
        (row as f64 + MARGIN + (1.0 - 2.0 * MARGIN) * local[1]) * h,
    ]
}

/// The default synthetic template: ~630 vertices, 6 parts, 2 shape
/// blendshapes (height, girth).
pub fn capsule_person() -> BodyTemplate {
    let layout = capsule_layout();
    let p = layout.len();
    let mut rest_vertices = Vec::new();
    let mut faces = Vec::new();
    let mut skin_weights = Vec::new();
    let mut uv = Vec::new();
    let mut height = Vec::new();
    let mut girth = Vec::new();
    for (part, c) in layout.iter().enumerate() {
        let mesh = mesh_capsule(c);
        let offset = rest_vertices.len();
        faces.extend(mesh.faces.iter().map(|f| f.map(|i| i + offset)));
        for i in 0..mesh.vertices.len() {
            let mut row = vec![0.0; p];
            match c.parent {
                Some(q) if mesh.parent_share[i] > 0.0 => {
                    row[q] = mesh.parent_share[i];
                    row[part] = 1.0 - mesh.parent_share[i];
                }
                _ => row[part] = 1.0,
            }
            skin_weights.extend(row);
            uv.push(tile_uv(part, mesh.uv[i]));
            height.push(Vec3::new(0.0, 0.1 * mesh.vertices[i].y, 0.0));
            girth.push(mesh.radial[i] * 0.2);
        }
        rest_vertices.extend(mesh.vertices);
    }
    BodyTemplate {
        rest_vertices,
        faces,
        skin_weights,
        joints_rest: layout.iter().map(|c| c.joint).collect(),
        parent: layout.iter().map(|c| c.parent).collect(),
        shape_basis: vec![height, girth],
        uv,
        part_names: layout.iter().map(|c| c.name.to_string()).collect(),
    }
}
