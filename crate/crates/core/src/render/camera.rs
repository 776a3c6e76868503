use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Mat3, RigidTransform, Vec3};

/// Pinhole camera. The camera looks down its +z axis with image x to the
/// right and image y down; `pose` maps camera coordinates to world.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub pose: RigidTransform,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit length.
    pub direction: Vec3,
    pub near: f64,
    pub far: f64,
}

impl Ray {
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.fx.is_finite() || !self.fy.is_finite() {
            return Err(Error::Config(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("image size must be positive".into()));
        }
        if !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(Error::Config("principal point must be finite".into()));
        }
        self.pose
            .validate()
            .map_err(|e| Error::Config(format!("camera pose: {e}")))
    }

    /// Camera at `eye` looking at `target`; `up` is the world up direction.
    pub fn look_at(
        eye: Vec3,
        target: Vec3,
        up: Vec3,
        fx: f64,
        fy: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let forward = target - eye;
        if forward.norm() < 1e-12 {
            return Err(Error::Config("camera eye coincides with target".into()));
        }
        let z = forward.normalize();
        let x = z.cross(&up);
        if x.norm() < 1e-9 {
            return Err(Error::Config("camera up vector is parallel to the view direction".into()));
        }
        // Image y points down, i.e. against world up.
        let x = x.normalize();
        let y = z.cross(&x);
        let camera = Self {
            fx,
            fy,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
            pose: RigidTransform::new(Mat3::from_columns(&[x, y, z]), eye),
        };
        camera.validate()?;
        Ok(camera)
    }

    /// Orbit around `target` in the y-up world: azimuth about +y from the +z
    /// axis, elevation toward +y, both in radians.
    pub fn orbit(
        target: Vec3,
        azimuth: f64,
        elevation: f64,
        distance: f64,
        fx: f64,
        size: (usize, usize),
    ) -> Result<Self> {
        if !(distance > 0.0) {
            return Err(Error::Config(format!("orbit distance {distance} must be positive")));
        }
        let dir = Vec3::new(
            elevation.cos() * azimuth.sin(),
            elevation.sin(),
            elevation.cos() * azimuth.cos(),
        );
        Self::look_at(target + dir * distance, target, Vec3::y(), fx, fx, size.0, size.1)
    }

    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }

    /// Ray through the center of pixel `(x, y)`, unbounded.
    pub fn pixel_ray(&self, x: usize, y: usize) -> Ray {
        let d = Vec3::new(
            (x as f64 + 0.5 - self.cx) / self.fx,
            (y as f64 + 0.5 - self.cy) / self.fy,
            1.0,
        );
        Ray {
            origin: self.pose.translation,
            direction: (self.pose.rotation * d).normalize(),
            near: 0.0,
            far: f64::INFINITY,
        }
    }

    /// Row-major `H × W` rays.
    pub fn generate_rays(&self) -> Vec<Ray> {
        (0..self.height)
            .flat_map(|y| (0..self.width).map(move |x| (x, y)))
            .map(|(x, y)| self.pixel_ray(x, y))
            .collect()
    }

    /// Pixel coordinates of a world point, or `None` behind the camera.
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64)> {
        let c = self.pose.inverse_apply(p);
        if c.z <= 0.0 {
            return None;
        }
        Some((self.fx * c.x / c.z + self.cx, self.fy * c.y / c.z + self.cy))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cam() -> Camera {
        Camera {
            fx: 100.0,
            fy: 100.0,
            cx: 50.0,
            cy: 50.0,
            width: 100,
            height: 100,
            pose: RigidTransform::identity(),
        }
    }

    #[test]
    fn principal_ray_looks_down_z() {
        // Pixel (49, 49) has its center at (49.5, 49.5) = (cx, cy).
        let c = Camera { cx: 49.5, cy: 49.5, ..cam() };
        let r = c.pixel_ray(49, 49);
        assert_relative_eq!(r.direction, Vec3::z(), epsilon = 1e-15);
    }

    #[test]
    fn rays_share_origin() {
        let mut c = cam();
        c.width = 4;
        c.height = 3;
        c.pose.translation = Vec3::new(1.0, 2.0, 3.0);
        let rays = c.generate_rays();
        assert_eq!(rays.len(), 12);
        assert!(rays.iter().all(|r| r.origin == Vec3::new(1.0, 2.0, 3.0)));
        assert!(rays.iter().all(|r| (r.direction.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn corner_pixel_direction() {
        let r = cam().pixel_ray(0, 0);
        let expected = Vec3::new(-49.5 / 100.0, -49.5 / 100.0, 1.0).normalize();
        assert_relative_eq!(r.direction, expected, epsilon = 1e-15);
    }

    #[test]
    fn look_at_centers_target() {
        let c = Camera::look_at(Vec3::new(0.0, 1.0, 4.0), Vec3::new(0.0, 1.0, 0.0), Vec3::y(), 80.0, 80.0, 64, 64).unwrap();
        let (u, v) = c.project(&Vec3::new(0.0, 1.0, 0.0)).unwrap();
        assert_relative_eq!(u, 32.0, epsilon = 1e-12);
        assert_relative_eq!(v, 32.0, epsilon = 1e-12);
        // World up projects toward the top of the image.
        let (_, v_up) = c.project(&Vec3::new(0.0, 1.5, 0.0)).unwrap();
        assert!(v_up < 32.0);
    }

    #[test]
    fn degenerate_cameras() {
        assert!(Camera::look_at(Vec3::zeros(), Vec3::zeros(), Vec3::y(), 1.0, 1.0, 4, 4).is_err());
        assert!(Camera::look_at(Vec3::zeros(), Vec3::y(), Vec3::y(), 1.0, 1.0, 4, 4).is_err());
        assert!(Camera::orbit(Vec3::zeros(), 0.0, 0.0, 0.0, 10.0, (4, 4)).is_err());
        let mut c = cam();
        c.fx = 0.0;
        assert!(c.validate().is_err());
    }
}
