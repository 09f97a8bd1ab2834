//! Pinhole camera producing the inverse view-projection the ray-generation
//! shader reads from the scene constant buffer.

use nalgebra::{Matrix4, Perspective3, Point3, Vector4};
use serde::{Deserialize, Serialize};

use crate::math::{Mat4, Vec3};

const Z_NEAR: f64 = 0.1;
const Z_FAR: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Camera {
    pub position: [f64; 3],
    pub look_at: [f64; 3],
    pub up: [f64; 3],
    pub vertical_fov_deg: f64,
}

impl Default for Camera {
    /// Engine default framing: the plane and all procedural objects in view.
    fn default() -> Self {
        Self {
            position: [0.0, 5.0, 13.0],
            look_at: [0.0, 1.2, 0.0],
            up: [0.0, 1.0, 0.0],
            vertical_fov_deg: 45.0,
        }
    }
}

impl Camera {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.vertical_fov_deg > 0.0 && self.vertical_fov_deg < 180.0) {
            return Err(format!(
                "vertical field of view must be in (0, 180) degrees, got {}",
                self.vertical_fov_deg
            ));
        }
        let all = self.position.iter().chain(&self.look_at).chain(&self.up);
        if !all.clone().all(|v| v.is_finite()) {
            return Err("camera vectors must be finite".into());
        }
        let forward = self.look_at_v() - self.position_v();
        if forward.norm() == 0.0 {
            return Err("camera position and look-at point coincide".into());
        }
        if forward.cross(&Vec3::from(self.up)).norm() <= 1e-12 * forward.norm() {
            return Err("camera up vector is parallel to the view direction".into());
        }
        Ok(())
    }

    pub fn position_v(&self) -> Vec3 {
        Vec3::from(self.position)
    }

    pub fn look_at_v(&self) -> Vec3 {
        Vec3::from(self.look_at)
    }

    pub fn forward(&self) -> Vec3 {
        (self.look_at_v() - self.position_v()).normalize()
    }

    /// World to clip space (right-handed view, OpenGL-style depth range).
    pub fn view_projection(&self, aspect: f64) -> Mat4 {
        let view = Matrix4::look_at_rh(
            &Point3::from(self.position_v()),
            &Point3::from(self.look_at_v()),
            &Vec3::from(self.up),
        );
        let proj = Perspective3::new(aspect, self.vertical_fov_deg.to_radians(), Z_NEAR, Z_FAR);
        proj.to_homogeneous() * view
    }

    /// Clip space back to world space.
    pub fn projection_to_world(&self, aspect: f64) -> Mat4 {
        self.view_projection(aspect)
            .try_inverse()
            .expect("validated camera has an invertible view-projection")
    }

    /// Continuous pixel coordinates (x right, y down) of a world point, or
    /// `None` if it is behind the camera.
    pub fn project(&self, p: &Vec3, width: u32, height: u32) -> Option<[f64; 2]> {
        let clip = self.view_projection(width as f64 / height as f64) * Vector4::new(p.x, p.y, p.z, 1.0);
        if clip.w <= 0.0 {
            return None;
        }
        let (x, y) = (clip.x / clip.w, clip.y / clip.w);
        Some([(x + 1.0) * 0.5 * width as f64, (1.0 - y) * 0.5 * height as f64])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid_and_bad_cameras_rejected() {
        assert!(Camera::default().validate().is_ok());
        let bad_fov = Camera {
            vertical_fov_deg: 180.0,
            ..Default::default()
        };
        assert!(bad_fov.validate().is_err());
        let degenerate = Camera {
            look_at: Camera::default().position,
            ..Default::default()
        };
        assert!(degenerate.validate().is_err());
        let parallel_up = Camera {
            position: [0.0, 5.0, 0.0],
            look_at: [0.0, 0.0, 0.0],
            ..Default::default()
        };
        assert!(parallel_up.validate().is_err());
    }

    #[test]
    fn look_at_point_projects_to_image_center() {
        let c = Camera::default();
        let [x, y] = c.project(&c.look_at_v(), 320, 240).unwrap();
        assert!((x - 160.0).abs() < 1e-9 && (y - 120.0).abs() < 1e-9);
        let behind = c.position_v() - c.forward();
        assert!(c.project(&behind, 320, 240).is_none());
    }
}
