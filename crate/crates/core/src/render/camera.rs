use crate::geometry::{Ray, Vec3};

/// Pinhole camera with a vertical field of view.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Camera {
    pub origin: Vec3,
    pub look_at: Vec3,
    pub up: Vec3,
    pub fov_deg: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return Err(format!("field of view {} is outside (0, 180)", self.fov_deg));
        }
        if self.width == 0 || self.height == 0 {
            return Err("image size must be at least 1x1".into());
        }
        let f = self.look_at - self.origin;
        if f.length_squared() == 0.0 || f.cross(self.up).length_squared() == 0.0 {
            return Err("camera direction is degenerate or parallel to up".into());
        }
        Ok(())
    }

    /// Primary ray through pixel `(x, y)` (row 0 at the top) at sub-pixel offset `u`.
    pub fn ray(&self, x: usize, y: usize, u: [f64; 2]) -> Ray {
        let forward = (self.look_at - self.origin).normalize();
        let right = forward.cross(self.up).normalize();
        let up = right.cross(forward);
        let tan = (self.fov_deg.to_radians() * 0.5).tan();
        let aspect = self.width as f64 / self.height as f64;
        let sx = (2.0 * (x as f64 + u[0]) / self.width as f64 - 1.0) * tan * aspect;
        let sy = (1.0 - 2.0 * (y as f64 + u[1]) / self.height as f64) * tan;
        Ray::new(self.origin, (forward + right * sx + up * sy).normalize())
    }
}
