use serde::{Deserialize, Serialize};

use super::RenderError;
use crate::real::{Real, Vec3};

/// Pinhole camera in the volume's physical (mm) frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Camera {
    pub position: [f64; 3],
    pub look_at: [f64; 3],
    #[serde(default = "default_up")]
    pub up: [f64; 3],
    /// Degrees.
    pub vertical_fov: f64,
    /// (width, height) in pixels.
    pub image_size: [u32; 2],
}

fn default_up() -> [f64; 3] {
    [0.0, 1.0, 0.0]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray<T> {
    pub origin: Vec3<T>,
    pub direction: Vec3<T>,
}

impl<T: Real> Ray<T> {
    #[inline]
    pub fn at(&self, t: T) -> Vec3<T> {
        self.origin + self.direction * t
    }
}

/// Orthonormal view frame derived from a validated camera.
#[derive(Debug, Clone, Copy)]
pub struct ViewFrame<T> {
    pub eye: Vec3<T>,
    pub forward: Vec3<T>,
    pub right: Vec3<T>,
    pub up: Vec3<T>,
    tan_half_fov: T,
    aspect: T,
    width: T,
    height: T,
}

impl Camera {
    /// Camera on `direction` from the centre of `extent` (mm), far enough to
    /// see the whole box.
    pub fn orbit(center: [f64; 3], direction: [f64; 3], distance: f64, fov: f64, size: [u32; 2]) -> Self {
        let d = Vec3::from(direction).normalize();
        let position = Vec3::from(center) + d * distance;
        let up = if d.y.abs() > 0.9 {
            [0.0, 0.0, 1.0]
        } else {
            [0.0, 1.0, 0.0]
        };
        Self {
            position: position.to_array(),
            look_at: center,
            up,
            vertical_fov: fov,
            image_size: size,
        }
    }

    pub fn validate(&self) -> Result<(), RenderError> {
        let invalid = |field: &'static str, message: &str| RenderError::InvalidSettings {
            field,
            message: message.to_string(),
        };
        let finite = |v: &[f64; 3]| v.iter().all(|c| c.is_finite());
        if !finite(&self.position) || !finite(&self.look_at) || !finite(&self.up) {
            return Err(invalid("camera", "coordinates must be finite"));
        }
        let view = Vec3::from(self.look_at) - Vec3::from(self.position);
        if view.norm() == 0.0 {
            return Err(invalid("camera.look_at", "must differ from camera.position"));
        }
        let up = Vec3::from(self.up);
        if up.norm() == 0.0 || view.normalize().cross(up.normalize()).norm() < 1e-9 {
            return Err(invalid("camera.up", "must not be parallel to the view direction"));
        }
        if !(self.vertical_fov > 0.0 && self.vertical_fov < 180.0) {
            return Err(invalid("camera.vertical_fov", "must lie in (0, 180) degrees"));
        }
        if self.image_size[0] == 0 || self.image_size[1] == 0 {
            return Err(invalid("camera.image_size", "must be positive"));
        }
        Ok(())
    }

    pub fn frame<T: Real>(&self) -> ViewFrame<T> {
        let eye = Vec3::from(self.position);
        let forward = (Vec3::from(self.look_at) - eye).normalize();
        let right = forward.cross(Vec3::from(self.up)).normalize();
        let up = right.cross(forward);
        let [w, h] = self.image_size.map(f64::from);
        ViewFrame {
            eye: eye.cast(),
            forward: forward.cast(),
            right: right.cast(),
            up: up.cast(),
            tan_half_fov: T::lit((self.vertical_fov.to_radians() / 2.0).tan()),
            aspect: T::lit(w / h),
            width: T::lit(w),
            height: T::lit(h),
        }
    }
}

impl<T: Real> ViewFrame<T> {
    /// Ray through continuous image coordinates (`(0,0)` is the top-left
    /// corner, `(w,h)` the bottom-right).
    #[inline]
    pub fn ray_at(&self, u: T, v: T) -> Ray<T> {
        let two = T::lit(2.0);
        let sx = (u / self.width * two - T::one()) * self.aspect * self.tan_half_fov;
        let sy = (T::one() - v / self.height * two) * self.tan_half_fov;
        let direction = (self.forward + self.right * sx + self.up * sy).normalize();
        Ray {
            origin: self.eye,
            direction,
        }
    }

    /// Ray through the centre of pixel `(x, y)`.
    #[inline]
    pub fn pixel_ray(&self, x: u32, y: u32) -> Ray<T> {
        let half = T::lit(0.5);
        self.ray_at(T::lit(f64::from(x)) + half, T::lit(f64::from(y)) + half)
    }
}

pub fn generate_ray<T: Real>(camera: &Camera, pixel: (u32, u32)) -> Ray<T> {
    camera.frame().pixel_ray(pixel.0, pixel.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn camera(size: [u32; 2]) -> Camera {
        Camera {
            position: [10.0, -4.0, 30.0],
            look_at: [1.0, 2.0, 3.0],
            up: [0.0, 1.0, 0.0],
            vertical_fov: 40.0,
            image_size: size,
        }
    }

    #[test]
    fn center_pixel_looks_at_target() {
        let cam = camera([33, 21]);
        let ray: Ray<f64> = generate_ray(&cam, (16, 10));
        let want = (Vec3::from(cam.look_at) - Vec3::from(cam.position)).normalize();
        assert!((ray.direction - want).norm() < 1e-6);
    }

    #[test]
    fn image_edges_subtend_vertical_fov() {
        let cam = camera([64, 48]);
        let frame = cam.frame::<f64>();
        for u in [0.0, 64.0] {
            let top = frame.ray_at(u, 0.0).direction;
            let bottom = frame.ray_at(u, 48.0).direction;
            let elev = |d: Vec3<f64>| d.dot(frame.up).atan2(d.dot(frame.forward)).to_degrees();
            assert!((elev(top) - elev(bottom) - 40.0).abs() < 1e-4);
        }
        // Pixel centres of the first and last rows, checked against the
        // analytic pinhole: 2·atan((1 − 1/h)·tan(fov/2)).
        let a: Ray<f64> = generate_ray(&cam, (10, 0));
        let b: Ray<f64> = generate_ray(&cam, (10, 47));
        let elev = |d: Vec3<f64>| d.dot(frame.up).atan2(d.dot(frame.forward));
        let want = 2.0 * ((1.0 - 1.0 / 48.0) * 20f64.to_radians().tan()).atan();
        assert!((elev(a.direction) - elev(b.direction) - want).abs() < 1e-4);
    }

    #[test]
    fn directions_are_unit_length() {
        let cam = camera([17, 9]);
        for y in 0..9 {
            for x in 0..17 {
                let r: Ray<f32> = generate_ray(&cam, (x, y));
                assert!((r.direction.norm() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn rejects_degenerate_cameras() {
        let mut c = camera([4, 4]);
        c.look_at = c.position;
        assert!(c.validate().is_err());
        let mut c = camera([4, 4]);
        c.up = [-9.0, 6.0, -27.0];
        assert!(matches!(
            c.validate(),
            Err(RenderError::InvalidSettings { field: "camera.up", .. })
        ));
        let mut c = camera([4, 4]);
        c.vertical_fov = 180.0;
        assert!(c.validate().is_err());
    }
}
